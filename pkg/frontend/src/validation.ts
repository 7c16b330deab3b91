/** Client-side label validation mirroring the server invariant, so the client
 * never submits a label the service would reject. */
import { Category, SEVERITY_REQUIRED, SeLabel, Severity } from "./types";

export class LabelValidationError extends Error {}

export function severityRequired(category: Category): boolean {
  return SEVERITY_REQUIRED.includes(category);
}

/** The shared rule: severity != NONE iff category is INCORRECT or MISSING. */
export function validateLabel(label: SeLabel): SeLabel {
  if (!label.se_id) {
    throw new LabelValidationError("se_id is required");
  }
  if (severityRequired(label.category) && label.severity === "NONE") {
    throw new LabelValidationError(`severity is required for ${label.category}`);
  }
  if (!severityRequired(label.category) && label.severity !== "NONE") {
    throw new LabelValidationError(`severity must be NONE for ${label.category}`);
  }
  return label;
}

export function isValidLabel(label: SeLabel): boolean {
  try {
    validateLabel(label);
    return true;
  } catch {
    return false;
  }
}
