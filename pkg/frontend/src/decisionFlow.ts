/** The annotation decision tree: first "is it in the notes?", then the error
 * category, then severity for Incorrect/Missing. The flow can only ever emit
 * labels that satisfy the shared validation rule; cancelling emits nothing. */
import { Category, SeLabel, Severity } from "./types";
import { severityRequired, validateLabel } from "./validation";

export type FlowStage = "in_notes" | "category" | "severity" | "done" | "cancelled";

export class DecisionFlow {
  readonly seId: string;
  stage: FlowStage = "in_notes";
  private category: Category | null = null;
  private severity: Severity = "NONE";

  constructor(seId: string) {
    this.seId = seId;
  }

  /** Step 1: can the summary element be found in the notes at all? */
  answerInNotes(inNotes: boolean): FlowStage {
    this.expect("in_notes");
    if (!inNotes) {
      this.category = "NOT_IN_NOTES";
      this.stage = "done"; // severity never asked for hallucinations
    } else {
      this.stage = "category";
    }
    return this.stage;
  }

  /** Step 2: no visible mistakes, incorrect details, or missing details. */
  answerCategory(category: "NO_ERROR" | "INCORRECT" | "MISSING"): FlowStage {
    this.expect("category");
    this.category = category;
    this.stage = severityRequired(category) ? "severity" : "done";
    return this.stage;
  }

  /** Step 3 (Incorrect/Missing only): could the mistake impact care? */
  answerSeverity(severity: "MINOR" | "CRITICAL"): FlowStage {
    this.expect("severity");
    this.severity = severity;
    this.stage = "done";
    return this.stage;
  }

  cancel(): void {
    this.stage = "cancelled";
    this.category = null;
    this.severity = "NONE";
  }

  /** The finished, invariant-satisfying label; null when cancelled/incomplete. */
  result(): SeLabel | null {
    if (this.stage !== "done" || this.category === null) {
      return null;
    }
    return validateLabel({
      se_id: this.seId,
      category: this.category,
      severity: this.severity,
    });
  }

  private expect(stage: FlowStage): void {
    if (this.stage !== stage) {
      throw new Error(`decision flow is at ${this.stage}, not ${stage}`);
    }
  }
}
