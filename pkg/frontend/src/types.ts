/** Shared types for the annotation service API. */

export type Category = "NO_ERROR" | "NOT_IN_NOTES" | "INCORRECT" | "MISSING";
export type Severity = "NONE" | "MINOR" | "CRITICAL";

export const CATEGORIES: Category[] = ["NO_ERROR", "NOT_IN_NOTES", "INCORRECT", "MISSING"];
export const SEVERITY_REQUIRED: Category[] = ["INCORRECT", "MISSING"];

export interface SummaryElement {
  se_id: string;
  sentence_index: number;
  start: number;
  end: number;
  text: string;
}

export interface SummarySentence {
  index: number;
  text: string;
  elements: SummaryElement[];
}

export interface SummaryView {
  admission_id: string;
  sentences: SummarySentence[];
}

export interface AdmissionListing {
  admission_id: string;
  notes: number;
  summary_sentences: number;
  elements: number;
}

export interface NoteSection {
  header: string;
  text: string;
}

export interface NoteView {
  note_id: string;
  title: string;
  timestamp: string;
  day_index: number;
  total_days: number;
  sections: NoteSection[];
}

export interface SearchHit {
  note_id: string;
  section: string;
  start: number;
  end: number;
  snippet: string;
  match_start: number;
  match_end: number;
}

export interface ConceptListing {
  esg_id: string;
  size: number;
  texts: string[];
}

export interface ConceptMention {
  mention_id: string;
  note_id: string;
  start: number;
  end: number;
  text: string;
  semantic_type: string;
}

export interface SeLabel {
  se_id: string;
  category: Category;
  severity: Severity;
}

export interface LabelEvent extends SeLabel {
  annotator_id: string;
  timestamp: string;
  event_time: string;
}

export interface HerrReport {
  admissions: Record<string, { herr: Array<number | null> }>;
  category_rates: Record<Category, number>;
  any_mistake_rate: number;
  severity_counts: Record<string, number>;
  total_elements: number;
}
