/** Client session state: current admission, selected summary element, the
 * pending decision flow, search results, and a live HErr snapshot. Labels
 * apply optimistically and roll back if the server rejects the write. */
import { ApiClient } from "./api";
import { DecisionFlow } from "./decisionFlow";
import {
  HerrReport,
  LabelEvent,
  SeLabel,
  SearchHit,
  SummaryElement,
  SummaryView,
} from "./types";
import { validateLabel } from "./validation";

export class AnnotationSession {
  readonly api: ApiClient;
  admissionId: string | null = null;
  summary: SummaryView | null = null;
  selectedSeId: string | null = null;
  pendingFlow: DecisionFlow | null = null;
  searchResults: SearchHit[] = [];
  herr: HerrReport | null = null;
  /** resolved label per summary element for this annotator (optimistic view) */
  labels = new Map<string, SeLabel>();

  constructor(api: ApiClient) {
    this.api = api;
  }

  async load(admissionId: string): Promise<SummaryView> {
    this.admissionId = admissionId;
    this.summary = await this.api.summary(admissionId);
    this.selectedSeId = null;
    this.pendingFlow = null;
    this.searchResults = [];
    this.labels.clear();
    const events = await this.api.labels(admissionId);
    for (const event of events) {
      if (event.annotator_id === this.api.annotatorId) {
        this.labels.set(event.se_id, {
          se_id: event.se_id,
          category: event.category,
          severity: event.severity,
        });
      }
    }
    return this.summary;
  }

  elements(): SummaryElement[] {
    return this.summary?.sentences.flatMap((s) => s.elements) ?? [];
  }

  /** Only summary-element spans are selectable. */
  selectElement(seId: string): DecisionFlow {
    const known = this.elements().some((e) => e.se_id === seId);
    if (!known) {
      throw new Error(`unknown summary element ${seId}`);
    }
    this.selectedSeId = seId;
    this.pendingFlow = new DecisionFlow(seId);
    return this.pendingFlow;
  }

  cancelFlow(): void {
    this.pendingFlow?.cancel();
    this.pendingFlow = null;
  }

  /** Submit the completed flow; optimistic update, rolled back on rejection. */
  async submitFlow(): Promise<LabelEvent> {
    if (!this.admissionId || !this.pendingFlow) {
      throw new Error("no pending decision flow");
    }
    const label = this.pendingFlow.result();
    if (!label) {
      throw new Error("decision flow incomplete or cancelled");
    }
    validateLabel(label); // client-side gate: never POST an invalid label
    const previous = this.labels.get(label.se_id);
    this.labels.set(label.se_id, label);
    try {
      const event = await this.api.postLabel(this.admissionId, label);
      this.pendingFlow = null;
      return event;
    } catch (error) {
      if (previous) {
        this.labels.set(label.se_id, previous);
      } else {
        this.labels.delete(label.se_id);
      }
      throw error;
    }
  }

  async search(query: string): Promise<SearchHit[]> {
    if (!this.admissionId) {
      throw new Error("no admission loaded");
    }
    this.searchResults = await this.api.search(this.admissionId, query);
    return this.searchResults;
  }

  /** Double-click concept jump: fetch every mention of the ESG, date ordered. */
  async conceptJump(esgId: string) {
    if (!this.admissionId) {
      throw new Error("no admission loaded");
    }
    return this.api.conceptMentions(this.admissionId, esgId);
  }

  async refreshHerr(): Promise<HerrReport> {
    this.herr = await this.api.herrReport();
    return this.herr;
  }

  labeledCount(): number {
    return this.labels.size;
  }
}
