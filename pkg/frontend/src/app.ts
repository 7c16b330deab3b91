/** Browser shell: two-pane annotation layout.
 *
 * Left pane: the summary, one sentence per line, with highlighted summary
 * elements; only elements are selectable, each showing its label state.
 * Right pane: date-sorted notes with a section-header index, free-text
 * search, and double-click concept search. Number keys drive the decision
 * flow. A retry banner appears when the service is unreachable.
 */
import { ApiClient, ApiError } from "./api";
import { DecisionFlow } from "./decisionFlow";
import { AnnotationSession } from "./session";
import { NoteView, SummaryElement } from "./types";

const CATEGORY_BADGES: Record<string, string> = {
  NO_ERROR: "ok",
  NOT_IN_NOTES: "nin",
  INCORRECT: "inc",
  MISSING: "mis",
};

export class App {
  private readonly session: AnnotationSession;
  private readonly root: HTMLElement;
  private notes: NoteView[] = [];
  private renderedSections = new Set<string>();

  constructor(root: HTMLElement, baseUrl: string, annotatorId: string) {
    this.root = root;
    this.session = new AnnotationSession(new ApiClient(baseUrl, annotatorId));
  }

  async start(): Promise<void> {
    try {
      const admissions = await this.session.api.listAdmissions();
      this.renderAdmissionPicker(admissions.map((a) => a.admission_id));
    } catch (error) {
      this.renderRetryBanner(() => this.start(), error);
    }
  }

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string
  ): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
  }

  /** Non-destructive banner: the current view stays up while retrying. */
  private renderRetryBanner(retry: () => void, error: unknown): void {
    const existing = this.root.querySelector(".retry-banner");
    existing?.remove();
    const banner = this.el("div", "retry-banner");
    banner.append(
      this.el("span", "", `service unavailable: ${error instanceof Error ? error.message : error}`)
    );
    const button = this.el("button", "", "retry");
    button.addEventListener("click", () => {
      banner.remove();
      retry();
    });
    banner.append(button);
    this.root.prepend(banner);
  }

  private renderAdmissionPicker(ids: string[]): void {
    this.root.replaceChildren();
    const picker = this.el("select", "admission-picker");
    for (const id of ids) {
      const option = this.el("option", "", id) as HTMLOptionElement;
      option.value = id;
      picker.append(option);
    }
    const open = this.el("button", "", "open");
    open.addEventListener("click", () => this.openAdmission(picker.value));
    this.root.append(picker, open);
    if (ids.length) {
      void this.openAdmission(ids[0]);
    }
  }

  private async openAdmission(admissionId: string): Promise<void> {
    try {
      await this.session.load(admissionId);
      this.notes = await this.session.api.notes(admissionId);
      await this.session.refreshHerr();
      this.renderWorkspace();
    } catch (error) {
      this.renderRetryBanner(() => this.openAdmission(admissionId), error);
    }
  }

  private renderWorkspace(): void {
    const workspace = this.el("div", "workspace");
    workspace.append(this.renderSummaryPane(), this.renderNotesPane());
    const old = this.root.querySelector(".workspace");
    if (old) {
      old.replaceWith(workspace);
    } else {
      this.root.append(workspace);
    }
    this.renderHerrBadge();
  }

  // --- summary pane ------------------------------------------------------

  private renderSummaryPane(): HTMLElement {
    const pane = this.el("section", "summary-pane");
    pane.append(this.el("h2", "", `Summary ${this.session.admissionId}`));
    for (const sentence of this.session.summary?.sentences ?? []) {
      const line = this.el("div", "summary-line");
      let cursor = 0;
      for (const element of sentence.elements) {
        line.append(document.createTextNode(sentence.text.slice(cursor, element.start)));
        line.append(this.renderElement(element, sentence.text));
        cursor = element.end;
      }
      line.append(document.createTextNode(sentence.text.slice(cursor)));
      pane.append(line);
    }
    return pane;
  }

  private renderElement(element: SummaryElement, sentenceText: string): HTMLElement {
    const span = this.el("mark", "se", sentenceText.slice(element.start, element.end));
    span.dataset.seId = element.se_id;
    const label = this.session.labels.get(element.se_id);
    if (label) {
      span.classList.add(`se-${CATEGORY_BADGES[label.category]}`);
      span.title = `${label.category}${label.severity !== "NONE" ? ` (${label.severity})` : ""}`;
    }
    // annotation of non-element spans is impossible: only marks get handlers
    span.addEventListener("click", () => this.beginFlow(element.se_id));
    return span;
  }

  private beginFlow(seId: string): void {
    const flow = this.session.selectElement(seId);
    this.renderFlowDialog(flow);
  }

  /** Keyboard-first dialog; number keys answer the current step. */
  private renderFlowDialog(flow: DecisionFlow): void {
    this.root.querySelector(".flow-dialog")?.remove();
    const dialog = this.el("div", "flow-dialog");
    const question = this.el("p", "flow-question");
    const buttons = this.el("div", "flow-buttons");
    dialog.append(question, buttons);
    this.root.append(dialog);

    const finish = async () => {
      dialog.remove();
      window.removeEventListener("keydown", onKey);
      if (flow.stage === "done") {
        try {
          await this.session.submitFlow();
          await this.session.refreshHerr();
          this.renderWorkspace(); // badge updates without reload
        } catch (error) {
          this.renderRetryBanner(() => void this.session.submitFlow(), error);
        }
      }
    };

    const steps: Record<string, Array<[string, () => void]>> = {
      in_notes: [
        ["1 · found in notes", () => flow.answerInNotes(true)],
        ["2 · not in notes", () => flow.answerInNotes(false)],
      ],
      category: [
        ["1 · no visible mistakes", () => flow.answerCategory("NO_ERROR")],
        ["2 · incorrect details", () => flow.answerCategory("INCORRECT")],
        ["3 · missing details", () => flow.answerCategory("MISSING")],
      ],
      severity: [
        ["1 · minor", () => flow.answerSeverity("MINOR")],
        ["2 · critical", () => flow.answerSeverity("CRITICAL")],
      ],
    };

    const titles: Record<string, string> = {
      in_notes: "Can this element be found in the notes?",
      category: "How is it used?",
      severity: "Could the mistake impact care?",
    };

    const render = () => {
      if (flow.stage === "done" || flow.stage === "cancelled") {
        void finish();
        return;
      }
      question.textContent = titles[flow.stage];
      buttons.replaceChildren();
      for (const [text, answer] of steps[flow.stage]) {
        const button = this.el("button", "", text);
        button.addEventListener("click", () => {
          answer();
          render();
        });
        buttons.append(button);
      }
      const cancel = this.el("button", "flow-cancel", "esc · cancel");
      cancel.addEventListener("click", () => {
        flow.cancel();
        render();
      });
      buttons.append(cancel);
    };

    const onKey = (event: KeyboardEvent) => {
      if (flow.stage === "done" || flow.stage === "cancelled") return;
      if (event.key === "Escape") {
        flow.cancel();
        render();
        return;
      }
      const index = Number.parseInt(event.key, 10) - 1;
      const options = steps[flow.stage];
      if (options && index >= 0 && index < options.length) {
        options[index][1]();
        render();
      }
    };
    window.addEventListener("keydown", onKey);
    render();
  }

  private renderHerrBadge(): void {
    this.root.querySelector(".herr-badge")?.remove();
    const badge = this.el("div", "herr-badge");
    const report = this.session.herr;
    const admissionId = this.session.admissionId;
    if (report && admissionId && report.admissions[admissionId]) {
      const vector = report.admissions[admissionId].herr;
      const numeric = vector.filter((v): v is number => v !== null);
      const mean = numeric.length
        ? numeric.reduce((a, b) => a + b, 0) / numeric.length
        : 0;
      badge.textContent = `HErr ${mean.toFixed(2)} · labeled ${this.session.labeledCount()}`;
    } else {
      badge.textContent = "HErr –";
    }
    this.root.append(badge);
  }

  // --- notes pane --------------------------------------------------------

  private renderNotesPane(): HTMLElement {
    const pane = this.el("section", "notes-pane");
    const search = this.el("input") as HTMLInputElement;
    search.placeholder = "search notes…";
    search.addEventListener("keydown", async (event) => {
      if (event.key === "Enter" && search.value) {
        try {
          const hits = await this.session.search(search.value);
          this.renderSearchResults(pane, hits);
        } catch (error) {
          this.renderRetryBanner(() => void this.session.search(search.value), error);
        }
      }
    });
    pane.append(this.el("h2", "", "Notes"), search);

    const index = this.el("select", "section-index");
    const placeholder = this.el("option", "", "jump to section…") as HTMLOptionElement;
    placeholder.value = "";
    index.append(placeholder);
    for (const note of this.notes) {
      for (const section of note.sections) {
        const option = this.el(
          "option",
          "",
          `${note.title} ${note.timestamp.slice(0, 10)} · ${section.header}`
        ) as HTMLOptionElement;
        option.value = `${note.note_id}::${section.header}`;
        index.append(option);
      }
    }
    index.addEventListener("change", () => {
      if (index.value) {
        this.revealSection(index.value);
        document.getElementById(index.value)?.scrollIntoView({ block: "start" });
      }
    });
    pane.append(index);

    for (const note of this.notes) {
      const noteBox = this.el("article", "note");
      noteBox.append(
        this.el(
          "h3",
          "",
          `${note.title} — ${note.timestamp.slice(0, 10)} — day ${note.day_index} of ${note.total_days}`
        )
      );
      for (const section of note.sections) {
        const key = `${note.note_id}::${section.header}`;
        const block = this.el("div", "note-section");
        block.id = key;
        const header = this.el("h4", "", section.header);
        // sections lazy-load: body text attaches on first expand
        header.addEventListener("click", () => this.revealSection(key));
        block.append(header);
        noteBox.append(block);
      }
      pane.append(noteBox);
    }
    return pane;
  }

  private revealSection(key: string): void {
    if (this.renderedSections.has(key)) return;
    const [noteId, header] = key.split("::");
    const note = this.notes.find((n) => n.note_id === noteId);
    const section = note?.sections.find((s) => s.header === header);
    const block = document.getElementById(key);
    if (!note || !section || !block) return;
    const body = this.el("p", "note-body", section.text);
    body.addEventListener("dblclick", () => {
      const selection = window.getSelection()?.toString().trim();
      if (selection) {
        void this.conceptSearch(selection);
      }
    });
    block.append(body);
    this.renderedSections.add(key);
  }

  /** Double-click concept search: resolve the selected span to an ESG via the
   * concept listing, then fetch and show every mention. */
  private async conceptSearch(text: string): Promise<void> {
    if (!this.session.admissionId) return;
    try {
      const concepts = await this.session.api.concepts(this.session.admissionId);
      const lowered = text.toLowerCase();
      const match = concepts.find((c) => c.texts.some((t) => t.toLowerCase() === lowered));
      const pane = this.root.querySelector(".notes-pane") as HTMLElement;
      if (!match) {
        this.renderSearchResults(pane, []);
        return;
      }
      const mentions = await this.session.conceptJump(match.esg_id);
      const list = this.el("div", "concept-results");
      list.append(this.el("h4", "", `${text}: ${mentions.length} mentions`));
      for (const mention of mentions) {
        const row = this.el("div", "concept-hit", `${mention.note_id} @ ${mention.start}`);
        row.addEventListener("click", () => {
          const note = this.notes.find((n) => n.note_id === mention.note_id);
          note?.sections.forEach((s) => this.revealSection(`${mention.note_id}::${s.header}`));
          document.getElementById(`${mention.note_id}::${note?.sections[0]?.header}`)?.scrollIntoView();
        });
        list.append(row);
      }
      pane.querySelector(".concept-results")?.remove();
      pane.append(list);
    } catch (error) {
      this.renderRetryBanner(() => void this.conceptSearch(text), error);
    }
  }

  private renderSearchResults(pane: HTMLElement, hits: Array<{ note_id: string; snippet: string }>): void {
    pane.querySelector(".search-results")?.remove();
    const list = this.el("div", "search-results");
    list.append(this.el("h4", "", `${hits.length} hits`));
    for (const hit of hits) {
      list.append(this.el("div", "search-hit", `${hit.note_id}: …${hit.snippet}…`));
    }
    pane.append(list);
  }
}

declare global {
  interface Window {
    COURSEKIT_API?: string;
    COURSEKIT_ANNOTATOR?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const app = new App(
    document.getElementById("app") as HTMLElement,
    window.COURSEKIT_API ?? "http://127.0.0.1:8714",
    window.COURSEKIT_ANNOTATOR ?? "annotator-1"
  );
  void app.start();
}
