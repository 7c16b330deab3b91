/** Thin typed client over the annotation service HTTP API. */
import {
  AdmissionListing,
  ConceptListing,
  ConceptMention,
  HerrReport,
  LabelEvent,
  NoteView,
  SeLabel,
  SearchHit,
  SummaryView,
} from "./types";

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  readonly baseUrl: string;
  readonly annotatorId: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, annotatorId: string, fetchImpl: FetchLike = fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.annotatorId = annotatorId;
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      ...init,
      headers: {
        "Content-Type": "application/json",
        "X-Annotator": this.annotatorId,
        ...(init?.headers ?? {}),
      },
    });
    const body = (await response.json()) as T & { error?: string };
    if (!response.ok) {
      throw new ApiError(response.status, body.error ?? response.statusText);
    }
    return body;
  }

  listAdmissions(): Promise<AdmissionListing[]> {
    return this.request("/admissions");
  }

  notes(admissionId: string): Promise<NoteView[]> {
    return this.request(`/admissions/${admissionId}/notes`);
  }

  summary(admissionId: string): Promise<SummaryView> {
    return this.request(`/admissions/${admissionId}/summary`);
  }

  search(admissionId: string, query: string): Promise<SearchHit[]> {
    return this.request(`/admissions/${admissionId}/search?q=${encodeURIComponent(query)}`);
  }

  concepts(admissionId: string): Promise<ConceptListing[]> {
    return this.request(`/admissions/${admissionId}/concepts`);
  }

  conceptMentions(admissionId: string, esgId: string): Promise<ConceptMention[]> {
    return this.request(`/admissions/${admissionId}/concepts/${esgId}/mentions`);
  }

  labels(admissionId: string): Promise<LabelEvent[]> {
    return this.request(`/admissions/${admissionId}/labels`);
  }

  postLabel(admissionId: string, label: SeLabel): Promise<LabelEvent> {
    return this.request(`/admissions/${admissionId}/labels`, {
      method: "POST",
      body: JSON.stringify(label),
    });
  }

  herrReport(): Promise<HerrReport> {
    return this.request("/reports/herr");
  }
}
