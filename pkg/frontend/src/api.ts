// Thin fetch client over the gateway API. Non-2xx responses are thrown as
// GatewayError carrying the ApiError body so views can render it inline.

import type { ApiError, CasePage, CaseRecord, FeedbackResponse, KnowledgeSearchResult, SkillDiff } from "./types.js";

export class GatewayError extends Error {
  readonly apiError: ApiError;
  readonly status: number;

  constructor(status: number, apiError: ApiError) {
    super(apiError.message);
    this.status = status;
    this.apiError = apiError;
  }
}

export class GatewayClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    const body = await response.json();
    if (!response.ok) {
      throw new GatewayError(response.status, body as ApiError);
    }
    return body as T;
  }

  listCases(params: { business?: string; module?: string; kind?: string; limit?: number; cursor?: string } = {}): Promise<CasePage> {
    const query = new URLSearchParams();
    for (const [key, value] of Object.entries(params)) {
      if (value !== undefined) query.set(key, String(value));
    }
    const qs = query.toString();
    return this.request<CasePage>(`/cases${qs ? `?${qs}` : ""}`);
  }

  getCase(caseId: string): Promise<CaseRecord> {
    return this.request<CaseRecord>(`/cases/${encodeURIComponent(caseId)}`);
  }

  submitFeedback(caseId: string, author: string, text: string): Promise<FeedbackResponse> {
    return this.request<FeedbackResponse>(`/cases/${encodeURIComponent(caseId)}/feedback`, {
      method: "POST",
      body: JSON.stringify({ author, text }),
    });
  }

  getSkillDiff(link: string): Promise<SkillDiff> {
    return this.request<SkillDiff>(link);
  }

  searchKnowledge(params: Record<string, string>): Promise<KnowledgeSearchResult> {
    const query = new URLSearchParams(params);
    return this.request<KnowledgeSearchResult>(`/knowledge/search?${query.toString()}`);
  }

  getEvalReport(reportId: string): Promise<Record<string, unknown>> {
    return this.request(`/eval/reports/${encodeURIComponent(reportId)}`);
  }
}
