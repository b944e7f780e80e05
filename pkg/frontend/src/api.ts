// Thin typed client over the service HTTP API. Every call sends the
// bearer token; errors surface as ApiError with the HTTP status so flows
// can branch on 403/409/410/422.

import type {
  ItemAnswer,
  ManualTask,
  PagePayload,
  PageReceipt,
  ScreeningQuiz,
  ScreeningVerdict,
  TieEntry,
  TieResolutionResult,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.status = status;
    this.detail = detail;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private token: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      ...(body !== undefined ? { body: JSON.stringify(body) } : {}),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const doc = (await response.json()) as { detail?: unknown };
        if (typeof doc.detail === "string") detail = doc.detail;
        else if (doc.detail !== undefined) detail = JSON.stringify(doc.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  getScreening(): Promise<ScreeningQuiz> {
    return this.request("GET", "/api/screening");
  }

  submitScreening(answers: ItemAnswer[]): Promise<ScreeningVerdict> {
    return this.request("POST", "/api/screening", { answers });
  }

  nextPage(): Promise<PagePayload> {
    return this.request("GET", "/api/pages/next");
  }

  submitPage(pageId: string, answers: ItemAnswer[]): Promise<PageReceipt> {
    return this.request("POST", `/api/pages/${encodeURIComponent(pageId)}`, { answers });
  }

  listTies(): Promise<{ ties: TieEntry[] }> {
    return this.request("GET", "/api/expert/ties");
  }

  resolveTie(tokenId: string, tag: string): Promise<TieResolutionResult> {
    return this.request("POST", `/api/expert/ties/${encodeURIComponent(tokenId)}`, { tag });
  }

  listManual(): Promise<{ tasks: ManualTask[] }> {
    return this.request("GET", "/api/expert/manual");
  }

  tagManual(tokenId: string, tag: string): Promise<{ token_id: string; tag: string }> {
    return this.request("POST", `/api/expert/manual/${encodeURIComponent(tokenId)}`, { tag });
  }

  reports(): Promise<unknown> {
    return this.request("GET", "/api/reports");
  }
}
