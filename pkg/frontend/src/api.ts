import type {
  ConflictBundle,
  DocumentDto,
  ResolutionDto,
  SessionState,
  SubmitOutcome,
} from "./types.js";

export interface ResolveApi {
  fetchState(): Promise<SessionState>;
  fetchConflicts(): Promise<ConflictBundle>;
  fetchDocument(docId: string): Promise<DocumentDto>;
  submitResolutions(records: ResolutionDto[]): Promise<SubmitOutcome>;
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    let detail = `status ${response.status}`;
    try {
      const body = (await response.json()) as { code?: string; message?: string };
      if (body && typeof body.message === "string") {
        detail = body.code ? `${body.code}: ${body.message}` : body.message;
      }
    } catch {
      // non-JSON error body, keep the status line
    }
    throw new Error(`request failed (${url}): ${detail}`);
  }
  return (await response.json()) as T;
}

// baseUrl is "" when the app is served by the same process that answers /api.
export function createApi(baseUrl = ""): ResolveApi {
  const root = baseUrl.replace(/\/+$/, "");
  return {
    fetchState(): Promise<SessionState> {
      return request<SessionState>(`${root}/api/state`);
    },
    fetchConflicts(): Promise<ConflictBundle> {
      return request<ConflictBundle>(`${root}/api/conflicts`);
    },
    fetchDocument(docId: string): Promise<DocumentDto> {
      return request<DocumentDto>(`${root}/api/doc/${encodeURIComponent(docId)}`);
    },
    submitResolutions(records: ResolutionDto[]): Promise<SubmitOutcome> {
      return request<SubmitOutcome>(`${root}/api/resolutions`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(records),
      });
    },
  };
}
