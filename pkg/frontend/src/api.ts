/** Thin typed client over the review service HTTP/JSON API. */

import type {
  CandidateJson,
  MetricsResponse,
  SessionCreateBody,
  SessionJson,
  SessionListing,
  VerdictLabel,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Application-level rejection from the service. Every error response is
 * {"error": {"code", "message"}}; the code is machine-readable.
 * Network failures are NOT ApiErrors — they surface as whatever the fetch
 * implementation throws (TypeError in browsers).
 */
export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ReviewApi {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    // wrap rather than store fetch directly: calling a bare fetch reference
    // with a different `this` is an illegal invocation in browsers
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    const body: unknown = await resp.json();
    if (!resp.ok) {
      const err = (body as { error?: { code?: string; message?: string } }).error ?? {};
      throw new ApiError(err.code ?? "unknown", err.message ?? `HTTP ${resp.status}`, resp.status);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  createSession(body: SessionCreateBody): Promise<SessionJson> {
    return this.post("/sessions", body);
  }

  listSessions(): Promise<SessionListing> {
    return this.request("/sessions");
  }

  getSession(id: string): Promise<SessionJson> {
    return this.request(`/sessions/${id}`);
  }

  getCandidate(id: string, index: number): Promise<CandidateJson> {
    return this.request(`/sessions/${id}/candidates/${index}`);
  }

  /** Absolute URL for a candidate's crop PNG (crop_url is server-relative). */
  cropUrl(cropPath: string): string {
    return this.baseUrl + cropPath;
  }

  postVerdict(
    id: string,
    candidateId: number,
    label: VerdictLabel,
    opts: { note?: string; amend?: boolean } = {},
  ): Promise<SessionJson> {
    return this.post(`/sessions/${id}/verdicts`, {
      candidate_id: candidateId,
      label,
      note: opts.note ?? "",
      amend: opts.amend ?? false,
    });
  }

  postMissed(
    id: string,
    geometry: { point?: [number, number]; outline?: [number, number][] },
    opts: { mode?: string; note?: string } = {},
  ): Promise<SessionJson> {
    return this.post(`/sessions/${id}/missed`, {
      ...geometry,
      mode: opts.mode ?? "queue",
      note: opts.note ?? "",
    });
  }

  closeSession(id: string): Promise<SessionJson> {
    return this.post(`/sessions/${id}/close`, {});
  }

  /** Final metrics; the service rejects with code "undecided" until every candidate has a verdict. */
  getMetrics(id: string): Promise<MetricsResponse> {
    return this.request(`/sessions/${id}/metrics`);
  }
}
