/** Thin typed client over the review service. The UI owns no state the
 * service cannot reconstruct, so every view is built from these reads and
 * every mutation is exactly one POST. */

import type {
  ConsistencyReport,
  DimensionName,
  ManifestEntry,
  Persona,
  ReviewDecisionBody,
  ThemeBook,
  TraceReport,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(`service responded ${status}: ${JSON.stringify(detail)}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON error bodies are reported as-is via ApiError
    }
    if (!response.ok) {
      throw new ApiError(response.status, body);
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

  async listRuns(): Promise<string[]> {
    const body = await this.request<{ runs: string[] }>("/runs");
    return body.runs;
  }

  async themeBooks(
    runId: string,
    dimension: DimensionName,
    stage: "baseline" | "variant" | "final",
  ): Promise<ThemeBook[]> {
    const body = await this.request<{ books: ThemeBook[] }>(
      `/runs/${runId}/themebooks/${dimension}/${stage}`,
    );
    return body.books;
  }

  consistency(runId: string, dimension: DimensionName): Promise<ConsistencyReport> {
    return this.request(`/runs/${runId}/consistency/${dimension}`);
  }

  async personas(runId: string): Promise<Persona[]> {
    const body = await this.request<{ personas: Persona[] }>(
      `/runs/${runId}/personas`,
    );
    return body.personas;
  }

  async traces(runId: string): Promise<TraceReport[]> {
    const body = await this.request<{ traces: TraceReport[] }>(
      `/runs/${runId}/traces`,
    );
    return body.traces;
  }

  async manifest(runId: string): Promise<ManifestEntry[]> {
    const body = await this.request<{ entries: ManifestEntry[] }>(
      `/runs/${runId}/manifest`,
    );
    return body.entries;
  }

  submitDecision(
    runId: string,
    decision: ReviewDecisionBody,
  ): Promise<{ digest: string; dimension: string }> {
    return this.post(`/runs/${runId}/decisions`, decision);
  }

  generatePersona(
    runId: string,
    request: {
      need_pair: [string, string];
      challenge_pair: [string, string];
      seed: number;
      decided_by: string;
    },
  ): Promise<Persona> {
    return this.post(`/runs/${runId}/personas`, request);
  }

  requestTrace(
    runId: string,
    personaDigest: string,
    decidedBy: string,
  ): Promise<TraceReport> {
    return this.post(`/runs/${runId}/traces`, {
      persona_digest: personaDigest,
      decided_by: decidedBy,
    });
  }
}
