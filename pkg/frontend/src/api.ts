// Typed client for the diagnosis service. All probability math happens
// server-side; this module only moves JSON.

export interface VariableInfo {
  name: string;
  states: string[];
}

export interface ModelInfo {
  variables: VariableInfo[];
  decision: string;
}

export interface PosteriorDoc {
  target: string;
  states: string[];
  probs: number[];
  evidence: Record<string, string>;
}

export interface VoiEntry {
  variable: string;
  score: number;
}

export interface DiagnosisDoc {
  decision: string;
  prediction: string;
  states: string[];
  probs: number[];
  evidence: Record<string, string>;
  voi: VoiEntry[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(detail);
  }

  get contradictory(): boolean {
    return this.status === 409;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** The service surface the UI consumes; implemented by DiagnosisClient. */
export interface DiagnosisApi {
  getModel(): Promise<ModelInfo>;
  createSession(): Promise<string>;
  deleteSession(id: string): Promise<unknown>;
  setEvidence(id: string, patch: Record<string, string | null>): Promise<Record<string, string>>;
  getPosterior(id: string, target: string): Promise<PosteriorDoc>;
  getDiagnosis(id: string): Promise<DiagnosisDoc>;
}

export class DiagnosisClient implements DiagnosisApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let code = `HTTP ${response.status}`;
      let detail = response.statusText;
      try {
        const body = await response.json();
        code = body.error ?? code;
        detail = body.detail ?? detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, code, detail);
    }
    return (await response.json()) as T;
  }

  getModel(): Promise<ModelInfo> {
    return this.request<ModelInfo>("/model");
  }

  async createSession(): Promise<string> {
    const doc = await this.request<{ id: string }>("/session", { method: "POST" });
    return doc.id;
  }

  deleteSession(id: string): Promise<unknown> {
    return this.request(`/session/${id}`, { method: "DELETE" });
  }

  /** Patch evidence; a null value clears that variable. */
  async setEvidence(
    id: string,
    patch: Record<string, string | null>,
  ): Promise<Record<string, string>> {
    const doc = await this.request<{ evidence: Record<string, string> }>(
      `/session/${id}/evidence`,
      {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(patch),
      },
    );
    return doc.evidence;
  }

  getPosterior(id: string, target: string): Promise<PosteriorDoc> {
    return this.request<PosteriorDoc>(
      `/session/${id}/posterior?target=${encodeURIComponent(target)}`,
    );
  }

  getDiagnosis(id: string): Promise<DiagnosisDoc> {
    return this.request<DiagnosisDoc>(`/session/${id}/diagnosis`);
  }
}
