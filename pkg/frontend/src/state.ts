// Store for the consultation loop. Evidence edits are debounced and sent as
// one patch; every probability on screen comes from a service response, and
// the rendered evidence always mirrors what the server confirmed. Refreshes
// run through a single promise chain so responses apply in request order.

import { ApiError, DiagnosisApi, DiagnosisDoc, ModelInfo, PosteriorDoc } from "./api.js";

export interface UiState {
  schema: ModelInfo | null;
  sessionId: string | null;
  /** Server-confirmed evidence (variable -> state label). */
  evidence: Record<string, string>;
  /** Last consistent diagnosis; retained through contradictory episodes. */
  diagnosis: DiagnosisDoc | null;
  /** Transient what-if posterior, when hovering a hypothetical value. */
  preview: { variable: string; label: string; doc: PosteriorDoc } | null;
  contradiction: boolean;
  loading: boolean;
  error: string | null;
}

export interface StoreOptions {
  debounceMs?: number;
  setTimeoutFn?: typeof setTimeout;
  clearTimeoutFn?: typeof clearTimeout;
}

type Listener = (state: UiState) => void;

export class DiagnosisStore {
  readonly state: UiState = {
    schema: null,
    sessionId: null,
    evidence: {},
    diagnosis: null,
    preview: null,
    contradiction: false,
    loading: false,
    error: null,
  };

  private listeners: Listener[] = [];
  private pendingPatch: Record<string, string | null> = {};
  private debounceHandle: ReturnType<typeof setTimeout> | null = null;
  private chain: Promise<void> = Promise.resolve();
  private previewToken = 0;
  private readonly debounceMs: number;
  private readonly setTimeoutFn: typeof setTimeout;
  private readonly clearTimeoutFn: typeof clearTimeout;

  constructor(
    private readonly client: DiagnosisApi,
    options: StoreOptions = {},
  ) {
    this.debounceMs = options.debounceMs ?? 150;
    this.setTimeoutFn = options.setTimeoutFn ?? setTimeout;
    this.clearTimeoutFn = options.clearTimeoutFn ?? clearTimeout;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  /** Fetch the schema, open a session, and load the prior diagnosis. */
  async init(): Promise<void> {
    this.state.loading = true;
    this.emit();
    try {
      this.state.schema = await this.client.getModel();
      this.state.sessionId = await this.client.createSession();
      await this.refreshNow();
    } catch (err) {
      this.state.error = err instanceof Error ? err.message : String(err);
    } finally {
      this.state.loading = false;
      this.emit();
    }
  }

  /** Queue one evidence edit; null clears the variable. Debounced. */
  setEvidence(variable: string, label: string | null): void {
    this.pendingPatch[variable] = label;
    if (this.debounceHandle !== null) {
      this.clearTimeoutFn(this.debounceHandle);
    }
    this.debounceHandle = this.setTimeoutFn(() => {
      this.debounceHandle = null;
      void this.flush();
    }, this.debounceMs);
  }

  /** Send any queued evidence immediately and refresh the posterior. */
  flush(): Promise<void> {
    if (this.debounceHandle !== null) {
      this.clearTimeoutFn(this.debounceHandle);
      this.debounceHandle = null;
    }
    const patch = this.pendingPatch;
    this.pendingPatch = {};
    if (Object.keys(patch).length === 0) {
      return this.chain;
    }
    this.chain = this.chain.then(() => this.applyPatch(patch));
    return this.chain;
  }

  /** Clear every set evidence value. */
  clearAll(): Promise<void> {
    for (const name of Object.keys(this.state.evidence)) {
      this.pendingPatch[name] = null;
    }
    return this.flush();
  }

  private async applyPatch(patch: Record<string, string | null>): Promise<void> {
    const sid = this.state.sessionId;
    if (sid === null) {
      return;
    }
    try {
      this.state.evidence = await this.client.setEvidence(sid, patch);
      await this.refreshDiagnosis(sid);
    } catch (err) {
      this.handleError(err);
    }
    this.emit();
  }

  private refreshNow(): Promise<void> {
    this.chain = this.chain.then(async () => {
      const sid = this.state.sessionId;
      if (sid === null) {
        return;
      }
      try {
        await this.refreshDiagnosis(sid);
      } catch (err) {
        this.handleError(err);
      }
      this.emit();
    });
    return this.chain;
  }

  private async refreshDiagnosis(sid: string): Promise<void> {
    this.state.diagnosis = await this.client.getDiagnosis(sid);
    this.state.contradiction = false;
    this.state.error = null;
  }

  private handleError(err: unknown): void {
    if (err instanceof ApiError && err.contradictory) {
      // keep the last consistent posterior on screen, raise the banner
      this.state.contradiction = true;
      return;
    }
    this.state.error = err instanceof Error ? err.message : String(err);
  }

  /**
   * What-if: fetch the decision posterior as if `variable` were set to
   * `label`, without touching the session. Uses a throwaway session so the
   * service stays the only source of probabilities.
   */
  async previewEvidence(variable: string, label: string): Promise<void> {
    const schema = this.state.schema;
    if (schema === null) {
      return;
    }
    const token = ++this.previewToken;
    let tempId: string | null = null;
    try {
      tempId = await this.client.createSession();
      const full: Record<string, string | null> = { ...this.state.evidence };
      full[variable] = label;
      await this.client.setEvidence(tempId, full);
      const doc = await this.client.getPosterior(tempId, schema.decision);
      if (token === this.previewToken) {
        this.state.preview = { variable, label, doc };
        this.emit();
      }
    } catch (err) {
      // a contradictory hypothetical is not a session problem: drop the
      // preview quietly and leave the committed posterior alone
      if (token === this.previewToken) {
        this.state.preview = null;
        this.emit();
      }
      if (!(err instanceof ApiError)) {
        throw err;
      }
    } finally {
      if (tempId !== null) {
        void this.client.deleteSession(tempId).catch(() => undefined);
      }
    }
  }

  clearPreview(): void {
    this.previewToken++;
    if (this.state.preview !== null) {
      this.state.preview = null;
      this.emit();
    }
  }
}
