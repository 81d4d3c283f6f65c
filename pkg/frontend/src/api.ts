/**
 * Typed client for the /v1 experiment service.
 *
 * The console never computes allocations itself: every number rendered comes
 * from these endpoints, so the service's state machine is the single source
 * of truth.
 */

export interface StageAllocation {
  stage_index: number;
  t1: number;
  t0: number;
  case_label: string;
  clamped: boolean;
}

export interface DesignConfigJson {
  kind: string;
  T: number;
  M: number;
  betas: number[];
  min_arm_obs: number;
}

export interface ArmPair<T> {
  treated: T;
  control: T;
}

export interface CreateSessionRequest {
  T: number;
  M: number;
  design?: string;
  beta?: number;
  betas?: number[];
  schedule?: string;
  C?: number;
  min_arm_obs?: number;
}

export interface CreateSessionResponse {
  session_id: string;
  stage: StageAllocation;
  case_label: string;
  config: DesignConfigJson;
}

export interface SigmaHistoryEntry {
  stage: number;
  sigma1_hat: number;
  sigma0_hat: number;
  share1: number;
  share0: number;
}

export interface SubmitStageResponse {
  session_id: string;
  stage: StageAllocation | null;
  case_path: string[];
  case_label: string;
  sigma_hat: ArmPair<number> | null;
  shares: ArmPair<number> | null;
  frozen_arm: string | null;
  done: boolean;
  totals?: { t1: number; t0: number };
  tau_hat?: number;
}

export interface SessionSnapshot {
  session_id: string;
  config: DesignConfigJson;
  pending: StageAllocation | null;
  case_path: string[];
  cumulative: { t1: number; t0: number };
  sigma_history: SigmaHistoryEntry[];
  stage_log: StageAllocation[];
  frozen_arm: string | null;
  done: boolean;
  totals: { t1: number; t0: number } | null;
  tau_hat: number | null;
}

export interface PreviewRequest {
  treated?: number[];
  control?: number[];
  sigma_hat?: ArmPair<number>;
  swap_arms?: boolean;
  config?: CreateSessionRequest;
}

export interface PreviewResponse {
  case_path?: string[];
  stages?: StageAllocation[];
  frozen_arm?: string | null;
  done?: boolean;
  stage?: StageAllocation;
  config?: DesignConfigJson;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly detail?: string | null,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new ServiceError(
        response.status,
        String(payload.code ?? "Error"),
        String(payload.message ?? response.statusText),
        payload.detail,
      );
    }
    return payload as T;
  }

  createSession(body: CreateSessionRequest): Promise<CreateSessionResponse> {
    return this.request("POST", "/v1/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return this.request("GET", `/v1/sessions/${sessionId}`);
  }

  submitStage(sessionId: string, drafts: ArmPair<number[]>): Promise<SubmitStageResponse> {
    return this.request("POST", `/v1/sessions/${sessionId}/stages`, drafts);
  }

  preview(sessionId: string, body: PreviewRequest): Promise<PreviewResponse> {
    return this.request("POST", `/v1/sessions/${sessionId}/preview`, body);
  }
}
