/**
 * Console session state: drafts, timeline, and submit/preview flows.
 *
 * Drafts live entirely on the client until an explicit submit; a submit is
 * blocked locally when the draft counts disagree with the pending
 * allocation, and a payload identical to the last accepted one is not sent
 * twice (mirroring the service's digest-based duplicate detection).
 */

import {
  ArmPair,
  CreateSessionRequest,
  PreviewRequest,
  PreviewResponse,
  ServiceClient,
  SigmaHistoryEntry,
  StageAllocation,
  SubmitStageResponse,
} from "./api.js";

export interface TimelineEntry {
  stage_index: number;
  case_label: string;
  allocation: { t1: number; t0: number };
}

export interface DraftValidation {
  ok: boolean;
  treated: { expected: number; got: number; ok: boolean };
  control: { expected: number; got: number; ok: boolean };
}

/** Canonical payload string; stands in for the service's sha-256 digest. */
export function payloadDigest(drafts: ArmPair<number[]>): string {
  return JSON.stringify({ control: drafts.control, treated: drafts.treated });
}

export class ConsoleSession {
  sessionId: string | null = null;
  pending: StageAllocation | null = null;
  casePath: string[] = [];
  allocations: StageAllocation[] = [];
  sigmaHistory: SigmaHistoryEntry[] = [];
  frozenArm: string | null = null;
  done = false;
  totals: { t1: number; t0: number } | null = null;
  tauHat: number | null = null;
  drafts: ArmPair<number[]> = { treated: [], control: [] };
  private lastAcceptedDigest: string | null = null;

  constructor(private readonly client: ServiceClient) {}

  /** Timeline of decided stages: one entry per allocation so far. */
  get timeline(): TimelineEntry[] {
    return this.allocations.map((a) => ({
      stage_index: a.stage_index,
      case_label: a.case_label,
      allocation: { t1: a.t1, t0: a.t0 },
    }));
  }

  async start(form: CreateSessionRequest): Promise<StageAllocation> {
    const created = await this.client.createSession(form);
    this.sessionId = created.session_id;
    this.pending = created.stage;
    this.casePath = [created.case_label];
    this.allocations = [created.stage];
    this.sigmaHistory = [];
    this.frozenArm = null;
    this.done = false;
    this.totals = null;
    this.tauHat = null;
    this.drafts = { treated: [], control: [] };
    this.lastAcceptedDigest = null;
    return created.stage;
  }

  /** Re-hydrate from the server snapshot (page refresh mid-session). */
  async restore(sessionId: string): Promise<void> {
    const snap = await this.client.getSession(sessionId);
    this.sessionId = snap.session_id;
    this.pending = snap.pending;
    this.casePath = snap.case_path;
    // The server logs every emitted stage, including pre-committed future
    // stages after a freeze and skipped zero-size stages; the timeline
    // shows only stages that have needed data so far.
    const horizon = snap.pending ? snap.pending.stage_index : Number.POSITIVE_INFINITY;
    this.allocations = snap.stage_log.filter(
      (a) => a.stage_index <= horizon && a.t1 + a.t0 > 0,
    );
    this.sigmaHistory = snap.sigma_history;
    this.frozenArm = snap.frozen_arm;
    this.done = snap.done;
    this.totals = snap.totals;
    this.tauHat = snap.tau_hat;
  }

  setDraft(arm: "treated" | "control", values: number[]): void {
    this.drafts = { ...this.drafts, [arm]: values.slice() };
  }

  validateDrafts(): DraftValidation {
    const expected1 = this.pending?.t1 ?? 0;
    const expected0 = this.pending?.t0 ?? 0;
    const treated = {
      expected: expected1,
      got: this.drafts.treated.length,
      ok: this.drafts.treated.length === expected1,
    };
    const control = {
      expected: expected0,
      got: this.drafts.control.length,
      ok: this.drafts.control.length === expected0,
    };
    return { ok: treated.ok && control.ok, treated, control };
  }

  /**
   * Submit the drafts for the pending stage.  Count mismatches never reach
   * the network; an identical repeat of the accepted payload is a no-op.
   */
  async submitStage(): Promise<SubmitStageResponse | null> {
    if (!this.sessionId || !this.pending || this.done) {
      throw new Error("no stage is awaiting data");
    }
    const validation = this.validateDrafts();
    if (!validation.ok) {
      throw new Error(
        `draft counts do not match the pending allocation: treated ` +
          `${validation.treated.got}/${validation.treated.expected}, control ` +
          `${validation.control.got}/${validation.control.expected}`,
      );
    }
    const digest = payloadDigest(this.drafts);
    if (digest === this.lastAcceptedDigest) {
      return null; // duplicate submit; the server already has this payload
    }
    const response = await this.client.submitStage(this.sessionId, this.drafts);
    this.lastAcceptedDigest = digest;
    this.applySubmit(response);
    return response;
  }

  private applySubmit(response: SubmitStageResponse): void {
    this.casePath = response.case_path;
    this.pending = response.stage;
    this.frozenArm = response.frozen_arm;
    this.done = response.done;
    if (response.stage) {
      this.allocations = [...this.allocations, response.stage];
    }
    if (response.sigma_hat && response.shares) {
      this.sigmaHistory = [
        ...this.sigmaHistory,
        {
          stage: this.sigmaHistory.length + 1,
          sigma1_hat: response.sigma_hat.treated,
          sigma0_hat: response.sigma_hat.control,
          share1: response.shares.treated,
          share0: response.shares.control,
        },
      ];
    }
    if (response.done) {
      this.totals = response.totals ?? null;
      this.tauHat = response.tau_hat ?? null;
    }
    this.drafts = { treated: [], control: [] };
  }

  /**
   * Read-only what-if: current drafts, a hypothetical sigma pair, swapped
   * arms, or an alternate design config.  Never mutates the session.
   */
  async whatIfPreview(request?: PreviewRequest): Promise<PreviewResponse> {
    if (!this.sessionId) {
      throw new Error("no session");
    }
    const body: PreviewRequest =
      request ?? { treated: this.drafts.treated, control: this.drafts.control };
    return this.client.preview(this.sessionId, body);
  }
}

export function parseDraftText(text: string): number[] {
  const parts = text.split(/[\s,;]+/).filter((p) => p.length > 0);
  const values = parts.map(Number);
  if (values.some((v) => Number.isNaN(v))) {
    throw new Error("drafts must be numbers separated by spaces or commas");
  }
  return values;
}
