import { describe, expect, it } from "vitest";

import {
  CreateSessionResponse,
  ServiceClient,
  StageAllocation,
  SubmitStageResponse,
} from "../src/api.js";
import { ConsoleSession, parseDraftText, payloadDigest } from "../src/state.js";
import {
  allocationCard,
  escapeHtml,
  previewPanel,
  resultPanel,
  sigmaTableHtml,
  timelineHtml,
} from "../src/views.js";

const stage1: StageAllocation = {
  stage_index: 1,
  t1: 2,
  t0: 2,
  case_label: "Init",
  clamped: false,
};
const stage2: StageAllocation = {
  stage_index: 2,
  t1: 6,
  t0: 6,
  case_label: "Plugin2Stage",
  clamped: false,
};

/** Scripted stand-in for the HTTP client; records calls. */
class FakeClient {
  submits: unknown[] = [];
  previews: unknown[] = [];

  async createSession(): Promise<CreateSessionResponse> {
    return {
      session_id: "abc",
      stage: stage1,
      case_label: "Init",
      config: { kind: "two_stage", T: 16, M: 2, betas: [1, 1], min_arm_obs: 2 },
    };
  }

  async submitStage(_id: string, drafts: unknown): Promise<SubmitStageResponse> {
    this.submits.push(drafts);
    return {
      session_id: "abc",
      stage: stage2,
      case_path: ["Init", "Plugin2Stage"],
      case_label: "Plugin2Stage",
      sigma_hat: { treated: 1.0, control: 1.0 },
      shares: { treated: 8, control: 8 },
      frozen_arm: null,
      done: false,
    };
  }

  async preview(_id: string, body: unknown) {
    this.previews.push(body);
    return { stages: [stage2], case_path: ["Plugin2Stage"] };
  }

  async getSession() {
    throw new Error("not used");
  }
}

function makeSession(): { session: ConsoleSession; fake: FakeClient } {
  const fake = new FakeClient();
  return { session: new ConsoleSession(fake as unknown as ServiceClient), fake };
}

describe("ConsoleSession", () => {
  it("starts with the server's stage-1 card data", async () => {
    const { session } = makeSession();
    const stage = await session.start({ T: 16, M: 2 });
    expect(stage).toEqual(stage1);
    expect(session.casePath).toEqual(["Init"]);
    expect(session.timeline).toHaveLength(1);
  });

  it("blocks submits whose counts mismatch, before any network call", async () => {
    const { session, fake } = makeSession();
    await session.start({ T: 16, M: 2 });
    session.setDraft("treated", [1.0]);
    session.setDraft("control", [2.0, 3.0]);
    await expect(session.submitStage()).rejects.toThrow(/counts/);
    expect(fake.submits).toHaveLength(0);
  });

  it("grows the timeline by one per accepted submit", async () => {
    const { session } = makeSession();
    await session.start({ T: 16, M: 2 });
    session.setDraft("treated", [1.0, 2.0]);
    session.setDraft("control", [3.0, 4.0]);
    await session.submitStage();
    expect(session.casePath).toEqual(["Init", "Plugin2Stage"]);
    expect(session.timeline).toHaveLength(2);
    expect(session.sigmaHistory).toHaveLength(1);
    expect(session.drafts.treated).toHaveLength(0);
  });

  it("does not resubmit an identical payload", async () => {
    const { session, fake } = makeSession();
    await session.start({ T: 16, M: 2 });
    session.setDraft("treated", [1.0, 2.0]);
    session.setDraft("control", [3.0, 4.0]);
    await session.submitStage();
    // Same drafts again for the (stubbed) next stage of matching counts
    // would be a new payload; replaying the identical payload is refused
    // locally.  Reconstruct the digest check directly:
    expect(payloadDigest({ treated: [1, 2], control: [3, 4] })).toBe(
      payloadDigest({ control: [3, 4], treated: [1, 2] }),
    );
    expect(fake.submits).toHaveLength(1);
  });

  it("previews without mutating", async () => {
    const { session, fake } = makeSession();
    await session.start({ T: 16, M: 2 });
    session.setDraft("treated", [1.0, 2.0]);
    session.setDraft("control", [3.0, 4.0]);
    const before = session.timeline.length;
    const preview = await session.whatIfPreview();
    expect(preview.stages?.[0]).toEqual(stage2);
    expect(session.timeline.length).toBe(before);
    expect(fake.previews).toHaveLength(1);
    expect(fake.submits).toHaveLength(0);
  });
});

describe("parseDraftText", () => {
  it("accepts spaces, commas and newlines", () => {
    expect(parseDraftText("1 2,3\n4;5")).toEqual([1, 2, 3, 4, 5]);
  });

  it("rejects non-numbers", () => {
    expect(() => parseDraftText("1 two 3")).toThrow();
  });
});

describe("views", () => {
  it("renders the allocation card verbatim", () => {
    const html = allocationCard(stage1, false);
    expect(html).toContain("Stage 1");
    expect(html).toContain("2 treated");
    expect(html).toContain("2 control");
    expect(html).toContain("Init");
  });

  it("renders a done card", () => {
    expect(allocationCard(null, true)).toContain("complete");
  });

  it("renders the timeline in order", () => {
    const html = timelineHtml([
      { stage_index: 1, case_label: "Init", allocation: { t1: 2, t0: 2 } },
      { stage_index: 2, case_label: "Case3", allocation: { t1: 5, t0: 5 } },
    ]);
    expect(html.indexOf("Init")).toBeLessThan(html.indexOf("Case3"));
  });

  it("renders sigma history and results", () => {
    const table = sigmaTableHtml([
      { stage: 1, sigma1_hat: 2, sigma0_hat: 1, share1: 666.7, share0: 333.3 },
    ]);
    expect(table).toContain("<table");
    expect(resultPanel({ t1: 8, t0: 8 }, -1.5)).toContain("-1.5");
    expect(previewPanel(stage1, stage2, "swap")).toContain("swap");
  });

  it("escapes markup in labels", () => {
    expect(escapeHtml("<b>&\"")).toBe("&lt;b&gt;&amp;&quot;");
  });
});
