/**
 * Browser wiring: forms, draft persistence, and rendering.
 *
 * Drafts persist in localStorage keyed by session id so a refresh never
 * loses unsubmitted data; the session itself is restored from the service
 * snapshot (the server state is authoritative).
 */

import { ServiceClient } from "./api.js";
import { ConsoleSession, parseDraftText } from "./state.js";
import {
  allocationCard,
  errorBanner,
  previewPanel,
  resultPanel,
  sigmaTableHtml,
  timelineHtml,
} from "./views.js";

const DRAFT_PREFIX = "neyman-draft:";
const SESSION_KEY = "neyman-session";

function draftKey(sessionId: string): string {
  return `${DRAFT_PREFIX}${sessionId}`;
}

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export function bootstrap(): void {
  const client = new ServiceClient("");
  const session = new ConsoleSession(client);

  const stageEl = byId<HTMLDivElement>("stage-card");
  const timelineEl = byId<HTMLDivElement>("timeline");
  const sigmaEl = byId<HTMLDivElement>("sigma-history");
  const resultEl = byId<HTMLDivElement>("result");
  const previewEl = byId<HTMLDivElement>("preview");
  const errorEl = byId<HTMLDivElement>("errors");
  const treatedInput = byId<HTMLTextAreaElement>("treated-draft");
  const controlInput = byId<HTMLTextAreaElement>("control-draft");

  function render(): void {
    stageEl.innerHTML = allocationCard(session.pending, session.done);
    timelineEl.innerHTML = timelineHtml(session.timeline);
    sigmaEl.innerHTML = sigmaTableHtml(session.sigmaHistory);
    resultEl.innerHTML = resultPanel(session.totals, session.tauHat);
  }

  function showError(err: unknown): void {
    errorEl.innerHTML = errorBanner(err instanceof Error ? err.message : String(err));
  }

  function clearError(): void {
    errorEl.innerHTML = "";
  }

  function persistDrafts(): void {
    if (session.sessionId) {
      localStorage.setItem(
        draftKey(session.sessionId),
        JSON.stringify({ treated: treatedInput.value, control: controlInput.value }),
      );
    }
  }

  function restoreDrafts(): void {
    if (!session.sessionId) return;
    const raw = localStorage.getItem(draftKey(session.sessionId));
    if (!raw) return;
    const saved = JSON.parse(raw) as { treated: string; control: string };
    treatedInput.value = saved.treated;
    controlInput.value = saved.control;
  }

  treatedInput.addEventListener("input", persistDrafts);
  controlInput.addEventListener("input", persistDrafts);

  byId<HTMLFormElement>("start-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    clearError();
    const form = event.target as HTMLFormElement;
    const data = new FormData(form);
    try {
      await session.start({
        T: Number(data.get("T")),
        M: Number(data.get("M")),
        schedule: String(data.get("schedule") || "geometric"),
      });
      localStorage.setItem(SESSION_KEY, session.sessionId ?? "");
      treatedInput.value = "";
      controlInput.value = "";
      render();
    } catch (err) {
      showError(err);
    }
  });

  byId<HTMLButtonElement>("submit-stage").addEventListener("click", async () => {
    clearError();
    try {
      session.setDraft("treated", parseDraftText(treatedInput.value));
      session.setDraft("control", parseDraftText(controlInput.value));
      const validation = session.validateDrafts();
      if (!validation.ok) {
        throw new Error(
          `counts must match the allocation: treated ${validation.treated.got}/` +
            `${validation.treated.expected}, control ${validation.control.got}/` +
            `${validation.control.expected}`,
        );
      }
      await session.submitStage();
      if (session.sessionId) localStorage.removeItem(draftKey(session.sessionId));
      treatedInput.value = "";
      controlInput.value = "";
      render();
    } catch (err) {
      showError(err);
    }
  });

  byId<HTMLButtonElement>("preview-drafts").addEventListener("click", async () => {
    clearError();
    try {
      session.setDraft("treated", parseDraftText(treatedInput.value));
      session.setDraft("control", parseDraftText(controlInput.value));
      const preview = await session.whatIfPreview();
      previewEl.innerHTML = previewPanel(
        session.pending,
        preview.stages?.[0],
        "with current drafts",
      );
    } catch (err) {
      showError(err);
    }
  });

  byId<HTMLButtonElement>("preview-swap").addEventListener("click", async () => {
    clearError();
    try {
      const last = session.sigmaHistory[session.sigmaHistory.length - 1];
      if (!last) throw new Error("no estimates yet to swap");
      const preview = await session.whatIfPreview({
        sigma_hat: { treated: last.sigma1_hat, control: last.sigma0_hat },
        swap_arms: true,
      });
      previewEl.innerHTML = previewPanel(
        session.pending,
        preview.stages?.[0],
        "arms swapped",
      );
    } catch (err) {
      showError(err);
    }
  });

  const existing = localStorage.getItem(SESSION_KEY);
  if (existing) {
    session
      .restore(existing)
      .then(() => {
        restoreDrafts();
        render();
      })
      .catch(() => localStorage.removeItem(SESSION_KEY));
  }
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", bootstrap);
}
