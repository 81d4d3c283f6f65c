/**
 * Pure view helpers: data in, HTML strings out.  No client-side math
 * beyond formatting; all displayed numbers are the service's.
 */

import { SigmaHistoryEntry, StageAllocation } from "./api.js";
import { TimelineEntry } from "./state.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toPrecision(6);
}

export function allocationCard(alloc: StageAllocation | null, done: boolean): string {
  if (done) {
    return `<div class="card done-card">Experiment complete</div>`;
  }
  if (!alloc) {
    return `<div class="card">No stage pending</div>`;
  }
  return [
    `<div class="card allocation-card" data-stage="${alloc.stage_index}">`,
    `<h2>Stage ${alloc.stage_index}</h2>`,
    `<p class="counts"><span class="treated">${alloc.t1} treated</span>`,
    ` / <span class="control">${alloc.t0} control</span></p>`,
    `<p class="case">case: ${escapeHtml(alloc.case_label)}</p>`,
    alloc.clamped ? `<p class="warn">rounded at a case boundary</p>` : ``,
    `</div>`,
  ].join("");
}

export function timelineHtml(entries: TimelineEntry[]): string {
  const items = entries
    .map(
      (e) =>
        `<li data-stage="${e.stage_index}"><span class="label">${escapeHtml(
          e.case_label,
        )}</span> stage ${e.stage_index}: (${e.allocation.t1}, ${e.allocation.t0})</li>`,
    )
    .join("");
  return `<ol class="timeline">${items}</ol>`;
}

export function sigmaTableHtml(history: SigmaHistoryEntry[]): string {
  if (history.length === 0) {
    return `<p class="empty">No estimates yet</p>`;
  }
  const rows = history
    .map(
      (h) =>
        `<tr><td>${h.stage}</td><td>${fmt(h.sigma1_hat)}</td><td>${fmt(
          h.sigma0_hat,
        )}</td><td>${fmt(h.share1)}</td><td>${fmt(h.share0)}</td></tr>`,
    )
    .join("");
  return (
    `<table class="sigma-history"><thead><tr>` +
    `<th>stage</th><th>sd&#770; treated</th><th>sd&#770; control</th>` +
    `<th>share treated</th><th>share control</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function resultPanel(
  totals: { t1: number; t0: number } | null,
  tauHat: number | null,
): string {
  if (!totals || tauHat === null) {
    return ``;
  }
  return (
    `<div class="card result-panel"><h2>Result</h2>` +
    `<p>totals: (${totals.t1}, ${totals.t0})</p>` +
    `<p>estimated effect: <strong>${tauHat}</strong></p></div>`
  );
}

export function previewPanel(
  current: StageAllocation | null,
  preview: StageAllocation | undefined,
  label: string,
): string {
  const side = (title: string, a: StageAllocation | null | undefined) =>
    `<div class="side"><h3>${escapeHtml(title)}</h3>` +
    (a ? `<p>(${a.t1}, ${a.t0}) ${escapeHtml(a.case_label)}</p>` : `<p>-</p>`) +
    `</div>`;
  return (
    `<div class="preview-panel">` +
    side("committed next", current) +
    side(label, preview) +
    `</div>`
  );
}

export function errorBanner(message: string): string {
  return `<div class="error-banner">${escapeHtml(message)}</div>`;
}
