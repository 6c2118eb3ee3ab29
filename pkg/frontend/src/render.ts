/**
 * HTML renderers for the navigator state. Pure string builders so the
 * tests can assert on output without a DOM; main.ts owns the wiring.
 * Every number shown here comes straight off a server response field.
 */

import type { NavigatorState } from "./controller.js";
import type { Candidate, CaseSummary, SessionView } from "./types.js";
import { EOS_LABEL } from "./types.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Display precision for KPI and goal values. */
export function fmtValue(x: number): string {
  return x.toFixed(3);
}

function fmtProbability(p: number): string {
  return (p * 100).toFixed(1) + "%";
}

export function renderTimeline(view: SessionView): string {
  const items = view.history
    .map(
      (h) =>
        `<li class="event"><span class="event-activity">${escapeHtml(h.activity)}</span>` +
        `<span class="event-kpi">${fmtValue(h.kpi)}</span>` +
        `<span class="event-source tag-${h.source}">${h.source}</span></li>`,
    )
    .join("");
  return `<ol class="timeline">${items}</ol>`;
}

export function renderGauge(view: SessionView): string {
  // width against omega just for the visual; the number is the truth
  const ratio = view.omega > 0 ? Math.max(0, Math.min(1, view.accumulated_goal / view.omega)) : 0;
  const badge = view.projected_satisfied
    ? '<span class="badge badge-gs">GS projected</span>'
    : '<span class="badge badge-gv">GV projected</span>';
  return (
    '<div class="gauge">' +
    `<div class="gauge-bar"><div class="gauge-fill" style="width:${(ratio * 100).toFixed(1)}%"></div></div>` +
    `<div class="gauge-text">goal <span class="goal-value">${fmtValue(view.accumulated_goal)}</span>` +
    ` / &omega; <span class="omega-value">${fmtValue(view.omega)}</span>` +
    ` (${escapeHtml(view.direction)}) ${badge}</div>` +
    "</div>"
  );
}

function renderCandidateRow(c: Candidate): string {
  const cls = c.recommended ? "candidate recommended" : "candidate";
  const star = c.recommended ? '<span class="star" title="recommended">&#9733;</span>' : "";
  const label = c.activity === EOS_LABEL ? "Complete case" : escapeHtml(c.activity);
  return (
    `<li class="${cls}">` +
    `<button type="button" class="pick" data-activity="${escapeHtml(c.activity)}">${label}</button>` +
    `<span class="kpi">kpi ${fmtValue(c.predicted_kpi)}</span>` +
    `<span class="prob">${fmtProbability(c.probability)}</span>${star}</li>`
  );
}

export function renderCandidates(view: SessionView): string {
  if (view.candidates.length === 1 && view.candidates[0]!.activity === EOS_LABEL) {
    // degenerate mask: the only legal move is to close the case
    return (
      '<div class="candidates eos-only">' +
      `<button type="button" class="pick complete" data-activity="${escapeHtml(EOS_LABEL)}">Complete case</button>` +
      "</div>"
    );
  }
  const rows = view.candidates.map(renderCandidateRow).join("");
  return `<ul class="candidates">${rows}</ul>`;
}

export function renderSummary(summary: CaseSummary): string {
  const badge = summary.satisfied
    ? '<span class="badge badge-gs">satisfied</span>'
    : '<span class="badge badge-gv">violated</span>';
  const path = summary.activities.map(escapeHtml).join(" &rarr; ");
  return (
    '<div class="summary">' +
    `<p>Case complete. G(&sigma;) = <span class="goal-value">${fmtValue(summary.goal_value)}</span> ${badge}</p>` +
    `<p>terminal reward <span class="reward-value">${fmtValue(summary.terminal_reward)}</span></p>` +
    `<p class="path">${path}</p>` +
    '<button type="button" class="restart">Start another case</button>' +
    "</div>"
  );
}

function renderSession(state: NavigatorState, view: SessionView): string {
  const inline = state.inline
    ? `<p class="inline-error">${escapeHtml(state.inline)}</p>`
    : "";
  const body = view.done && view.summary ? renderSummary(view.summary) : renderCandidates(view);
  const realized =
    view.done
      ? ""
      : '<label class="realized">realized KPI (optional) ' +
        '<input type="number" step="any" id="realized-kpi" placeholder="use prediction"></label>';
  return renderTimeline(view) + renderGauge(view) + inline + realized + body;
}

function renderStartForm(state: NavigatorState): string {
  const options = state.startOptions
    .map((a) => `<option value="${escapeHtml(a)}">${escapeHtml(a)}</option>`)
    .join("");
  const inline = state.inline ? `<p class="inline-error">${escapeHtml(state.inline)}</p>` : "";
  return (
    '<form class="start-form">' +
    `<label>first activity <select id="first-activity">${options}</select></label>` +
    '<label>first KPI <input type="number" step="any" id="first-kpi" value="0"></label>' +
    '<button type="submit" class="start">Start case</button>' +
    inline +
    "</form>"
  );
}

export function renderApp(state: NavigatorState): string {
  const parts: string[] = [];
  if (state.banner) {
    const retry = state.canRetry
      ? ' <button type="button" class="retry">Retry</button>'
      : "";
    const restart = state.staleSession
      ? ' <button type="button" class="restart">Start over</button>'
      : "";
    parts.push(`<div class="banner">${escapeHtml(state.banner)}${retry}${restart}</div>`);
  }
  switch (state.phase) {
    case "idle":
      parts.push('<p class="hint">Connect to a recommendation service to begin.</p>');
      break;
    case "ready":
      parts.push(renderStartForm(state));
      break;
    case "active":
    case "done":
      // a banner without a view means the last response was unusable; show nothing stale
      if (state.view) parts.push(renderSession(state, state.view));
      break;
  }
  // disabled fieldset turns off every nested control while a request is in flight
  const busy = state.busy ? " disabled" : "";
  return `<div class="navigator"${state.busy ? ' aria-busy="true"' : ""}><fieldset class="io"${busy}>${parts.join("")}</fieldset></div>`;
}
