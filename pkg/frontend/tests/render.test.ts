import { describe, expect, it } from "vitest";
import type { NavigatorState } from "../src/controller.js";
import {
  escapeHtml,
  fmtValue,
  renderApp,
  renderCandidates,
  renderGauge,
  renderSummary,
} from "../src/render.js";
import type { SessionView } from "../src/types.js";
import { loadTranscript } from "./replay.js";

function baseState(overrides: Partial<NavigatorState> = {}): NavigatorState {
  return {
    phase: "active",
    busy: false,
    health: { version: 1, status: "ok" },
    startOptions: ["A"],
    view: null,
    banner: null,
    inline: null,
    canRetry: false,
    staleSession: false,
    ...overrides,
  };
}

function view(overrides: Partial<SessionView> = {}): SessionView {
  return {
    version: 1,
    session_id: "s1",
    history: [{ activity: "A", kpi: 0, source: "given" }],
    accumulated_goal: 0,
    omega: 4,
    direction: "minimize",
    projected_satisfied: true,
    done: false,
    candidates: [
      { activity: "B", predicted_kpi: 1, probability: 0.7, recommended: true },
      { activity: "C", predicted_kpi: 2, probability: 0.3, recommended: false },
    ],
    ...overrides,
  };
}

describe("candidate panel", () => {
  it("renders one row per candidate with exactly one highlighted", () => {
    const html = renderCandidates(view());
    expect(html.match(/<li class="candidate/g)?.length).toBe(2);
    expect(html.match(/class="candidate recommended"/g)?.length).toBe(1);
    expect(html).toContain('data-activity="B"');
    expect(html).toContain('data-activity="C"');
  });

  it("shows a single complete-case affordance when EOS is the only move", () => {
    const html = renderCandidates(
      view({
        candidates: [
          { activity: "<EOS>", predicted_kpi: 0, probability: 1, recommended: true },
        ],
      }),
    );
    expect(html).toContain("eos-only");
    expect(html).toContain("Complete case");
    expect(html).toContain('data-activity="&lt;EOS&gt;"');
    expect(html).not.toContain("<li");
  });

  it("renders candidates straight from a recorded server response", () => {
    const started = loadTranscript().exchanges.find((e) => e.path === "/sessions")!;
    const v = started.response as SessionView;
    const html = renderCandidates(v);
    expect(html.match(/<li class="candidate/g)?.length).toBe(v.candidates.length);
    for (const c of v.candidates) {
      expect(html).toContain(`data-activity="${c.activity}"`);
      expect(html).toContain(fmtValue(c.predicted_kpi));
    }
  });
});

describe("gauge and summary", () => {
  it("shows the server-reported goal against omega with the projection badge", () => {
    const html = renderGauge(view({ accumulated_goal: 2.5, projected_satisfied: false }));
    expect(html).toContain('class="goal-value">2.500<');
    expect(html).toContain('class="omega-value">4.000<');
    expect(html).toContain("badge-gv");
  });

  it("renders the terminal summary with goal, verdict and path", () => {
    const html = renderSummary({
      goal_value: 3,
      satisfied: true,
      terminal_reward: 0.5,
      activities: ["A", "C", "D"],
    });
    expect(html).toContain('class="goal-value">3.000<');
    expect(html).toContain("satisfied");
    expect(html).toContain("0.500");
    expect(html).toContain("A &rarr; C &rarr; D");
  });
});

describe("error surfaces", () => {
  it("keeps the session markup and adds an inline message on a rejected step", () => {
    const v = view();
    const clean = renderApp(baseState({ view: v }));
    const withError = renderApp(baseState({ view: v, inline: "'E' is not valid here" }));
    expect(clean).not.toContain("inline-error");
    expect(withError).toContain("inline-error");
    expect(withError).toContain("&#39;E&#39; is not valid here");
    // same timeline and candidates either way: the view did not change
    for (const marker of ['class="timeline"', 'data-activity="B"', 'data-activity="C"']) {
      expect(withError).toContain(marker);
      expect(clean).toContain(marker);
    }
  });

  it("shows only the banner when there is nothing trustworthy to render", () => {
    const html = renderApp(baseState({ view: null, banner: "GET /sessions: unexpected response shape" }));
    expect(html).toContain('class="banner"');
    expect(html).not.toContain("timeline");
    expect(html).not.toContain("candidate");
  });

  it("offers retry and restart affordances when flagged", () => {
    const html = renderApp(
      baseState({ view: view(), banner: "network failure during step", canRetry: true, staleSession: true }),
    );
    expect(html).toContain('class="retry"');
    expect(html).toContain('class="restart"');
  });
});

describe("hygiene", () => {
  it("disables every control while a request is in flight", () => {
    const html = renderApp(baseState({ view: view(), busy: true }));
    expect(html).toContain('<fieldset class="io" disabled>');
    expect(html).toContain('aria-busy="true"');
  });

  it("escapes activity labels before they hit the DOM", () => {
    const nasty = 'A<img src=x onerror="x">';
    const html = renderCandidates(
      view({ candidates: [{ activity: nasty, predicted_kpi: 0, probability: 1, recommended: true }] }),
    );
    expect(html).not.toContain("<img");
    expect(html).toContain(escapeHtml(nasty));
  });
});
