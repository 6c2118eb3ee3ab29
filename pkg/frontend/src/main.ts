// Browser wiring: one root element, event delegation, re-render on change.

import { NavigatorClient } from "./client.js";
import { CaseNavigator } from "./controller.js";
import { renderApp } from "./render.js";

const root = document.getElementById("app");
const baseInput = document.getElementById("base-url") as HTMLInputElement | null;
const connectBtn = document.getElementById("connect") as HTMLButtonElement | null;
if (!root || !baseInput || !connectBtn) {
  throw new Error("page skeleton is missing #app, #base-url or #connect");
}

const params = new URLSearchParams(window.location.search);
baseInput.value = params.get("api") ?? baseInput.value ?? "http://127.0.0.1:8000";

let navigator_: CaseNavigator | null = null;

function draw(): void {
  if (navigator_) root!.innerHTML = renderApp(navigator_.state);
}

connectBtn.addEventListener("click", () => {
  navigator_ = new CaseNavigator(new NavigatorClient(baseInput.value.trim()));
  navigator_.onChange = draw;
  void navigator_.connect();
});

function realizedKpi(): number | undefined {
  const el = document.getElementById("realized-kpi") as HTMLInputElement | null;
  if (!el || el.value.trim() === "") return undefined;
  const v = Number(el.value);
  return Number.isFinite(v) ? v : undefined;
}

root.addEventListener("click", (ev) => {
  if (!navigator_) return;
  const target = ev.target as HTMLElement;
  const pick = target.closest<HTMLElement>("button.pick");
  if (pick?.dataset.activity) {
    void navigator_.choose(pick.dataset.activity, realizedKpi());
    return;
  }
  if (target.closest("button.retry")) {
    void navigator_.refresh();
    return;
  }
  if (target.closest("button.restart")) {
    navigator_.restart();
  }
});

root.addEventListener("submit", (ev) => {
  ev.preventDefault();
  if (!navigator_) return;
  const select = document.getElementById("first-activity") as HTMLSelectElement | null;
  const kpi = document.getElementById("first-kpi") as HTMLInputElement | null;
  if (!select || !select.value) return;
  const firstKpi = kpi && kpi.value.trim() !== "" ? Number(kpi.value) : 0;
  void navigator_.start(select.value, Number.isFinite(firstKpi) ? firstKpi : 0);
});
