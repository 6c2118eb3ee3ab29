"""Episodic environment over the DFG and KPI predictor.

States carry the running prefix (activity, KPI value) pairs; actions are
vocabulary activities or EOS. Mid-episode rewards are 0; the terminal
reward scales with the deviation of the accumulated goal value from the
threshold, optionally plus a balancing bonus for matching the tail of the
ground-truth sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dfg as dg
from . import kpi_model as km
from .event_log import Trace


class InvalidActionError(ValueError):
    """Raised when a masked environment receives a non-edge action."""


@dataclass(frozen=True)
class EnvState:
    """prefix holds (activity, kpi days) since episode start, seed included."""

    prefix: tuple[tuple[int, float], ...]
    accumulated_goal: float
    decisions: int = 0  # total step() calls, for runaway protection

    @property
    def prev_activity(self) -> int:
        return self.prefix[-1][0]

    @property
    def prev_kpi(self) -> float:
        return self.prefix[-1][1]

    @property
    def steps_taken(self) -> int:
        return len(self.prefix)

    @property
    def activities(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.prefix)


@dataclass(frozen=True)
class RewardConfig:
    omega: float
    max_steps: int
    balancing_enabled: bool = False
    k: int = 3
    invalid_penalty: float = -4.0
    direction: str = "minimize"
    decision_cap: int | None = None  # force-stop for non-masked variants

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.direction not in ("minimize", "maximize"):
            raise ValueError("direction must be minimize or maximize")


@dataclass(frozen=True)
class EpisodeRecord:
    activities: tuple[int, ...]  # generated sequence, seed activity first
    rewards: tuple[float, ...]  # one entry per step() call
    terminal_reward: float  # r, before any balancing bonus
    balancing: float  # delta r_k (0 when balancing disabled)
    goal_value: float
    goal_satisfied: bool
    conformant: bool
    gt_trace_id: str


def reset(gt_trace: Trace, graph: dg.Dfg) -> EnvState:
    """Seed an episode with the ground-truth first activity and its KPI."""
    if len(gt_trace) == 0:
        raise ValueError("cannot reset from an empty trace")
    if not dg.is_conformant(graph, gt_trace):
        raise ValueError(f"seed trace {gt_trace.trace_id!r} is not conformant")
    first = gt_trace.events[0]
    return EnvState(
        prefix=((first.activity, first.activity_time),),
        accumulated_goal=first.activity_time,
    )


def terminal_reward(goal: float, omega: float, satisfied: bool) -> float:
    """Deviation-proportional terminal reward: +/- 2|G - omega| / omega."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    magnitude = 2.0 * abs(goal - omega) / omega
    return magnitude if satisfied else -magnitude


def goal_satisfied(
    goal: float, omega: float, mae_total: float, direction: str = "minimize"
) -> bool:
    """MAE-relaxed goal test, lenient side of the prediction-error band."""
    if mae_total < 0:
        raise ValueError("mae_total must be >= 0")
    if direction == "minimize":
        return goal - mae_total <= omega
    if direction == "maximize":
        return goal + mae_total > omega
    raise ValueError("direction must be minimize or maximize")


def balancing_reward(generated, gt, k: int) -> float:
    """Positional last-k comparison: +0.5 per match, -0.5 per mismatch.

    A position missing from either sequence counts as a mismatch, so the
    total is always 0.5 * (matches - mismatches) with k terms.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    total = 0.0
    for i in range(1, k + 1):
        if i <= len(generated) and i <= len(gt) and generated[-i] == gt[-i]:
            total += 0.5
        else:
            total -= 0.5
    return total


def action_mask(
    state: EnvState,
    graph: dg.Dfg,
    max_steps: int | None = None,
    hops: dict[int, int] | None = None,
) -> np.ndarray:
    """Boolean vector over vocabulary + EOS, true on DFG-valid actions.

    With max_steps given, activities that cannot reach EOS within the
    remaining budget are masked off too, so a capped episode can always
    finish with a valid EOS transition. Never all-false on a valid graph.
    """
    mask = np.zeros(graph.n_actions, dtype=bool)
    succ = graph.successors.get(state.prev_activity, ())
    if max_steps is not None and hops is None:
        hops = dg.hops_to_eos(graph)
    budget = None if max_steps is None else max_steps - state.steps_taken
    for node in succ:
        if node == graph.eos:
            mask[node] = True
        elif budget is None or hops.get(node, np.inf) <= budget:
            mask[node] = True
    if not mask.any():
        raise AssertionError(
            f"empty action mask at node {state.prev_activity} (graph violates EOS reachability)"
        )
    return mask


def step(
    state: EnvState,
    action: int,
    bank: km.PrefixModelBank,
    graph: dg.Dfg,
    cfg: RewardConfig,
    gt_trace: Trace | None = None,
    masked: bool = True,
) -> tuple[EnvState, float, bool]:
    """Advance one decision.

    Valid activity: its predicted KPI is appended, reward 0 (unless the
    step cap fires, which ends the episode with EOS semantics). Valid EOS:
    terminal reward, plus the balancing bonus when enabled (gt_trace must
    then be given). Invalid action: error under masking, otherwise the
    penalty with the state unchanged.
    """
    if not (0 <= action <= graph.eos):
        raise ValueError(f"action {action} out of range")
    decisions = state.decisions + 1
    edge_ok = (state.prev_activity, action) in graph.edges

    if not edge_ok:
        if masked:
            raise InvalidActionError(
                f"action {action} is not a DFG successor of {state.prev_activity}"
            )
        penalized = EnvState(state.prefix, state.accumulated_goal, decisions)
        if cfg.decision_cap is not None and decisions >= cfg.decision_cap:
            _, reward, _ = _terminal(penalized, bank, cfg, gt_trace)
            return penalized, cfg.invalid_penalty + reward, True
        return penalized, cfg.invalid_penalty, False

    if action == graph.eos:
        nxt = EnvState(state.prefix, state.accumulated_goal, decisions)
        return _terminal(nxt, bank, cfg, gt_trace)

    kpi = km.predict(bank, list(state.prefix), action).value
    nxt = EnvState(
        prefix=state.prefix + ((action, kpi),),
        accumulated_goal=state.accumulated_goal + kpi,
        decisions=decisions,
    )
    if nxt.steps_taken >= cfg.max_steps or (
        cfg.decision_cap is not None and decisions >= cfg.decision_cap
    ):
        return _terminal(nxt, bank, cfg, gt_trace)
    return nxt, 0.0, False


def _terminal(
    state: EnvState, bank: km.PrefixModelBank, cfg: RewardConfig, gt_trace: Trace | None
) -> tuple[EnvState, float, bool]:
    predicted_steps = state.steps_taken - 1  # the seed KPI is realized
    mae_total = km.cumulative_mae(bank, predicted_steps)
    satisfied = goal_satisfied(state.accumulated_goal, cfg.omega, mae_total, cfg.direction)
    reward = terminal_reward(state.accumulated_goal, cfg.omega, satisfied)
    if cfg.balancing_enabled:
        if gt_trace is None:
            raise ValueError("balancing reward needs the ground-truth trace")
        reward += balancing_reward(state.activities, gt_trace.activities, cfg.k)
    return state, reward, True


def episode_record(
    state: EnvState,
    rewards: list[float],
    bank: km.PrefixModelBank,
    graph: dg.Dfg,
    cfg: RewardConfig,
    gt_trace: Trace,
) -> EpisodeRecord:
    """Summarize a finished episode for evaluation and JSONL export."""
    mae_total = km.cumulative_mae(bank, state.steps_taken - 1)
    satisfied = goal_satisfied(state.accumulated_goal, cfg.omega, mae_total, cfg.direction)
    balancing = (
        balancing_reward(state.activities, gt_trace.activities, cfg.k)
        if cfg.balancing_enabled
        else 0.0
    )
    return EpisodeRecord(
        activities=state.activities,
        rewards=tuple(rewards),
        terminal_reward=terminal_reward(state.accumulated_goal, cfg.omega, satisfied),
        balancing=balancing,
        goal_value=state.accumulated_goal,
        goal_satisfied=satisfied,
        conformant=dg.sequence_conformant(graph, state.activities),
        gt_trace_id=gt_trace.trace_id,
    )


def write_jsonl(records, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.__dict__, sort_keys=True, default=list) + "\n")


def read_jsonl(path: str | Path) -> list[EpisodeRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        doc = json.loads(line)
        out.append(
            EpisodeRecord(
                activities=tuple(doc["activities"]),
                rewards=tuple(doc["rewards"]),
                terminal_reward=doc["terminal_reward"],
                balancing=doc["balancing"],
                goal_value=doc["goal_value"],
                goal_satisfied=doc["goal_satisfied"],
                conformant=doc["conformant"],
                gt_trace_id=doc["gt_trace_id"],
            )
        )
    return out
