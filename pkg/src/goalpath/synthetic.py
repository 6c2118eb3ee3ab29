"""Synthetic event-log generators for demos and the test suite.

Three families: a ticket-management log at the scale of the public
helpdesk benchmarks, an 8-activity branching log where unmasked policies
visibly violate the process model, and a tiny deterministic-KPI world
whose optimum is enumerable by hand.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .event_log import ActivityVocab, Event, EventLog, Trace, derive_activity_times, write_csv

DAY_MS = 86_400_000

# (path template, probability, per-step gap means in days after the first event)
# Durations are scaled so the mean case runs ~8.5 days with Q3 near 14.
_HELPDESK_TEMPLATES = [
    (("Open Email", "Triage", "Cancel"), 0.075, (0.6, 0.6)),
    (("Open Email", "Triage", "Resolve", "Close"), 0.25, (1.2, 2.4, 0.6)),
    (("Open Email", "Triage", "Assign", "Work", "Resolve", "Close"), 0.125, (1.2, 1.8, 4.9, 3.7, 0.6)),
    (("Open Email", "Triage", "Assign", "Work", "Wait Customer", "Work", "Resolve", "Close"),
     0.05, (1.2, 1.8, 3.7, 6.1, 7.3, 3.7, 0.6)),
    (("Open Phone", "Triage", "Resolve", "Close"), 0.225, (0.9, 2.1, 0.6)),
    (("Open Phone", "Triage", "Escalate", "Work", "Resolve", "Close"), 0.15, (1.2, 2.4, 4.3, 2.4, 0.6)),
    (("Open Phone", "Triage", "Escalate", "Work", "Wait Customer", "Work", "Resolve", "Close"),
     0.075, (1.2, 2.4, 4.9, 7.3, 7.9, 3.7, 0.6)),
    (("Open Phone", "Triage", "Cancel"), 0.05, (0.6, 0.6)),
]

_HELPDESK_LABELS = (
    "Open Email", "Open Phone", "Triage", "Assign", "Work",
    "Wait Customer", "Resolve", "Close", "Cancel", "Escalate",
)


def helpdesk_like_log(n_traces: int = 3804, seed: int = 0) -> EventLog:
    """Ticket-management log: two intake channels, quick and slow paths,
    a fast cancellation branch, and long-running stuck cases."""
    rng = np.random.default_rng(seed)
    vocab = ActivityVocab(_HELPDESK_LABELS)
    probs = np.array([p for _, p, _ in _HELPDESK_TEMPLATES])
    probs = probs / probs.sum()
    traces = []
    for i in range(n_traces):
        path, _, gaps = _HELPDESK_TEMPLATES[rng.choice(len(_HELPDESK_TEMPLATES), p=probs)]
        ts = i * 3_600_000
        events = [Event(f"case{i:05d}", vocab.index_of(path[0]), ts)]
        for act, gap in zip(path[1:], gaps):
            noisy = gap * float(rng.lognormal(mean=-0.02, sigma=0.2))
            ts += max(1, int(round(noisy * DAY_MS)))
            events.append(Event(f"case{i:05d}", vocab.index_of(act), ts))
        traces.append(Trace(f"case{i:05d}", tuple(events)))
    return derive_activity_times(EventLog(tuple(traces), vocab))


# 8 activities, two intake channels, exclusive branches: an unmasked policy
# that mixes branches (or stops where no EOS edge exists) produces
# non-conformant sequences.
_BRANCHING_TEMPLATES = [
    (("web intake", "validate", "approve", "execute", "archive"), 0.25, (1.0, 1.5, 2.0, 0.5)),
    (("web intake", "validate", "reject", "archive"), 0.10, (1.0, 1.0, 0.5)),
    (("web intake", "enrich", "validate", "approve", "execute", "archive"), 0.15,
     (0.8, 1.2, 1.5, 2.0, 0.5)),
    (("mail intake", "enrich", "validate", "approve", "execute", "archive"), 0.20,
     (0.8, 1.2, 1.5, 2.0, 0.5)),
    (("mail intake", "validate", "reject", "archive"), 0.15, (1.0, 1.0, 0.5)),
    (("mail intake", "enrich", "validate", "reject", "archive"), 0.15,
     (0.8, 1.2, 1.8, 0.5)),
]


def branching_log(n_traces: int = 80, seed: int = 0) -> EventLog:
    rng = np.random.default_rng(seed)
    labels = ("web intake", "mail intake", "validate", "enrich",
              "approve", "execute", "reject", "archive")
    vocab = ActivityVocab(labels)
    probs = np.array([p for _, p, _ in _BRANCHING_TEMPLATES])
    probs = probs / probs.sum()
    traces = []
    for i in range(n_traces):
        path, _, gaps = _BRANCHING_TEMPLATES[rng.choice(len(_BRANCHING_TEMPLATES), p=probs)]
        ts = i * 3_600_000
        events = [Event(f"b{i:04d}", vocab.index_of(path[0]), ts)]
        for act, gap in zip(path[1:], gaps):
            noisy = gap * float(rng.lognormal(mean=-0.02, sigma=0.25))
            ts += max(1, int(round(noisy * DAY_MS)))
            events.append(Event(f"b{i:04d}", vocab.index_of(act), ts))
        traces.append(Trace(f"b{i:04d}", tuple(events)))
    return derive_activity_times(EventLog(tuple(traces), vocab))


# Five activities, five conformant paths, exact quarter-day gaps so the
# tabular predictor reproduces them with zero error:
#   A-B-D: G=4   A-B-E: G=2   A-C-D: G=3   A-C-E: G=7   A-D: G=6
_TOY_PATHS = [
    (("A", "B", "D"), (1.0, 3.0)),
    (("A", "B", "E"), (1.0, 1.0)),
    (("A", "C", "D"), (2.0, 1.0)),
    (("A", "C", "E"), (2.0, 5.0)),
    (("A", "D"), (6.0,)),
]


def toy_deterministic_log(copies: int = 3, seed: int = 0) -> EventLog:
    """Every path repeated `copies` times with exactly repeating gaps."""
    del seed  # nothing is random here; kept for a uniform signature
    vocab = ActivityVocab(("A", "B", "C", "D", "E"))
    traces = []
    idx = 0
    for _ in range(copies):
        for path, gaps in _TOY_PATHS:
            ts = idx * 3_600_000
            events = [Event(f"p{idx:03d}", vocab.index_of(path[0]), ts)]
            for act, gap in zip(path[1:], gaps):
                ts += int(gap * DAY_MS)
                events.append(Event(f"p{idx:03d}", vocab.index_of(act), ts))
            traces.append(Trace(f"p{idx:03d}", tuple(events)))
            idx += 1
    return derive_activity_times(EventLog(tuple(traces), vocab))


_GENERATORS = {
    "helpdesk": helpdesk_like_log,
    "branching": branching_log,
    "toy": toy_deterministic_log,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m goalpath.synthetic",
        description="Generate a synthetic event log CSV.",
    )
    parser.add_argument("--dataset", choices=sorted(_GENERATORS), default="helpdesk")
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--traces", type=int, default=None,
                        help="trace count (defaults per dataset)")
    args = parser.parse_args(argv)
    gen = _GENERATORS[args.dataset]
    kwargs = {"seed": args.seed}
    if args.traces is not None:
        key = "copies" if args.dataset == "toy" else "n_traces"
        kwargs[key] = args.traces
    log = gen(**kwargs)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(log, args.out)
    durations = [t.duration_days() for t in log.traces]
    print(
        f"wrote {len(log)} traces / {log.event_count} events to {args.out} "
        f"(mean duration {np.mean(durations):.2f} d, "
        f"Q3 {np.percentile(durations, 75):.2f} d)"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
