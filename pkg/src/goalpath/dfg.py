"""Directly-follows graph: discovery, conformance, valid actions, export."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .event_log import ActivityVocab, EventLog, Trace

DFG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Dfg:
    """Immutable directly-follows graph over activity indices.

    Nodes are raw activity indices 0..len(labels)-1 plus the EOS and START
    sentinels (indices len(labels) and len(labels)+1). Edge frequencies
    count observed directly-follows pairs, including the per-trace
    START -> first and last -> EOS transitions.
    """

    labels: tuple[str, ...]
    edges: dict[tuple[int, int], int]
    successors: dict[int, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        eos, start = self.eos, self.start
        succ: dict[int, list[int]] = {}
        for (u, v), f in self.edges.items():
            if f < 1:
                raise ValueError(f"edge ({u},{v}) has frequency {f} < 1")
            if v == start:
                raise ValueError("START cannot have incoming edges")
            if u == eos:
                raise ValueError("EOS cannot have outgoing edges")
            if not (0 <= u <= start) or not (0 <= v <= eos):
                raise ValueError(f"edge ({u},{v}) outside index range")
            succ.setdefault(u, []).append(v)
        object.__setattr__(
            self, "successors", {u: tuple(sorted(vs)) for u, vs in succ.items()}
        )

    @property
    def eos(self) -> int:
        return len(self.labels)

    @property
    def start(self) -> int:
        return len(self.labels) + 1

    @property
    def n_actions(self) -> int:
        return len(self.labels) + 1

    @property
    def nodes(self) -> tuple[int, ...]:
        present = set()
        for u, v in self.edges:
            present.add(u)
            present.add(v)
        return tuple(sorted(present))


@dataclass(frozen=True)
class ConformanceReport:
    total: int
    conformant: int
    violations: tuple[tuple[str, int], ...]  # (trace_id, index of first bad target)

    @property
    def fraction(self) -> float:
        return 1.0 if self.total == 0 else self.conformant / self.total


def discover(log: EventLog, min_frequency: int = 1) -> Dfg:
    """Count directly-follows pairs (with sentinels) into a Dfg.

    With min_frequency > 1, rarer edges are dropped and the graph is pruned
    back to nodes that still lie on some START..EOS path; discovery closure
    no longer holds in that case.
    """
    if not log.traces:
        raise ValueError("cannot discover a DFG from an empty log")
    eos, start = log.vocab.eos, log.vocab.start
    counts: dict[tuple[int, int], int] = {}
    for trace in log.traces:
        path = [start, *trace.activities, eos]
        for u, v in zip(path, path[1:]):
            counts[(u, v)] = counts.get((u, v), 0) + 1
    if min_frequency > 1:
        counts = {e: f for e, f in counts.items() if f >= min_frequency}
        counts = _prune_to_paths(counts, eos, start)
    return Dfg(labels=log.vocab.labels, edges=counts)


def _prune_to_paths(
    counts: dict[tuple[int, int], int], eos: int, start: int
) -> dict[tuple[int, int], int]:
    # keep only edges whose source is reachable from START and whose target
    # co-reaches EOS; any such edge witnesses a full START..EOS path
    fwd: dict[int, set[int]] = {}
    bwd: dict[int, set[int]] = {}
    for u, v in counts:
        fwd.setdefault(u, set()).add(v)
        bwd.setdefault(v, set()).add(u)

    def closure(source: int, adj: dict[int, set[int]]) -> set[int]:
        seen = {source}
        frontier = [source]
        while frontier:
            node = frontier.pop()
            for nxt in adj.get(node, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return seen

    reach = closure(start, fwd)
    coreach = closure(eos, bwd)
    kept = {e: f for e, f in counts.items() if e[0] in reach and e[1] in coreach}
    if not any(u == start for u, _ in kept):
        raise ValueError("frequency filter disconnected START from EOS")
    return kept


def valid_actions(graph: Dfg, node: int) -> tuple[int, ...]:
    """Out-neighbors of `node`; raises for unknown nodes or EOS."""
    if node == graph.eos:
        raise KeyError("EOS has no successors")
    try:
        return graph.successors[node]
    except KeyError:
        raise KeyError(f"node {node} not in graph") from None


def is_conformant(graph: Dfg, trace: Trace) -> bool:
    return _first_violation(graph, trace.activities) is None


def sequence_conformant(graph: Dfg, activities) -> bool:
    """Conformance of a bare activity-index sequence (sentinels implied)."""
    return _first_violation(graph, tuple(activities)) is None


def _first_violation(graph: Dfg, activities: tuple[int, ...]) -> int | None:
    """Index (len(activities) meaning the EOS hop) of the first transition
    absent from the graph, or None if fully conformant."""
    path = [graph.start, *activities, graph.eos]
    for i, (u, v) in enumerate(zip(path, path[1:])):
        if (u, v) not in graph.edges:
            return i
    return None


def filter_conformant(graph: Dfg, log: EventLog) -> tuple[EventLog, ConformanceReport]:
    kept = []
    violations = []
    for trace in log.traces:
        pos = _first_violation(graph, trace.activities)
        if pos is None:
            kept.append(trace)
        else:
            violations.append((trace.trace_id, pos))
    report = ConformanceReport(
        total=len(log.traces), conformant=len(kept), violations=tuple(violations)
    )
    return EventLog(tuple(kept), log.vocab), report


def hops_to_eos(graph: Dfg) -> dict[int, int]:
    """Minimum edge count from each node to EOS (EOS itself maps to 0).

    Every node of a valid graph reaches EOS; nodes that do not (possible
    only on hand-built graphs) are absent from the result.
    """
    dist = {graph.eos: 0}
    frontier = [graph.eos]
    preds: dict[int, list[int]] = {}
    for u, v in graph.edges:
        preds.setdefault(v, []).append(u)
    while frontier:
        nxt: list[int] = []
        for node in frontier:
            for p in preds.get(node, ()):
                if p not in dist:
                    dist[p] = dist[node] + 1
                    nxt.append(p)
        frontier = nxt
    return dist


# --- serialization ---------------------------------------------------------


def to_descriptor(graph: Dfg) -> dict:
    """JSON-ready descriptor: labels, sentinel indices, sorted edge list."""
    return {
        "schema_version": DFG_SCHEMA_VERSION,
        "labels": list(graph.labels),
        "eos": graph.eos,
        "start": graph.start,
        "edges": [[u, v, f] for (u, v), f in sorted(graph.edges.items())],
    }


def from_descriptor(doc: dict) -> Dfg:
    if doc.get("schema_version") != DFG_SCHEMA_VERSION:
        raise ValueError(f"unsupported DFG schema version {doc.get('schema_version')!r}")
    edges = {(int(u), int(v)): int(f) for u, v, f in doc["edges"]}
    return Dfg(labels=tuple(doc["labels"]), edges=edges)


def content_hash(graph: Dfg) -> str:
    """Stable sha256 over the canonical descriptor; binds artifacts to a DFG."""
    blob = json.dumps(to_descriptor(graph), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save(graph: Dfg, directory: str | Path) -> None:
    """Write dfg.json (descriptor) and dfg_edges.txt (`from,to,frequency`)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = to_descriptor(graph)
    (directory / "dfg.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    lines = [f"{u},{v},{f}" for u, v, f in doc["edges"]]
    (directory / "dfg_edges.txt").write_text("\n".join(lines) + "\n")


def load(directory: str | Path) -> Dfg:
    doc = json.loads((Path(directory) / "dfg.json").read_text())
    return from_descriptor(doc)


def to_dot(graph: Dfg) -> str:
    """Graphviz DOT rendering with frequencies as edge labels."""

    def name(n: int) -> str:
        if n == graph.eos:
            return "EOS"
        if n == graph.start:
            return "START"
        return graph.labels[n].replace('"', "'")

    out = ["digraph dfg {", "  rankdir=LR;"]
    for n in graph.nodes:
        shape = "doublecircle" if n in (graph.eos, graph.start) else "box"
        out.append(f'  n{n} [label="{name(n)}", shape={shape}];')
    for (u, v), f in sorted(graph.edges.items()):
        out.append(f'  n{u} -> n{v} [label="{f}"];')
    out.append("}")
    return "\n".join(out) + "\n"


def vocab_of(graph: Dfg) -> ActivityVocab:
    return ActivityVocab(graph.labels)
