"""Per-prefix-length KPI regressors and the MAE table used for goal relaxation.

Given a partial activity sequence and a candidate next activity, a bank
predicts the candidate's KPI value (days). One regressor is trained per
prefix length; the per-length MAE (measured on a held-out slice) feeds the
relaxed goal-satisfaction rule.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .event_log import EventLog, split
from .nets import Mlp, Sgd

BANK_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class KpiConfig:
    backend: str = "tabular"  # tabular | neural
    epochs: int = 25
    learning_rate: float = 0.01
    window: int = 4
    batch_size: int = 32
    holdout_ratio: float = 0.2
    seed: int = 0


@dataclass(frozen=True)
class KpiPrediction:
    value: float  # days, >= 0
    prefix_length: int
    fallback: bool


class TabularRegressor:
    """Conditional mean keyed on (last activity, candidate activity).

    The prefix length is implicit: the bank holds one regressor per length.
    """

    backend = "tabular"

    def __init__(self):
        self.table: dict[tuple[int, int], tuple[float, int]] = {}

    def fit_pair(self, last_act: int, candidate: int, target: float) -> None:
        mean, count = self.table.get((last_act, candidate), (0.0, 0))
        count += 1
        mean += (target - mean) / count
        self.table[(last_act, candidate)] = (mean, count)

    def lookup(self, last_act: int, candidate: int) -> float | None:
        hit = self.table.get((last_act, candidate))
        return None if hit is None else hit[0]

    def to_doc(self) -> dict:
        entries = [
            [last, cand, mean, count]
            for (last, cand), (mean, count) in sorted(self.table.items())
        ]
        return {"backend": self.backend, "entries": entries}

    @classmethod
    def from_doc(cls, doc: dict) -> "TabularRegressor":
        reg = cls()
        for last, cand, mean, count in doc["entries"]:
            reg.table[(int(last), int(cand))] = (float(mean), int(count))
        return reg


class NeuralRegressor:
    """Feedforward net over a fixed window of the prefix.

    Input: one-hot activities of the last `window` positions (zero rows for
    padding), their z-scored KPI values, and a one-hot candidate. Two tanh
    hidden layers of 64; trained by minibatch SGD with manual backprop.
    Inputs and targets use the bank-level normalization constants.
    """

    backend = "neural"

    def __init__(self, vocab_size: int, window: int, net: Mlp | None = None, seed: int = 0):
        self.vocab_size = vocab_size
        self.window = window
        in_dim = window * vocab_size + window + vocab_size
        self.net = net or Mlp([in_dim, 64, 64, 1], np.random.default_rng(seed))

    def features(self, prefix: list[tuple[int, float]], candidate: int) -> np.ndarray:
        w, v = self.window, self.vocab_size
        x = np.zeros(w * v + w + v)
        tail = prefix[-w:]
        offset = w - len(tail)
        for i, (act, kpi_norm) in enumerate(tail):
            pos = offset + i
            x[pos * v + act] = 1.0
            x[w * v + pos] = kpi_norm
        x[w * v + w + candidate] = 1.0
        return x

    def predict_norm(self, prefix: list[tuple[int, float]], candidate: int) -> float:
        out = self.net(self.features(prefix, candidate)[None, :])
        return float(out[0, 0])

    def train(
        self,
        samples: list[tuple[list[tuple[int, float]], int, float]],
        config: KpiConfig,
        rng: np.random.Generator,
    ) -> None:
        """samples: (normalized prefix, candidate, normalized target)."""
        x = np.stack([self.features(p, c) for p, c, _ in samples])
        y = np.array([[t] for _, _, t in samples])
        opt = Sgd(self.net.params(), config.learning_rate)
        n = len(samples)
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, config.batch_size):
                idx = order[lo : lo + config.batch_size]
                out, acts = self.net.forward(x[idx])
                grad = (out - y[idx]) / len(idx)
                _, gw, gb = self.net.backward(acts, grad)
                opt.step([*gw, *gb])

    def to_doc(self) -> dict:
        return {
            "backend": self.backend,
            "vocab_size": self.vocab_size,
            "window": self.window,
            "net": self.net.to_lists(),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "NeuralRegressor":
        return cls(
            vocab_size=int(doc["vocab_size"]),
            window=int(doc["window"]),
            net=Mlp.from_lists(doc["net"]),
        )


class GlobalMeanRegressor:
    """Fallback for lengths with too few samples: always the training mean."""

    backend = "global_mean"

    def __init__(self, value: float):
        self.value = value

    def to_doc(self) -> dict:
        return {"backend": self.backend, "value": self.value}

    @classmethod
    def from_doc(cls, doc: dict) -> "GlobalMeanRegressor":
        return cls(float(doc["value"]))


@dataclass
class PrefixModelBank:
    models: dict[int, object]
    mae_by_length: dict[int, float]
    vocab_size: int
    window: int
    norm_mean: float
    norm_std: float
    global_mean: float  # raw days

    @property
    def max_length(self) -> int:
        return max(self.models)


def _prefix_samples(log: EventLog) -> dict[int, list[tuple[list[tuple[int, float]], int, float]]]:
    """Per-length training pairs: (prefix as (activity, kpi) list, next activity, its kpi)."""
    by_len: dict[int, list] = {}
    for trace in log.traces:
        pairs = [(e.activity, e.activity_time) for e in trace.events]
        for k in range(1, len(pairs)):
            nxt_act, nxt_kpi = pairs[k]
            by_len.setdefault(k, []).append((pairs[:k], nxt_act, nxt_kpi))
    return by_len


def train_bank(train_log: EventLog, config: KpiConfig = KpiConfig()) -> PrefixModelBank:
    """Fit one regressor per observed prefix length.

    Traces are split (holdout_ratio, seeded) so the MAE table reflects
    held-out error; a length absent from the held-out slice falls back to
    its in-sample MAE. Lengths with fewer than 2 fit samples get the
    global-mean regressor.
    """
    if not train_log.traces:
        raise ValueError("cannot train on an empty log")
    if config.backend not in ("tabular", "neural"):
        raise ValueError(f"unknown backend {config.backend!r}")

    if config.holdout_ratio > 0:
        fit_log, held_log = split(train_log, 1.0 - config.holdout_ratio, seed=config.seed)
    else:
        fit_log, held_log = train_log, EventLog((), train_log.vocab)
    if not fit_log.traces or not any(len(t) >= 2 for t in fit_log.traces):
        fit_log = train_log  # tiny logs: fit and measure in-sample
    fit_samples = _prefix_samples(fit_log)
    if not fit_samples:
        raise ValueError("log has no prefixes (all traces have a single event)")
    held_samples = _prefix_samples(held_log)

    all_targets = [t for pairs in fit_samples.values() for _, _, t in pairs]
    norm_mean = float(np.mean(all_targets))
    norm_std = float(np.std(all_targets))
    if norm_std <= 0:
        norm_std = 1.0
    global_mean = max(0.0, norm_mean)
    vocab_size = train_log.vocab.size

    rng = np.random.default_rng(config.seed)
    models: dict[int, object] = {}
    for length in sorted(fit_samples):
        pairs = fit_samples[length]
        if len(pairs) < 2:
            models[length] = GlobalMeanRegressor(global_mean)
            continue
        if config.backend == "tabular":
            reg = TabularRegressor()
            for prefix, cand, target in pairs:
                reg.fit_pair(prefix[-1][0], cand, target)
            models[length] = reg
        else:
            reg = NeuralRegressor(vocab_size, config.window, seed=config.seed + length)
            normed = [
                (
                    [(a, (k - norm_mean) / norm_std) for a, k in prefix],
                    cand,
                    (target - norm_mean) / norm_std,
                )
                for prefix, cand, target in pairs
            ]
            reg.train(normed, config, rng)
            models[length] = reg

    bank = PrefixModelBank(
        models=models,
        mae_by_length={},
        vocab_size=vocab_size,
        window=config.window,
        norm_mean=norm_mean,
        norm_std=norm_std,
        global_mean=global_mean,
    )
    mae: dict[int, float] = {}
    for length in sorted(models):
        pairs = held_samples.get(length) or fit_samples[length]
        errs = [
            abs(predict(bank, prefix, cand).value - target)
            for prefix, cand, target in pairs
        ]
        mae[length] = float(np.mean(errs))
    bank.mae_by_length = mae
    return bank


def predict(
    bank: PrefixModelBank, prefix: list[tuple[int, float]], candidate: int
) -> KpiPrediction:
    """Predicted KPI (days) of `candidate` following `prefix`.

    prefix entries are (activity index, realized KPI in days). Candidate EOS
    predicts 0. Prefixes longer than any trained length use the longest
    model on the most recent window.
    """
    if not prefix:
        raise ValueError("prefix must be non-empty")
    if candidate == bank.vocab_size:  # EOS consumes no time
        return KpiPrediction(0.0, len(prefix), False)
    if not (0 <= candidate < bank.vocab_size):
        raise ValueError(f"candidate {candidate} outside vocabulary")

    length = len(prefix)
    fallback = False
    if length in bank.models:
        model = bank.models[length]
    else:
        model = bank.models[bank.max_length]
        fallback = True

    if model.backend == "global_mean":
        return KpiPrediction(model.value, length, True)
    if model.backend == "tabular":
        hit = model.lookup(prefix[-1][0], candidate)
        if hit is None:
            return KpiPrediction(bank.global_mean, length, True)
        return KpiPrediction(max(0.0, hit), length, fallback)
    normed = [(a, (k - bank.norm_mean) / bank.norm_std) for a, k in prefix]
    raw = model.predict_norm(normed, candidate) * bank.norm_std + bank.norm_mean
    return KpiPrediction(max(0.0, raw), length, fallback)


def cumulative_mae(bank: PrefixModelBank, m: int) -> float:
    """Sum of per-step MAEs over m predicted steps.

    A length without its own entry contributes the entry of the largest
    trained length below it (or the smallest trained length overall).
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0 or not bank.mae_by_length:
        return 0.0
    keys = sorted(bank.mae_by_length)
    total = 0.0
    for i in range(1, m + 1):
        at_or_below = [k for k in keys if k <= i]
        key = at_or_below[-1] if at_or_below else keys[0]
        total += bank.mae_by_length[key]
    return total


# --- serialization ----------------------------------------------------------


def to_doc(bank: PrefixModelBank) -> dict:
    return {
        "schema_version": BANK_SCHEMA_VERSION,
        "vocab_size": bank.vocab_size,
        "window": bank.window,
        "norm_mean": bank.norm_mean,
        "norm_std": bank.norm_std,
        "global_mean": bank.global_mean,
        "mae_by_length": {str(k): v for k, v in sorted(bank.mae_by_length.items())},
        "models": {str(k): m.to_doc() for k, m in sorted(bank.models.items())},
    }


_BACKENDS = {
    "tabular": TabularRegressor,
    "neural": NeuralRegressor,
    "global_mean": GlobalMeanRegressor,
}


def from_doc(doc: dict) -> PrefixModelBank:
    if doc.get("schema_version") != BANK_SCHEMA_VERSION:
        raise ValueError(f"unsupported bank schema version {doc.get('schema_version')!r}")
    models = {
        int(k): _BACKENDS[m["backend"]].from_doc(m) for k, m in doc["models"].items()
    }
    return PrefixModelBank(
        models=models,
        mae_by_length={int(k): float(v) for k, v in doc["mae_by_length"].items()},
        vocab_size=int(doc["vocab_size"]),
        window=int(doc["window"]),
        norm_mean=float(doc["norm_mean"]),
        norm_std=float(doc["norm_std"]),
        global_mean=float(doc["global_mean"]),
    )


def content_hash(bank: PrefixModelBank) -> str:
    blob = json.dumps(to_doc(bank), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save(bank: PrefixModelBank, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_doc(bank), sort_keys=True, indent=1) + "\n")


def load(path: str | Path) -> PrefixModelBank:
    return from_doc(json.loads(Path(path).read_text()))
