"""Policy learners over the activity environment.

Three methods: maskable actor-critic PPO (recommended), PPO with a negative
reward for invalid actions, and an off-policy DQN baseline with the same
penalty. All nets are small tanh MLPs trained with manual backprop; every
random draw flows from one seeded generator, so training is reproducible
bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import dfg as dg
from . import kpi_model as km
from . import rl_env as renv
from .event_log import EventLog, goal_threshold
from .nets import Adam, Mlp

ARTIFACT_SCHEMA_VERSION = 1

METHODS = ("maskable-ppo", "ppo-neg", "dqn-neg")


class TrainingDivergence(RuntimeError):
    """Raised when a loss or parameter goes non-finite during training."""


@dataclass(frozen=True)
class PpoConfig:
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    clip: float = 0.2
    gamma: float = 0.99
    horizon: int = 4096  # time-steps collected per update
    opt_epochs: int = 10
    entropy_coef: float = 0.01
    standardize_adv: bool = True
    hidden: tuple[int, int] = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip must be in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")


@dataclass(frozen=True)
class DqnConfig:
    lr: float = 1e-3
    replay_capacity: int = 10_000
    batch_size: int = 64
    update_every: int = 4  # env steps between gradient updates
    sync_every: int = 250  # env steps between target-net syncs
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 2_000
    gamma: float = 0.99
    hidden: tuple[int, int] = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must be >= batch size")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")


# --- distribution and return helpers -----------------------------------------


def masked_distribution(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax restricted to valid entries; invalid entries are exactly 0."""
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask has no valid entries")
    out = np.zeros_like(logits)
    valid = logits[mask]
    e = np.exp(valid - valid.max())
    out[mask] = e / e.sum()
    return out


def _masked_distribution_batch(logits: np.ndarray, masks: np.ndarray) -> np.ndarray:
    rowmax = np.max(np.where(masks, logits, -np.inf), axis=1, keepdims=True)
    e = np.zeros_like(logits)
    e[masks] = np.exp((logits - rowmax)[masks])
    return e / e.sum(axis=1, keepdims=True)


def discounted_q(rewards, gamma: float) -> np.ndarray:
    """Monte-Carlo returns to episode end: Q_t = sum_j gamma^(j-t) r_j."""
    q = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        q[t] = acc
    return q


def advantages(q: np.ndarray, values: np.ndarray, standardize: bool = False) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if q.shape != values.shape:
        raise ValueError(f"length mismatch: {q.shape} vs {values.shape}")
    adv = q - values
    if standardize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def build_features(prev_activity: int, prev_kpi: float, vocab_size: int,
                   norm_mean: float, norm_std: float) -> np.ndarray:
    x = np.zeros(vocab_size + 1)
    x[prev_activity] = 1.0
    x[vocab_size] = (prev_kpi - norm_mean) / norm_std
    return x


class TrajectoryBuffer:
    """Time-ordered on-policy records, cleared after every update."""

    def __init__(self):
        self.features: list[np.ndarray] = []
        self.actions: list[int] = []
        self.logps: list[float] = []
        self.masks: list[np.ndarray] = []
        self.rewards: list[float] = []
        self.dones: list[bool] = []

    def add(self, features, action, logp, mask, reward, done):
        self.features.append(features)
        self.actions.append(action)
        self.logps.append(logp)
        self.masks.append(mask)
        self.rewards.append(reward)
        self.dones.append(done)

    def __len__(self):
        return len(self.actions)

    @property
    def complete(self) -> bool:
        return bool(self.dones) and self.dones[-1]

    def returns(self, gamma: float) -> np.ndarray:
        if not self.complete:
            raise ValueError("buffer must end on a completed episode")
        q = np.empty(len(self))
        start = 0
        for t, done in enumerate(self.dones):
            if done:
                q[start : t + 1] = discounted_q(self.rewards[start : t + 1], gamma)
                start = t + 1
        return q

    def clear(self):
        self.__init__()


# --- PPO ----------------------------------------------------------------------


def surrogate_loss_and_grads(
    policy: Mlp,
    x: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    masks: np.ndarray,
    adv: np.ndarray,
    clip: float,
    entropy_coef: float,
) -> tuple[float, list[np.ndarray], list[np.ndarray], dict]:
    """Clipped-surrogate actor loss (negated objective, entropy included)
    and its parameter gradients. Invalid entries carry zero probability and
    contribute nothing to either."""
    n = len(actions)
    rows = np.arange(n)
    logits, acts = policy.forward(x)
    probs = _masked_distribution_batch(logits, masks)
    logp_new = np.log(probs[rows, actions])
    ratio = np.exp(logp_new - logp_old)

    # gradient of min(ratio*adv, clip(ratio)*adv) is zero on the clipped branch
    clipped_off = ((adv > 0) & (ratio > 1 + clip)) | ((adv < 0) & (ratio < 1 - clip))
    coef = np.where(clipped_off, 0.0, ratio * adv)

    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    safe_log = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    entropy = -np.sum(probs * safe_log, axis=1)
    d_entropy = -probs * (safe_log + entropy[:, None])

    d_objective = coef[:, None] * (onehot - probs) + entropy_coef * d_entropy
    _, grad_w, grad_b = policy.backward(acts, -d_objective / n)

    surrogate = np.minimum(ratio * adv, np.clip(ratio, 1 - clip, 1 + clip) * adv)
    loss = float(-np.mean(surrogate) - entropy_coef * np.mean(entropy))
    diag = {"entropy": float(np.mean(entropy)), "mean_ratio": float(np.mean(ratio))}
    return loss, grad_w, grad_b, diag


def critic_loss_and_grads(
    value: Mlp, x: np.ndarray, q: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean squared regression of v(s) toward the Monte-Carlo returns."""
    v, acts = value.forward(x)
    v = v[:, 0]
    n = len(q)
    loss = float(0.5 * np.mean((v - q) ** 2))
    _, grad_w, grad_b = value.backward(acts, ((v - q) / n)[:, None])
    return loss, grad_w, grad_b


def ppo_update(
    buffer: TrajectoryBuffer,
    policy: Mlp,
    value: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    cfg: PpoConfig,
) -> dict:
    """Clipped-surrogate update on the buffered episodes; clears the buffer.

    The probability ratio is computed under the masked distribution, so
    invalid entries contribute nothing to the gradient.
    """
    if len(buffer) == 0 or not buffer.complete:
        raise ValueError("buffer must hold at least one completed episode")
    x = np.stack(buffer.features)
    actions = np.asarray(buffer.actions)
    logp_old = np.asarray(buffer.logps)
    masks = np.stack(buffer.masks)
    q = buffer.returns(cfg.gamma)

    diag = {}
    for _ in range(cfg.opt_epochs):
        value_loss, gw, gb = critic_loss_and_grads(value, x, q)
        v = value(x)[:, 0]
        critic_opt.step([*gw, *gb])

        adv = advantages(q, v, standardize=cfg.standardize_adv)
        policy_loss, gw, gb, part = surrogate_loss_and_grads(
            policy, x, actions, logp_old, masks, adv, cfg.clip, cfg.entropy_coef
        )
        actor_opt.step([*gw, *gb])

        diag = {
            "policy_loss": policy_loss,
            "value_loss": value_loss,
            "steps": len(actions),
            **part,
        }
        if not all(np.isfinite(val) for val in diag.values()):
            raise TrainingDivergence(f"non-finite loss: {diag}")
    for p in (*policy.params(), *value.params()):
        if not np.all(np.isfinite(p)):
            raise TrainingDivergence("non-finite parameters after update")
    buffer.clear()
    return diag


# --- DQN ----------------------------------------------------------------------


def dqn_update(
    batch: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    qnet: Mlp,
    target: Mlp,
    opt: Adam,
    gamma: float,
) -> float:
    """One TD step toward r + gamma * max_a Q_target(s'); returns the loss."""
    s, a, r, s2, done = batch
    n = len(a)
    rows = np.arange(n)
    q_all, acts = qnet.forward(s)
    q_sa = q_all[rows, a]
    tgt_max = target(s2).max(axis=1)
    y = r + gamma * tgt_max * (1.0 - done)
    err = q_sa - y
    grad = np.zeros_like(q_all)
    grad[rows, a] = err / n
    _, gw, gb = qnet.backward(acts, grad)
    opt.step([*gw, *gb])
    loss = float(0.5 * np.mean(err**2))
    if not np.isfinite(loss):
        raise TrainingDivergence(f"non-finite DQN loss {loss}")
    return loss


class ReplayBuffer:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: list[tuple] = []
        self.cursor = 0

    def push(self, item: tuple):
        if len(self.items) < self.capacity:
            self.items.append(item)
        else:
            self.items[self.cursor] = item
        self.cursor = (self.cursor + 1) % self.capacity

    def sample(self, size: int, rng: np.random.Generator):
        idx = rng.integers(0, len(self.items), size=size)
        s, a, r, s2, d = zip(*(self.items[i] for i in idx))
        return (
            np.stack(s),
            np.asarray(a),
            np.asarray(r, dtype=np.float64),
            np.stack(s2),
            np.asarray(d, dtype=np.float64),
        )

    def __len__(self):
        return len(self.items)


# --- artifact -----------------------------------------------------------------


@dataclass
class PolicyArtifact:
    method: str
    labels: tuple[str, ...]
    policy: Mlp  # logits (or Q-values for dqn-neg) over vocabulary + EOS
    value: Mlp | None
    reward: renv.RewardConfig
    norm_mean: float
    norm_std: float
    dfg_hash: str
    bank_hash: str
    seed: int
    config: dict  # echo of the method config

    @property
    def vocab_size(self) -> int:
        return len(self.labels)

    def features(self, state: renv.EnvState) -> np.ndarray:
        return build_features(
            state.prev_activity, state.prev_kpi, self.vocab_size,
            self.norm_mean, self.norm_std,
        )


def act_greedy(artifact: PolicyArtifact, state: renv.EnvState, mask: np.ndarray) -> int:
    """Most probable valid action; ties break toward the lowest index."""
    logits = artifact.policy(artifact.features(state)[None, :])[0]
    return int(np.argmax(masked_distribution(logits, mask)))


def artifact_to_doc(a: PolicyArtifact) -> dict:
    reward = asdict(a.reward)
    return {
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "method": a.method,
        "labels": list(a.labels),
        "policy": a.policy.to_lists(),
        "value": a.value.to_lists() if a.value is not None else None,
        "reward": reward,
        "norm_mean": a.norm_mean,
        "norm_std": a.norm_std,
        "dfg_hash": a.dfg_hash,
        "bank_hash": a.bank_hash,
        "seed": a.seed,
        "config": a.config,
    }


def artifact_from_doc(doc: dict) -> PolicyArtifact:
    if doc.get("schema_version") != ARTIFACT_SCHEMA_VERSION:
        raise ValueError(f"unsupported artifact schema version {doc.get('schema_version')!r}")
    reward = dict(doc["reward"])
    reward["k"] = int(reward["k"])
    return PolicyArtifact(
        method=doc["method"],
        labels=tuple(doc["labels"]),
        policy=Mlp.from_lists(doc["policy"]),
        value=Mlp.from_lists(doc["value"]) if doc["value"] is not None else None,
        reward=renv.RewardConfig(**reward),
        norm_mean=float(doc["norm_mean"]),
        norm_std=float(doc["norm_std"]),
        dfg_hash=doc["dfg_hash"],
        bank_hash=doc["bank_hash"],
        seed=int(doc["seed"]),
        config=doc["config"],
    )


def save_artifact(a: PolicyArtifact, path: str | Path) -> None:
    Path(path).write_text(json.dumps(artifact_to_doc(a), sort_keys=True) + "\n")


def load_artifact(
    path: str | Path,
    graph: dg.Dfg | None = None,
    bank: km.PrefixModelBank | None = None,
) -> PolicyArtifact:
    """Load an artifact, refusing DFG/bank content-hash mismatches."""
    a = artifact_from_doc(json.loads(Path(path).read_text()))
    if graph is not None and dg.content_hash(graph) != a.dfg_hash:
        raise ValueError("artifact was trained against a different DFG")
    if bank is not None and km.content_hash(bank) != a.bank_hash:
        raise ValueError("artifact was trained against a different KPI bank")
    return a


# --- training -----------------------------------------------------------------


@dataclass
class TrainResult:
    artifact: PolicyArtifact
    records: list[renv.EpisodeRecord]
    diagnostics: list[dict]


def default_reward_config(train_log: EventLog, **overrides) -> renv.RewardConfig:
    fields = {
        "omega": goal_threshold(train_log),
        "max_steps": max(len(t) for t in train_log.traces),
    }
    fields.update(overrides)
    return renv.RewardConfig(**fields)


def train(
    train_log: EventLog,
    graph: dg.Dfg,
    bank: km.PrefixModelBank,
    method: str = "maskable-ppo",
    epochs: int = 50,
    reward_cfg: renv.RewardConfig | None = None,
    ppo_cfg: PpoConfig | None = None,
    dqn_cfg: DqnConfig | None = None,
) -> TrainResult:
    """Train a policy, iterating episode seeds round-robin over the log.

    One epoch is one pass over the training traces. Non-masked methods get
    a decision cap (4x max_steps) so penalty loops cannot run away.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if not train_log.traces:
        raise ValueError("training log is empty")
    rcfg = reward_cfg or default_reward_config(train_log)
    if method != "maskable-ppo" and rcfg.decision_cap is None:
        rcfg = replace(rcfg, decision_cap=4 * rcfg.max_steps)
    if method == "dqn-neg":
        return _train_dqn(train_log, graph, bank, epochs, rcfg, dqn_cfg or DqnConfig())
    return _train_ppo(
        train_log, graph, bank, epochs, rcfg, ppo_cfg or PpoConfig(),
        masked=(method == "maskable-ppo"),
    )


def _init_artifact(method, train_log, graph, bank, rcfg, cfg, policy, value):
    return PolicyArtifact(
        method=method,
        labels=train_log.vocab.labels,
        policy=policy,
        value=value,
        reward=rcfg,
        norm_mean=bank.norm_mean,
        norm_std=bank.norm_std,
        dfg_hash=dg.content_hash(graph),
        bank_hash=km.content_hash(bank),
        seed=cfg.seed,
        config={k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()},
    )


def _train_ppo(train_log, graph, bank, epochs, rcfg, cfg, masked):
    rng = np.random.default_rng(cfg.seed)
    v_size = train_log.vocab.size
    n_actions = train_log.vocab.n_actions
    policy = Mlp([v_size + 1, *cfg.hidden, n_actions], rng)
    value = Mlp([v_size + 1, *cfg.hidden, 1], rng)
    actor_opt = Adam(policy.params(), cfg.actor_lr)
    critic_opt = Adam(value.params(), cfg.critic_lr)
    hops = dg.hops_to_eos(graph)
    all_valid = np.ones(n_actions, dtype=bool)

    buffer = TrajectoryBuffer()
    records: list[renv.EpisodeRecord] = []
    diagnostics: list[dict] = []
    method = "maskable-ppo" if masked else "ppo-neg"

    for _ in range(epochs):
        for trace in train_log.traces:
            state = renv.reset(trace, graph)
            rewards = []
            done = False
            while not done:
                mask = (
                    renv.action_mask(state, graph, rcfg.max_steps, hops)
                    if masked
                    else all_valid
                )
                feats = build_features(
                    state.prev_activity, state.prev_kpi, v_size,
                    bank.norm_mean, bank.norm_std,
                )
                logits = policy(feats[None, :])[0]
                probs = masked_distribution(logits, mask)
                action = int(rng.choice(n_actions, p=probs))
                nxt, reward, done = renv.step(
                    state, action, bank, graph, rcfg, gt_trace=trace, masked=masked
                )
                buffer.add(feats, action, float(np.log(probs[action])), mask, reward, done)
                rewards.append(reward)
                state = nxt
            records.append(renv.episode_record(state, rewards, bank, graph, rcfg, trace))
            if len(buffer) >= cfg.horizon:
                diagnostics.append(
                    ppo_update(buffer, policy, value, actor_opt, critic_opt, cfg)
                )
    if len(buffer):
        diagnostics.append(ppo_update(buffer, policy, value, actor_opt, critic_opt, cfg))
    artifact = _init_artifact(method, train_log, graph, bank, rcfg, cfg, policy, value)
    return TrainResult(artifact, records, diagnostics)


def _train_dqn(train_log, graph, bank, epochs, rcfg, cfg):
    rng = np.random.default_rng(cfg.seed)
    v_size = train_log.vocab.size
    n_actions = train_log.vocab.n_actions
    qnet = Mlp([v_size + 1, *cfg.hidden, n_actions], rng)
    target = Mlp.from_lists(qnet.to_lists())
    opt = Adam(qnet.params(), cfg.lr)
    replay = ReplayBuffer(cfg.replay_capacity)

    records: list[renv.EpisodeRecord] = []
    diagnostics: list[dict] = []
    global_step = 0

    for _ in range(epochs):
        for trace in train_log.traces:
            state = renv.reset(trace, graph)
            rewards = []
            done = False
            while not done:
                feats = build_features(
                    state.prev_activity, state.prev_kpi, v_size,
                    bank.norm_mean, bank.norm_std,
                )
                frac = min(1.0, global_step / max(1, cfg.eps_decay_steps))
                eps = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
                if rng.random() < eps:
                    action = int(rng.integers(n_actions))
                else:
                    action = int(np.argmax(qnet(feats[None, :])[0]))
                nxt, reward, done = renv.step(
                    state, action, bank, graph, rcfg, gt_trace=trace, masked=False
                )
                feats2 = build_features(
                    nxt.prev_activity, nxt.prev_kpi, v_size,
                    bank.norm_mean, bank.norm_std,
                )
                replay.push((feats, action, reward, feats2, done))
                rewards.append(reward)
                state = nxt
                global_step += 1
                if len(replay) >= cfg.batch_size and global_step % cfg.update_every == 0:
                    loss = dqn_update(
                        replay.sample(cfg.batch_size, rng), qnet, target, opt, cfg.gamma
                    )
                    if global_step % 100 == 0:
                        diagnostics.append({"loss": loss, "eps": eps, "step": global_step})
                if global_step % cfg.sync_every == 0:
                    target = Mlp.from_lists(qnet.to_lists())
            records.append(renv.episode_record(state, rewards, bank, graph, rcfg, trace))
    artifact = _init_artifact("dqn-neg", train_log, graph, bank, rcfg, cfg, qnet, None)
    return TrainResult(artifact, records, diagnostics)
