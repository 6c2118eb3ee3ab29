"""Pipeline driver: discover, train-kpi, train-agent, evaluate, recommend, serve.

Options resolve in three layers: built-in defaults, then a JSON config
file (flat keys named like the long flags), then explicit flags. Every
disk-writing command drops a resolved-config snapshot (run_config.json)
next to its outputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import agents
from . import dfg
from . import evaluation
from . import event_log as ev
from . import kpi_model as km
from . import report
from . import rl_env as renv

log = logging.getLogger("goalpath")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the CLI contract reserves
    # 2 for data errors, so route usage problems through UsageError instead
    def error(self, message):
        raise UsageError(message)


# (dest, type, default, required, help) -- dest doubles as the config-file key
_OPTIONS = {
    "discover": [
        ("log", str, None, True, "input event log CSV"),
        ("out", str, None, True, "output directory"),
        ("min_frequency", int, 1, False, "drop edges rarer than this"),
        ("split", float, None, False, "optional train/test split ratio"),
        ("split_seed", int, 0, False, "seed for the split shuffle"),
        ("split_side", str, "train", False, "which side of the split to use"),
    ],
    "train-kpi": [
        ("log", str, None, True, "training event log CSV"),
        ("out", str, None, True, "output directory"),
        ("backend", str, "tabular", False, "tabular | neural"),
        ("kpi_epochs", int, 25, False, "neural backend training epochs"),
        ("kpi_learning_rate", float, 0.01, False, "neural backend learning rate"),
        ("window", int, 4, False, "neural backend feature window"),
        ("batch_size", int, 32, False, "neural backend minibatch size"),
        ("holdout_ratio", float, 0.2, False, "held-out fraction for the MAE table"),
        ("seed", int, None, True, "random seed"),
        ("split", float, None, False, "optional train/test split ratio"),
        ("split_seed", int, 0, False, "seed for the split shuffle"),
        ("split_side", str, "train", False, "which side of the split to use"),
    ],
    "train-agent": [
        ("log", str, None, True, "training event log CSV"),
        ("dfg", str, None, True, "directory written by discover"),
        ("bank", str, None, True, "bank JSON written by train-kpi"),
        ("out", str, None, True, "output directory"),
        ("method", str, "maskable-ppo", False, "maskable-ppo | ppo-neg | dqn-neg"),
        ("epochs", int, 50, False, "passes over the training traces"),
        ("seed", int, None, True, "random seed"),
        ("direction", str, "minimize", False, "goal direction: minimize | maximize"),
        ("omega", float, None, False, "goal threshold in days (overrides quantile)"),
        ("omega_quantile", float, 0.75, False, "duration quantile defining the goal"),
        ("max_steps", int, None, False, "episode cap (default: longest train trace)"),
        ("balancing", bool, False, False, "use the balancing reward r'"),
        ("k", int, 3, False, "last-k window of the balancing reward"),
        ("invalid_penalty", float, -4.0, False, "penalty for invalid actions"),
        ("sample", float, None, False, "train on this fraction of traces"),
        ("horizon", int, 4096, False, "PPO steps collected per update"),
        ("opt_epochs", int, 10, False, "PPO optimization passes per update"),
        ("gamma", float, 0.99, False, "discount factor"),
        ("actor_lr", float, 3e-4, False, "PPO actor learning rate"),
        ("critic_lr", float, 1e-3, False, "PPO critic learning rate"),
        ("entropy_coef", float, 0.01, False, "PPO entropy bonus"),
        ("clip", float, 0.2, False, "PPO clipping epsilon"),
        ("dqn_lr", float, 1e-3, False, "DQN learning rate"),
        ("eps_decay_steps", int, 2000, False, "DQN epsilon decay steps"),
        ("update_every", int, 4, False, "DQN steps between updates"),
        ("split", float, None, False, "optional train/test split ratio"),
        ("split_seed", int, 0, False, "seed for the split shuffle"),
        ("split_side", str, "train", False, "which side of the split to use"),
    ],
    "evaluate": [
        ("log", str, None, True, "test event log CSV"),
        ("dfg", str, None, True, "directory written by discover"),
        ("bank", str, None, True, "bank JSON written by train-kpi"),
        ("artifact", str, None, True, "artifact JSON written by train-agent"),
        ("out", str, None, True, "output directory"),
        ("episodes", int, 100, False, "evaluation episodes"),
        ("seed", int, None, True, "random seed"),
        ("acc_mode", str, "per_position", False, "per_position | all_or_nothing"),
        ("split", float, None, False, "optional train/test split ratio"),
        ("split_seed", int, 0, False, "seed for the split shuffle"),
        ("split_side", str, "test", False, "which side of the split to use"),
    ],
    "recommend": [
        ("dfg", str, None, True, "directory written by discover"),
        ("bank", str, None, True, "bank JSON written by train-kpi"),
        ("artifact", str, None, True, "artifact JSON written by train-agent"),
        ("prefix", str, None, True, "comma-separated activity labels of the running case"),
        ("kpis", str, None, False, "comma-separated realized KPI values for the prefix"),
        ("top", int, None, False, "print only the best N candidates"),
        ("out", str, None, False, "optional directory for recommend.json"),
    ],
    "serve": [
        ("dfg", str, None, True, "directory written by discover"),
        ("bank", str, None, True, "bank JSON written by train-kpi"),
        ("artifact", str, None, True, "artifact JSON written by train-agent"),
        ("host", str, "127.0.0.1", False, "bind address"),
        ("port", int, 8000, False, "bind port"),
        ("idle_timeout", float, 1800.0, False, "session expiry in seconds"),
    ],
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="goalpath", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"goalpath {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    for name, options in _OPTIONS.items():
        p = sub.add_parser(name, help=f"{name} stage")
        p.add_argument("--config", help="JSON config file with flat flag-named keys")
        for dest, typ, _default, _required, hlp in options:
            flag = "--" + dest.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=dest, action=argparse.BooleanOptionalAction,
                               default=None, help=hlp)
            else:
                p.add_argument(flag, dest=dest, type=typ, default=None, help=hlp)
    return parser


def _resolve(args: argparse.Namespace, subcommand: str) -> dict:
    options = _OPTIONS[subcommand]
    known = {dest for dest, *_ in options}
    merged = {dest: default for dest, _, default, _, _ in options}
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        doc = json.loads(path.read_text())
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(doc) - known - {"subcommand"})
        relevant = {k: v for k, v in doc.items() if k in known}
        if unknown:
            log.debug("config keys ignored for %s: %s", subcommand, ", ".join(unknown))
        merged.update(relevant)
    for dest, typ, _, _, _ in options:
        cli_value = getattr(args, dest)
        if cli_value is not None:
            merged[dest] = cli_value
        elif merged[dest] is not None and typ in (int, float) and not isinstance(merged[dest], bool):
            merged[dest] = typ(merged[dest])
    missing = [dest for dest, _, _, required, _ in options if required and merged[dest] is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise UsageError(f"{subcommand}: missing required option(s): {flags}")
    return merged


def _write_snapshot(outdir: Path, subcommand: str, cfg: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    doc = {"subcommand": subcommand, "package_version": __version__, **cfg}
    (outdir / "run_config.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _load_log(cfg: dict) -> ev.EventLog:
    full = ev.parse_csv(cfg["log"])
    if cfg.get("split") is None:
        return full
    ratio = cfg["split"]
    if not 0 < ratio < 1:
        raise UsageError("--split must lie strictly between 0 and 1")
    side = cfg.get("split_side", "train")
    if side not in ("train", "test"):
        raise UsageError("--split-side must be train or test")
    train, test = ev.split(full, ratio, seed=cfg.get("split_seed", 0))
    picked = train if side == "train" else test
    log.info("split %s: using %s side with %d of %d traces", ratio, side, len(picked), len(full))
    return picked


def cmd_discover(cfg: dict) -> int:
    logdata = _load_log(cfg)
    graph = dfg.discover(logdata, min_frequency=cfg["min_frequency"])
    out = Path(cfg["out"])
    _write_snapshot(out, "discover", cfg)
    dfg.save(graph, out)
    _, conf = dfg.filter_conformant(graph, logdata)
    print(f"discovered {len(graph.edges)} edges over {len(graph.labels)} activities "
          f"({conf.conformant}/{conf.total} traces conformant)")
    return EXIT_OK


def cmd_train_kpi(cfg: dict) -> int:
    logdata = _load_log(cfg)
    config = km.KpiConfig(
        backend=cfg["backend"],
        epochs=cfg["kpi_epochs"],
        learning_rate=cfg["kpi_learning_rate"],
        window=cfg["window"],
        batch_size=cfg["batch_size"],
        holdout_ratio=cfg["holdout_ratio"],
        seed=cfg["seed"],
    )
    bank = km.train_bank(logdata, config)
    out = Path(cfg["out"])
    _write_snapshot(out, "train-kpi", cfg)
    km.save(bank, out / "bank.json")
    with open(out / "mae.csv", "w") as fh:
        fh.write("prefix_length,mae\n")
        for length in sorted(bank.mae_by_length):
            fh.write(f"{length},{bank.mae_by_length[length]!r}\n")
    print(f"trained {cfg['backend']} bank for {len(bank.models)} prefix lengths "
          f"-> {out / 'bank.json'}")
    return EXIT_OK


def _reward_config(cfg: dict, train: ev.EventLog) -> renv.RewardConfig:
    omega = cfg["omega"]
    if omega is None:
        omega = ev.goal_threshold(train, quantile=cfg["omega_quantile"])
    max_steps = cfg["max_steps"]
    if max_steps is None:
        max_steps = max(len(t.events) for t in train.traces)
    return renv.RewardConfig(
        omega=omega,
        max_steps=max_steps,
        balancing_enabled=bool(cfg["balancing"]),
        k=cfg["k"],
        invalid_penalty=cfg["invalid_penalty"],
        direction=cfg["direction"],
    )


def cmd_train_agent(cfg: dict) -> int:
    logdata = _load_log(cfg)
    graph = dfg.load(cfg["dfg"])
    bank = km.load(cfg["bank"])
    reward_cfg = _reward_config(cfg, logdata)
    train_log, conf = dfg.filter_conformant(graph, logdata)
    if conf.conformant < conf.total:
        log.info("dropped %d non-conformant traces before training",
                 conf.total - conf.conformant)
    if not train_log.traces:
        raise ValueError("no conformant traces left to train on")
    if cfg["sample"] is not None:
        train_log = ev.sample_traces(train_log, cfg["sample"], seed=cfg["seed"])
        log.info("sampled %d traces for agent training", len(train_log))
    ppo_cfg = agents.PpoConfig(
        actor_lr=cfg["actor_lr"], critic_lr=cfg["critic_lr"], gamma=cfg["gamma"],
        clip=cfg["clip"], entropy_coef=cfg["entropy_coef"],
        horizon=cfg["horizon"], opt_epochs=cfg["opt_epochs"], seed=cfg["seed"],
    )
    dqn_cfg = agents.DqnConfig(
        lr=cfg["dqn_lr"], eps_decay_steps=cfg["eps_decay_steps"],
        update_every=cfg["update_every"], seed=cfg["seed"],
    )
    result = agents.train(
        train_log, graph, bank, method=cfg["method"], epochs=cfg["epochs"],
        reward_cfg=reward_cfg, ppo_cfg=ppo_cfg, dqn_cfg=dqn_cfg,
    )
    out = Path(cfg["out"])
    _write_snapshot(out, "train-agent", cfg)
    agents.save_artifact(result.artifact, out / "artifact.json")
    renv.write_jsonl(result.records, out / "training_episodes.jsonl")
    satisfied = sum(r.goal_satisfied for r in result.records)
    print(f"trained {cfg['method']} for {cfg['epochs']} epochs "
          f"({satisfied}/{len(result.records)} training episodes goal-satisfied) "
          f"-> {out / 'artifact.json'}")
    return EXIT_OK


def cmd_evaluate(cfg: dict) -> int:
    logdata = _load_log(cfg)
    graph = dfg.load(cfg["dfg"])
    bank = km.load(cfg["bank"])
    artifact = agents.load_artifact(cfg["artifact"], graph=graph, bank=bank)
    rep, rows = evaluation.evaluate(
        artifact, logdata, graph, bank,
        episodes=cfg["episodes"], seed=cfg["seed"], acc_mode=cfg["acc_mode"],
    )
    out = Path(cfg["out"])
    _write_snapshot(out, "evaluate", cfg)
    evaluation.save_report(rep, rows, logdata.vocab, out)
    report.render_figures(rep, rows, logdata, out)
    print(evaluation.render_text(rep), end="")
    print(f"report files and figures -> {out}")
    return EXIT_OK


def _parse_prefix(cfg: dict, graph, bank) -> list[tuple[int, float]]:
    labels = [p.strip() for p in cfg["prefix"].split(",") if p.strip()]
    if not labels:
        raise UsageError("--prefix must name at least one activity")
    unknown = [p for p in labels if p not in graph.labels]
    if unknown:
        raise ValueError(f"unknown activities in prefix: {', '.join(unknown)}")
    acts = [graph.labels.index(p) for p in labels]
    node = graph.start
    for pos, act in enumerate(acts):
        if act not in graph.successors.get(node, ()):
            raise ValueError(
                f"prefix is not conformant at position {pos} ({labels[pos]!r})"
            )
        node = act
    if cfg["kpis"] is not None:
        values = [float(x) for x in cfg["kpis"].split(",")]
        if len(values) != len(acts):
            raise UsageError("--kpis must list exactly one value per prefix activity")
        return list(zip(acts, values))
    prefix = [(acts[0], 0.0)]
    for act in acts[1:]:
        prefix.append((act, km.predict(bank, prefix, act).value))
    return prefix


def cmd_recommend(cfg: dict) -> int:
    from .service import Engine  # lazy: pulls in fastapi

    graph = dfg.load(cfg["dfg"])
    bank = km.load(cfg["bank"])
    artifact = agents.load_artifact(cfg["artifact"], graph=graph, bank=bank)
    engine = Engine(artifact, graph, bank)
    prefix = _parse_prefix(cfg, graph, bank)
    goal = sum(k for _, k in prefix)
    if len(prefix) > artifact.reward.max_steps:
        raise ValueError(
            f"prefix longer than the episode cap ({artifact.reward.max_steps})"
        )
    state = renv.EnvState(prefix=tuple(prefix), accumulated_goal=goal)
    candidates = sorted(
        engine.candidates(state), key=lambda c: c["probability"], reverse=True
    )
    if cfg["top"] is not None:
        candidates = candidates[: cfg["top"]]
    shown = " > ".join(graph.labels[a] for a, _ in prefix)
    print(f"prefix: {shown}  (accumulated goal {goal:.4g}, "
          f"omega {artifact.reward.omega:.4g}, {artifact.reward.direction})")
    width = max([len(c["activity"]) for c in candidates] + [8])
    print(f"{'rank':<5}{'activity':<{width + 2}}{'kpi':>10}{'prob':>10}  recommended")
    for rank, c in enumerate(candidates, 1):
        star = "*" if c["recommended"] else ""
        print(f"{rank:<5}{c['activity']:<{width + 2}}"
              f"{c['predicted_kpi']:>10.4f}{c['probability']:>10.4f}  {star}")
    if cfg["out"] is not None:
        out = Path(cfg["out"])
        _write_snapshot(out, "recommend", cfg)
        doc = {"version": 1, "prefix": shown.split(" > "), "accumulated_goal": goal,
               "candidates": candidates}
        (out / "recommend.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def cmd_serve(cfg: dict) -> int:
    import uvicorn

    from .service import create_app, load_engine

    engine = load_engine(cfg["artifact"], cfg["dfg"], cfg["bank"])
    app = create_app(engine, idle_timeout_s=cfg["idle_timeout"])
    print(f"serving {engine.artifact.method} artifact on "
          f"http://{cfg['host']}:{cfg['port']}")
    uvicorn.run(app, host=cfg["host"], port=cfg["port"], log_level="warning")
    return EXIT_OK


_HANDLERS = {
    "discover": cmd_discover,
    "train-kpi": cmd_train_kpi,
    "train-agent": cmd_train_agent,
    "evaluate": cmd_evaluate,
    "recommend": cmd_recommend,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if os.environ.get("GOALPATH_VERBOSE") else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            parser.print_help()
            return EXIT_USAGE
        cfg = _resolve(args, args.subcommand)
        return _HANDLERS[args.subcommand](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except agents.TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ev.LogFormatError, FileNotFoundError, NotADirectoryError,
            json.JSONDecodeError, ValueError, KeyError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
