import json
from pathlib import Path

import pytest

from goalpath import agents, cli, dfg, event_log as ev, synthetic


@pytest.fixture(scope="module")
def toy_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.csv"
    ev.write_csv(synthetic.toy_deterministic_log(), path)
    return path


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _pipeline(toy_csv, root: Path, seed=5, epochs=2, extra_train=()):
    dfg_dir, kpi_dir, agent_dir = root / "dfg", root / "kpi", root / "agent"
    assert _run("discover", "--log", toy_csv, "--out", dfg_dir) == 0
    assert _run("train-kpi", "--log", toy_csv, "--seed", seed, "--holdout-ratio", 0,
                "--out", kpi_dir) == 0
    assert _run("train-agent", "--log", toy_csv, "--dfg", dfg_dir,
                "--bank", kpi_dir / "bank.json", "--epochs", epochs,
                "--horizon", 64, "--seed", seed, "--out", agent_dir,
                *extra_train) == 0
    return dfg_dir, kpi_dir, agent_dir


def test_pipeline_composes_and_writes_artifacts(toy_csv, tmp_path):
    dfg_dir, kpi_dir, agent_dir = _pipeline(toy_csv, tmp_path)
    assert (dfg_dir / "dfg.json").exists()
    assert (dfg_dir / "dfg_edges.txt").exists()
    assert (kpi_dir / "bank.json").exists()
    assert (kpi_dir / "mae.csv").read_text().startswith("prefix_length,mae")
    assert (agent_dir / "artifact.json").exists()
    assert (agent_dir / "training_episodes.jsonl").exists()
    for stage in (dfg_dir, kpi_dir, agent_dir):
        snap = json.loads((stage / "run_config.json").read_text())
        assert snap["package_version"]
        assert snap["subcommand"] in ("discover", "train-kpi", "train-agent")

    out = tmp_path / "eval"
    assert _run("evaluate", "--log", toy_csv, "--dfg", dfg_dir,
                "--bank", kpi_dir / "bank.json",
                "--artifact", agent_dir / "artifact.json",
                "--episodes", 10, "--seed", 3, "--out", out) == 0
    # figures land right next to the delimited outputs
    produced = {p.name for p in out.iterdir()}
    assert {"report.json", "report.txt", "episodes.csv", "outcome_distribution.csv",
            "outcome_distribution.png", "dl_histogram.png", "run_config.json"} <= produced
    report = json.loads((out / "report.json").read_text())
    assert report["conformance_fraction"] == 1.0  # maskable artifact


def test_shared_config_file_drives_all_stages(toy_csv, tmp_path):
    dfg_dir, kpi_dir, agent_dir = (tmp_path / n for n in ("dfg", "kpi", "agent"))
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "log": str(toy_csv),
        "seed": 9,
        "holdout_ratio": 0,
        "epochs": 1,
        "horizon": 64,
        "episodes": 6,
        "dfg": str(dfg_dir),
        "bank": str(kpi_dir / "bank.json"),
        "artifact": str(agent_dir / "artifact.json"),
    }))
    assert _run("discover", "--config", config, "--out", dfg_dir) == 0
    assert _run("train-kpi", "--config", config, "--out", kpi_dir) == 0
    assert _run("train-agent", "--config", config, "--out", agent_dir) == 0
    out = tmp_path / "eval"
    assert _run("evaluate", "--config", config, "--out", out) == 0
    snap = json.loads((out / "run_config.json").read_text())
    assert snap["episodes"] == 6


def test_cli_flag_overrides_config_value(toy_csv, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"log": str(toy_csv), "min_frequency": 3}))
    out = tmp_path / "dfg"
    assert _run("discover", "--config", config, "--min-frequency", 1, "--out", out) == 0
    snap = json.loads((out / "run_config.json").read_text())
    assert snap["min_frequency"] == 1


def test_rerun_is_byte_identical(toy_csv, tmp_path):
    import shutil

    first = {}
    dfg_dir, kpi_dir, agent_dir = _pipeline(toy_csv, tmp_path, seed=4)
    for path in (dfg_dir / "dfg.json", kpi_dir / "bank.json", agent_dir / "artifact.json"):
        first[path.name] = path.read_bytes()
    shutil.rmtree(dfg_dir); shutil.rmtree(kpi_dir); shutil.rmtree(agent_dir)
    dfg_dir, kpi_dir, agent_dir = _pipeline(toy_csv, tmp_path, seed=4)
    for path in (dfg_dir / "dfg.json", kpi_dir / "bank.json", agent_dir / "artifact.json"):
        assert path.read_bytes() == first[path.name]


def test_usage_errors_exit_1(toy_csv, tmp_path):
    assert _run("train-agent", "--log", toy_csv) == 1  # missing required
    assert _run("discover", "--log", toy_csv, "--out", tmp_path, "--bogus") == 1
    assert _run("discover", "--log", toy_csv, "--out", tmp_path, "--split", 1.5) == 1
    assert cli.main([]) == 1  # no subcommand


def test_data_errors_exit_2(tmp_path, capsys):
    assert _run("discover", "--log", tmp_path / "missing.csv", "--out", tmp_path / "d") == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("case,activity\n1,A\n")  # no timestamp column
    assert _run("discover", "--log", bad, "--out", tmp_path / "d2") == 2
    assert "error:" in capsys.readouterr().err


def test_hash_mismatch_refused(toy_csv, tmp_path, capsys):
    dfg_dir, kpi_dir, agent_dir = _pipeline(toy_csv, tmp_path, seed=4)
    other_kpi = tmp_path / "kpi2"
    # different holdout -> different bank content -> different hash
    assert _run("train-kpi", "--log", toy_csv, "--seed", 4, "--holdout-ratio", 0.4,
                "--out", other_kpi) == 0
    code = _run("evaluate", "--log", toy_csv, "--dfg", dfg_dir,
                "--bank", other_kpi / "bank.json",
                "--artifact", agent_dir / "artifact.json",
                "--episodes", 5, "--seed", 0, "--out", tmp_path / "ev")
    assert code == 2
    assert "different KPI bank" in capsys.readouterr().err


def test_divergence_exit_3(toy_csv, tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise agents.TrainingDivergence("loss went non-finite")

    monkeypatch.setattr(cli.agents, "train", boom)
    dfg_dir = tmp_path / "dfg"
    kpi_dir = tmp_path / "kpi"
    assert _run("discover", "--log", toy_csv, "--out", dfg_dir) == 0
    assert _run("train-kpi", "--log", toy_csv, "--seed", 1, "--out", kpi_dir) == 0
    code = _run("train-agent", "--log", toy_csv, "--dfg", dfg_dir,
                "--bank", kpi_dir / "bank.json", "--seed", 1,
                "--out", tmp_path / "agent")
    assert code == 3


def test_train_epochs_zero_still_emits_artifact(toy_csv, tmp_path):
    dfg_dir, kpi_dir, agent_dir = _pipeline(toy_csv, tmp_path, epochs=0)
    assert (agent_dir / "artifact.json").exists()
    out = tmp_path / "eval0"
    assert _run("evaluate", "--log", toy_csv, "--dfg", dfg_dir,
                "--bank", kpi_dir / "bank.json",
                "--artifact", agent_dir / "artifact.json",
                "--episodes", 5, "--seed", 0, "--out", out) == 0


def test_recommend_candidates_come_from_the_mask(toy_csv, tmp_path, capsys):
    dfg_dir, kpi_dir, agent_dir = _pipeline(toy_csv, tmp_path)
    assert _run("recommend", "--dfg", dfg_dir, "--bank", kpi_dir / "bank.json",
                "--artifact", agent_dir / "artifact.json", "--prefix", "A",
                "--out", tmp_path / "rec") == 0
    capsys.readouterr()
    doc = json.loads((tmp_path / "rec" / "recommend.json").read_text())
    names = {c["activity"] for c in doc["candidates"]}
    assert names <= {"B", "C", "D"}  # successors of A only
    assert sum(c["recommended"] for c in doc["candidates"]) == 1
    assert abs(sum(c["probability"] for c in doc["candidates"]) - 1) < 1e-9


def test_recommend_rejects_bad_prefixes(toy_csv, tmp_path):
    dfg_dir, kpi_dir, agent_dir = _pipeline(toy_csv, tmp_path)
    common = ("--dfg", dfg_dir, "--bank", kpi_dir / "bank.json",
              "--artifact", agent_dir / "artifact.json")
    assert _run("recommend", *common, "--prefix", "A,E") == 2  # A->E not an edge
    assert _run("recommend", *common, "--prefix", "Z") == 2  # unknown label
    assert _run("recommend", *common, "--prefix", "A", "--kpis", "1,2") == 1


def test_recommend_top_limits_rows(toy_csv, tmp_path, capsys):
    dfg_dir, kpi_dir, agent_dir = _pipeline(toy_csv, tmp_path)
    capsys.readouterr()
    assert _run("recommend", "--dfg", dfg_dir, "--bank", kpi_dir / "bank.json",
                "--artifact", agent_dir / "artifact.json",
                "--prefix", "A", "--top", 1) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert len(lines) == 3  # prefix line + header + one candidate
