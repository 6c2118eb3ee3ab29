"""Record live service transcripts for the navigator test suite.

Builds the deterministic 5-activity demo world with the real CLI, serves
it with the real `serve` subcommand, then walks one
accept-the-recommendation case to EOS over plain HTTP, recording every
exchange. A second pass collects the documented error responses. Before
writing anything the walked trace is re-verified against the engine
itself (DFG conformance plus an independent goal recomputation), and
that verdict is embedded in the fixture so the UI tests can compare what
they display against what the engine computed.

Regenerate with:  python3 scripts/record_fixture.py   (from frontend/)
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import tempfile
import time
import urllib.error
import urllib.request
from pathlib import Path

HERE = Path(__file__).resolve().parent
FIXTURES = HERE.parent / "tests" / "fixtures"

EOS = "<EOS>"


class Recorder:
    def __init__(self, base: str):
        self.base = base
        self.exchanges: list[dict] = []

    def call(self, method: str, path: str, body: dict | None = None) -> tuple[int, dict]:
        data = None if body is None else json.dumps(body).encode()
        req = urllib.request.Request(
            self.base + path,
            data=data,
            method=method,
            headers={"Content-Type": "application/json"} if body is not None else {},
        )
        try:
            with urllib.request.urlopen(req) as resp:
                status, payload = resp.status, json.loads(resp.read())
        except urllib.error.HTTPError as err:
            status, payload = err.code, json.loads(err.read())
        self.exchanges.append(
            {"method": method, "path": path, "request": body, "status": status, "response": payload}
        )
        return status, payload


def run_cli(*args) -> None:
    cmd = [sys.executable, "-m", "goalpath.cli", *map(str, args)]
    subprocess.run(cmd, check=True, capture_output=True)


def build_world(work: Path) -> dict[str, Path]:
    log = work / "toy.csv"
    subprocess.run(
        [sys.executable, "-m", "goalpath.synthetic", "--dataset", "toy", "--out", log, "--seed", "0"],
        check=True,
        capture_output=True,
    )
    run_cli("discover", "--log", log, "--out", work / "dfg")
    run_cli("train-kpi", "--log", log, "--holdout-ratio", 0, "--seed", 0, "--out", work / "kpi")
    run_cli(
        "train-agent", "--log", log, "--dfg", work / "dfg", "--bank", work / "kpi" / "bank.json",
        "--method", "maskable-ppo", "--epochs", 8, "--horizon", 256, "--seed", 0,
        "--omega", 4.0, "--max-steps", 3, "--out", work / "agent",
    )
    return {
        "dfg": work / "dfg",
        "bank": work / "kpi" / "bank.json",
        "artifact": work / "agent" / "artifact.json",
    }


def wait_healthy(base: str, deadline_s: float = 30.0) -> None:
    start = time.monotonic()
    while time.monotonic() - start < deadline_s:
        try:
            with urllib.request.urlopen(base + "/health") as resp:
                if resp.status == 200:
                    return
        except (urllib.error.URLError, ConnectionError):
            time.sleep(0.2)
    raise RuntimeError("service never became healthy")


def walk_to_eos(rec: Recorder) -> dict:
    """Accept the recommendation from the first activity until EOS."""
    rec.call("GET", "/health")
    rec.call("GET", "/dfg")
    _, view = rec.call(
        "POST", "/sessions", {"version": 1, "first_activity": "A", "first_kpi": 0.0}
    )
    sid = view["session_id"]
    for _ in range(20):
        if view["done"]:
            break
        picked = [c for c in view["candidates"] if c["recommended"]]
        assert len(picked) == 1, f"expected exactly one recommendation, got {picked}"
        _, view = rec.call(
            "POST", f"/sessions/{sid}/step", {"version": 1, "activity": picked[0]["activity"]}
        )
    assert view["done"], "walk did not terminate"
    rec.call("GET", f"/sessions/{sid}")  # completed sessions stay viewable
    return view


def record_errors(base: str) -> list[dict]:
    """Collect the documented error shapes, one named exchange each."""
    rec = Recorder(base)
    cases: list[dict] = []

    def grab(name: str, method: str, path: str, body: dict | None = None) -> dict:
        status, _ = rec.call(method, path, body)
        entry = dict(rec.exchanges[-1], name=name)
        cases.append(entry)
        return entry

    grab("unknown_start_activity", "POST", "/sessions",
         {"version": 1, "first_activity": "Z", "first_kpi": 0.0})
    grab("non_start_activity", "POST", "/sessions",
         {"version": 1, "first_activity": "E", "first_kpi": 0.0})
    grab("unknown_session", "GET", "/sessions/doesnotexist")

    _, view = rec.call("POST", "/sessions", {"version": 1, "first_activity": "A", "first_kpi": 0.0})
    sid = view["session_id"]
    bad = grab("invalid_step", "POST", f"/sessions/{sid}/step", {"version": 1, "activity": "E"})
    assert bad["status"] == 400 and bad["response"]["detail"]["valid"], "want the valid set"

    while not view["done"]:
        pick = next(c for c in view["candidates"] if c["recommended"])
        _, view = rec.call("POST", f"/sessions/{sid}/step", {"version": 1, "activity": pick["activity"]})
    done = grab("step_after_done", "POST", f"/sessions/{sid}/step", {"version": 1, "activity": EOS})
    assert done["status"] == 409
    return cases


def engine_verdict(paths: dict[str, Path], summary: dict) -> dict:
    """Re-verify the walked trace with the engine, independently of the service."""
    from goalpath import dfg as dg
    from goalpath import kpi_model as km

    graph = dg.load(paths["dfg"])
    bank = km.load(paths["bank"])
    activities = summary["activities"]
    indices = [graph.labels.index(a) for a in activities]
    conformant = dg.sequence_conformant(graph, indices)

    # replay the goal exactly as the service accumulates it: seed KPI given, rest predicted
    prefix = [(indices[0], 0.0)]
    goal = 0.0
    for action in indices[1:]:
        kpi = km.predict(bank, prefix, action).value
        prefix.append((action, kpi))
        goal += kpi
    assert abs(goal - summary["goal_value"]) < 1e-9, (goal, summary["goal_value"])

    return {
        "conformant": bool(conformant),
        "goal_value": goal,
        "activities": activities,
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--port", type=int, default=8907)
    args = parser.parse_args()
    base = f"http://127.0.0.1:{args.port}"

    FIXTURES.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        paths = build_world(work)
        server = subprocess.Popen(
            [
                sys.executable, "-m", "goalpath.cli", "serve",
                "--dfg", str(paths["dfg"]), "--bank", str(paths["bank"]),
                "--artifact", str(paths["artifact"]),
                "--port", str(args.port),
            ],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
        try:
            wait_healthy(base)
            rec = Recorder(base)
            final = walk_to_eos(rec)
            errors = record_errors(base)
        finally:
            server.terminate()
            server.wait(timeout=10)

        verdict = engine_verdict(paths, final["summary"])
        assert verdict["conformant"], "engine rejected the recorded walk"

    transcript = {
        "recorded_with": "scripts/record_fixture.py",
        "base": base,
        "engine": dict(verdict, omega=final["omega"], direction=final["direction"]),
        "exchanges": rec.exchanges,
    }
    (FIXTURES / "transcript.json").write_text(json.dumps(transcript, indent=2) + "\n")
    (FIXTURES / "errors.json").write_text(json.dumps(errors, indent=2) + "\n")
    print(f"wrote {FIXTURES / 'transcript.json'} ({len(rec.exchanges)} exchanges)")
    print(f"wrote {FIXTURES / 'errors.json'} ({len(errors)} cases)")


if __name__ == "__main__":
    main()
