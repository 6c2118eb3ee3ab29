"""Read-only JSON-over-HTTP facade for interactive case stepping.

The service wraps one loaded policy artifact. Clients start a case from
its first activity, receive the valid next activities with predicted
KPI, policy probability and the greedy recommendation, and step until
EOS. All goal arithmetic happens server side; accepted steps always form
a conformant path because candidates come from the DFG mask.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import agents as ag
from . import dfg as dg
from . import kpi_model as km
from . import rl_env as renv
from .event_log import EOS_LABEL, START_LABEL

API_VERSION = 1
DEFAULT_IDLE_TIMEOUT_S = 30 * 60


class StartBody(BaseModel):
    version: int = API_VERSION
    first_activity: str
    first_kpi: float = 0.0


class StepBody(BaseModel):
    version: int = API_VERSION
    activity: str
    realized_kpi: float | None = None


@dataclass
class CaseSession:
    session_id: str
    state: renv.EnvState
    # (label, kpi, source) with source in {"given", "predicted", "realized"}
    history: list[tuple[str, float, str]]
    created_at: float
    last_access: float
    done: bool = False
    summary: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def predicted_steps(self) -> int:
        # realized/given KPIs are facts, only predictor outputs carry MAE
        return sum(1 for _, _, source in self.history if source == "predicted")


class Engine:
    """Artifact plus the derived lookup structures the endpoints need."""

    def __init__(self, artifact: ag.PolicyArtifact, graph: dg.Dfg, bank: km.PrefixModelBank):
        if dg.content_hash(graph) != artifact.dfg_hash:
            raise ValueError("artifact was trained against a different DFG")
        if km.content_hash(bank) != artifact.bank_hash:
            raise ValueError("artifact was trained against a different KPI bank")
        self.artifact = artifact
        self.graph = graph
        self.bank = bank
        self.hops = dg.hops_to_eos(graph)

    def action_label(self, action: int) -> str:
        return EOS_LABEL if action == self.graph.eos else self.graph.labels[action]

    def candidates(self, state: renv.EnvState) -> list[dict]:
        mask = renv.action_mask(state, self.graph, self.artifact.reward.max_steps, self.hops)
        logits = self.artifact.policy(self.artifact.features(state)[None, :])[0]
        probs = ag.masked_distribution(logits, mask)
        greedy = int(np.argmax(probs))
        prefix = list(state.prefix)
        out = []
        for action in np.flatnonzero(mask):
            action = int(action)
            kpi = 0.0 if action == self.graph.eos else km.predict(self.bank, prefix, action).value
            out.append(
                {
                    "activity": self.action_label(action),
                    "predicted_kpi": kpi,
                    "probability": float(probs[action]),
                    "recommended": action == greedy,
                }
            )
        return out

    def projected_satisfied(self, goal: float, predicted_steps: int) -> bool:
        mae = km.cumulative_mae(self.bank, predicted_steps)
        return renv.goal_satisfied(
            goal, self.artifact.reward.omega, mae, self.artifact.reward.direction
        )


def _view(engine: Engine, session: CaseSession) -> dict:
    doc = {
        "version": API_VERSION,
        "session_id": session.session_id,
        "history": [
            {"activity": a, "kpi": k, "source": s} for a, k, s in session.history
        ],
        "accumulated_goal": session.state.accumulated_goal,
        "omega": engine.artifact.reward.omega,
        "direction": engine.artifact.reward.direction,
        "projected_satisfied": engine.projected_satisfied(
            session.state.accumulated_goal, session.predicted_steps
        ),
        "done": session.done,
    }
    if session.done:
        doc["candidates"] = []
        doc["summary"] = session.summary
    else:
        doc["candidates"] = engine.candidates(session.state)
    return doc


def create_app(
    engine: Engine | None,
    idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S,
    clock=time.monotonic,
) -> FastAPI:
    """engine may be None (not loaded yet); endpoints then answer 503."""
    app = FastAPI(title="goalpath recommendation service")
    # read-only decision facade without credentials, so open CORS is fine;
    # it lets the navigator page run off any static file server
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, CaseSession] = {}
    store_lock = threading.Lock()

    def require_engine() -> Engine:
        if engine is None:
            raise HTTPException(status_code=503, detail="no artifact loaded")
        return engine

    def check_version(version: int) -> None:
        if version != API_VERSION:
            raise HTTPException(
                status_code=400, detail=f"unsupported version {version}, expected {API_VERSION}"
            )

    def sweep(now: float) -> None:
        expired = [
            sid for sid, s in sessions.items() if now - s.last_access > idle_timeout_s
        ]
        for sid in expired:
            del sessions[sid]

    def get_session(session_id: str) -> CaseSession:
        now = clock()
        with store_lock:
            sweep(now)
            session = sessions.get(session_id)
            if session is None:
                raise HTTPException(status_code=404, detail="unknown or expired session")
            session.last_access = now
            return session

    @app.get("/health")
    def health():
        doc = {"version": API_VERSION, "status": "ok" if engine else "no artifact"}
        if engine is not None:
            doc["method"] = engine.artifact.method
        return doc

    @app.get("/dfg")
    def get_dfg():
        eng = require_engine()
        graph = eng.graph
        edges = [
            {"from": eng.action_label(u) if u != graph.start else START_LABEL,
             "to": eng.action_label(v),
             "frequency": f}
            for (u, v), f in sorted(graph.edges.items())
        ]
        return {"version": API_VERSION, "labels": list(graph.labels), "edges": edges}

    @app.post("/sessions", status_code=201)
    def start_session(body: StartBody):
        eng = require_engine()
        check_version(body.version)
        graph = eng.graph
        if body.first_activity not in graph.labels:
            raise HTTPException(status_code=400, detail=f"unknown activity {body.first_activity!r}")
        first = graph.labels.index(body.first_activity)
        if first not in graph.successors.get(graph.start, ()):
            raise HTTPException(
                status_code=400,
                detail=f"{body.first_activity!r} is not a start activity of the process",
            )
        now = clock()
        session = CaseSession(
            session_id=uuid.uuid4().hex,
            state=renv.EnvState(
                prefix=((first, body.first_kpi),), accumulated_goal=body.first_kpi
            ),
            history=[(body.first_activity, body.first_kpi, "given")],
            created_at=now,
            last_access=now,
        )
        with store_lock:
            sweep(now)
            sessions[session.session_id] = session
        return _view(eng, session)

    @app.post("/sessions/{session_id}/step")
    def step_session(session_id: str, body: StepBody):
        eng = require_engine()
        check_version(body.version)
        session = get_session(session_id)
        graph = eng.graph
        with session.lock:
            if session.done:
                raise HTTPException(status_code=409, detail="session already completed")
            state = session.state
            mask = renv.action_mask(state, graph, eng.artifact.reward.max_steps, eng.hops)
            valid = [eng.action_label(int(a)) for a in np.flatnonzero(mask)]
            if body.activity == EOS_LABEL:
                action = graph.eos
            elif body.activity in graph.labels:
                action = graph.labels.index(body.activity)
            else:
                raise HTTPException(
                    status_code=400,
                    detail={"error": f"unknown activity {body.activity!r}", "valid": valid},
                )
            if not mask[action]:
                raise HTTPException(
                    status_code=400,
                    detail={"error": f"{body.activity!r} is not valid here", "valid": valid},
                )
            if action == graph.eos:
                goal = state.accumulated_goal
                satisfied = eng.projected_satisfied(goal, session.predicted_steps)
                session.summary = {
                    "goal_value": goal,
                    "satisfied": satisfied,
                    "terminal_reward": renv.terminal_reward(
                        goal, eng.artifact.reward.omega, satisfied
                    ),
                    "activities": [a for a, _, _ in session.history],
                }
                session.done = True
            else:
                if body.realized_kpi is not None:
                    kpi, source = body.realized_kpi, "realized"
                else:
                    kpi = km.predict(eng.bank, list(state.prefix), action).value
                    source = "predicted"
                session.state = renv.EnvState(
                    prefix=state.prefix + ((action, kpi),),
                    accumulated_goal=state.accumulated_goal + kpi,
                )
                session.history.append((body.activity, kpi, source))
            return _view(eng, session)

    @app.get("/sessions/{session_id}")
    def view_session(session_id: str):
        eng = require_engine()
        session = get_session(session_id)
        with session.lock:
            return _view(eng, session)

    return app


def load_engine(artifact_path, dfg_dir, bank_path) -> Engine:
    graph = dg.load(dfg_dir)
    bank = km.load(bank_path)
    artifact = ag.load_artifact(artifact_path, graph=graph, bank=bank)
    return Engine(artifact, graph, bank)
