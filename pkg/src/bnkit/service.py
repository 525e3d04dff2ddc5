"""HTTP facade for the interactive diagnosis loop.

A session accumulates evidence for one consultation; every query recomputes
the posterior from the stored evidence (no incremental state). Sessions live
in memory only and die with the process.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .core import Assignment, Network, validate_network
from .jtree import JunctionTree, build_junction_tree, classify, query_posterior


class ApiError(Exception):
    def __init__(self, status: int, error: str, detail: str):
        self.status = status
        self.error = error
        self.detail = detail
        super().__init__(detail)


@dataclass
class Session:
    id: str
    evidence: Assignment = field(default_factory=dict)
    created: float = field(default_factory=time.time)


def _entropy(p: np.ndarray) -> float:
    mask = p > 0
    return float(-(p[mask] * np.log(p[mask])).sum())


def value_of_information(
    jt: JunctionTree, evidence: Assignment, decision: int
) -> list[tuple[int, float]]:
    """Expected decision-entropy reduction for each unobserved variable.

    For candidate V: H(P(D|e)) - sum_v P(V=v|e) H(P(D|e, V=v)), enumerating
    V's states weighted by their current posterior. Sorted descending.
    """
    base = query_posterior(jt, evidence, decision)
    if base.zero_evidence:
        raise ApiError(409, "ZeroEvidence", "evidence has probability zero")
    h0 = _entropy(base.probs)
    net = jt.net
    scores = []
    for v in range(net.n_variables):
        if v == decision or v in evidence:
            continue
        pv = query_posterior(jt, evidence, v).probs
        expected = 0.0
        for s, w in enumerate(pv):
            if w <= 0:
                continue
            cond = query_posterior(jt, {**evidence, v: s}, decision)
            if not cond.zero_evidence:
                expected += float(w) * _entropy(cond.probs)
        scores.append((v, h0 - expected))
    scores.sort(key=lambda t: (-t[1], t[0]))
    return scores


def create_app(
    net: Network, decision: str = "DT", ui_dir: str | Path | None = None
) -> FastAPI:
    """Build the service app; ``ui_dir`` optionally serves the browser panel."""
    validate_network(net)
    try:
        decision_index = net.index_of(decision)
    except KeyError:
        raise ValueError(f"decision variable {decision!r} not in model") from None
    jt = build_junction_tree(net)
    sessions: dict[str, Session] = {}
    lock = threading.Lock()

    app = FastAPI(title="bnkit diagnosis service")
    # local tool: let a separately hosted panel talk to the API
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.error, "detail": exc.detail}
        )

    def get_session(sid: str) -> Session:
        with lock:
            s = sessions.get(sid)
        if s is None:
            raise ApiError(404, "UnknownSession", f"no session {sid!r}")
        return s

    def evidence_doc(s: Session) -> dict:
        return {
            net.variables[v].name: net.variables[v].states[val]
            for v, val in sorted(s.evidence.items())
        }

    def posterior_doc(s: Session, target: int) -> dict:
        post = query_posterior(jt, s.evidence, target)
        if post.zero_evidence:
            raise ApiError(
                409,
                "ZeroEvidence",
                "the current evidence is contradictory (probability zero)",
            )
        return {
            "target": net.variables[target].name,
            "states": list(net.variables[target].states),
            "probs": [float(p) for p in post.probs],
            "evidence": evidence_doc(s),
        }

    @app.get("/model")
    def model() -> dict:
        return {
            "variables": [
                {"name": v.name, "states": list(v.states)} for v in net.variables
            ],
            "decision": decision,
        }

    @app.post("/session", status_code=201)
    def new_session() -> dict:
        s = Session(id=uuid.uuid4().hex)
        with lock:
            sessions[s.id] = s
        return {"id": s.id}

    @app.put("/session/{sid}/evidence")
    def put_evidence(sid: str, body: dict[str, str | None]) -> dict:
        s = get_session(sid)
        updates: list[tuple[int, int | None]] = []
        for name, label in body.items():
            try:
                v = net.index_of(name)
            except KeyError:
                raise ApiError(422, "BadEvidence", f"unknown variable {name!r}") from None
            if v == decision_index:
                raise ApiError(
                    422, "BadEvidence", f"cannot set evidence on the decision node {name!r}"
                )
            if label is None:
                updates.append((v, None))
                continue
            try:
                updates.append((v, net.variables[v].state_index(label)))
            except KeyError:
                raise ApiError(
                    422, "BadEvidence", f"unknown state {label!r} for {name!r}"
                ) from None
        with lock:
            for v, val in updates:
                if val is None:
                    s.evidence.pop(v, None)
                else:
                    s.evidence[v] = val
        return {"id": s.id, "evidence": evidence_doc(s)}

    @app.get("/session/{sid}/posterior")
    def posterior(sid: str, target: str) -> dict:
        s = get_session(sid)
        try:
            t = net.index_of(target)
        except KeyError:
            raise ApiError(422, "BadTarget", f"unknown variable {target!r}") from None
        if t in s.evidence:
            raise ApiError(422, "BadTarget", f"{target!r} is part of the evidence")
        return posterior_doc(s, t)

    @app.get("/session/{sid}/diagnosis")
    def diagnosis(sid: str) -> dict:
        s = get_session(sid)
        pred, post = classify(jt, s.evidence, decision_index)
        if post.zero_evidence:
            raise ApiError(
                409,
                "ZeroEvidence",
                "the current evidence is contradictory (probability zero)",
            )
        voi = value_of_information(jt, s.evidence, decision_index)
        return {
            "decision": decision,
            "prediction": net.variables[decision_index].states[pred],
            "states": list(net.variables[decision_index].states),
            "probs": [float(p) for p in post.probs],
            "evidence": evidence_doc(s),
            "voi": [
                {"variable": net.variables[v].name, "score": score}
                for v, score in voi
            ],
        }

    @app.delete("/session/{sid}")
    def delete_session(sid: str) -> dict:
        get_session(sid)
        with lock:
            sessions.pop(sid, None)
        return {"deleted": True}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=Path(ui_dir), html=True), name="ui")

    return app
