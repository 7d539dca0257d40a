"""HTTP service for live human-in-the-loop intervention sessions.

Sessions are event-sourced: an append-only JSON-lines log per session
(created / answered / finished events) fully determines the state, and
replaying the log reconstructs it exactly. Selections are deterministic
given the logged session seed, so the pending query never needs to be
persisted.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .calibration import CalibrationMap
from .data import ConceptSpace, CostModel, Dataset, Instance, load_cost_model, load_dataset, load_space
from .errors import (
    ArityError,
    BadBudgetError,
    CoopError,
    SchemaError,
    SessionFinishedError,
    UnknownInstanceError,
    UnknownPolicyError,
    UnknownSessionError,
    WrongConceptError,
)
from .model import ConceptToLabelModel
from .policies import GreedyOrder, InterventionState, PolicyConfig
from .rollout import make_policy

TOP_N = 5

ERROR_STATUS = {
    "unknown_session": 404,
    "unknown_instance": 404,
    "unknown_policy": 400,
    "bad_budget": 400,
    "arity_error": 400,
    "schema_error": 400,
    "wrong_concept": 409,
    "session_finished": 409,
}


@dataclass
class ArtifactStore:
    """Immutable shared artifacts loaded at service start."""

    space: ConceptSpace
    model: ConceptToLabelModel
    calibration: CalibrationMap | None
    datasets: dict[str, Dataset]
    cost_models: dict[str, CostModel]
    coop_config: PolicyConfig | None
    greedy_order: GreedyOrder | None

    @classmethod
    def load(cls, artifact_dir: str | Path) -> "ArtifactStore":
        d = Path(artifact_dir)
        space = load_space(d / "space.json")
        model = ConceptToLabelModel.load(d / "model.json")
        calibration = None
        if (d / "calibration.json").exists():
            calibration = CalibrationMap.load(d / "calibration.json")
        datasets = {}
        for split in ("train", "val", "test"):
            p = d / f"{split}.jsonl"
            if p.exists():
                datasets[split] = load_dataset(p, space, split)
        cost_models = {"unit": CostModel(costs=tuple([1.0] * space.m), kind="unit")}
        for p in sorted(d.glob("costs_*.json")):
            cost_models[p.stem.removeprefix("costs_")] = load_cost_model(p, space)
        coop_config = (
            PolicyConfig.load(d / "coop.json") if (d / "coop.json").exists() else None
        )
        greedy_order = (
            GreedyOrder.load(d / "greedy.json") if (d / "greedy.json").exists() else None
        )
        return cls(
            space=space,
            model=model,
            calibration=calibration,
            datasets=datasets,
            cost_models=cost_models,
            coop_config=coop_config,
            greedy_order=greedy_order,
        )

    def policies(self) -> list[str]:
        names = ["random", "skyline"]
        if self.coop_config is not None:
            names = ["coop", "cpu-only", "cis-only"] + names
        if self.greedy_order is not None:
            names.append("greedy")
        return sorted(names)

    def find_instance(self, instance_id: str) -> Instance:
        for ds in self.datasets.values():
            for inst in ds.instances:
                if inst.id == instance_id:
                    return inst
        raise UnknownInstanceError(f"unknown instance {instance_id!r}")


@dataclass
class Session:
    id: str
    instance: Instance
    policy_name: str
    budget: float
    cost_model_id: str
    seed: int
    state: InterventionState = None
    policy: object = None
    steps: list[dict] = field(default_factory=list)
    pending: dict | None = None  # {"concept": 1-based index, "breakdown": ...}
    status: str = "active"
    terminated_reason: str | None = None
    seq: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class SessionService:
    def __init__(self, store: ArtifactStore, log_dir: str | Path):
        self.store = store
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        for log in sorted(self.log_dir.glob("*.jsonl")):
            session = self.replay_log(log)
            self.sessions[session.id] = session

    # -- event log ---------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.log_dir / f"{session_id}.jsonl"

    def _append_event(self, session: Session, event: dict) -> None:
        session.seq += 1
        event = {"seq": session.seq, **event}
        with open(self._log_path(session.id), "a") as f:
            f.write(json.dumps(event) + "\n")

    def replay_log(self, path: str | Path) -> Session:
        """Rebuild a session purely from its event log."""
        events = [
            json.loads(line) for line in Path(path).read_text().splitlines() if line
        ]
        created = events[0]
        assert created["type"] == "created"
        if "instance_id" in created:
            instance = self.store.find_instance(created["instance_id"])
        else:
            instance = _inline_instance(created["concept_probs"], self.store.space)
        session = self._new_session(
            session_id=created["session_id"],
            instance=instance,
            policy_name=created["policy"],
            budget=float(created["budget"]),
            cost_model_id=created["cost_model"],
            seed=int(created["seed"]),
        )
        session.seq = 1
        for event in events[1:]:
            session.seq = event["seq"]
            if event["type"] == "answered":
                self._apply_answer(session, event["concept"], event["value"])
            elif event["type"] == "finished":
                session.status = "finished"
                if session.terminated_reason is None:
                    session.terminated_reason = event.get("reason", "client_finished")
        return session

    # -- session construction ---------------------------------------------

    def _new_session(
        self, session_id, instance, policy_name, budget, cost_model_id, seed
    ) -> Session:
        store = self.store
        if policy_name not in store.policies():
            raise UnknownPolicyError(f"unknown policy {policy_name!r}")
        if cost_model_id not in store.cost_models:
            raise UnknownPolicyError(f"unknown cost model {cost_model_id!r}")
        if not np.isfinite(budget) or budget < 0:
            raise BadBudgetError(f"budget must be a nonnegative number, got {budget}")
        cost_model = store.cost_models[cost_model_id]
        policy = make_policy(
            policy_name,
            store.model,
            cost_model,
            store.calibration,
            coop_config=store.coop_config,
            greedy_order=store.greedy_order,
            rng=np.random.default_rng(seed),
        )
        session = Session(
            id=session_id,
            instance=instance,
            policy_name=policy_name,
            budget=budget,
            cost_model_id=cost_model_id,
            seed=seed,
        )
        session.policy = policy
        session.state = InterventionState.initial(
            instance, store.space, store.model, store.calibration
        )
        self._resolve_pending(session)
        return session

    def _resolve_pending(self, session: Session) -> None:
        """Select the next concept, or finish when the budget loop would."""
        if session.status == "finished":
            session.pending = None
            return
        if not session.state.unrevealed():
            session.status = "finished"
            session.terminated_reason = "all_revealed"
            session.pending = None
            return
        i = session.policy.select(session.state)
        q = self.store.cost_models[session.cost_model_id].costs[i - 1]
        if session.state.spent <= session.budget - q:
            breakdown = getattr(session.policy, "last_breakdown", None)
            session.pending = {
                "concept": i,
                "cost": q,
                "breakdown": breakdown.to_json() if breakdown else None,
            }
        else:
            session.status = "finished"
            session.terminated_reason = "unaffordable_selection"
            session.pending = None

    def _apply_answer(self, session: Session, concept_name: str, value: int) -> dict:
        space = self.store.space
        if session.status == "finished":
            raise SessionFinishedError(f"session {session.id} is finished")
        if concept_name not in space.concept_names:
            raise WrongConceptError(f"unknown concept {concept_name!r}")
        i = space.concept_names.index(concept_name) + 1
        if session.pending is None or session.pending["concept"] != i:
            pending_name = (
                space.concept_names[session.pending["concept"] - 1]
                if session.pending
                else None
            )
            raise WrongConceptError(
                f"pending query is {pending_name!r}, not {concept_name!r}"
            )
        value = int(value)
        if not 1 <= value <= space.arities[i - 1]:
            raise ArityError(
                f"value {value} out of range 1..{space.arities[i - 1]} "
                f"for concept {concept_name!r}"
            )
        q = session.pending["cost"]
        session.state = session.state.reveal(
            i, value, q, self.store.model, self.store.calibration
        )
        step = {
            "concept": concept_name,
            "concept_index": i,
            "cost": q,
            "value": value,
            "label_dist": [float(p) for p in session.state.current_label_dist],
            "top_label": session.state.current_top_label,
        }
        session.steps.append(step)
        self._resolve_pending(session)
        return step

    # -- public operations -------------------------------------------------

    def create_session(self, payload: dict) -> dict:
        space = self.store.space
        if "instance_id" in payload:
            instance = self.store.find_instance(str(payload["instance_id"]))
        elif "concept_probs" in payload:
            instance = _inline_instance(payload["concept_probs"], space)
        else:
            raise UnknownInstanceError(
                "request needs either instance_id or concept_probs"
            )
        try:
            budget = float(payload.get("budget", 0))
        except (TypeError, ValueError) as e:
            raise BadBudgetError(f"bad budget: {payload.get('budget')!r}") from e
        session_id = uuid.uuid4().hex
        seed = int(payload.get("seed", int.from_bytes(uuid.uuid4().bytes[:4], "big")))
        session = self._new_session(
            session_id=session_id,
            instance=instance,
            policy_name=str(payload.get("policy", "coop")),
            budget=budget,
            cost_model_id=str(payload.get("cost_model", "unit")),
            seed=seed,
        )
        with self._registry_lock:
            self.sessions[session_id] = session
        created = {
            "type": "created",
            "session_id": session_id,
            "policy": session.policy_name,
            "budget": budget,
            "cost_model": session.cost_model_id,
            "seed": seed,
        }
        if "instance_id" in payload:
            created["instance_id"] = instance.id
        else:
            created["concept_probs"] = [
                list(d) for d in instance.concept_probs
            ]
        self._append_event(session, created)
        return {
            "session_id": session_id,
            "status": session.status,
            "policy": session.policy_name,
            "budget": budget,
            "remaining_budget": budget - session.state.spent,
            "initial_top": _top_n(session.state.current_label_dist, space),
        }

    def _get(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(f"unknown session {session_id!r}")
        return session

    def next_query(self, session_id: str) -> dict:
        session = self._get(session_id)
        with session.lock:
            if session.pending is None:
                return {
                    "finished": True,
                    "reason": session.terminated_reason,
                    "prediction": _top_n(
                        session.state.current_label_dist, self.store.space
                    ),
                }
            i = session.pending["concept"]
            return {
                "finished": False,
                "concept": self.store.space.concept_names[i - 1],
                "arity": self.store.space.arities[i - 1],
                "cost": session.pending["cost"],
                "score_breakdown": session.pending["breakdown"],
                "remaining_budget": session.budget - session.state.spent,
            }

    def answer(self, session_id: str, concept_name: str, value) -> dict:
        session = self._get(session_id)
        with session.lock:
            step = self._apply_answer(session, concept_name, value)
            self._append_event(
                session,
                {"type": "answered", "concept": concept_name, "value": step["value"]},
            )
            return {
                "step": step,
                "top": _top_n(session.state.current_label_dist, self.store.space),
                "remaining_budget": session.budget - session.state.spent,
                "status": session.status,
                "reason": session.terminated_reason,
            }

    def get_session(self, session_id: str) -> dict:
        session = self._get(session_id)
        with session.lock:
            space = self.store.space
            return {
                "session_id": session.id,
                "policy": session.policy_name,
                "budget": session.budget,
                "cost_model": session.cost_model_id,
                "status": session.status,
                "reason": session.terminated_reason,
                "spent": session.state.spent,
                "remaining_budget": session.budget - session.state.spent,
                "steps": list(session.steps),
                "pending": (
                    {
                        "concept": space.concept_names[
                            session.pending["concept"] - 1
                        ],
                        "cost": session.pending["cost"],
                        "score_breakdown": session.pending["breakdown"],
                    }
                    if session.pending
                    else None
                ),
                "label_dist": [float(p) for p in session.state.current_label_dist],
                "top": _top_n(session.state.current_label_dist, space),
            }

    def finish(self, session_id: str) -> dict:
        session = self._get(session_id)
        with session.lock:
            if session.status != "finished":
                session.status = "finished"
                if session.terminated_reason is None:
                    session.terminated_reason = "client_finished"
                session.pending = None
                self._append_event(
                    session,
                    {"type": "finished", "reason": session.terminated_reason},
                )
            dist = session.state.current_label_dist
            return {
                "session_id": session.id,
                "status": "finished",
                "reason": session.terminated_reason,
                "prediction": self.store.space.label_names[int(np.argmax(dist))],
                "prediction_index": int(np.argmax(dist)) + 1,
                "spent": session.state.spent,
                "top": _top_n(dist, self.store.space),
            }

    def catalog(self) -> dict:
        store = self.store
        return {
            "concepts": [
                {"name": n, "arity": a, "costs": {
                    cid: cm.costs[i]
                    for cid, cm in store.cost_models.items()
                }}
                for i, (n, a) in enumerate(
                    zip(store.space.concept_names, store.space.arities)
                )
            ],
            "labels": list(store.space.label_names),
            "policies": store.policies(),
            "cost_models": sorted(store.cost_models),
            "datasets": {
                split: [inst.id for inst in ds.instances]
                for split, ds in store.datasets.items()
            },
        }


def _inline_instance(concept_probs, space: ConceptSpace) -> Instance:
    probs = []
    for i, dist in enumerate(concept_probs):
        vals = [float(p) for p in dist]
        total = sum(vals)
        if len(vals) != space.arities[i] or any(p < 0 for p in vals):
            raise SchemaError(f"bad distribution for concept {i + 1}")
        if abs(total - 1.0) > 1e-6:
            raise SchemaError(f"concept {i + 1} distribution sums to {total!r}")
        probs.append(tuple(p / total for p in vals))
    # ground truth is unknown for inline instances; placeholders keep the
    # Instance invariants satisfied and are never used by the session loop
    # (the human supplies values), except by the skyline policy
    return Instance(
        id="inline",
        concept_probs=tuple(probs),
        concept_true=tuple([1] * space.m),
        label=1,
    )


def _top_n(dist, space: ConceptSpace, n: int = TOP_N) -> list[dict]:
    dist = np.asarray(dist, dtype=float)
    order = np.lexsort((np.arange(len(dist)), -dist))[:n]
    return [
        {"label": space.label_names[k], "index": int(k) + 1, "p": float(dist[k])}
        for k in order
    ]


def create_app(artifact_dir: str | Path, log_dir: str | Path,
               static_dir: str | Path | None = None) -> FastAPI:
    store = ArtifactStore.load(artifact_dir)
    service = SessionService(store, log_dir)
    app = FastAPI(title="coopcbm session service")
    app.state.service = service

    @app.exception_handler(CoopError)
    async def coop_error_handler(request: Request, exc: CoopError):
        return JSONResponse(
            status_code=ERROR_STATUS.get(exc.code, 400),
            content={"code": exc.code, "message": str(exc)},
        )

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "sessions": len(service.sessions)}

    @app.get("/v1/catalog")
    def catalog():
        return service.catalog()

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request):
        payload = await request.json()
        return service.create_session(payload)

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return service.get_session(session_id)

    @app.get("/v1/sessions/{session_id}/next")
    def next_query(session_id: str):
        return service.next_query(session_id)

    @app.post("/v1/sessions/{session_id}/answer")
    async def answer(session_id: str, request: Request):
        payload = await request.json()
        return service.answer(
            session_id, str(payload.get("concept")), payload.get("value")
        )

    @app.post("/v1/sessions/{session_id}/finish")
    def finish(session_id: str):
        return service.finish(session_id)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
