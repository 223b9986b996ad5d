"""HTTP service exposing workloads, plans, predictions and explanations.

All endpoints are read-only with respect to workloads and models. Explanation
responses are cached by (model, plan, algorithm, config) and a single
computation runs per cache key: concurrent identical requests wait for the
first one and receive the byte-identical payload.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse

from .errors import CostLensError
from .explain import ALGORITHMS, GnnExplainerConfig, explain, stable_seed
from .metrics import FidelityConfig, build_report, q_error
from .model import CostModel, load_model
from .plans import PlanGraph, serialize_plan
from .synth import Workload, load_workload


class _CoalescingCache:
    """Bounded byte cache; one in-flight computation per key."""

    @dataclass
    class _Inflight:
        event: threading.Event = field(default_factory=threading.Event)
        result: bytes | None = None
        error: BaseException | None = None

    def __init__(self, max_entries: int = 256):
        self.max_entries = max_entries
        self._lock = threading.Lock()
        self._entries: OrderedDict[str, bytes] = OrderedDict()
        self._inflight: dict[str, _CoalescingCache._Inflight] = {}
        self.computations = 0  # observability: how many misses actually computed

    def get_or_compute(self, key: str, compute) -> bytes:
        with self._lock:
            cached = self._entries.get(key)
            if cached is not None:
                self._entries.move_to_end(key)
                return cached
            inflight = self._inflight.get(key)
            owner = inflight is None
            if owner:
                inflight = self._Inflight()
                self._inflight[key] = inflight
        if not owner:
            inflight.event.wait()
            if inflight.error is not None:
                raise inflight.error
            return inflight.result
        try:
            result = compute()
            inflight.result = result
            with self._lock:
                self.computations += 1
                self._entries[key] = result
                while self.max_entries > 0 and len(self._entries) > self.max_entries:
                    self._entries.popitem(last=False)
            return result
        except BaseException as exc:
            inflight.error = exc
            raise
        finally:
            with self._lock:
                self._inflight.pop(key, None)
            inflight.event.set()


@dataclass
class ServiceState:
    workloads: dict[str, Workload]
    models: dict[str, CostModel]
    plans: dict[str, tuple[str, PlanGraph]]  # plan_id -> (workload_id, plan)
    cache: _CoalescingCache

    @classmethod
    def load(cls, workloads_dir: str | Path, models_dir: str | Path, cache_size: int = 256) -> "ServiceState":
        workloads: dict[str, Workload] = {}
        wdir = Path(workloads_dir)
        candidates = [wdir] if (wdir / "workload.json").exists() else sorted(p for p in wdir.iterdir() if p.is_dir())
        for cand in candidates:
            if (cand / "workload.json").exists():
                wl = load_workload(cand)
                workloads[wl.workload_id] = wl
        models: dict[str, CostModel] = {}
        mdir = Path(models_dir)
        if mdir.is_dir():
            for path in sorted(mdir.glob("*.json")):
                if path.name.endswith(".history.json") or path.name == "workload.json":
                    continue
                models[path.stem] = load_model(path)
        plans = {p.plan_id: (wid, p) for wid, wl in workloads.items() for p in wl.plans}
        return cls(workloads, models, plans, _CoalescingCache(cache_size))


def _error(status: int, code: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, **extra})


def _canonical_config(plan_id: str, algorithm: str, config: dict | None) -> dict:
    cfg = dict(config or {})
    if algorithm == "gnn_explainer":
        cfg.setdefault("seed", stable_seed(plan_id, algorithm))
        cfg.setdefault("steps", GnnExplainerConfig.steps)
        cfg.setdefault("lr", GnnExplainerConfig.lr)
        cfg.setdefault("sparsity_weight", GnnExplainerConfig.sparsity_weight)
        cfg.setdefault("entropy_weight", GnnExplainerConfig.entropy_weight)
    cfg.setdefault("k_fraction", FidelityConfig.k_fraction)
    return cfg


def create_app(state: ServiceState, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="costlens", docs_url=None, redoc_url=None)

    # the UI is normally served by this app (same origin); CORS enables
    # running it from a separate dev server
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    @app.get("/api/workloads")
    def list_workloads():
        return [
            {
                "workload_id": wid,
                "plan_count": len(wl.plans),
                "params": wl.params.to_document(),
            }
            for wid, wl in sorted(state.workloads.items())
        ]

    @app.get("/api/workloads/{wid}/plans")
    def list_plans(wid: str):
        wl = state.workloads.get(wid)
        if wl is None:
            return _error(404, "workload_not_found")
        return [
            {
                "plan_id": p.plan_id,
                "operator_count": len(p.operator_ids()),
                "node_count": len(p.nodes),
                "total_runtime_ms": p.actual_total_runtime_ms,
            }
            for p in wl.plans
        ]

    @app.get("/api/plans/{pid}")
    def get_plan(pid: str):
        entry = state.plans.get(pid)
        if entry is None:
            return _error(404, "plan_not_found")
        return serialize_plan(entry[1])

    @app.get("/api/models")
    def list_models():
        out = []
        for mid, model in sorted(state.models.items()):
            meta = {k: v for k, v in model.meta.items() if k != "history"}
            out.append(
                {
                    "model_id": mid,
                    "hidden_width": model.hidden_width,
                    "parameter_count": model.parameter_count(),
                    "training_meta": meta,
                }
            )
        return out

    @app.get("/api/algorithms")
    def list_algorithms():
        return list(ALGORITHMS)

    @app.post("/api/models/{mid}/predict")
    def predict(mid: str, body: dict):
        model = state.models.get(mid)
        if model is None:
            return _error(404, "model_not_found")
        entry = state.plans.get(body.get("plan_id", ""))
        if entry is None:
            return _error(404, "plan_not_found")
        plan = entry[1]
        predicted = model.predict(plan).predicted_runtime_ms
        return {
            "plan_id": plan.plan_id,
            "predicted_ms": predicted,
            "actual_ms": plan.actual_total_runtime_ms,
            "q_error": q_error(predicted, plan.actual_total_runtime_ms),
        }

    @app.post("/api/models/{mid}/explain")
    def explain_plan(mid: str, body: dict):
        model = state.models.get(mid)
        if model is None:
            return _error(404, "model_not_found")
        entry = state.plans.get(body.get("plan_id", ""))
        if entry is None:
            return _error(404, "plan_not_found")
        algorithm = body.get("algorithm", "")
        if algorithm not in ALGORITHMS:
            return _error(400, "unknown_algorithm", valid_algorithms=list(ALGORITHMS))
        plan = entry[1]
        cfg = _canonical_config(plan.plan_id, algorithm, body.get("config"))
        key_src = json.dumps({"model": mid, "plan": plan.plan_id, "algorithm": algorithm, "config": cfg}, sort_keys=True)
        key = hashlib.sha256(key_src.encode()).hexdigest()

        def compute() -> bytes:
            gnn_cfg = None
            if algorithm == "gnn_explainer":
                gnn_cfg = GnnExplainerConfig(
                    steps=int(cfg["steps"]),
                    lr=float(cfg["lr"]),
                    sparsity_weight=float(cfg["sparsity_weight"]),
                    entropy_weight=float(cfg["entropy_weight"]),
                    seed=int(cfg["seed"]),
                )
            explanation = explain(model, plan, algorithm, gnn_cfg)
            report = build_report(model, plan, explanation, FidelityConfig(k_fraction=float(cfg["k_fraction"])))
            payload = {"explanation": explanation.to_document(), "report": report.to_document()}
            return json.dumps(payload, sort_keys=True).encode()

        try:
            payload = state.cache.get_or_compute(key, compute)
        except CostLensError as exc:
            return _error(422, "explanation_failed", diagnostics=str(exc))
        return Response(content=payload, media_type="application/json")

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
