"""Node-importance explainers for the runtime predictor, adapted for regression.

Two gradient-based algorithms (sensitivity, guided backprop) score nodes by
input-gradient magnitude; two perturbation-based ones (mask optimization,
leave-one-out masking) score nodes by how much the prediction moves when the
node's hidden state is nulled. Regression has no class probabilities, so
perturbation losses compare predictions through a relative loss
|masked - original| / original.

Raw scores are normalized to fractions summing to 1 (all-zero scores map to
uniform); a max-scaled view (peak = 1) is kept alongside for display.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, NumericalError
from .model import CostModel
from .plans import PlanGraph

ALGORITHMS = ("sensitivity", "guided_backprop", "gnn_explainer", "diff_mask")


@dataclass
class Explanation:
    algorithm: str
    plan_id: str
    raw: dict[int, float]
    normalized: dict[int, float]
    max_scaled: dict[int, float]
    prediction_ms: float
    runtime_ms: float
    diagnostics: dict = field(default_factory=dict)

    def to_document(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "plan_id": self.plan_id,
            "prediction_ms": self.prediction_ms,
            "runtime_ms": self.runtime_ms,
            "scores": [
                {
                    "node_id": nid,
                    "raw": self.raw[nid],
                    "normalized": self.normalized[nid],
                    "max_scaled": self.max_scaled[nid],
                }
                for nid in sorted(self.raw)
            ],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "Explanation":
        return cls(
            algorithm=doc["algorithm"],
            plan_id=doc["plan_id"],
            raw={s["node_id"]: s["raw"] for s in doc["scores"]},
            normalized={s["node_id"]: s["normalized"] for s in doc["scores"]},
            max_scaled={s["node_id"]: s["max_scaled"] for s in doc["scores"]},
            prediction_ms=doc["prediction_ms"],
            runtime_ms=doc["runtime_ms"],
            diagnostics=doc.get("diagnostics", {}),
        )


@dataclass(frozen=True)
class GnnExplainerConfig:
    steps: int = 200
    lr: float = 0.05
    sparsity_weight: float = 0.05
    entropy_weight: float = 0.1
    seed: int = 0


def relative_loss(masked_prediction: float, original_prediction: float) -> float:
    """|masked - original| / original; zero iff the predictions agree."""
    if original_prediction <= 0:
        raise ContractError("original prediction must be positive")
    return abs(masked_prediction - original_prediction) / original_prediction


def normalize_scores(raw: dict[int, float]) -> dict[int, float]:
    """Fractions summing to 1; an all-zero input maps to uniform scores."""
    if any(v < 0 for v in raw.values()):
        raise ContractError("raw importance scores must be >= 0")
    total = sum(raw.values())
    if total > 0:
        return {nid: v / total for nid, v in raw.items()}
    return {nid: 1.0 / len(raw) for nid in raw}


def max_scale_scores(raw: dict[int, float]) -> dict[int, float]:
    peak = max(raw.values(), default=0.0)
    if peak > 0:
        return {nid: v / peak for nid, v in raw.items()}
    return {nid: 0.0 for nid in raw}


def stable_seed(plan_id: str, algorithm: str) -> int:
    """Deterministic explainer seed derived from the request identity."""
    digest = hashlib.sha256(f"{plan_id}:{algorithm}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _gradient_scores(model: CostModel, plan: PlanGraph, mode: str) -> tuple[dict[int, float], float]:
    trace = model.predict(plan, feature_grads=True)
    grads = ad.backward(trace.tape, trace.prediction, mode=mode)
    raw: dict[int, float] = {}
    for kind, leaf in trace.feature_leaves.items():
        g = grads[leaf]
        for row, nid in enumerate(trace.feature_rows[kind]):
            raw[nid] = float(np.linalg.norm(g[row]))
    return raw, trace.predicted_runtime_ms


def _finish(algorithm: str, plan: PlanGraph, raw: dict[int, float], prediction: float, started: float, diagnostics: dict | None = None) -> Explanation:
    return Explanation(
        algorithm=algorithm,
        plan_id=plan.plan_id,
        raw=raw,
        normalized=normalize_scores(raw),
        max_scaled=max_scale_scores(raw),
        prediction_ms=prediction,
        runtime_ms=(time.perf_counter() - started) * 1000.0,
        diagnostics=diagnostics or {},
    )


def explain_sensitivity(model: CostModel, plan: PlanGraph) -> Explanation:
    """Score = L2 norm of d(prediction)/d(node input features)."""
    started = time.perf_counter()
    raw, prediction = _gradient_scores(model, plan, "standard")
    return _finish("sensitivity", plan, raw, prediction, started)


def explain_guided_backprop(model: CostModel, plan: PlanGraph) -> Explanation:
    """Sensitivity with negative gradients clamped to zero at each rectifier."""
    started = time.perf_counter()
    raw, prediction = _gradient_scores(model, plan, "guided")
    return _finish("guided_backprop", plan, raw, prediction, started)


def explain_diff_mask(model: CostModel, plan: PlanGraph) -> Explanation:
    """Leave-one-out masking: score = relative prediction change when the
    node's hidden state is zeroed (n+1 forward passes)."""
    started = time.perf_counter()
    base = model.predict(plan)
    raw = {}
    for nid in plan.order:
        masked = model.predict(plan, mask={nid: 0.0})
        raw[nid] = relative_loss(masked.predicted_runtime_ms, base.predicted_runtime_ms)
    return _finish("diff_mask", plan, raw, base.predicted_runtime_ms, started)


def explain_gnn_explainer(model: CostModel, plan: PlanGraph, config: GnnExplainerConfig = GnnExplainerConfig()) -> Explanation:
    """Soft node masks optimized to keep the prediction while shrinking the mask.

    loss = |y(m) - y| / y + w_s * mean(m) + w_e * mean(binary entropy of m);
    the final sigmoid mask values are the raw scores.
    """
    started = time.perf_counter()
    n = len(plan.order)
    base = model.predict(plan)
    y = base.predicted_runtime_ms

    rng = np.random.default_rng(config.seed)
    logits = rng.normal(0.0, 0.1, size=(n, 1))
    state = None
    loss_curve: list[float] = []
    eps = 1e-12

    for _ in range(config.steps):
        tape = ad.Tape()
        theta = tape.leaf(logits)
        mask = ad.sigmoid(theta)
        trace = model.forward_on_tape(plan, tape, mask)
        rel = ad.mul(ad.absolute(ad.sub(trace.prediction, tape.constant([[y]]))), tape.constant([[1.0 / y]]))
        sparsity = ad.mean_rows(mask)
        ones = tape.constant(np.ones((n, 1)))
        eps_c = tape.constant(np.full((n, 1), eps))
        keep = ad.mul(mask, ad.log(ad.add(mask, eps_c)))
        drop = ad.mul(ad.sub(ones, mask), ad.log(ad.add(ad.sub(ones, mask), eps_c)))
        entropy = ad.mean_rows(ad.sub(tape.constant(np.zeros((n, 1))), ad.add(keep, drop)))
        loss = ad.add(
            rel,
            ad.add(
                ad.mul(tape.constant([[config.sparsity_weight]]), sparsity),
                ad.mul(tape.constant([[config.entropy_weight]]), entropy),
            ),
        )
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalError(f"mask optimization diverged at step {len(loss_curve)}; curve={loss_curve[-5:]}")
        loss_curve.append(value)
        grads = ad.backward(tape, loss)
        state = ad.adam_step([logits], [grads[theta]], state, config.lr)

    final_mask = 1.0 / (1.0 + np.exp(-logits.reshape(-1)))
    raw = {nid: float(final_mask[i]) for i, nid in enumerate(plan.order)}
    diagnostics = {"loss_curve": loss_curve, "seed": config.seed, "steps": config.steps, "lr": config.lr}
    return _finish("gnn_explainer", plan, raw, y, started, diagnostics)


def explain(model: CostModel, plan: PlanGraph, algorithm: str, gnn_config: GnnExplainerConfig | None = None) -> Explanation:
    """Dispatch by algorithm name (see :data:`ALGORITHMS`)."""
    if algorithm == "sensitivity":
        return explain_sensitivity(model, plan)
    if algorithm == "guided_backprop":
        return explain_guided_backprop(model, plan)
    if algorithm == "diff_mask":
        return explain_diff_mask(model, plan)
    if algorithm == "gnn_explainer":
        if gnn_config is None:
            gnn_config = GnnExplainerConfig(seed=stable_seed(plan.plan_id, algorithm))
        return explain_gnn_explainer(model, plan, gnn_config)
    raise ContractError(f"unknown algorithm {algorithm!r}; valid: {', '.join(ALGORITHMS)}")
