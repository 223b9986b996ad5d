"""Learned runtime predictor over plan graphs.

Architecture: one 2-layer rectifier encoder per node kind, bottom-up message
passing where each node combines its own encoding with the mean of its
children's hidden states, and a 2-layer readout from the root that emits
log-runtime (prediction = exp, hence strictly positive).

Per-node hidden states are exposed on the forward trace and can be scaled by
per-node mask factors immediately after computation; a zero factor nulls the
node's content while leaving the message-passing structure intact. That hook
is what the perturbation explainers and the fidelity metric drive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ContractError, FormatError, NumericalError, ParameterError
from .plans import DEFAULT_SCHEMA, NODE_KINDS, FeatureSchema, FeaturizedPlan, PlanGraph, featurize
from .synth import Workload

FORMAT_VERSION = 1


def _weight_specs(schema: FeatureSchema, d: int) -> list[tuple[str, tuple[int, int], int]]:
    """(name, shape, fan_in) for every parameter array, in canonical order."""
    specs: list[tuple[str, tuple[int, int], int]] = []
    for kind in NODE_KINDS:
        f = schema.width(kind)
        specs += [
            (f"enc.{kind}.w1", (f, d), f),
            (f"enc.{kind}.b1", (1, d), f),
            (f"enc.{kind}.w2", (d, d), d),
            (f"enc.{kind}.b2", (1, d), d),
        ]
    specs += [
        ("combine.w1", (2 * d, d), 2 * d),
        ("combine.b1", (1, d), 2 * d),
        ("combine.w2", (d, d), d),
        ("combine.b2", (1, d), d),
        ("readout.w1", (d, d), d),
        ("readout.b1", (1, d), d),
        ("readout.w2", (d, 1), d),
        ("readout.b2", (1, 1), d),
    ]
    return specs


@dataclass
class ForwardTrace:
    """One recorded prediction: tape, leaves, and per-node hidden states."""

    plan: PlanGraph
    tape: ad.Tape
    prediction: ad.Tensor
    log_prediction: ad.Tensor
    predicted_runtime_ms: float
    hidden: dict[int, np.ndarray]
    feature_leaves: dict[str, ad.Tensor]
    feature_rows: dict[str, list[int]]
    mask_leaf: ad.Tensor | None
    mask_order: list[int]
    param_leaves: dict[str, ad.Tensor] = field(default_factory=dict)


class CostModel:
    """Per-kind encoders + message passing + root readout; immutable once trained."""

    def __init__(self, schema: FeatureSchema, hidden_width: int, weights: dict[str, np.ndarray], meta: dict | None = None):
        self.schema = schema
        self.hidden_width = hidden_width
        self.weights = weights
        self.meta = meta if meta is not None else {}

    @classmethod
    def create(cls, schema: FeatureSchema = DEFAULT_SCHEMA, hidden_width: int = 32, seed: int = 0) -> "CostModel":
        """Fresh model, weights ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
        rng = np.random.default_rng(seed)
        weights = {}
        for name, shape, fan_in in _weight_specs(schema, hidden_width):
            bound = 1.0 / math.sqrt(fan_in)
            weights[name] = rng.uniform(-bound, bound, size=shape)
        return cls(schema, hidden_width, weights, {"seed": seed})

    def copy(self) -> "CostModel":
        return CostModel(self.schema, self.hidden_width, {k: v.copy() for k, v in self.weights.items()}, dict(self.meta))

    def parameter_count(self) -> int:
        return sum(v.size for v in self.weights.values())

    # -- forward ------------------------------------------------------------

    def _plan_cache(self, plan: PlanGraph) -> dict:
        cache = getattr(plan, "_costlens_cache", None)
        if cache is None:
            cache = {}
            object.__setattr__(plan, "_costlens_cache", cache)
        return cache

    def _layout(self, plan: PlanGraph) -> "_Layout":
        cache = self._plan_cache(plan)
        layout = cache.get("layout")
        if layout is None:
            layout = _build_layout(plan)
            cache["layout"] = layout
        return layout

    def _features(self, plan: PlanGraph) -> FeaturizedPlan:
        cache = self._plan_cache(plan)
        key = ("features", self.schema.schema_hash())
        feats = cache.get(key)
        if feats is None:
            feats = featurize(plan, self.schema)
            cache[key] = feats
        return feats

    def predict(self, plan: PlanGraph, mask: dict[int, float] | None = None, *, feature_grads: bool = False) -> ForwardTrace:
        """Forward pass; `mask` maps node id -> factor in [0, 1].

        Factors scale the node's hidden state right after it is computed;
        omitted ids default to 1. With `feature_grads`, input feature leaves
        participate in backward (needed by gradient explainers).
        """
        tape = ad.Tape()
        mask_tensor = None
        layout = self._layout(plan)
        if mask is not None:
            vec = np.ones((len(layout.order), 1))
            for nid, factor in mask.items():
                if nid not in plan:
                    raise ContractError(f"mask key {nid} is not a node of plan {plan.plan_id}")
                if not 0.0 <= factor <= 1.0:
                    raise ContractError(f"mask factor for node {nid} must be in [0, 1], got {factor}")
                vec[layout.pos[nid], 0] = factor
            mask_tensor = tape.leaf(vec)
        return self.forward_on_tape(plan, tape, mask_tensor, feature_grads=feature_grads)

    def forward_on_tape(
        self,
        plan: PlanGraph,
        tape: ad.Tape,
        mask_tensor: ad.Tensor | None = None,
        *,
        feature_grads: bool = False,
        param_grads: bool = False,
        feature_override: dict[str, np.ndarray] | None = None,
    ) -> ForwardTrace:
        """Run the forward pass on a caller-owned tape.

        `mask_tensor`, when given, must live on `tape` with shape [n, 1],
        rows following the plan's canonical node order. This is the entry
        point for mask optimization, where the mask is itself differentiable.
        `feature_override` swaps in alternative per-kind feature matrices
        (same shapes as the plan's featurization).
        """
        layout = self._layout(plan)
        feats = self._features(plan)
        d = self.hidden_width
        w = {name: tape.leaf(arr, requires_grad=param_grads) for name, arr in self.weights.items()}

        def mlp(x: ad.Tensor, prefix: str, final_relu: bool = True) -> ad.Tensor:
            h = ad.relu(ad.add(ad.matmul(x, w[f"{prefix}.w1"]), w[f"{prefix}.b1"]))
            out = ad.add(ad.matmul(h, w[f"{prefix}.w2"]), w[f"{prefix}.b2"])
            return ad.relu(out) if final_relu else out

        feature_leaves: dict[str, ad.Tensor] = {}
        enc_parts: list[ad.Tensor] = []
        for kind in NODE_KINDS:
            mat = feats.matrices[kind]
            if feature_override is not None and kind in feature_override:
                if feature_override[kind].shape != mat.shape:
                    raise ContractError(f"feature override for {kind} must have shape {mat.shape}")
                mat = feature_override[kind]
            if mat.shape[0] == 0:
                continue
            x = tape.leaf(mat, requires_grad=feature_grads)
            feature_leaves[kind] = x
            enc_parts.append(ad.matmul(tape.constant(layout.kind_select[kind]), mlp(x, f"enc.{kind}")))
        h_enc = enc_parts[0]
        for part in enc_parts[1:]:
            h_enc = ad.add(h_enc, part)

        h_all: ad.Tensor | None = None
        for li, members in enumerate(layout.levels):
            sel = tape.constant(layout.level_select[li])
            enc_l = ad.matmul(sel, h_enc)
            if layout.level_agg[li] is None:
                agg_l = tape.constant(np.zeros((len(members), d)))
            else:
                agg_l = ad.matmul(tape.constant(layout.level_agg[li]), h_all)
            h_l = mlp(ad.concat([enc_l, agg_l], axis=1), "combine")
            if mask_tensor is not None:
                h_l = ad.scale_rows(h_l, ad.matmul(sel, mask_tensor))
            h_all = h_l if h_all is None else ad.concat([h_all, h_l], axis=0)

        h_root = ad.matmul(tape.constant(layout.root_select), h_all)
        log_pred = mlp(h_root, "readout", final_relu=False)
        prediction = ad.exp(log_pred)
        value = prediction.item()
        if not math.isfinite(value) or value <= 0.0:
            raise NumericalError(f"prediction {value} is not a positive finite value")

        hidden = {nid: h_all.data[layout.proc_pos[nid]] for nid in layout.order}
        return ForwardTrace(
            plan=plan,
            tape=tape,
            prediction=prediction,
            log_prediction=log_pred,
            predicted_runtime_ms=value,
            hidden=hidden,
            feature_leaves=feature_leaves,
            feature_rows={k: list(feats.row_ids[k]) for k in feature_leaves},
            mask_leaf=mask_tensor,
            mask_order=list(layout.order),
            param_leaves=w,
        )


@dataclass
class _Layout:
    """Plan-structure constants reused across forward passes."""

    order: list[int]
    pos: dict[int, int]
    levels: list[list[int]]
    proc_pos: dict[int, int]
    kind_select: dict[str, np.ndarray]
    level_select: list[np.ndarray]
    level_agg: list[np.ndarray | None]
    root_select: np.ndarray


def _build_layout(plan: PlanGraph) -> _Layout:
    order = plan.order
    pos = {nid: i for i, nid in enumerate(order)}
    n = len(order)

    height: dict[int, int] = {}
    for nid in reversed(order):  # children precede parents when reversed
        children = plan.node(nid).children
        height[nid] = 0 if not children else 1 + max(height[c] for c in children)

    levels: list[list[int]] = [[] for _ in range(max(height.values()) + 1)]
    for nid in order:
        levels[height[nid]].append(nid)

    proc_order = [nid for level in levels for nid in level]
    proc_pos = {nid: i for i, nid in enumerate(proc_order)}

    kind_select: dict[str, np.ndarray] = {}
    for kind in NODE_KINDS:
        ids = [nid for nid in order if plan.node(nid).kind == kind]
        g = np.zeros((n, len(ids)))
        for j, nid in enumerate(ids):
            g[pos[nid], j] = 1.0
        kind_select[kind] = g

    level_select: list[np.ndarray] = []
    level_agg: list[np.ndarray | None] = []
    seen = 0
    for li, members in enumerate(levels):
        sel = np.zeros((len(members), n))
        for r, nid in enumerate(members):
            sel[r, pos[nid]] = 1.0
        level_select.append(sel)
        if li == 0:
            level_agg.append(None)
        else:
            agg = np.zeros((len(members), seen))
            for r, nid in enumerate(members):
                children = plan.node(nid).children
                share = 1.0 / len(children)
                for c in children:
                    agg[r, proc_pos[c]] += share
            level_agg.append(agg)
        seen += len(members)

    root_select = np.zeros((1, n))
    root_select[0, proc_pos[plan.root]] = 1.0
    return _Layout(order, pos, levels, proc_pos, kind_select, level_select, level_agg, root_select)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def q_error_value(predicted: float, actual: float) -> float:
    return max(predicted / actual, actual / predicted)


def train(
    model: CostModel,
    workload: Workload,
    split: tuple[float, float] = (0.8, 0.2),
    epochs: int = 200,
    lr: float = 3e-3,
    batch_size: int = 16,
    seed: int = 0,
) -> tuple[CostModel, list[dict]]:
    """Minimize MSE in log-runtime space with Adam; returns the checkpoint
    with the best validation median Q-error plus the per-epoch history.

    The input model is not mutated.
    """
    train_plans, val_plans = split_workload(workload, split, seed)
    trained = model.copy()
    if epochs == 0:
        return trained, []

    param_names = list(trained.weights.keys())
    targets = {p.plan_id: math.log(p.actual_total_runtime_ms) for p in workload.plans}
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    state = None
    history: list[dict] = []
    best: tuple[float, dict[str, np.ndarray]] | None = None

    for epoch in range(epochs):
        perm = rng.permutation(len(train_plans))
        losses: list[float] = []
        for start in range(0, len(perm), batch_size):
            batch = perm[start : start + batch_size]
            grad_acc = {name: np.zeros_like(arr) for name, arr in trained.weights.items()}
            for idx in batch:
                plan = train_plans[idx]
                trace = trained.forward_on_tape(plan, ad.Tape(), param_grads=True)
                t = trace.tape.constant([[targets[plan.plan_id]]])
                err = ad.sub(trace.log_prediction, t)
                loss = ad.mul(err, err)
                losses.append(loss.item())
                grads = ad.backward(trace.tape, loss)
                for name in param_names:
                    grad_acc[name] += grads[trace.param_leaves[name]]
            scale = 1.0 / len(batch)
            state = ad.adam_step(
                [trained.weights[n] for n in param_names],
                [grad_acc[n] * scale for n in param_names],
                state,
                lr,
            )
        val_q = [
            q_error_value(trained.predict(p).predicted_runtime_ms, p.actual_total_runtime_ms) for p in val_plans
        ]
        median_q = float(np.median(val_q))
        mean_loss = float(np.mean(losses))
        if not math.isfinite(mean_loss):
            raise NumericalError(f"training loss diverged at epoch {epoch}")
        history.append({"epoch": epoch, "train_mse": mean_loss, "val_median_qerror": median_q})
        if best is None or median_q < best[0]:
            best = (median_q, {k: v.copy() for k, v in trained.weights.items()})

    trained.weights = best[1]
    trained.meta = dict(trained.meta)
    trained.meta.update(
        {
            "trained_on": workload.workload_id,
            "epochs": epochs,
            "lr": lr,
            "batch_size": batch_size,
            "train_seed": seed,
            "best_val_median_qerror": best[0],
            "history": history,
        }
    )
    return trained, history


def split_workload(workload: Workload, split: tuple[float, float], seed: int) -> tuple[list[PlanGraph], list[PlanGraph]]:
    f_train, f_val = split
    if f_train <= 0 or f_val <= 0 or f_train + f_val > 1.0 + 1e-9:
        raise ParameterError(f"invalid split fractions {split}")
    n = len(workload.plans)
    n_val = int(round(f_val * n))
    n_train = int(round(f_train * n))
    n_train = min(n_train, n - n_val)
    if n_train < 1 or n_val < 1:
        raise ParameterError(f"split {split} leaves an empty side for {n} plans")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    perm = rng.permutation(n)
    train_idx = sorted(perm[:n_train].tolist())
    val_idx = sorted(perm[n_train : n_train + n_val].tolist())
    return [workload.plans[i] for i in train_idx], [workload.plans[i] for i in val_idx]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_model(model: CostModel, path: str | Path) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "feature_schema_hash": model.schema.schema_hash(),
        "hyperparams": {"hidden_width": model.hidden_width},
        "training_meta": model.meta,
        "weights": {name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()} for name, arr in model.weights.items()},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path, schema: FeatureSchema = DEFAULT_SCHEMA) -> CostModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format in {path}")
    if payload.get("feature_schema_hash") != schema.schema_hash():
        raise FormatError("model was saved under a different feature schema")
    try:
        d = int(payload["hyperparams"]["hidden_width"])
        weights = {}
        for name, shape, _ in _weight_specs(schema, d):
            entry = payload["weights"][name]
            arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if tuple(arr.shape) != shape:
                raise FormatError(f"weight {name} has shape {arr.shape}, expected {shape}")
            weights[name] = arr
        meta = payload.get("training_meta", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model file {path}: {exc}") from exc
    return CostModel(schema, d, weights, meta)
