"""Shared fixtures and oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

import costlens as cl
from costlens import autodiff as ad
from costlens.model import CostModel, ForwardTrace
from costlens.plans import parse_plan


# ---------------------------------------------------------------------------
# Finite-difference oracle (independent of the autodiff implementation)
# ---------------------------------------------------------------------------


def finite_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar-valued f at x, entry by entry (step h)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, atol: float = 1e-8) -> float:
    worst = 0.0
    for x, y in zip(np.asarray(a).reshape(-1), np.asarray(b).reshape(-1)):
        scale = max(abs(x), abs(y))
        if scale < atol:
            continue
        worst = max(worst, abs(x - y) / scale)
    return worst


# ---------------------------------------------------------------------------
# Plan documents
# ---------------------------------------------------------------------------


def tiny_plan_document() -> dict:
    """Smallest useful plan: one Seq Scan over one table."""
    return {
        "plan_id": "tiny",
        "sql": "SELECT * FROM t0",
        "actual_total_runtime_ms": 40.0,
        "root": 0,
        "nodes": [
            {
                "id": 0,
                "kind": "operator",
                "label": "Seq Scan",
                "features": {"estimated_cardinality": 1000.0, "actual_cardinality": 900.0},
                "children": [1],
                "cumulative_runtime_ms": 40.0,
            },
            {"id": 1, "kind": "table", "label": "t0", "features": {"table_rows": 1000.0}, "children": []},
        ],
    }


def joined_plan_document() -> dict:
    """Two scans feeding a hash join under an aggregate, with a filter
    predicate, a join predicate and column nodes (4 operators total)."""
    return {
        "plan_id": "joined",
        "sql": "SELECT count(*) FROM t0, t1 WHERE t0.c0 = t1.c0 AND t1.c1 >= ?",
        "actual_total_runtime_ms": 100.0,
        "root": 0,
        "nodes": [
            {
                "id": 0,
                "kind": "operator",
                "label": "Aggregate",
                "features": {"estimated_cardinality": 1.0, "actual_cardinality": 1.0},
                "children": [1],
                "cumulative_runtime_ms": 100.0,
            },
            {
                "id": 1,
                "kind": "operator",
                "label": "Hash Join",
                "features": {"estimated_cardinality": 4000.0, "actual_cardinality": 5000.0},
                "children": [2, 3, 8],
                "cumulative_runtime_ms": 90.0,
            },
            {
                "id": 2,
                "kind": "operator",
                "label": "Seq Scan",
                "features": {"estimated_cardinality": 10000.0, "actual_cardinality": 10000.0},
                "children": [4],
                "cumulative_runtime_ms": 30.0,
            },
            {
                "id": 3,
                "kind": "operator",
                "label": "Seq Scan",
                "features": {"estimated_cardinality": 900.0, "actual_cardinality": 1100.0},
                "children": [5, 6],
                "cumulative_runtime_ms": 50.0,
            },
            {"id": 4, "kind": "table", "label": "t0", "features": {"table_rows": 10000.0}, "children": []},
            {"id": 5, "kind": "table", "label": "t1", "features": {"table_rows": 2000.0}, "children": []},
            {
                "id": 6,
                "kind": "predicate",
                "label": ">=",
                "features": {"selectivity": 0.55},
                "children": [7],
            },
            {"id": 7, "kind": "column", "label": "c1", "features": {"distinct_values": 120.0}, "children": []},
            {
                "id": 8,
                "kind": "predicate",
                "label": "=",
                "features": {"selectivity": 0.00045},
                "children": [9, 10],
            },
            {"id": 9, "kind": "column", "label": "c0", "features": {"distinct_values": 500.0}, "children": []},
            {"id": 10, "kind": "column", "label": "c0", "features": {"distinct_values": 700.0}, "children": []},
        ],
    }


@pytest.fixture
def tiny_plan():
    return parse_plan(tiny_plan_document())


@pytest.fixture
def joined_plan():
    return parse_plan(joined_plan_document())


@pytest.fixture(scope="session")
def small_workload():
    return cl.generate_workload(seed=11, count=20, complexity=cl.Complexity(1, 3))


# ---------------------------------------------------------------------------
# Planted-truth construction: a model influenced by exactly one node
# ---------------------------------------------------------------------------


def planted_plan_document(seed: int) -> dict:
    """Single-operator plan: a Seq Scan root plus 3-5 auxiliary nodes."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    nodes = [
        {
            "id": 0,
            "kind": "operator",
            "label": "Seq Scan",
            "features": {
                "estimated_cardinality": float(rng.integers(100, 100000)),
                "actual_cardinality": float(rng.integers(100, 100000)),
            },
            "children": [1],
            "cumulative_runtime_ms": 25.0,
        },
        {"id": 1, "kind": "table", "label": "t0", "features": {"table_rows": float(rng.integers(1000, 500000))}, "children": []},
    ]
    next_id = 2
    if rng.random() < 0.7:
        nodes[0]["children"].append(next_id)
        nodes.append(
            {
                "id": next_id,
                "kind": "predicate",
                "label": ">=",
                "features": {"selectivity": float(rng.uniform(0.1, 0.9))},
                "children": [next_id + 1],
            }
        )
        nodes.append(
            {
                "id": next_id + 1,
                "kind": "column",
                "label": "c0",
                "features": {"distinct_values": float(rng.integers(2, 5000))},
                "children": [],
            }
        )
        next_id += 2
    if rng.random() < 0.5:
        nodes[1]["children"] = [next_id]
        nodes.append(
            {
                "id": next_id,
                "kind": "column",
                "label": "c1",
                "features": {"distinct_values": float(rng.integers(2, 5000))},
                "children": [],
            }
        )
    return {
        "plan_id": f"planted-{seed}",
        "sql": "SELECT * FROM t0 WHERE c0 >= ?",
        "actual_total_runtime_ms": 25.0,
        "root": 0,
        "nodes": nodes,
    }


def planted_case(seed: int, hidden_width: int = 8) -> tuple[CostModel, "cl.PlanGraph"]:
    """(model, plan) where the prediction depends on the root node only.

    All non-operator encoders and every bias are zero, so auxiliary hidden
    states are exactly zero: their features and mask factors cannot move the
    prediction. Operator-encoder and downstream weights are non-negative, so
    rectifiers act as pass-throughs and the root's influence is strictly
    positive. The readout is rescaled so log-prediction lands in [2, 5].
    """
    plan = parse_plan(planted_plan_document(seed))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(13,)))
    model = CostModel.create(hidden_width=hidden_width, seed=seed)
    weights = {}
    for name, arr in model.weights.items():
        if name.endswith(".b1") or name.endswith(".b2"):
            weights[name] = np.zeros_like(arr)
        elif name.startswith(("enc.table", "enc.column", "enc.predicate")):
            weights[name] = np.zeros_like(arr)
        else:
            weights[name] = rng.uniform(0.01, 1.0, size=arr.shape) / np.sqrt(arr.shape[0])
    planted = CostModel(model.schema, hidden_width, weights)
    log_pred = planted.predict(plan).log_prediction.item()
    target = float(rng.uniform(2.0, 5.0))
    planted.weights["readout.w2"] *= target / log_pred
    return planted, plan


# ---------------------------------------------------------------------------
# Duck-typed surrogate with an analytically known gradient
# ---------------------------------------------------------------------------


class LinearSurrogate:
    """prediction = offset + sum over nodes of w_node . x_node.

    Implements just enough of the model protocol for the gradient
    explainers; per-node weight rows make the analytic importance
    ||w_node|| differ across nodes.
    """

    def __init__(self, plan, schema=cl.DEFAULT_SCHEMA, offset: float = 100.0, seed: int = 0):
        self.schema = schema
        self.offset = offset
        feats = cl.featurize(plan, schema)
        rng = np.random.default_rng(seed)
        self.w = {kind: rng.normal(0.0, 1.0, size=mat.shape) for kind, mat in feats.matrices.items()}

    def node_weight_norm(self, plan, node_id: int) -> float:
        feats = cl.featurize(plan, self.schema)
        for kind, ids in feats.row_ids.items():
            if node_id in ids:
                return float(np.linalg.norm(self.w[kind][ids.index(node_id)]))
        raise KeyError(node_id)

    def predict(self, plan, mask=None, *, feature_grads: bool = False) -> ForwardTrace:
        feats = cl.featurize(plan, self.schema)
        tape = ad.Tape()
        feature_leaves, feature_rows = {}, {}
        total = tape.constant([[self.offset]])
        for kind, mat in feats.matrices.items():
            if mat.shape[0] == 0:
                continue
            x = tape.leaf(mat, requires_grad=True)
            feature_leaves[kind] = x
            feature_rows[kind] = list(feats.row_ids[kind])
            contrib = ad.mul(x, tape.constant(self.w[kind]))
            row_sums = ad.matmul(contrib, tape.constant(np.ones((mat.shape[1], 1))))
            summed = ad.mul(ad.mean_rows(row_sums), tape.constant([[float(mat.shape[0])]]))
            total = ad.add(total, summed)
        return ForwardTrace(
            plan=plan,
            tape=tape,
            prediction=total,
            log_prediction=total,
            predicted_runtime_ms=total.item(),
            hidden={},
            feature_leaves=feature_leaves,
            feature_rows=feature_rows,
            mask_leaf=None,
            mask_order=list(plan.order),
        )
