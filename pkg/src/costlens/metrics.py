"""Explanation-quality metrics: ranking, runtime/cardinality correlation,
fidelity, characterization score, and Q-error.

Quality metrics are scaled to [0, 1] with 1 meaning higher quality. Rank
correlations that are undefined (fewer than two operators, or zero variance)
are reported as absent (None), never as 0 — dashboards must be able to tell
"undefined" from "uncorrelated".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError
from .explain import Explanation, normalize_scores
from .model import CostModel
from .plans import PlanGraph, isolate_runtimes


def q_error(predicted_ms: float, actual_ms: float) -> float:
    """max(predicted/actual, actual/predicted); symmetric, >= 1."""
    if predicted_ms <= 0 or actual_ms <= 0:
        raise ContractError(f"q_error needs positive inputs, got ({predicted_ms}, {actual_ms})")
    return max(predicted_ms / actual_ms, actual_ms / predicted_ms)


def node_ranking(explanation: Explanation) -> list[int]:
    """Node ids by descending normalized score; ties broken by ascending id."""
    return sorted(explanation.normalized, key=lambda nid: (-explanation.normalized[nid], nid))


def average_ranks(values: list[float]) -> list[float]:
    """Ranks 1..n with ties assigned the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(a: list[float], b: list[float]) -> float | None:
    """Spearman's rank correlation with average ranks for ties.

    Returns None when undefined (n < 2 or a zero-variance side).
    """
    if len(a) != len(b):
        raise ContractError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        return None
    ra = np.asarray(average_ranks(list(a)))
    rb = np.asarray(average_ranks(list(b)))
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return None
    return float(da @ db) / denom


@dataclass
class RuntimeCorrelation:
    runtime_fractions: dict[int, float]
    importance_fractions: dict[int, float]
    spearman_runtime: float | None


def _operator_importance_fractions(explanation: Explanation, plan: PlanGraph) -> dict[int, float]:
    ops = plan.operator_ids()
    return normalize_scores({nid: explanation.raw[nid] for nid in ops})


def runtime_correlation(explanation: Explanation, plan: PlanGraph) -> RuntimeCorrelation:
    """Compare operator importance fractions against isolated-runtime fractions.

    Non-operator nodes have no runtime, so they are excluded and the
    remaining scores renormalized.
    """
    ops = plan.operator_ids()
    isolated = isolate_runtimes(plan)
    runtime_fractions = normalize_scores({nid: isolated.values[nid] for nid in ops})
    importance_fractions = _operator_importance_fractions(explanation, plan)
    rho = None
    if len(ops) >= 2:
        rho = spearman(
            [importance_fractions[nid] for nid in sorted(ops)],
            [runtime_fractions[nid] for nid in sorted(ops)],
        )
    return RuntimeCorrelation(runtime_fractions, importance_fractions, rho)


def cardinality_correlation(explanation: Explanation, plan: PlanGraph) -> float | None:
    """Spearman between operator importance and actual output cardinality."""
    ops = plan.operator_ids()
    if len(ops) < 2:
        return None
    importance = _operator_importance_fractions(explanation, plan)
    return spearman(
        [importance[nid] for nid in sorted(ops)],
        [plan.node(nid).features["actual_cardinality"] for nid in sorted(ops)],
    )


@dataclass(frozen=True)
class FidelityConfig:
    """Fraction of nodes masked at each end of the ranking (at least one)."""

    k_fraction: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.k_fraction <= 0.5:
            raise ParameterError(f"k_fraction must be in (0, 0.5], got {self.k_fraction}")

    def k(self, n_nodes: int) -> int:
        return max(1, math.ceil(self.k_fraction * n_nodes))


def fidelity(model: CostModel, plan: PlanGraph, explanation: Explanation, config: FidelityConfig = FidelityConfig()) -> tuple[float, float]:
    """(fidelity_plus, fidelity_minus_quality), both in [0, 1], 1 = better.

    fidelity_plus: relative prediction change (clamped at 1) when the top-k
    ranked nodes are masked to zero — removing important nodes should move
    the prediction a lot. fidelity_minus_quality: 1 minus the change when the
    bottom-k nodes are masked — removing unimportant nodes should not matter.
    """
    ranking = node_ranking(explanation)
    k = config.k(len(ranking))
    base = model.predict(plan).predicted_runtime_ms

    def rel_change(node_ids: list[int]) -> float:
        masked = model.predict(plan, mask={nid: 0.0 for nid in node_ids})
        return min(1.0, abs(masked.predicted_runtime_ms - base) / base)

    fidelity_plus = rel_change(ranking[:k])
    fidelity_minus_quality = 1.0 - rel_change(ranking[-k:])
    return fidelity_plus, fidelity_minus_quality


def characterization_score(fidelity_plus: float, fidelity_minus_quality: float, w_plus: float = 0.5, w_minus: float = 0.5) -> float:
    """Weighted harmonic mean of the two fidelity qualities; 0 if either is 0."""
    if not (0.0 <= fidelity_plus <= 1.0 and 0.0 <= fidelity_minus_quality <= 1.0):
        raise ContractError("fidelity inputs must be in [0, 1]")
    if fidelity_plus == 0.0 or fidelity_minus_quality == 0.0:
        return 0.0
    return (w_plus + w_minus) / (w_plus / fidelity_plus + w_minus / fidelity_minus_quality)


@dataclass
class ExplanationReport:
    plan_id: str
    algorithm: str
    predicted_ms: float
    actual_ms: float
    q_error: float
    ranking: list[int]
    runtime_fractions: dict[int, float]
    importance_fractions: dict[int, float]
    spearman_runtime: float | None
    spearman_cardinality: float | None
    fidelity_plus: float
    fidelity_minus_quality: float
    characterization: float

    def to_document(self) -> dict:
        def fraction_list(fractions: dict[int, float]) -> list[dict]:
            return [{"node_id": nid, "fraction": fractions[nid]} for nid in sorted(fractions)]

        return {
            "plan_id": self.plan_id,
            "algorithm": self.algorithm,
            "predicted_ms": self.predicted_ms,
            "actual_ms": self.actual_ms,
            "q_error": self.q_error,
            "ranking": list(self.ranking),
            "runtime_fractions": fraction_list(self.runtime_fractions),
            "importance_fractions": fraction_list(self.importance_fractions),
            "spearman_runtime": self.spearman_runtime,
            "spearman_cardinality": self.spearman_cardinality,
            "fidelity_plus": self.fidelity_plus,
            "fidelity_minus_quality": self.fidelity_minus_quality,
            "characterization": self.characterization,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "ExplanationReport":
        return cls(
            plan_id=doc["plan_id"],
            algorithm=doc["algorithm"],
            predicted_ms=doc["predicted_ms"],
            actual_ms=doc["actual_ms"],
            q_error=doc["q_error"],
            ranking=list(doc["ranking"]),
            runtime_fractions={e["node_id"]: e["fraction"] for e in doc["runtime_fractions"]},
            importance_fractions={e["node_id"]: e["fraction"] for e in doc["importance_fractions"]},
            spearman_runtime=doc["spearman_runtime"],
            spearman_cardinality=doc["spearman_cardinality"],
            fidelity_plus=doc["fidelity_plus"],
            fidelity_minus_quality=doc["fidelity_minus_quality"],
            characterization=doc["characterization"],
        )


def build_report(model: CostModel, plan: PlanGraph, explanation: Explanation, config: FidelityConfig = FidelityConfig()) -> ExplanationReport:
    """Assemble every metric for one explanation of one plan."""
    correlation = runtime_correlation(explanation, plan)
    f_plus, f_minus_q = fidelity(model, plan, explanation, config)
    predicted = explanation.prediction_ms
    return ExplanationReport(
        plan_id=plan.plan_id,
        algorithm=explanation.algorithm,
        predicted_ms=predicted,
        actual_ms=plan.actual_total_runtime_ms,
        q_error=q_error(predicted, plan.actual_total_runtime_ms),
        ranking=node_ranking(explanation),
        runtime_fractions=correlation.runtime_fractions,
        importance_fractions=correlation.importance_fractions,
        spearman_runtime=correlation.spearman_runtime,
        spearman_cardinality=cardinality_correlation(explanation, plan),
        fidelity_plus=f_plus,
        fidelity_minus_quality=f_minus_q,
        characterization=characterization_score(f_plus, f_minus_q),
    )
