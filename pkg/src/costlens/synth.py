"""Deterministic synthetic workloads with an analytic runtime oracle.

Stands in for real trace collection: plans are built over a small random
table catalog, cardinalities are propagated bottom-up, and runtimes come
from an additive per-operator cost function. Because the oracle is additive,
per-operator ground truth ("which node cost the most") is exact, which makes
planted-truth evaluation of explainers possible.

Seeding is splittable: plan `i` of a workload draws from a stream keyed by
`(seed, i)`, so regenerating one plan is independent of `count`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .plans import (
    JOIN_OPERATORS,
    OPERATOR,
    SCAN_OPERATORS,
    PlanGraph,
    parse_plan,
    serialize_plan,
)

_SIMPLE_PREDICATES = ("=", "<", ">", "<=", ">=", "LIKE")

DEFAULT_STARTUP_MS = {
    "Seq Scan": 0.1,
    "Index Scan": 0.1,
    "Hash Join": 1.0,
    "Merge Join": 1.0,
    "Nested Loop": 1.0,
    "Sort": 0.5,
    "Aggregate": 0.2,
}


@dataclass(frozen=True)
class OracleCostParams:
    cost_per_input_row: float = 1e-4
    cost_per_output_row: float = 5e-5
    fixed_startup_ms: dict = field(default_factory=lambda: dict(DEFAULT_STARTUP_MS))
    noise_fraction: float = 0.05

    def __post_init__(self):
        if self.cost_per_input_row < 0 or self.cost_per_output_row < 0:
            raise ParameterError("cost coefficients must be >= 0")
        if any(v < 0 for v in self.fixed_startup_ms.values()):
            raise ParameterError("fixed startup costs must be >= 0")
        if not 0.0 <= self.noise_fraction <= 0.5:
            raise ParameterError("noise_fraction must be in [0, 0.5]")

    def to_document(self) -> dict:
        return {
            "cost_per_input_row": self.cost_per_input_row,
            "cost_per_output_row": self.cost_per_output_row,
            "fixed_startup_ms": dict(self.fixed_startup_ms),
            "noise_fraction": self.noise_fraction,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "OracleCostParams":
        return cls(
            cost_per_input_row=doc["cost_per_input_row"],
            cost_per_output_row=doc["cost_per_output_row"],
            fixed_startup_ms=dict(doc["fixed_startup_ms"]),
            noise_fraction=doc["noise_fraction"],
        )


DEFAULT_PARAMS = OracleCostParams()


@dataclass(frozen=True)
class Complexity:
    min_joins: int
    max_joins: int
    tables: int = 8

    def __post_init__(self):
        if not (0 <= self.min_joins <= self.max_joins <= 6):
            raise ParameterError(f"join bounds must satisfy 0 <= min <= max <= 6, got {self.min_joins}..{self.max_joins}")
        if self.tables < 1:
            raise ParameterError("need at least one table")


@dataclass
class Workload:
    workload_id: str
    seed: int
    plans: list[PlanGraph]
    params: OracleCostParams
    complexity: Complexity


# ---------------------------------------------------------------------------
# Runtime oracle
# ---------------------------------------------------------------------------


def _preorder(nodes: dict[int, dict], root: int) -> list[int]:
    order, seen, stack = [], set(), [root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        order.append(nid)
        stack.extend(reversed(nodes[nid]["children"]))
    return order


def _assign_runtimes(nodes: dict[int, dict], root: int, params: OracleCostParams, rng: np.random.Generator) -> float:
    """Annotate operator nodes in place with oracle runtimes; returns the total.

    isolated = (startup + c_in * input_rows + c_out * output_rows) * (1 + u),
    u ~ U[-noise, +noise]; cumulative = isolated + children cumulative.
    """
    order = _preorder(nodes, root)
    op_ids = [nid for nid in order if nodes[nid]["kind"] == OPERATOR]

    isolated: dict[int, float] = {}
    for nid in op_ids:  # noise drawn in canonical order for determinism
        node = nodes[nid]
        label = node["label"]
        if label in SCAN_OPERATORS:
            input_rows = sum(
                nodes[c]["features"]["table_rows"] for c in node["children"] if nodes[c]["kind"] == "table"
            )
        else:
            input_rows = sum(
                nodes[c]["features"]["actual_cardinality"]
                for c in node["children"]
                if nodes[c]["kind"] == OPERATOR
            )
        output_rows = node["features"]["actual_cardinality"]
        base = (
            params.fixed_startup_ms.get(label, 0.0)
            + params.cost_per_input_row * input_rows
            + params.cost_per_output_row * output_rows
        )
        u = rng.uniform(-params.noise_fraction, params.noise_fraction) if params.noise_fraction > 0 else 0.0
        isolated[nid] = base * (1.0 + u)

    cumulative: dict[int, float] = {}
    for nid in reversed(order):  # children before parents
        if nodes[nid]["kind"] != OPERATOR:
            continue
        child_sum = sum(cumulative[c] for c in nodes[nid]["children"] if nodes[c]["kind"] == OPERATOR)
        cumulative[nid] = isolated[nid] + child_sum
        nodes[nid]["cumulative_runtime_ms"] = cumulative[nid]
    return cumulative[root]


def oracle_runtime(plan: PlanGraph, params: OracleCostParams, seed: int) -> PlanGraph:
    """Re-annotate a plan's runtimes from its cardinalities (fresh noise stream)."""
    doc = serialize_plan(plan)
    nodes = {n["id"]: n for n in doc["nodes"]}
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    doc["actual_total_runtime_ms"] = _assign_runtimes(nodes, doc["root"], params, rng)
    return parse_plan(doc)


# ---------------------------------------------------------------------------
# Plan construction
# ---------------------------------------------------------------------------


@dataclass
class _TableDef:
    name: str
    rows: int
    columns: list[tuple[str, int]]  # (name, distinct values)


def _catalog(seed: int, n_tables: int) -> list[_TableDef]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    tables = []
    for t in range(n_tables):
        rows = int(round(10.0 ** rng.uniform(3.0, 5.5)))
        columns = []
        for c in range(4):
            distinct = min(rows, max(2, int(round(rows ** rng.uniform(0.3, 1.0)))))
            columns.append((f"c{c}", distinct))
        tables.append(_TableDef(f"t{t}", rows, columns))
    return tables


class _Builder:
    def __init__(self):
        self.nodes: list[dict] = []

    def node(self, kind: str, label: str, features: dict, children: list[int]) -> int:
        nid = len(self.nodes)
        self.nodes.append(
            {"id": nid, "kind": kind, "label": label, "features": features, "children": children}
        )
        return nid


def _estimate(actual: float, rng: np.random.Generator, sigma: float = 0.4) -> float:
    return float(max(1, round(actual * math.exp(rng.normal(0.0, sigma)))))


def _simple_predicate(b: _Builder, table: _TableDef, rng: np.random.Generator) -> tuple[int, float, str]:
    op = _SIMPLE_PREDICATES[rng.integers(0, len(_SIMPLE_PREDICATES))]
    col_name, distinct = table.columns[rng.integers(0, len(table.columns))]
    if op == "=":
        sel = min(1.0, 1.0 / distinct * float(rng.uniform(0.5, 2.0)))
    else:
        sel = float(math.exp(rng.uniform(math.log(0.4), math.log(0.95))))
    col = b.node("column", col_name, {"distinct_values": float(distinct)}, [])
    pred = b.node("predicate", op, {"selectivity": sel}, [col])
    return pred, sel, f"{table.name}.{col_name} {op} ?"


def _scan_subtree(b: _Builder, table: _TableDef, rng: np.random.Generator) -> tuple[int, float, str]:
    """Returns (scan node id, actual output rows, WHERE fragment or '')."""
    label = "Index Scan" if rng.random() < 0.3 else "Seq Scan"
    table_node = b.node("table", table.name, {"table_rows": float(table.rows)}, [])
    children = [table_node]
    sel, where = 1.0, ""
    if rng.random() < 0.3:
        if rng.random() < 0.2:
            p1, s1, w1 = _simple_predicate(b, table, rng)
            p2, s2, w2 = _simple_predicate(b, table, rng)
            conj = "AND" if rng.random() < 0.5 else "OR"
            sel = s1 * s2 if conj == "AND" else min(1.0, s1 + s2 - s1 * s2)
            pred = b.node("predicate", conj, {"selectivity": sel}, [p1, p2])
            where = f"({w1} {conj} {w2})"
        else:
            pred, sel, where = _simple_predicate(b, table, rng)
        children.append(pred)
    actual = float(max(1, round(table.rows * sel)))
    scan = b.node(
        OPERATOR,
        label,
        {"estimated_cardinality": _estimate(actual, rng), "actual_cardinality": actual},
        children,
    )
    return scan, actual, where


def _build_plan_document(
    plan_id: str, catalog: list[_TableDef], complexity: Complexity, rng: np.random.Generator
) -> dict:
    b = _Builder()
    n_joins = int(rng.integers(complexity.min_joins, complexity.max_joins + 1))
    picks = [catalog[int(rng.integers(0, len(catalog)))] for _ in range(n_joins + 1)]

    subtrees: list[tuple[int, float, _TableDef]] = []
    where_parts: list[str] = []
    for table in picks:
        scan, out, where = _scan_subtree(b, table, rng)
        subtrees.append((scan, out, table))
        if where:
            where_parts.append(where)

    join_parts: list[str] = []
    while len(subtrees) > 1:
        i = int(rng.integers(0, len(subtrees)))
        left = subtrees.pop(i)
        j = int(rng.integers(0, len(subtrees)))
        right = subtrees.pop(j)
        label = JOIN_OPERATORS[rng.integers(0, len(JOIN_OPERATORS))]
        l_id, l_out, l_table = left
        r_id, r_out, r_table = right
        # M:N joins fan out: output scales with the combined input, so upper
        # operators carry substantial cost (as in realistic analytic plans).
        growth = float(math.exp(rng.uniform(math.log(0.9), math.log(2.5))))
        actual = float(max(1, min(3_000_000, round((l_out + r_out) * growth))))
        sel = min(1.0, actual / (l_out * r_out))
        lcol_name, lcol_distinct = l_table.columns[rng.integers(0, len(l_table.columns))]
        rcol_name, rcol_distinct = r_table.columns[rng.integers(0, len(r_table.columns))]
        lcol = b.node("column", lcol_name, {"distinct_values": float(lcol_distinct)}, [])
        rcol = b.node("column", rcol_name, {"distinct_values": float(rcol_distinct)}, [])
        pred = b.node("predicate", "=", {"selectivity": sel}, [lcol, rcol])
        join = b.node(
            OPERATOR,
            label,
            {"estimated_cardinality": _estimate(actual, rng, 0.5), "actual_cardinality": actual},
            [l_id, r_id, pred],
        )
        join_parts.append(f"{l_table.name}.{lcol_name} = {r_table.name}.{rcol_name}")
        subtrees.append((join, actual, l_table))

    top, top_out, _ = subtrees[0]
    if rng.random() < 0.3:
        top = b.node(
            OPERATOR,
            "Sort",
            {"estimated_cardinality": _estimate(top_out, rng), "actual_cardinality": top_out},
            [top],
        )
    root = b.node(
        OPERATOR,
        "Aggregate",
        {"estimated_cardinality": 1.0, "actual_cardinality": 1.0},
        [top],
    )

    tables_sql = ", ".join(sorted({t.name for t in picks}))
    clauses = join_parts + where_parts
    sql = f"SELECT count(*) FROM {tables_sql}"
    if clauses:
        sql += " WHERE " + " AND ".join(clauses)

    return {
        "plan_id": plan_id,
        "sql": sql,
        "actual_total_runtime_ms": 0.0,  # filled by the oracle
        "root": root,
        "nodes": b.nodes,
    }


def generate_workload(
    seed: int,
    count: int,
    complexity: Complexity,
    params: OracleCostParams = DEFAULT_PARAMS,
) -> Workload:
    """Generate `count` oracle-annotated plans, bit-reproducible from `seed`."""
    if count < 1:
        raise ParameterError("count must be >= 1")
    catalog = _catalog(seed, complexity.tables)
    workload_id = f"workload-s{seed}-n{count}"
    plans = []
    for i in range(count):
        ss = np.random.SeedSequence(seed, spawn_key=(i + 1,))
        structure_rng, runtime_rng = (np.random.default_rng(s) for s in ss.spawn(2))
        doc = _build_plan_document(f"{workload_id}-p{i:04d}", catalog, complexity, structure_rng)
        nodes = {n["id"]: n for n in doc["nodes"]}
        doc["actual_total_runtime_ms"] = _assign_runtimes(nodes, doc["root"], params, runtime_rng)
        plans.append(parse_plan(doc))
    return Workload(workload_id, seed, plans, params, complexity)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def save_workload(workload: Workload, directory: str | Path) -> None:
    directory = Path(directory)
    (directory / "plans").mkdir(parents=True, exist_ok=True)
    manifest = {
        "workload_id": workload.workload_id,
        "seed": workload.seed,
        "params": workload.params.to_document(),
        "complexity": {
            "min_joins": workload.complexity.min_joins,
            "max_joins": workload.complexity.max_joins,
            "tables": workload.complexity.tables,
        },
        "plan_ids": [p.plan_id for p in workload.plans],
    }
    _dump_json(directory / "workload.json", manifest)
    for plan in workload.plans:
        _dump_json(directory / "plans" / f"{plan.plan_id}.json", serialize_plan(plan))


def load_workload(directory: str | Path) -> Workload:
    directory = Path(directory)
    manifest_path = directory / "workload.json"
    if not manifest_path.exists():
        raise FormatError(f"no workload.json in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        params = OracleCostParams.from_document(manifest["params"])
        complexity = Complexity(**manifest["complexity"])
        plans = []
        for pid in manifest["plan_ids"]:
            doc = json.loads((directory / "plans" / f"{pid}.json").read_text(encoding="utf-8"))
            plans.append(parse_plan(doc))
    except (KeyError, ValueError, OSError) as exc:
        raise FormatError(f"cannot load workload from {directory}: {exc}") from exc
    return Workload(manifest["workload_id"], manifest["seed"], plans, params, complexity)
