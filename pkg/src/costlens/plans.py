"""Query-plan graphs: data model, JSON ingestion, runtime isolation, featurization.

A plan is a rooted DAG of heterogeneous nodes. Operator nodes (scans, joins,
sorts, aggregates) form a tree directed toward the root and carry cumulative
runtimes; table, column and predicate nodes attach as ancillary inputs and
carry no runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FeaturizationError, SchemaError, StructuralError

OPERATOR = "operator"
TABLE = "table"
COLUMN = "column"
PREDICATE = "predicate"
NODE_KINDS = (OPERATOR, TABLE, COLUMN, PREDICATE)

OPERATOR_VOCAB = ("Seq Scan", "Index Scan", "Hash Join", "Merge Join", "Nested Loop", "Sort", "Aggregate")
PREDICATE_VOCAB = ("=", "<", ">", "<=", ">=", "LIKE", "AND", "OR")

SCAN_OPERATORS = ("Seq Scan", "Index Scan")
JOIN_OPERATORS = ("Hash Join", "Merge Join", "Nested Loop")

_RUNTIME_MATCH_RTOL = 1e-6


@dataclass
class PlanNode:
    id: int
    kind: str
    label: str
    features: dict[str, float]
    children: list[int]
    cumulative_runtime_ms: float | None = None


@dataclass
class PlanGraph:
    plan_id: str
    sql: str
    nodes: list[PlanNode]
    root: int
    actual_total_runtime_ms: float
    predicted_runtime_ms: float | None = None
    _by_id: dict[int, PlanNode] = field(default_factory=dict, repr=False, compare=False)
    _order: list[int] = field(default_factory=list, repr=False, compare=False)

    def node(self, node_id: int) -> PlanNode:
        return self._by_id[node_id]

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._by_id

    @property
    def order(self) -> list[int]:
        """Canonical node order: preorder DFS from the root, children in list
        order, each node visited once. Independent of node-id values."""
        return self._order

    def operator_ids(self) -> list[int]:
        return [i for i in self._order if self._by_id[i].kind == OPERATOR]

    def operator_children(self, node_id: int) -> list[int]:
        return [c for c in self._by_id[node_id].children if self._by_id[c].kind == OPERATOR]


@dataclass
class IsolatedRuntimes:
    """Per-operator runtime with sub-plan runtimes subtracted out."""

    values: dict[int, float]
    clamp_warnings: list[int] = field(default_factory=list)

    def total(self) -> float:
        return sum(self.values.values())


# ---------------------------------------------------------------------------
# Parsing / serialization
# ---------------------------------------------------------------------------


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemaError(msg)


def _num(value, msg: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), msg)
    v = float(value)
    _require(math.isfinite(v), msg + " (non-finite)")
    return v


def parse_plan(document: dict) -> PlanGraph:
    """Validate a plan document and build a :class:`PlanGraph`.

    Raises :class:`SchemaError` for malformed fields and
    :class:`StructuralError` for cycles, unreachable nodes or a broken
    operator tree.
    """
    _require(isinstance(document, dict), "plan document must be an object")
    for key in ("plan_id", "sql", "actual_total_runtime_ms", "nodes", "root"):
        _require(key in document, f"missing field {key!r}")
    _require(isinstance(document["plan_id"], str), "plan_id must be a string")
    _require(isinstance(document["sql"], str), "sql must be a string")
    total = _num(document["actual_total_runtime_ms"], "actual_total_runtime_ms must be a number")
    _require(total > 0, "actual_total_runtime_ms must be positive")
    _require(isinstance(document["nodes"], list) and document["nodes"], "nodes must be a non-empty list")
    _require(isinstance(document["root"], int), "root must be an integer id")

    nodes: list[PlanNode] = []
    by_id: dict[int, PlanNode] = {}
    for raw in document["nodes"]:
        _require(isinstance(raw, dict), "node must be an object")
        for key in ("id", "kind", "label", "features", "children"):
            _require(key in raw, f"node missing field {key!r}")
        nid = raw["id"]
        _require(isinstance(nid, int), "node id must be an integer")
        _require(nid not in by_id, f"duplicate node id {nid}")
        kind = raw["kind"]
        _require(kind in NODE_KINDS, f"unknown node kind {kind!r}")
        _require(isinstance(raw["label"], str) and raw["label"], "node label must be a non-empty string")
        _require(isinstance(raw["features"], dict), "features must be an object")
        features = {str(k): _num(v, f"feature {k!r} of node {nid} must be a number") for k, v in raw["features"].items()}
        _require(isinstance(raw["children"], list) and all(isinstance(c, int) for c in raw["children"]),
                 f"children of node {nid} must be integer ids")

        runtime = raw.get("cumulative_runtime_ms")
        if kind == OPERATOR:
            _require(runtime is not None, f"operator node {nid} is missing cumulative_runtime_ms")
            runtime = _num(runtime, f"cumulative_runtime_ms of node {nid} must be a number")
            _require(runtime >= 0, f"cumulative_runtime_ms of node {nid} must be >= 0")
        else:
            _require(runtime is None, f"{kind} node {nid} must not carry cumulative_runtime_ms")

        node = PlanNode(nid, kind, raw["label"], features, list(raw["children"]), runtime)
        nodes.append(node)
        by_id[nid] = node

    for node in nodes:
        for c in node.children:
            _require(c in by_id, f"child {c} of node {node.id} does not resolve")

    root = document["root"]
    _require(root in by_id, f"root {root} does not resolve")
    _require(by_id[root].kind == OPERATOR, "root must be an operator node")

    order = _check_structure(nodes, by_id, root)

    root_runtime = by_id[root].cumulative_runtime_ms
    if abs(total - root_runtime) > _RUNTIME_MATCH_RTOL * max(abs(total), abs(root_runtime)):
        raise SchemaError(
            f"actual_total_runtime_ms {total} does not match root cumulative runtime {root_runtime}"
        )

    predicted = document.get("predicted_runtime_ms")
    if predicted is not None:
        predicted = _num(predicted, "predicted_runtime_ms must be a number")

    return PlanGraph(
        plan_id=document["plan_id"],
        sql=document["sql"],
        nodes=nodes,
        root=root,
        actual_total_runtime_ms=total,
        predicted_runtime_ms=predicted,
        _by_id=by_id,
        _order=order,
    )


def _check_structure(nodes: list[PlanNode], by_id: dict[int, PlanNode], root: int) -> list[int]:
    # Cycle check over the whole graph (iterative three-color DFS).
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n.id: WHITE for n in nodes}
    for start in [n.id for n in nodes]:
        if color[start] != WHITE:
            continue
        stack: list[tuple[int, int]] = [(start, 0)]
        color[start] = GRAY
        while stack:
            nid, child_pos = stack[-1]
            children = by_id[nid].children
            if child_pos < len(children):
                stack[-1] = (nid, child_pos + 1)
                c = children[child_pos]
                if color[c] == GRAY:
                    raise StructuralError(f"cycle through node {c}")
                if color[c] == WHITE:
                    color[c] = GRAY
                    stack.append((c, 0))
            else:
                color[nid] = BLACK
                stack.pop()

    # Canonical preorder from the root; also detects unreachable nodes.
    seen: set[int] = set()
    order: list[int] = []
    stack2 = [root]
    while stack2:
        nid = stack2.pop()
        if nid in seen:
            continue
        seen.add(nid)
        order.append(nid)
        stack2.extend(reversed(by_id[nid].children))
    if len(seen) != len(nodes):
        missing = sorted(set(by_id) - seen)
        raise StructuralError(f"nodes unreachable from root: {missing}")

    # Operator edges form a tree directed toward the root.
    op_parent_count = {n.id: 0 for n in nodes if n.kind == OPERATOR}
    for n in nodes:
        op_children = [c for c in n.children if by_id[c].kind == OPERATOR]
        if n.kind != OPERATOR and op_children:
            raise StructuralError(f"{n.kind} node {n.id} has operator children {op_children}")
        for c in op_children:
            op_parent_count[c] += 1
    for nid, count in op_parent_count.items():
        if nid == root:
            if count != 0:
                raise StructuralError(f"root {nid} has an incoming operator edge")
        elif count != 1:
            raise StructuralError(f"operator node {nid} has {count} operator parents, expected 1")

    return order


def serialize_plan(plan: PlanGraph) -> dict:
    """Inverse of :func:`parse_plan`; round-trips to an equal graph."""
    doc = {
        "plan_id": plan.plan_id,
        "sql": plan.sql,
        "actual_total_runtime_ms": plan.actual_total_runtime_ms,
        "root": plan.root,
        "nodes": [],
    }
    if plan.predicted_runtime_ms is not None:
        doc["predicted_runtime_ms"] = plan.predicted_runtime_ms
    for n in plan.nodes:
        raw = {
            "id": n.id,
            "kind": n.kind,
            "label": n.label,
            "features": dict(n.features),
            "children": list(n.children),
        }
        if n.cumulative_runtime_ms is not None:
            raw["cumulative_runtime_ms"] = n.cumulative_runtime_ms
        doc["nodes"].append(raw)
    return doc


# ---------------------------------------------------------------------------
# Runtime isolation
# ---------------------------------------------------------------------------


def isolate_runtimes(plan: PlanGraph) -> IsolatedRuntimes:
    """Subtract each operator's sub-plan runtimes from its cumulative runtime.

    Negative results (possible in noisy traces) are clamped to 0 and the node
    id is recorded in `clamp_warnings`.
    """
    values: dict[int, float] = {}
    warnings: list[int] = []
    for nid in plan.operator_ids():
        node = plan.node(nid)
        child_sum = sum(plan.node(c).cumulative_runtime_ms for c in plan.operator_children(nid))
        isolated = node.cumulative_runtime_ms - child_sum
        if isolated < 0:
            warnings.append(nid)
            isolated = 0.0
        values[nid] = isolated
    return IsolatedRuntimes(values=values, clamp_warnings=warnings)


# ---------------------------------------------------------------------------
# Featurization
# ---------------------------------------------------------------------------

_NUMERIC_FIELDS = {
    OPERATOR: ("estimated_cardinality", "actual_cardinality"),
    TABLE: ("table_rows",),
    COLUMN: ("distinct_values",),
    PREDICATE: ("selectivity",),
}
# selectivity is already a fraction; everything else is a count, log1p-scaled
_RAW_FIELDS = frozenset({"selectivity"})


@dataclass(frozen=True)
class FeatureSchema:
    """Closed featurization vocabulary. Unknown labels are a hard error."""

    operator_vocab: tuple[str, ...] = OPERATOR_VOCAB
    predicate_vocab: tuple[str, ...] = PREDICATE_VOCAB
    version: int = 1

    def width(self, kind: str) -> int:
        if kind == OPERATOR:
            return len(self.operator_vocab) + len(_NUMERIC_FIELDS[OPERATOR])
        if kind == PREDICATE:
            return len(self.predicate_vocab) + len(_NUMERIC_FIELDS[PREDICATE])
        return len(_NUMERIC_FIELDS[kind])

    def schema_hash(self) -> str:
        import hashlib
        import json

        payload = {
            "version": self.version,
            "operator_vocab": list(self.operator_vocab),
            "predicate_vocab": list(self.predicate_vocab),
            "numeric_fields": {k: list(v) for k, v in _NUMERIC_FIELDS.items()},
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


DEFAULT_SCHEMA = FeatureSchema()


@dataclass
class FeaturizedPlan:
    """Fixed-width feature vectors grouped by node kind.

    Rows within a kind follow the plan's canonical order, so featurization is
    independent of node-id values.
    """

    matrices: dict[str, np.ndarray]
    row_ids: dict[str, list[int]]

    def node_vector(self, node_id: int) -> np.ndarray:
        for kind, ids in self.row_ids.items():
            if node_id in ids:
                return self.matrices[kind][ids.index(node_id)]
        raise KeyError(node_id)


def _node_features(node: PlanNode, schema: FeatureSchema) -> list[float]:
    vec: list[float] = []
    if node.kind == OPERATOR:
        if node.label not in schema.operator_vocab:
            raise FeaturizationError(f"operator label {node.label!r} not in vocabulary")
        vec.extend(1.0 if v == node.label else 0.0 for v in schema.operator_vocab)
    elif node.kind == PREDICATE:
        if node.label not in schema.predicate_vocab:
            raise FeaturizationError(f"predicate label {node.label!r} not in vocabulary")
        vec.extend(1.0 if v == node.label else 0.0 for v in schema.predicate_vocab)
    for name in _NUMERIC_FIELDS[node.kind]:
        if name not in node.features:
            raise FeaturizationError(f"{node.kind} node {node.id} is missing feature {name!r}")
        value = node.features[name]
        vec.append(value if name in _RAW_FIELDS else math.log1p(value))
    return vec


def featurize(plan: PlanGraph, schema: FeatureSchema = DEFAULT_SCHEMA) -> FeaturizedPlan:
    """Encode every node as a fixed-width vector (pure function of plan + schema)."""
    matrices: dict[str, np.ndarray] = {}
    row_ids: dict[str, list[int]] = {}
    for kind in NODE_KINDS:
        ids = [nid for nid in plan.order if plan.node(nid).kind == kind]
        rows = [_node_features(plan.node(nid), schema) for nid in ids]
        matrices[kind] = np.asarray(rows, dtype=np.float64).reshape(len(ids), schema.width(kind))
        row_ids[kind] = ids
    return FeaturizedPlan(matrices=matrices, row_ids=row_ids)
