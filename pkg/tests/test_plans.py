"""Plan parsing, validation, runtime isolation, featurization."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import costlens as cl
from costlens.errors import FeaturizationError, SchemaError, StructuralError
from costlens.plans import parse_plan, serialize_plan

from conftest import joined_plan_document, tiny_plan_document


def test_parse_smallest_plan(tiny_plan):
    assert len(tiny_plan.nodes) == 2
    assert tiny_plan.node(tiny_plan.root).label == "Seq Scan"
    assert tiny_plan.operator_ids() == [0]


def test_parse_joined_plan_shape(joined_plan):
    assert len(joined_plan.operator_ids()) == 4
    assert joined_plan.node(joined_plan.root).label == "Aggregate"
    kinds = {n.kind for n in joined_plan.nodes}
    assert kinds == {"operator", "table", "column", "predicate"}


def test_canonical_order_is_preorder(joined_plan):
    # root first, then children in list order, depth first
    assert joined_plan.order[0] == joined_plan.root
    assert joined_plan.order == [0, 1, 2, 4, 3, 5, 6, 7, 8, 9, 10]


def test_root_in_child_list_is_structural_error():
    doc = tiny_plan_document()
    doc["nodes"][1]["children"] = [0]  # table points back at the root
    with pytest.raises(StructuralError):
        parse_plan(doc)


def test_self_cycle_detected():
    doc = tiny_plan_document()
    doc["nodes"][0]["children"] = [0, 1]
    with pytest.raises(StructuralError):
        parse_plan(doc)


def test_missing_runtime_on_operator_is_schema_error():
    doc = tiny_plan_document()
    del doc["nodes"][0]["cumulative_runtime_ms"]
    with pytest.raises(SchemaError):
        parse_plan(doc)


def test_runtime_on_table_node_is_schema_error():
    doc = tiny_plan_document()
    doc["nodes"][1]["cumulative_runtime_ms"] = 1.0
    with pytest.raises(SchemaError):
        parse_plan(doc)


def test_unknown_kind_is_schema_error():
    doc = tiny_plan_document()
    doc["nodes"][1]["kind"] = "galaxy"
    with pytest.raises(SchemaError):
        parse_plan(doc)


def test_unresolved_child_is_schema_error():
    doc = tiny_plan_document()
    doc["nodes"][0]["children"] = [1, 99]
    with pytest.raises(SchemaError):
        parse_plan(doc)


def test_duplicate_ids_rejected():
    doc = tiny_plan_document()
    doc["nodes"][1]["id"] = 0
    with pytest.raises(SchemaError):
        parse_plan(doc)


def test_unreachable_node_rejected():
    doc = tiny_plan_document()
    doc["nodes"].append({"id": 5, "kind": "table", "label": "orphan", "features": {"table_rows": 1.0}, "children": []})
    with pytest.raises(StructuralError):
        parse_plan(doc)


def test_operator_with_two_operator_parents_rejected():
    doc = joined_plan_document()
    doc["nodes"][0]["children"] = [1, 2]  # aggregate also claims the scan
    with pytest.raises(StructuralError):
        parse_plan(doc)


def test_nonoperator_with_operator_child_rejected():
    doc = joined_plan_document()
    doc["nodes"][6]["children"] = [7, 3]  # predicate claims a scan
    with pytest.raises(StructuralError):
        parse_plan(doc)


def test_total_runtime_must_match_root():
    doc = tiny_plan_document()
    doc["actual_total_runtime_ms"] = 41.0
    with pytest.raises(SchemaError):
        parse_plan(doc)


def test_total_runtime_must_be_positive():
    doc = tiny_plan_document()
    doc["actual_total_runtime_ms"] = 0.0
    doc["nodes"][0]["cumulative_runtime_ms"] = 0.0
    with pytest.raises(SchemaError):
        parse_plan(doc)


def test_shared_auxiliary_node_allowed():
    doc = joined_plan_document()
    # both join-predicate columns collapse onto one shared column node
    doc["nodes"][8]["children"] = [9, 9]
    doc["nodes"] = [n for n in doc["nodes"] if n["id"] != 10]
    plan = parse_plan(doc)
    assert plan.order.count(9) == 1


def test_roundtrip_parse_serialize_parse(joined_plan):
    doc = serialize_plan(joined_plan)
    again = parse_plan(doc)
    assert again == joined_plan
    assert serialize_plan(again) == doc


def test_workload_plans_roundtrip(small_workload):
    for plan in small_workload.plans[:10]:
        assert parse_plan(serialize_plan(plan)) == plan


# ---------------------------------------------------------------------------
# isolate_runtimes
# ---------------------------------------------------------------------------


def _chain_doc(runtimes: dict[int, float]) -> dict:
    # 0 (Aggregate) <- 1 (Hash Join) <- {2, 3} (scans); runtimes cumulative
    return {
        "plan_id": "chain",
        "sql": "",
        "actual_total_runtime_ms": runtimes[0],
        "root": 0,
        "nodes": [
            {"id": 0, "kind": "operator", "label": "Aggregate", "features": {}, "children": [1], "cumulative_runtime_ms": runtimes[0]},
            {"id": 1, "kind": "operator", "label": "Hash Join", "features": {}, "children": [2, 3], "cumulative_runtime_ms": runtimes[1]},
            {"id": 2, "kind": "operator", "label": "Seq Scan", "features": {}, "children": [], "cumulative_runtime_ms": runtimes[2]},
            {"id": 3, "kind": "operator", "label": "Seq Scan", "features": {}, "children": [], "cumulative_runtime_ms": runtimes[3]},
        ],
    }


def test_isolate_subtracts_operator_children():
    plan = parse_plan(_chain_doc({0: 110.0, 1: 100.0, 2: 30.0, 3: 50.0}))
    iso = cl.isolate_runtimes(plan)
    assert iso.values[1] == pytest.approx(20.0)
    assert iso.values[0] == pytest.approx(10.0)
    assert iso.values[2] == 30.0  # leaf keeps its own time
    assert iso.clamp_warnings == []
    assert iso.total() == pytest.approx(110.0)


def test_isolate_clamps_negative_and_warns():
    plan = parse_plan(_chain_doc({0: 60.0, 1: 50.0, 2: 30.0, 3: 30.0}))
    iso = cl.isolate_runtimes(plan)
    assert iso.values[1] == 0.0
    assert iso.clamp_warnings == [1]


def test_isolate_sums_to_root_without_clamping(small_workload):
    for plan in small_workload.plans:
        iso = cl.isolate_runtimes(plan)
        if not iso.clamp_warnings:
            assert iso.total() == pytest.approx(plan.node(plan.root).cumulative_runtime_ms, rel=1e-9)


# ---------------------------------------------------------------------------
# featurize
# ---------------------------------------------------------------------------


def test_featurize_log1p_of_zero_rows():
    doc = tiny_plan_document()
    doc["nodes"][1]["features"]["table_rows"] = 0.0
    feats = cl.featurize(parse_plan(doc))
    assert feats.node_vector(1).tolist() == [0.0]


def test_featurize_one_hot_position(joined_plan):
    vec = cl.featurize(joined_plan).node_vector(1)  # the Hash Join
    hot = vec[: len(cl.OPERATOR_VOCAB)].tolist()
    assert hot == [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    assert cl.OPERATOR_VOCAB[2] == "Hash Join"


def test_featurize_cardinality_scaling():
    doc = tiny_plan_document()
    doc["nodes"][0]["features"]["estimated_cardinality"] = 999.0
    vec = cl.featurize(parse_plan(doc)).node_vector(0)
    assert vec[len(cl.OPERATOR_VOCAB)] == pytest.approx(math.log(1000.0), abs=1e-9)


def test_featurize_is_pure(joined_plan):
    a = cl.featurize(joined_plan)
    b = cl.featurize(joined_plan)
    for kind in a.matrices:
        assert np.array_equal(a.matrices[kind], b.matrices[kind])
        assert a.row_ids[kind] == b.row_ids[kind]


def test_featurize_unknown_operator_label_rejected():
    doc = tiny_plan_document()
    doc["nodes"][0]["label"] = "Quantum Scan"
    with pytest.raises(FeaturizationError):
        cl.featurize(parse_plan(doc))


def test_featurize_unknown_predicate_label_rejected():
    doc = joined_plan_document()
    doc["nodes"][6]["label"] = "BETWEEN"
    with pytest.raises(FeaturizationError):
        cl.featurize(parse_plan(doc))


def test_featurize_missing_attribute_rejected():
    doc = tiny_plan_document()
    del doc["nodes"][1]["features"]["table_rows"]
    with pytest.raises(FeaturizationError):
        cl.featurize(parse_plan(doc))


def test_schema_hash_stable_and_sensitive():
    default = cl.DEFAULT_SCHEMA.schema_hash()
    assert default == cl.FeatureSchema().schema_hash()
    trimmed = cl.FeatureSchema(operator_vocab=cl.OPERATOR_VOCAB[:-1])
    assert trimmed.schema_hash() != default


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.0, max_value=1e12, allow_nan=False))
def test_featurize_log_scaling_matches_log1p(rows):
    doc = tiny_plan_document()
    doc["nodes"][1]["features"]["table_rows"] = rows
    vec = cl.featurize(parse_plan(doc)).node_vector(1)
    assert vec[0] == pytest.approx(math.log1p(rows), rel=1e-12)
