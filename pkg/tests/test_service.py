"""HTTP service: routing, error codes, caching, request coalescing."""

import concurrent.futures
import json

import pytest
from fastapi.testclient import TestClient

import costlens as cl
from costlens.model import CostModel, save_model
from costlens.service import ServiceState, create_app


@pytest.fixture(scope="module")
def state(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    workload = cl.generate_workload(seed=13, count=6, complexity=cl.Complexity(1, 2))
    cl.save_workload(workload, root / "workloads" / "w13")
    model = CostModel.create(hidden_width=8, seed=1)
    (root / "models").mkdir()
    save_model(model, root / "models" / "toy.json")
    return ServiceState.load(root / "workloads", root / "models", cache_size=32)


@pytest.fixture(scope="module")
def client(state):
    return TestClient(create_app(state))


def test_list_workloads(client):
    body = client.get("/api/workloads").json()
    assert len(body) == 1
    assert body[0]["plan_count"] == 6
    assert "cost_per_input_row" in body[0]["params"]


def test_list_plans_metadata(client, state):
    wid = next(iter(state.workloads))
    body = client.get(f"/api/workloads/{wid}/plans").json()
    assert len(body) == 6
    for row in body:
        assert row["operator_count"] >= 2
        assert row["total_runtime_ms"] > 0


def test_get_plan_document(client, state):
    pid = next(iter(state.plans))
    body = client.get(f"/api/plans/{pid}").json()
    assert body["plan_id"] == pid
    assert {n["kind"] for n in body["nodes"]} >= {"operator", "table"}


def test_list_models_and_algorithms(client):
    models = client.get("/api/models").json()
    assert [m["model_id"] for m in models] == ["toy"]
    assert client.get("/api/algorithms").json() == list(cl.ALGORITHMS)


def test_unknown_ids_are_404_with_machine_codes(client):
    r = client.get("/api/plans/nope")
    assert r.status_code == 404 and r.json() == {"error": "plan_not_found"}
    r = client.get("/api/workloads/nope/plans")
    assert r.status_code == 404 and r.json() == {"error": "workload_not_found"}
    r = client.post("/api/models/nope/predict", json={"plan_id": "x"})
    assert r.status_code == 404 and r.json() == {"error": "model_not_found"}


def test_unknown_algorithm_is_400_listing_valid(client, state):
    pid = next(iter(state.plans))
    r = client.post("/api/models/toy/explain", json={"plan_id": pid, "algorithm": "magic"})
    assert r.status_code == 400
    body = r.json()
    assert body["error"] == "unknown_algorithm"
    assert body["valid_algorithms"] == list(cl.ALGORITHMS)


def test_predict_endpoint(client, state):
    pid, (_, plan) = next(iter(state.plans.items()))
    r = client.post("/api/models/toy/predict", json={"plan_id": pid})
    assert r.status_code == 200
    body = r.json()
    assert body["actual_ms"] == plan.actual_total_runtime_ms
    assert body["q_error"] == pytest.approx(
        max(body["predicted_ms"] / body["actual_ms"], body["actual_ms"] / body["predicted_ms"])
    )


def test_explain_payload_shape(client, state):
    pid = next(iter(state.plans))
    r = client.post("/api/models/toy/explain", json={"plan_id": pid, "algorithm": "sensitivity"})
    assert r.status_code == 200
    body = r.json()
    assert body["explanation"]["algorithm"] == "sensitivity"
    assert body["report"]["plan_id"] == pid
    assert body["report"]["fidelity_plus"] is not None


def test_repeat_explain_served_from_cache_byte_identical(client, state):
    pid = sorted(state.plans)[1]
    before = state.cache.computations
    r1 = client.post("/api/models/toy/explain", json={"plan_id": pid, "algorithm": "diff_mask"})
    r2 = client.post("/api/models/toy/explain", json={"plan_id": pid, "algorithm": "diff_mask"})
    assert r1.content == r2.content
    assert state.cache.computations == before + 1


def test_config_participates_in_cache_key(client, state):
    pid = sorted(state.plans)[2]
    r1 = client.post(
        "/api/models/toy/explain",
        json={"plan_id": pid, "algorithm": "gnn_explainer", "config": {"steps": 5, "seed": 1}},
    )
    r2 = client.post(
        "/api/models/toy/explain",
        json={"plan_id": pid, "algorithm": "gnn_explainer", "config": {"steps": 5, "seed": 2}},
    )
    assert r1.status_code == r2.status_code == 200
    assert r1.content != r2.content


def test_concurrent_identical_requests_compute_once(state):
    app = create_app(state)
    pid = sorted(state.plans)[3]
    payload = {"plan_id": pid, "algorithm": "gnn_explainer", "config": {"steps": 40, "seed": 9}}
    before = state.cache.computations
    with TestClient(app) as client:
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            futures = [pool.submit(client.post, "/api/models/toy/explain", json=payload) for _ in range(8)]
            responses = [f.result() for f in futures]
    contents = {r.content for r in responses}
    assert len(contents) == 1
    assert state.cache.computations == before + 1


def test_endpoints_do_not_mutate_state(client, state):
    pid = next(iter(state.plans))
    snapshot = json.dumps(cl.serialize_plan(state.plans[pid][1]), sort_keys=True)
    client.post("/api/models/toy/explain", json={"plan_id": pid, "algorithm": "diff_mask"})
    client.post("/api/models/toy/predict", json={"plan_id": pid})
    assert json.dumps(cl.serialize_plan(state.plans[pid][1]), sort_keys=True) == snapshot
