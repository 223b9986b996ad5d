// A fetch stub implementing the service's documented wire contract, plus a
// request log. Setting COSTLENS_SERVICE_URL switches the suite to a live
// service: the same log wrapper counts real requests instead.

import type { FetchLike } from "../src/api.js";
import type { ExplainResponse, PlanDoc } from "../src/types.js";

export interface RequestLog {
  entries: Array<{ method: string; path: string }>;
  ofPath(fragment: string): number;
}

function makeLog(): RequestLog {
  const entries: Array<{ method: string; path: string }> = [];
  return {
    entries,
    ofPath(fragment: string) {
      return entries.filter((e) => e.path.includes(fragment)).length;
    },
  };
}

const PLAN_A: PlanDoc = {
  plan_id: "wl-A-p0000",
  sql: "SELECT count(*) FROM t0, t1 WHERE t0.c0 = t1.c0",
  actual_total_runtime_ms: 120.0,
  root: 0,
  nodes: [
    { id: 0, kind: "operator", label: "Aggregate", features: { estimated_cardinality: 1, actual_cardinality: 1 }, children: [1], cumulative_runtime_ms: 120.0 },
    { id: 1, kind: "operator", label: "Hash Join", features: { estimated_cardinality: 900, actual_cardinality: 1000 }, children: [2, 3, 6], cumulative_runtime_ms: 110.0 },
    { id: 2, kind: "operator", label: "Seq Scan", features: { estimated_cardinality: 5000, actual_cardinality: 5000 }, children: [4], cumulative_runtime_ms: 45.0 },
    { id: 3, kind: "operator", label: "Seq Scan", features: { estimated_cardinality: 800, actual_cardinality: 700 }, children: [5], cumulative_runtime_ms: 20.0 },
    { id: 4, kind: "table", label: "t0", features: { table_rows: 5000 }, children: [] },
    { id: 5, kind: "table", label: "t1", features: { table_rows: 800 }, children: [] },
    { id: 6, kind: "predicate", label: "=", features: { selectivity: 0.0002 }, children: [7, 8] },
    { id: 7, kind: "column", label: "c0", features: { distinct_values: 50 }, children: [] },
    { id: 8, kind: "column", label: "c0", features: { distinct_values: 70 }, children: [] },
  ],
};

const PLAN_B: PlanDoc = {
  plan_id: "wl-A-p0001",
  sql: "SELECT count(*) FROM t2",
  actual_total_runtime_ms: 30.0,
  root: 0,
  nodes: [
    { id: 0, kind: "operator", label: "Aggregate", features: { estimated_cardinality: 1, actual_cardinality: 1 }, children: [1], cumulative_runtime_ms: 30.0 },
    { id: 1, kind: "operator", label: "Seq Scan", features: { estimated_cardinality: 2000, actual_cardinality: 2500 }, children: [2], cumulative_runtime_ms: 25.0 },
    { id: 2, kind: "table", label: "t2", features: { table_rows: 2500 }, children: [] },
  ],
};

const PLANS: Record<string, PlanDoc> = { [PLAN_A.plan_id]: PLAN_A, [PLAN_B.plan_id]: PLAN_B };
export const ALGORITHMS = ["sensitivity", "guided_backprop", "gnn_explainer", "diff_mask"];

function explainPayload(planId: string, algorithm: string): ExplainResponse {
  const plan = PLANS[planId];
  const n = plan.nodes.length;
  // deterministic per-algorithm profile so switching is observable
  const bias = ALGORITHMS.indexOf(algorithm) + 1;
  const raw = plan.nodes.map((node, i) => (node.kind === "operator" ? (i + bias) * 1.0 : 0.1 * bias));
  const total = raw.reduce((a, b) => a + b, 0);
  const peak = Math.max(...raw);
  const scores = plan.nodes.map((node, i) => ({
    node_id: node.id,
    raw: raw[i],
    normalized: raw[i] / total,
    max_scaled: raw[i] / peak,
  }));
  const operators = plan.nodes.filter((node) => node.kind === "operator");
  const importance = operators.map((node) => {
    const entry = scores.find((s) => s.node_id === node.id)!;
    return { node_id: node.id, raw: entry.raw };
  });
  const impTotal = importance.reduce((a, b) => a + b.raw, 0);
  // fixture runtime fractions: one operator pinned at 0.6 to test the shared scale
  const runtimeFractions =
    planId === PLAN_A.plan_id
      ? [
          { node_id: 0, fraction: 0.1 },
          { node_id: 1, fraction: 0.6 },
          { node_id: 2, fraction: 0.2 },
          { node_id: 3, fraction: 0.1 },
        ]
      : [
          { node_id: 0, fraction: 0.2 },
          { node_id: 1, fraction: 0.8 },
        ];
  const ranking = [...scores].sort((a, b) => b.normalized - a.normalized || a.node_id - b.node_id).map((s) => s.node_id);
  return {
    explanation: {
      algorithm,
      plan_id: planId,
      prediction_ms: 95.0 + bias,
      runtime_ms: 2.5,
      scores,
      diagnostics: {},
    },
    report: {
      plan_id: planId,
      algorithm,
      predicted_ms: 95.0 + bias,
      actual_ms: plan.actual_total_runtime_ms,
      q_error: 1.25,
      ranking,
      runtime_fractions: runtimeFractions,
      importance_fractions: importance.map((e) => ({ node_id: e.node_id, fraction: e.raw / impTotal })),
      spearman_runtime: 0.72,
      spearman_cardinality: null,
      fidelity_plus: 0.81,
      fidelity_minus_quality: 0.93,
      characterization: 0.866,
    },
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), { status, headers: { "content-type": "application/json" } });
}

export function makeStub(): { fetchFn: FetchLike; log: RequestLog; planIds: string[] } {
  const log = makeLog();
  const fetchFn: FetchLike = async (input, init) => {
    const method = init?.method ?? "GET";
    const path = input;
    log.entries.push({ method, path });
    if (init?.signal?.aborted) throw new DOMException("aborted", "AbortError");

    if (path === "/api/workloads") return json([{ workload_id: "wl-A", plan_count: 2, params: {} }]);
    if (path === "/api/workloads/wl-A/plans")
      return json(
        Object.values(PLANS).map((p) => ({
          plan_id: p.plan_id,
          operator_count: p.nodes.filter((n) => n.kind === "operator").length,
          node_count: p.nodes.length,
          total_runtime_ms: p.actual_total_runtime_ms,
        })),
      );
    if (path === "/api/models")
      return json([{ model_id: "toy", hidden_width: 32, parameter_count: 9217, training_meta: {} }]);
    if (path === "/api/algorithms") return json(ALGORITHMS);

    const planMatch = path.match(/^\/api\/plans\/(.+)$/);
    if (planMatch) {
      const plan = PLANS[decodeURIComponent(planMatch[1])];
      return plan ? json(plan) : json({ error: "plan_not_found" }, 404);
    }
    const predictMatch = path.match(/^\/api\/models\/(.+)\/predict$/);
    if (predictMatch) {
      const { plan_id } = JSON.parse(String(init?.body));
      const plan = PLANS[plan_id];
      if (!plan) return json({ error: "plan_not_found" }, 404);
      return json({ plan_id, predicted_ms: 96.0, actual_ms: plan.actual_total_runtime_ms, q_error: 1.25 });
    }
    const explainMatch = path.match(/^\/api\/models\/(.+)\/explain$/);
    if (explainMatch) {
      const { plan_id, algorithm } = JSON.parse(String(init?.body));
      if (!PLANS[plan_id]) return json({ error: "plan_not_found" }, 404);
      if (!ALGORITHMS.includes(algorithm)) return json({ error: "unknown_algorithm", valid_algorithms: ALGORITHMS }, 400);
      return json(explainPayload(plan_id, algorithm));
    }
    return json({ error: "not_found" }, 404);
  };
  return { fetchFn, log, planIds: Object.keys(PLANS) };
}

/** Live mode: wrap real fetch against COSTLENS_SERVICE_URL with the same log. */
export function makeLive(baseUrl: string): { fetchFn: FetchLike; log: RequestLog } {
  const log = makeLog();
  const fetchFn: FetchLike = (input, init) => {
    log.entries.push({ method: init?.method ?? "GET", path: input });
    return fetch(baseUrl + input, init);
  };
  return { fetchFn, log };
}
