// Wire types mirroring the service's JSON payloads.

export type NodeKind = "operator" | "table" | "column" | "predicate";

export interface PlanNodeDoc {
  id: number;
  kind: NodeKind;
  label: string;
  features: Record<string, number>;
  children: number[];
  cumulative_runtime_ms?: number;
}

export interface PlanDoc {
  plan_id: string;
  sql: string;
  actual_total_runtime_ms: number;
  root: number;
  nodes: PlanNodeDoc[];
}

export interface WorkloadSummary {
  workload_id: string;
  plan_count: number;
  params: Record<string, unknown>;
}

export interface PlanSummary {
  plan_id: string;
  operator_count: number;
  node_count: number;
  total_runtime_ms: number;
}

export interface ModelSummary {
  model_id: string;
  hidden_width: number;
  parameter_count: number;
  training_meta: Record<string, unknown>;
}

export interface PredictResponse {
  plan_id: string;
  predicted_ms: number;
  actual_ms: number;
  q_error: number;
}

export interface ScoreEntry {
  node_id: number;
  raw: number;
  normalized: number;
  max_scaled: number;
}

export interface ExplanationDoc {
  algorithm: string;
  plan_id: string;
  prediction_ms: number;
  runtime_ms: number;
  scores: ScoreEntry[];
  diagnostics: Record<string, unknown>;
}

export interface FractionEntry {
  node_id: number;
  fraction: number;
}

export interface ReportDoc {
  plan_id: string;
  algorithm: string;
  predicted_ms: number;
  actual_ms: number;
  q_error: number;
  ranking: number[];
  runtime_fractions: FractionEntry[];
  importance_fractions: FractionEntry[];
  spearman_runtime: number | null;
  spearman_cardinality: number | null;
  fidelity_plus: number;
  fidelity_minus_quality: number;
  characterization: number;
}

export interface ExplainResponse {
  explanation: ExplanationDoc;
  report: ReportDoc;
}

export type ColorizeMode = "none" | "importance" | "runtime";
