// Thin typed client over the service API. The fetch function is injectable
// so tests can stub the wire contract or count requests.

import type {
  ExplainResponse,
  ModelSummary,
  PlanDoc,
  PlanSummary,
  PredictResponse,
  WorkloadSummary,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly code?: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const code = body && typeof body === "object" ? (body as { error?: string }).error : undefined;
      throw new ApiError(`${path}: ${code ?? response.status}`, response.status, code);
    }
    return body as T;
  }

  workloads(): Promise<WorkloadSummary[]> {
    return this.request("/api/workloads");
  }

  plans(workloadId: string): Promise<PlanSummary[]> {
    return this.request(`/api/workloads/${encodeURIComponent(workloadId)}/plans`);
  }

  plan(planId: string): Promise<PlanDoc> {
    return this.request(`/api/plans/${encodeURIComponent(planId)}`);
  }

  models(): Promise<ModelSummary[]> {
    return this.request("/api/models");
  }

  algorithms(): Promise<string[]> {
    return this.request("/api/algorithms");
  }

  predict(modelId: string, planId: string): Promise<PredictResponse> {
    return this.request(`/api/models/${encodeURIComponent(modelId)}/predict`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ plan_id: planId }),
    });
  }

  explain(modelId: string, planId: string, algorithm: string, signal?: AbortSignal): Promise<ExplainResponse> {
    return this.request(`/api/models/${encodeURIComponent(modelId)}/explain`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ plan_id: planId, algorithm }),
      signal,
    });
  }
}
