// The workbench view: workload/plan browser, SQL text, plan graph,
// prediction summary, and the explanation panel with explainer selection
// and importance/runtime colorization.
//
// The UI performs no metric arithmetic: every number displayed comes from
// the service's explanation report or prediction response; rendering only
// formats them.

import { ApiClient } from "./api.js";
import { fractionFill, kindFill, NEUTRAL_FILL } from "./color.js";
import { CELL_H, layoutPlan } from "./layout.js";
import type {
  ColorizeMode,
  ExplanationDoc,
  ModelSummary,
  PlanDoc,
  PlanSummary,
  PredictResponse,
  ReportDoc,
  WorkloadSummary,
} from "./types.js";

interface ViewState {
  workloads: WorkloadSummary[];
  models: ModelSummary[];
  algorithms: string[];
  selectedWorkload: string | null;
  selectedModel: string | null;
  selectedPlan: string | null;
  algorithm: string | null;
  colorize: ColorizeMode;
  planSummaries: PlanSummary[];
  plan: PlanDoc | null;
  prediction: PredictResponse | null;
  explanation: ExplanationDoc | null;
  report: ReportDoc | null;
  explaining: boolean;
  error: { message: string; retry: () => void } | null;
}

const fmt2 = (v: number) => v.toFixed(2);
const fmtMs = (v: number) => `${v.toFixed(1)} ms`;

export class App {
  readonly state: ViewState = {
    workloads: [],
    models: [],
    algorithms: [],
    selectedWorkload: null,
    selectedModel: null,
    selectedPlan: null,
    algorithm: null,
    colorize: "none",
    planSummaries: [],
    plan: null,
    prediction: null,
    explanation: null,
    report: null,
    explaining: false,
    error: null,
  };

  private explainAbort: AbortController | null = null;
  private readonly panels: Record<string, HTMLElement> = {};

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    root.innerHTML = `
      <header><h1>costlens</h1><span class="tagline">learned cost models, explained</span></header>
      <div id="error-bar" hidden></div>
      <main>
        <section id="panel-browser" class="panel"><h2>Workloads &amp; plans</h2><div class="body"></div></section>
        <div class="center-column">
          <section id="panel-sql" class="panel"><h2>SQL</h2><div class="body"></div></section>
          <section id="panel-graph" class="panel"><h2>Plan graph</h2><div class="body"></div></section>
        </div>
        <div class="right-column">
          <section id="panel-prediction" class="panel"><h2>Prediction</h2><div class="body"></div></section>
          <section id="panel-explanation" class="panel"><h2>Explanation</h2><div class="body"></div></section>
        </div>
      </main>`;
    for (const name of ["browser", "sql", "graph", "prediction", "explanation"]) {
      this.panels[name] = root.querySelector(`#panel-${name} .body`) as HTMLElement;
    }
  }

  async start(): Promise<void> {
    await this.guard(async () => {
      const [workloads, models, algorithms] = await Promise.all([
        this.api.workloads(),
        this.api.models(),
        this.api.algorithms(),
      ]);
      this.state.workloads = workloads;
      this.state.models = models;
      this.state.algorithms = algorithms;
      this.state.selectedModel = models[0]?.model_id ?? null;
      this.state.algorithm = algorithms[0] ?? null;
      if (workloads.length === 1) {
        await this.selectWorkload(workloads[0].workload_id);
        return;
      }
      this.renderAll();
    }, () => this.start());
  }

  async selectWorkload(workloadId: string): Promise<void> {
    this.cancelExplain();
    // stale selections are invalidated on workload switch
    Object.assign(this.state, {
      selectedWorkload: workloadId,
      selectedPlan: null,
      plan: null,
      prediction: null,
      explanation: null,
      report: null,
      planSummaries: [],
    });
    await this.guard(async () => {
      this.state.planSummaries = await this.api.plans(workloadId);
      this.renderAll();
    }, () => this.selectWorkload(workloadId));
  }

  /** Selecting a plan populates SQL, graph and prediction panels from three
   * API calls: the plan document, the prediction, and the explanation. */
  async selectPlan(planId: string): Promise<void> {
    const model = this.state.selectedModel;
    if (model === null) return;
    this.cancelExplain();
    this.state.selectedPlan = planId;
    this.state.plan = null;
    this.state.prediction = null;
    this.state.explanation = null;
    this.state.report = null;
    await this.guard(async () => {
      const explainPromise = this.requestExplanation(model, planId);
      const [plan, prediction] = await Promise.all([this.api.plan(planId), this.api.predict(model, planId)]);
      this.state.plan = plan;
      this.state.prediction = prediction;
      this.renderAll();
      await explainPromise;
    }, () => this.selectPlan(planId));
  }

  /** Switching the algorithm re-requests only the explanation endpoint. */
  async selectAlgorithm(algorithm: string): Promise<void> {
    this.state.algorithm = algorithm;
    const { selectedModel, selectedPlan } = this.state;
    if (selectedModel === null || selectedPlan === null) {
      this.renderExplanation();
      return;
    }
    this.cancelExplain();
    await this.guard(
      () => this.requestExplanation(selectedModel, selectedPlan),
      () => this.selectAlgorithm(algorithm),
    );
  }

  async selectModel(modelId: string): Promise<void> {
    this.state.selectedModel = modelId;
    const plan = this.state.selectedPlan;
    if (plan !== null) await this.selectPlan(plan);
    else this.renderAll();
  }

  /** Pure client-side re-render: flips node fills, never refetches. */
  setColorize(mode: ColorizeMode): void {
    this.state.colorize = mode;
    this.renderGraph();
    this.renderExplanation();
  }

  private async requestExplanation(modelId: string, planId: string): Promise<void> {
    const algorithm = this.state.algorithm;
    if (algorithm === null) return;
    this.explainAbort = new AbortController();
    this.state.explaining = true;
    this.renderExplanation();
    try {
      const { explanation, report } = await this.api.explain(modelId, planId, algorithm, this.explainAbort.signal);
      this.state.explanation = explanation;
      this.state.report = report;
    } finally {
      this.state.explaining = false;
      this.explainAbort = null;
    }
    this.renderGraph();
    this.renderExplanation();
  }

  private cancelExplain(): void {
    if (this.explainAbort !== null) {
      this.explainAbort.abort();
      this.explainAbort = null;
      this.state.explaining = false;
    }
  }

  private async guard(action: () => Promise<void>, retry: () => Promise<void>): Promise<void> {
    try {
      this.state.error = null;
      await action();
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return;
      this.state.error = { message: err instanceof Error ? err.message : String(err), retry };
    }
    this.renderErrorBar();
  }

  // -- rendering ----------------------------------------------------------

  private renderAll(): void {
    this.renderBrowser();
    this.renderSql();
    this.renderGraph();
    this.renderPrediction();
    this.renderExplanation();
    this.renderErrorBar();
  }

  private renderErrorBar(): void {
    const bar = this.root.querySelector("#error-bar") as HTMLElement;
    if (this.state.error === null) {
      bar.hidden = true;
      bar.innerHTML = "";
      return;
    }
    bar.hidden = false;
    bar.innerHTML = `<span>service error: ${escapeHtml(this.state.error.message)}</span> <button id="retry-btn">Retry</button>`;
    (bar.querySelector("#retry-btn") as HTMLButtonElement).onclick = () => {
      const retry = this.state.error?.retry;
      this.state.error = null;
      this.renderErrorBar();
      void retry?.();
    };
  }

  private renderBrowser(): void {
    const s = this.state;
    const workloadOptions = s.workloads
      .map(
        (w) =>
          `<option value="${escapeHtml(w.workload_id)}" ${w.workload_id === s.selectedWorkload ? "selected" : ""}>` +
          `${escapeHtml(w.workload_id)} (${w.plan_count})</option>`,
      )
      .join("");
    const modelOptions = s.models
      .map(
        (m) =>
          `<option value="${escapeHtml(m.model_id)}" ${m.model_id === s.selectedModel ? "selected" : ""}>` +
          `${escapeHtml(m.model_id)}</option>`,
      )
      .join("");
    const rows = s.planSummaries
      .map(
        (p) => `
        <tr class="plan-row ${p.plan_id === s.selectedPlan ? "selected" : ""}" data-plan="${escapeHtml(p.plan_id)}">
          <td>${escapeHtml(shortId(p.plan_id))}</td>
          <td class="num">${p.operator_count}</td>
          <td class="num">${fmtMs(p.total_runtime_ms)}</td>
        </tr>`,
      )
      .join("");
    this.panels.browser.innerHTML = `
      <label>Workload <select id="workload-select"><option value="" ${s.selectedWorkload === null ? "selected" : ""} disabled>pick one</option>${workloadOptions}</select></label>
      <label>Model <select id="model-select">${modelOptions}</select></label>
      <table class="plan-list">
        <thead><tr><th>plan</th><th>operators</th><th>runtime</th></tr></thead>
        <tbody>${rows}</tbody>
      </table>`;
    (this.panels.browser.querySelector("#workload-select") as HTMLSelectElement).onchange = (e) =>
      void this.selectWorkload((e.target as HTMLSelectElement).value);
    (this.panels.browser.querySelector("#model-select") as HTMLSelectElement).onchange = (e) =>
      void this.selectModel((e.target as HTMLSelectElement).value);
    for (const row of this.panels.browser.querySelectorAll<HTMLElement>(".plan-row")) {
      row.onclick = () => void this.selectPlan(row.dataset.plan!);
    }
  }

  private renderSql(): void {
    const plan = this.state.plan;
    this.panels.sql.innerHTML = plan
      ? `<pre class="sql">${escapeHtml(plan.sql)}</pre>`
      : `<p class="placeholder">select a plan</p>`;
  }

  private nodeFill(nodeId: number, kind: string): string {
    const { colorize, explanation, report } = this.state;
    if (colorize === "importance" && explanation) {
      const entry = explanation.scores.find((sc) => sc.node_id === nodeId);
      return entry ? fractionFill(entry.normalized) : NEUTRAL_FILL;
    }
    if (colorize === "runtime" && report) {
      const entry = report.runtime_fractions.find((f) => f.node_id === nodeId);
      return entry ? fractionFill(entry.fraction) : NEUTRAL_FILL;
    }
    return kindFill(kind);
  }

  private renderGraph(): void {
    const plan = this.state.plan;
    if (!plan) {
      this.panels.graph.innerHTML = `<p class="placeholder">select a plan</p>`;
      return;
    }
    const hasRuntimes = plan.nodes.some((n) => n.cumulative_runtime_ms !== undefined);
    const layout = layoutPlan(plan);
    const byId = new Map(plan.nodes.map((n) => [n.id, n]));
    const edges = layout.edges
      .map(({ from, to }) => {
        const a = layout.positions.get(from)!;
        const b = layout.positions.get(to)!;
        return `<line x1="${a.x}" y1="${a.y + 16}" x2="${b.x}" y2="${b.y - 16}" class="edge"/>`;
      })
      .join("");
    const nodes = [...layout.positions.values()]
      .map((pos) => {
        const node = byId.get(pos.id)!;
        const fill = this.nodeFill(pos.id, node.kind);
        const cls = node.kind === "operator" ? "node operator" : "node aux";
        return `
          <g class="${cls}" data-node="${pos.id}" data-fill="${fill}">
            <rect x="${pos.x - 56}" y="${pos.y - 16}" width="112" height="32" rx="6" fill="${fill}"/>
            <text x="${pos.x}" y="${pos.y - 2}" text-anchor="middle">${escapeHtml(node.label)}</text>
            <text x="${pos.x}" y="${pos.y + 11}" text-anchor="middle" class="node-sub">#${pos.id} ${node.kind}</text>
          </g>`;
      })
      .join("");
    const modes: Array<[ColorizeMode, string, boolean]> = [
      ["none", "kind", true],
      ["importance", "importance", this.state.explanation !== null],
      ["runtime", "runtime", hasRuntimes],
    ];
    const toggles = modes
      .map(
        ([mode, label, enabled]) => `
        <label class="colorize-option"><input type="radio" name="colorize" value="${mode}"
          ${this.state.colorize === mode ? "checked" : ""} ${enabled ? "" : "disabled"}/> ${label}</label>`,
      )
      .join("");
    this.panels.graph.innerHTML = `
      <div id="colorize-toggle">color by: ${toggles}</div>
      <svg viewBox="0 0 ${layout.width} ${layout.height}" width="100%" height="${Math.min(520, layout.height + CELL_H)}">
        ${edges}${nodes}
      </svg>`;
    for (const input of this.panels.graph.querySelectorAll<HTMLInputElement>("input[name=colorize]")) {
      input.onchange = () => this.setColorize(input.value as ColorizeMode);
    }
  }

  private renderPrediction(): void {
    const p = this.state.prediction;
    this.panels.prediction.innerHTML = p
      ? `<dl class="prediction">
           <div><dt>predicted</dt><dd id="predicted-ms">${fmtMs(p.predicted_ms)}</dd></div>
           <div><dt>actual</dt><dd id="actual-ms">${fmtMs(p.actual_ms)}</dd></div>
           <div><dt>q-error</dt><dd id="q-error">${fmt2(p.q_error)}</dd></div>
         </dl>`
      : `<p class="placeholder">select a plan</p>`;
  }

  private renderExplanation(): void {
    const s = this.state;
    const options = s.algorithms
      .map((a) => `<option value="${escapeHtml(a)}" ${a === s.algorithm ? "selected" : ""}>${escapeHtml(a)}</option>`)
      .join("");
    const dropdown = `<label>explainer <select id="algorithm-select">${options}</select></label>`;

    let body: string;
    if (s.explaining) {
      body = `<p class="placeholder">computing explanation…</p>`;
    } else if (!s.explanation || !s.report || !s.plan) {
      body = `<p class="placeholder">select a plan</p>`;
    } else {
      const kindOf = new Map(s.plan.nodes.map((n) => [n.id, n.kind]));
      const labelOf = new Map(s.plan.nodes.map((n) => [n.id, n.label]));
      const normalized = new Map(s.explanation.scores.map((sc) => [sc.node_id, sc.normalized]));
      const rankingRows = s.report.ranking
        .map((nid, i) => {
          const aux = kindOf.get(nid) !== "operator";
          return `<tr class="${aux ? "aux-row" : ""}">
            <td class="num">${i + 1}</td>
            <td>${escapeHtml(labelOf.get(nid) ?? "?")} <span class="node-ref">#${nid}</span></td>
            <td class="num">${fmt2(normalized.get(nid) ?? 0)}</td>
          </tr>`;
        })
        .join("");

      const runtimeFr = new Map(s.report.runtime_fractions.map((f) => [f.node_id, f.fraction]));
      const importanceFr = new Map(s.report.importance_fractions.map((f) => [f.node_id, f.fraction]));
      const operatorIds = [...runtimeFr.keys()].sort((a, b) => (runtimeFr.get(b) ?? 0) - (runtimeFr.get(a) ?? 0));
      const bars = operatorIds
        .map((nid) => {
          const rt = runtimeFr.get(nid) ?? 0;
          const imp = importanceFr.get(nid) ?? 0;
          return `<div class="bar-row" data-node="${nid}">
            <span class="bar-label">${escapeHtml(labelOf.get(nid) ?? "?")} <span class="node-ref">#${nid}</span></span>
            <div class="bar-pair">
              <div class="bar runtime-bar" style="width:${(rt * 100).toFixed(1)}%" title="runtime ${fmt2(rt)}"></div>
              <div class="bar importance-bar" style="width:${(imp * 100).toFixed(1)}%" title="importance ${fmt2(imp)}"></div>
            </div>
            <span class="bar-nums">${fmt2(rt)} / ${fmt2(imp)}</span>
          </div>`;
        })
        .join("");

      const rho = (v: number | null) => (v === null ? "n/a" : fmt2(v));
      const gauge = (id: string, label: string, v: number) => `
        <div class="gauge" id="${id}">
          <span>${label}</span>
          <div class="gauge-track"><div class="gauge-fill" style="width:${(v * 100).toFixed(1)}%"></div></div>
          <span class="num">${fmt2(v)}</span>
        </div>`;

      body = `
        <div id="correlation-block">
          <h3>runtime vs importance (operators)</h3>
          <div class="bar-legend"><span class="runtime-swatch"></span> runtime fraction <span class="importance-swatch"></span> importance fraction</div>
          ${bars}
          <p class="correlations">Spearman runtime: <b id="spearman-runtime">${rho(s.report.spearman_runtime)}</b>
             &nbsp; cardinality: <b id="spearman-cardinality">${rho(s.report.spearman_cardinality)}</b></p>
        </div>
        <div id="quality-block">
          <h3>explanation quality</h3>
          ${gauge("fidelity-plus", "fidelity+", s.report.fidelity_plus)}
          ${gauge("fidelity-minus", "fidelity− quality", s.report.fidelity_minus_quality)}
          ${gauge("characterization", "characterization", s.report.characterization)}
        </div>
        <div id="ranking-block">
          <h3>node ranking</h3>
          <table class="ranking"><thead><tr><th>#</th><th>node</th><th>score</th></tr></thead>
          <tbody>${rankingRows}</tbody></table>
        </div>`;
    }
    this.panels.explanation.innerHTML = `${dropdown}${body}`;
    const select = this.panels.explanation.querySelector("#algorithm-select") as HTMLSelectElement;
    select.onchange = () => void this.selectAlgorithm(select.value);
  }
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}

function shortId(planId: string): string {
  const idx = planId.lastIndexOf("-");
  return idx >= 0 ? planId.slice(idx + 1) : planId;
}
