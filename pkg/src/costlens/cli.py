"""Operator-facing command line.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
failure. Every command is reproducible from its flags alone; all randomness
is seeded.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from .errors import (
    ContractError,
    CostLensError,
    NumericalError,
    ParameterError,
)
from .explain import ALGORITHMS, GnnExplainerConfig, explain, stable_seed
from .metrics import FidelityConfig, build_report, q_error
from .model import CostModel, load_model, save_model, train
from .plans import parse_plan
from .synth import Complexity, generate_workload, load_workload, save_workload


@click.group()
@click.option("--quiet", is_flag=True, default=False, help="Suppress progress output.")
@click.pass_context
def cli(ctx, quiet):
    """Workbench for training and explaining learned query-cost models."""
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet


def _say(ctx, message: str) -> None:
    if not ctx.obj.get("quiet"):
        click.echo(message, err=True)


@cli.command()
@click.option("--seed", type=int, required=True)
@click.option("--count", type=int, required=True)
@click.option("--min-joins", type=int, default=0, show_default=True)
@click.option("--max-joins", type=int, default=3, show_default=True)
@click.option("--tables", type=int, default=8, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def gen(ctx, seed, count, min_joins, max_joins, tables, out):
    """Generate a synthetic workload directory."""
    workload = generate_workload(seed, count, Complexity(min_joins, max_joins, tables))
    save_workload(workload, out)
    _say(ctx, f"wrote {count} plans to {out} ({workload.workload_id})")


@cli.command(name="train")
@click.option("--workload", "workload_dir", type=click.Path(exists=True), required=True)
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--hidden-width", type=int, default=32, show_default=True)
@click.option("--val-fraction", type=float, default=0.2, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def train_cmd(ctx, workload_dir, epochs, lr, seed, hidden_width, val_fraction, out_path):
    """Train a cost model; writes the model plus a .history.json file."""
    workload = load_workload(workload_dir)
    model = CostModel.create(hidden_width=hidden_width, seed=seed)
    trained, history = train(model, workload, split=(1.0 - val_fraction, val_fraction), epochs=epochs, lr=lr, seed=seed)
    save_model(trained, out_path)
    history_path = Path(out_path).with_suffix(Path(out_path).suffix + ".history.json")
    history_path.write_text(json.dumps(history, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if history:
        _say(ctx, f"best val median q-error: {trained.meta['best_val_median_qerror']:.4f}")
    _say(ctx, f"wrote model to {out_path}, history to {history_path}")


@cli.command(name="eval")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--workload", "workload_dir", type=click.Path(exists=True), required=True)
def eval_cmd(model_path, workload_dir):
    """Q-error table of a model over a workload."""
    model = load_model(model_path)
    workload = load_workload(workload_dir)
    qs = sorted(
        q_error(model.predict(p).predicted_runtime_ms, p.actual_total_runtime_ms) for p in workload.plans
    )

    def pct(f: float) -> float:
        idx = min(len(qs) - 1, max(0, round(f * (len(qs) - 1))))
        return qs[idx]

    click.echo(f"plans:        {len(qs)}")
    click.echo(f"median q-err: {pct(0.50):.4f}")
    click.echo(f"p90 q-err:    {pct(0.90):.4f}")
    click.echo(f"p95 q-err:    {pct(0.95):.4f}")
    click.echo(f"max q-err:    {qs[-1]:.4f}")


def _parse_config(pairs: tuple[str, ...]) -> dict:
    config = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--config expects K=V, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            config[key] = int(value)
        except ValueError:
            try:
                config[key] = float(value)
            except ValueError:
                config[key] = value
    return config


def _gnn_config(plan_id: str, config: dict) -> GnnExplainerConfig:
    return GnnExplainerConfig(
        steps=int(config.get("steps", GnnExplainerConfig.steps)),
        lr=float(config.get("lr", GnnExplainerConfig.lr)),
        sparsity_weight=float(config.get("sparsity_weight", GnnExplainerConfig.sparsity_weight)),
        entropy_weight=float(config.get("entropy_weight", GnnExplainerConfig.entropy_weight)),
        seed=int(config.get("seed", stable_seed(plan_id, "gnn_explainer"))),
    )


@cli.command(name="explain")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--plan", "plan_path", type=click.Path(exists=True), required=True)
@click.option("--algorithm", required=True)
@click.option("--config", "config_pairs", multiple=True, help="Explainer option as K=V (repeatable).")
def explain_cmd(model_path, plan_path, algorithm, config_pairs):
    """Explain one plan; prints Explanation + ExplanationReport JSON."""
    if algorithm not in ALGORITHMS:
        raise click.UsageError(f"unknown algorithm {algorithm!r}; valid algorithms: {', '.join(ALGORITHMS)}")
    config = _parse_config(config_pairs)
    model = load_model(model_path)
    plan = parse_plan(json.loads(Path(plan_path).read_text(encoding="utf-8")))
    gnn_cfg = _gnn_config(plan.plan_id, config) if algorithm == "gnn_explainer" else None
    explanation = explain(model, plan, algorithm, gnn_cfg)
    fid_cfg = FidelityConfig(k_fraction=float(config.get("k_fraction", FidelityConfig.k_fraction)))
    report = build_report(model, plan, explanation, fid_cfg)
    click.echo(json.dumps({"explanation": explanation.to_document(), "report": report.to_document()}, sort_keys=True, indent=2))


@cli.command(name="bench-explainers")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--workload", "workload_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def bench_explainers(ctx, model_path, workload_dir, out_path):
    """Per-plan, per-algorithm metric rows as CSV (plan id, then algorithm)."""
    model = load_model(model_path)
    workload = load_workload(workload_dir)
    columns = [
        "plan_id",
        "algorithm",
        "fidelity_plus",
        "fidelity_minus_quality",
        "characterization",
        "spearman_runtime",
        "spearman_cardinality",
        "q_error",
    ]

    def cell(value) -> str:
        return "" if value is None else repr(value)

    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for plan in sorted(workload.plans, key=lambda p: p.plan_id):
            for algorithm in sorted(ALGORITHMS):
                gnn_cfg = _gnn_config(plan.plan_id, {}) if algorithm == "gnn_explainer" else None
                explanation = explain(model, plan, algorithm, gnn_cfg)
                report = build_report(model, plan, explanation)
                writer.writerow(
                    [
                        plan.plan_id,
                        algorithm,
                        cell(report.fidelity_plus),
                        cell(report.fidelity_minus_quality),
                        cell(report.characterization),
                        cell(report.spearman_runtime),
                        cell(report.spearman_cardinality),
                        cell(report.q_error),
                    ]
                )
            _say(ctx, f"benchmarked {plan.plan_id}")
    _say(ctx, f"wrote {out_path}")


@cli.command()
@click.option("--workloads", "workloads_dir", type=click.Path(exists=True), required=True, envvar="COSTLENS_WORKLOADS")
@click.option("--models", "models_dir", type=click.Path(exists=True), required=True, envvar="COSTLENS_MODELS")
@click.option("--listen", default="127.0.0.1:8000", show_default=True, help="host:port", envvar="COSTLENS_LISTEN")
@click.option("--cache-size", type=int, default=256, show_default=True, envvar="COSTLENS_CACHE_SIZE")
@click.option("--ui-dir", type=click.Path(), default=None, help="Directory with the built web UI.", envvar="COSTLENS_UI_DIR")
@click.pass_context
def serve(ctx, workloads_dir, models_dir, listen, cache_size, ui_dir):
    """Run the HTTP service (flags fall back to COSTLENS_* env vars)."""
    import uvicorn

    from .service import ServiceState, create_app

    try:
        host, port_str = listen.rsplit(":", 1)
        port = int(port_str)
    except ValueError:
        raise click.UsageError(f"--listen expects host:port, got {listen!r}")
    state = ServiceState.load(workloads_dir, models_dir, cache_size)
    default_ui = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dir is None and default_ui.is_dir():
        ui_dir = default_ui
    app = create_app(state, ui_dir)
    _say(ctx, f"serving {len(state.plans)} plans, {len(state.models)} models on {host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning" if ctx.obj.get("quiet") else "info")


def main(argv=None) -> int:
    try:
        cli(args=argv, standalone_mode=False, obj={})
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except (ParameterError, ContractError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    except CostLensError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
