#!/usr/bin/env python3
"""Minimal end-to-end tour: generate a workload, train briefly, explain a plan.

Runs in under a minute; prints the explanation report for one plan under all
four explainers. For the full-quality model use scripts/full_pipeline.py.
"""

import numpy as np

import costlens as cl
from costlens.explain import GnnExplainerConfig, stable_seed
from costlens.model import CostModel, train

SEED = 7


def main():
    workload = cl.generate_workload(seed=SEED, count=120, complexity=cl.Complexity(1, 3))
    print(f"generated {len(workload.plans)} plans ({workload.workload_id})")

    model = CostModel.create(hidden_width=32, seed=1)
    trained, history = train(model, workload, epochs=30, lr=0.01, seed=0)
    print(f"trained 30 epochs; best val median q-error {trained.meta['best_val_median_qerror']:.3f}")

    _, held_out = cl.split_workload(workload, (0.8, 0.2), 0)
    plan = held_out[0]
    print(f"\nplan {plan.plan_id}: {plan.sql}")
    print(f"actual {plan.actual_total_runtime_ms:.1f} ms")

    for algorithm in cl.ALGORITHMS:
        cfg = GnnExplainerConfig(seed=stable_seed(plan.plan_id, algorithm)) if algorithm == "gnn_explainer" else None
        explanation = cl.explain(trained, plan, algorithm, cfg)
        report = cl.build_report(trained, plan, explanation)
        rho = "n/a" if report.spearman_runtime is None else f"{report.spearman_runtime:+.2f}"
        print(
            f"  {algorithm:16s} pred {report.predicted_ms:8.1f} ms  q {report.q_error:5.2f}  "
            f"f+ {report.fidelity_plus:.2f}  f-q {report.fidelity_minus_quality:.2f}  "
            f"char {report.characterization:.2f}  rho {rho}"
        )
        top = report.ranking[:3]
        labels = ", ".join(f"{plan.node(nid).label}#{nid}={explanation.normalized[nid]:.2f}" for nid in top)
        print(f"  {'':16s} top nodes: {labels}")


if __name__ == "__main__":
    main()
