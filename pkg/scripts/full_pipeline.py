#!/usr/bin/env python3
"""Full reproduction pipeline via the CLI: gen -> train -> eval -> bench -> serve-ready.

Writes everything under ./artifacts/ (workload, model, history, bench CSV).
Takes a few minutes; the trained model matches the acceptance-suite setup
(seed 7, 1000 plans, 200 epochs).
"""

import pathlib
import sys

from costlens.cli import main

ART = pathlib.Path(__file__).resolve().parent.parent / "artifacts"


def run(args: list[str]) -> None:
    print(f"$ costlens {' '.join(args)}")
    code = main(args)
    if code != 0:
        sys.exit(code)


if __name__ == "__main__":
    wdir = ART / "workloads" / "s7"
    model = ART / "models" / "model-s7.json"
    bench = ART / "bench-s7.csv"
    model.parent.mkdir(parents=True, exist_ok=True)
    run(["gen", "--seed", "7", "--count", "1000", "--min-joins", "1", "--max-joins", "3", "--out", str(wdir)])
    run(["train", "--workload", str(wdir), "--epochs", "200", "--lr", "0.01", "--seed", "0", "--out", str(model)])
    run(["eval", "--model", str(model), "--workload", str(wdir)])
    run(["bench-explainers", "--model", str(model), "--workload", str(wdir), "--out", str(bench)])
    print(f"\nartifacts in {ART}")
    print(
        "serve the UI with:\n"
        f"  costlens serve --workloads {ART / 'workloads'} --models {ART / 'models'} --listen 127.0.0.1:8000"
    )
