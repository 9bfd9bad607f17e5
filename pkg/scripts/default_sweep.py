#!/usr/bin/env python3
"""Run the default validation sweep: 1D Poisson, three sizes, four formats.

Writes one CSV per size under results/ and exits nonzero on any bound
violation.
"""

import sys
from pathlib import Path

from mixedmg.harness import ExperimentConfig, run_experiment, write_csv

SIZES = (15, 31, 63)
BITS = (8, 12, 16, 23)
TRIALS = 100
SEED = 20240801


def main() -> int:
    out_dir = Path(__file__).resolve().parent.parent / "results"
    failures = 0
    for size in SIZES:
        config = ExperimentConfig(size=size, bits=BITS, trials=TRIALS,
                                  rng_seed=SEED)
        records = run_experiment(config)
        path = write_csv(records, out_dir / f"sweep_n{size}.csv")
        bad = sum(not r.passed for r in records)
        failures += bad
        worst = max(r.measured_ratio / r.report.rho_tg for r in records)
        print(f"n={size}: {len(records)} trials -> {path} "
              f"(violations {bad}, worst measured/bound {worst:.4f})")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
