#!/usr/bin/env python3
"""Progressive-precision study: pick the format per size so that the
precision-conditioning product sqrt(kappa) * u stays near a fixed target,
then verify the predicted deviation coefficient tracks the target linearly.
"""

import json
import sys

from mixedmg.harness import progressive_study

SIZES = (15, 31, 63)
TRIALS = 50
SEED = 7


def main() -> int:
    base = progressive_study(SIZES, 2.0**-8, TRIALS, seed=SEED)
    halved = progressive_study(SIZES, 2.0**-9, TRIALS, seed=SEED)
    print(json.dumps({"target_2^-8": base, "target_2^-9": halved}, indent=2))
    for n in SIZES:
        factor = (base["per_size"][n]["delta_rho"]
                  / halved["per_size"][n]["delta_rho"])
        print(f"n={n}: halving the target scales delta_rho by 1/{factor:.3f}")
    ok = base["all_ok"] and halved["all_ok"]
    print("OK" if ok else "BOUND VIOLATION")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
