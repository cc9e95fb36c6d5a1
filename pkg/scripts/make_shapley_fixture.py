#!/usr/bin/env python3
"""Generate the frozen attribution fixture for a random 8-player game.

Independent oracle: enumerates all 8! player orderings and averages the
marginal contributions, which is the definition itself.  The library's
estimator uses the closed-form subset weights instead, so agreement is a
meaningful cross-check.  Run once; the JSON output is committed under
tests/data/ and never regenerated by the suite.
"""

import itertools
import json
import math
from pathlib import Path

import numpy as np

N = 8
SEED = 2024

OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "shapley_exact_n8.json"


def main() -> None:
    rng = np.random.default_rng(SEED)
    values = {mask: float(v) for mask, v in enumerate(rng.uniform(-1.0, 1.0, size=2**N))}

    totals = [0.0] * N
    for perm in itertools.permutations(range(N)):
        mask = 0
        previous = values[0]
        for player in perm:
            mask |= 1 << player
            current = values[mask]
            totals[player] += current - previous
            previous = current
    phi = [t / math.factorial(N) for t in totals]

    fixture = {
        "n": N,
        "seed": SEED,
        "generator": "numpy default_rng uniform(-1, 1) over subsets in mask order",
        "base_value": values[0],
        "full_value": values[2**N - 1],
        "phi": phi,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixture, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {OUT}")
    print("efficiency residual:", values[2**N - 1] - values[0] - sum(phi))


if __name__ == "__main__":
    main()
