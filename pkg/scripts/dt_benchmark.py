#!/usr/bin/env python3
"""
Distance-transform scaling check.

Times ``distance_transform_2d`` on square grids of doubling side and exits
non-zero when any doubling costs more than --max-ratio (4x cells, so ~4 is linear).
"""
import argparse
import json
import sys
import time
from typing import List

import numpy as np

from symparse.dt import distance_transform_2d

DEFAULT_SIDES = "32,64,128,256,512"
WEIGHTS = (0.1, -0.2, -0.05, -0.08)


def _time_side(side: int, repeats: int, rng: np.random.Generator) -> float:
    grid = rng.normal(size=(side, side))
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        distance_transform_2d(grid, WEIGHTS, anchor=(1.5, -2.0))
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sides", default=DEFAULT_SIDES, help="Comma-separated grid sides")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--max-ratio", type=float, default=4.5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    sides: List[int] = [int(s) for s in args.sides.split(",") if s.strip()]
    rng = np.random.default_rng(args.seed)
    # compile the kernels before timing
    distance_transform_2d(rng.normal(size=(4, 4)), WEIGHTS)

    timings = [{"side": s, "seconds": _time_side(s, args.repeats, rng)} for s in sides]
    ratios = [b["seconds"] / max(a["seconds"], 1e-9) for a, b in zip(timings, timings[1:])]
    ok = all(r <= args.max_ratio for r in ratios)
    output = {
        "ok": ok,
        "max_ratio": args.max_ratio,
        "timings": timings,
        "ratios": [round(r, 3) for r in ratios],
    }
    print(json.dumps(output, indent=2))
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
