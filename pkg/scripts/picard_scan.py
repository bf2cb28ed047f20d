"""Contraction threshold of the Picard map along the Serrin amplitude family."""

import argparse
import json
import time

from wl3lab.flows import serrin_scaled
from wl3lab.grid import GridSpec, TimeGrid
from wl3lab.picard import PicardConfig, contraction_threshold_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=float, default=8.0)
    ap.add_argument("--N", type=int, nargs="+", default=[32, 48])
    ap.add_argument("--steps", type=int, default=16)
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[0, 1, 3, 10, 30, 100])
    ap.add_argument("--iters", type=int, default=3)
    ap.add_argument("--bisect", type=int, default=6)
    args = ap.parse_args()

    tg = TimeGrid(0, 1, args.steps)
    for N in args.N:
        g = GridSpec(args.L, N)
        t0 = time.perf_counter()
        rep = contraction_threshold_scan(
            lambda a: serrin_scaled(a).sample(g, tg), args.amplitudes, PicardConfig(max_iters=args.iters), args.bisect
        )
        rec = rep.record()
        rec["N"], rec["seconds"] = N, round(time.perf_counter() - t0, 1)
        print(json.dumps(rec))


if __name__ == "__main__":
    main()
