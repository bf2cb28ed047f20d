"""Convergence of div ũ for the localized Serrin flow under grid refinement.

    python scripts/divergence_order.py --L 4 --N 64 96 128
"""

import argparse

import numpy as np

from wl3lab.flows import serrin_flow
from wl3lab.grid import GridSpec, TimeGrid, div
from wl3lab.localization import localize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=float, default=4.0)
    ap.add_argument("--N", type=int, nargs="+", default=[64, 96, 128])
    ap.add_argument("--steps", type=int, default=8)
    args = ap.parse_args()

    tg = TimeGrid(0, 1, args.steps)
    prev = None
    print(f"{'N':>5} {'max|div|':>12} {'L2':>12} {'order':>7}")
    for N in args.N:
        g = GridSpec(args.L, N)
        u, _ = serrin_flow().sample(g, tg)
        d = div(localize(u, None, forcing=False).u_tilde.frame(-1)).values
        linf, l2 = np.abs(d).max(), np.sqrt(g.cell_volume * np.sum(d**2))
        order = "" if prev is None else f"{np.log(prev[1] / linf) / np.log(N / prev[0]):7.2f}"
        print(f"{N:5d} {linf:12.4e} {l2:12.4e} {order:>7}")
        prev = (N, linf)


if __name__ == "__main__":
    main()
