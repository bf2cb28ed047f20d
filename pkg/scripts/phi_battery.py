"""Empirical weak-type bound of the Duhamel operator over a seeded battery."""

import argparse

import numpy as np

from wl3lab.grid import GridSpec, TimeGrid
from wl3lab.stokes import DuhamelConfig, phi_boundedness_probe, random_stress_battery


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=float, default=8.0)
    ap.add_argument("--N", type=int, default=48)
    ap.add_argument("--steps", type=int, default=64)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--r", type=float, default=3.0)
    args = ap.parse_args()

    g, tg = GridSpec(args.L, args.N), TimeGrid(0, 1, args.steps)
    rep = phi_boundedness_probe(random_stress_battery(g, tg, args.n, args.seed), DuhamelConfig(tg), args.r)
    print("ratios", np.array2string(rep.ratios, precision=4))
    print(f"C_emp {rep.C_emp:.5g}  first half {rep.C_half:.5g}  change {rep.stability_pct:.1f}%")


if __name__ == "__main__":
    main()
