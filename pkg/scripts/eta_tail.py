"""Far-field decay of ∇η for the localized Serrin flow.

Fits a power law to shell maxima of |∇η| on ``2 < |x| < L/2``.
"""

import argparse

import numpy as np

from wl3lab.flows import serrin_flow
from wl3lab.grid import GridSpec, TimeGrid
from wl3lab.kernels import tail_exponent
from wl3lab.localization import localize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=float, nargs="+", default=[8.0, 16.0])
    ap.add_argument("--N", type=int, nargs="+", default=[64, 96])
    ap.add_argument("--h", default="x1*x2", help="harmonic polynomial for the Serrin flow")
    args = ap.parse_args()

    flow = serrin_flow(h=args.h)
    for L, N in zip(args.L, args.N):
        g = GridSpec(L, N)
        u, _ = flow.sample(g, TimeGrid(0, 1, 8))
        eta = localize(u, None, forcing=False).eta.values[-1]
        spec = g.fft(eta)
        mag = np.sqrt(sum(g.ifft(1j * k * spec) ** 2 for k in g.derivative_wavenumbers))
        slope, _ = tail_exponent(mag, g.radius(), 2.0, L / 2)
        print(f"L={L:g} N={N}: slope {slope:.3f}")


if __name__ == "__main__":
    main()
