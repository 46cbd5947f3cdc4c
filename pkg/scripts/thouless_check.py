"""Compare the Lyapunov exponent from random products with the one
recovered from the integrated density of states."""
import argparse
import math

import numpy as np

from ablab.spectrum import ids_sturm, lyapunov_mc, n_to_l, support_window


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--lam", type=float, default=math.sqrt(5) - 2)
    p.add_argument("--points", type=int, default=31)
    p.add_argument("--emax", type=float, default=1.5)
    p.add_argument("--sites", type=int, default=4000)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--steps", type=int, default=10**6)
    p.add_argument("--step", type=float, default=5e-3, help="IDS window spacing")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    grid = np.linspace(-args.emax, args.emax, args.points)
    ids = ids_sturm(support_window(args.lam, step=args.step), args.lam, args.sites, args.samples, args.seed)
    L_th = n_to_l(ids.E, ids.N, grid)
    print("E,L_thouless,L_mc,abs_diff")
    worst = 0.0
    for i, (E, a) in enumerate(zip(grid, L_th)):
        b = lyapunov_mc(E, args.lam, args.steps, seed=args.seed + i).L
        worst = max(worst, abs(a - b))
        print(f"{E:.4f},{a:.6f},{b:.6f},{abs(a - b):.2e}")
    print(f"# max abs diff {worst:.3e}")


if __name__ == "__main__":
    main()
