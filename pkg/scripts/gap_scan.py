"""Restricted norm of the transfer operator as the Galerkin size grows.

Prints one row per (n_max, K) with the norm and its change from the
previous n_max, which shows how fast the truncation converges.
"""
import argparse
import math

from ablab.transferop import build_operator, restricted_norm


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--E", type=float, default=0.5)
    p.add_argument("--lam", type=float, default=math.sqrt(5) - 2)
    p.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512])
    p.add_argument("--K", type=int, nargs="+", default=[8, 16])
    p.add_argument("--frame", default="tilde", choices=("raw", "tilde"))
    p.add_argument("--variant", default="plain", choices=("plain", "unitary"))
    args = p.parse_args(argv)
    prev = {}
    print("n_max,K,norm,change")
    for n in args.sizes:
        A = build_operator(args.E, args.lam, n, 16 * n, args.variant, args.frame)
        for K in args.K:
            if K >= n / 2:
                continue
            r = restricted_norm(A, K)
            change = abs(r.norm - prev[K]) if K in prev else float("nan")
            prev[K] = r.norm
            print(f"{n},{K},{r.norm:.6f},{change:.2e}")


if __name__ == "__main__":
    main()
