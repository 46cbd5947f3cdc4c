"""|nu_lambda^(lambda^-k)| for Bernoulli convolutions, checked against mpmath."""
import argparse

import mpmath

from ablab.measures import pisot_nondecay_probe


def reference(lam, k, dps=40):
    with mpmath.workdps(dps):
        lam = mpmath.mpf(lam)
        x, p = 1 / lam**k, mpmath.mpf(1)
        while x > mpmath.mpf(10) ** (-dps + 5):
            p *= mpmath.cos(2 * mpmath.pi * x)
            x *= lam
        return float(abs(p))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.5, 0.6180339887498949])
    p.add_argument("--kmax", type=int, default=20)
    args = p.parse_args(argv)
    print("lambda,k,abs_nu_hat,mpmath")
    for lam in args.lambdas:
        for k, v in enumerate(pisot_nondecay_probe(lam, args.kmax)):
            print(f"{lam},{k},{v:.6e},{reference(lam, k):.6e}")


if __name__ == "__main__":
    main()
