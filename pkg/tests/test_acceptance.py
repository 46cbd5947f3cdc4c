"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import math
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from ablab.cli import run
from ablab.cocycle import (
    Mat2,
    fp_closed_form,
    freeness_certificate,
    mobius_angle,
    mobius_derivative,
    parabolic_generators,
    parabolic_pair,
    transfer_matrix,
    Word,
)
from ablab.config import ExperimentConfig
from ablab.measures import bernoulli_fourier, furstenberg_fixed_point, furstenberg_mc, pisot_nondecay_probe
from ablab.numberfield import NumberField, rational, real_root
from ablab.spectrum import (
    energy_derivative_probe,
    free_ids,
    halperin_alpha,
    ids_sturm,
    lyapunov_mc,
    n_to_l,
    phi_vector,
    support_window,
)
from ablab.transferop import build_operator, deviation_decay, restricted_norm, smoothing_suite

LAM = math.sqrt(5) - 2
E0 = 0.5


@pytest.fixture
def verdict(capsys):
    def emit(criterion, checks, elapsed, budget):
        checks = dict(checks)
        checks["runtime"] = (elapsed <= budget, f"{elapsed:.2f}s <= {budget}s")
        ok = all(c[0] for c in checks.values())
        with capsys.disabled():
            print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}")
            for name, (good, detail) in checks.items():
                print(f"    {'ok  ' if good else 'FAIL'} {name}: {detail}")
        failed = [n for n, c in checks.items() if not c[0]]
        assert ok, f"criterion {criterion} failed: {failed}"
    return emit


def random_sl2(rng):
    a, b, c = rng.normal(size=3)
    a = a if abs(a) > 0.1 else 0.1 + abs(a)
    return Mat2(a, b, c, (1 + b * c) / a)


def test_criterion_01_exact_algebra(verdict):
    t0 = time.perf_counter()
    K = NumberField(real_root([-1, 4, 1], (Fraction(1, 5), Fraction(3, 10))))
    lam = K.gen
    rng = np.random.default_rng(101)
    exact_ok = True
    for _ in range(20):
        E = K(Fraction(int(rng.integers(-999, 1000)), int(rng.integers(1, 1000))))
        gp, gm = transfer_matrix(E, lam, 1), transfer_matrix(E, lam, -1)
        h1, h2 = gp @ gm.inv(), gp.inv() @ gm
        exact_ok &= h1.entries() == (1, 2 * lam, 0, 1) and h2.entries() == (1, 0, 2 * lam, 1)
        parabolic_pair(E, lam)
    delta = 0.1
    kmin = math.acos((2 - delta) / 2)
    worst = 0.0
    for kappa in np.linspace(kmin, math.pi - kmin, 50):
        E = 2 * math.cos(kappa)
        c, s = math.cos(kappa), math.sin(kappa)
        S = Mat2(s**-0.5, -c * s**-0.5, 0.0, s**0.5)
        for sign in (1, -1):
            got = S @ transfer_matrix(E, LAM, sign) @ S.inv()
            ref = fp_closed_form(kappa, LAM, sign)
            worst = max(worst, max(abs(x - y) for x, y in zip(got.entries(), ref.entries())))
    verdict(1, {"parabolic identity exact (20 rational E)": (exact_ok, str(exact_ok)),
                "conjugated cocycle entrywise": (worst <= 1e-12, f"{worst:.2e} <= 1e-12")},
            time.perf_counter() - t0, 1.0)


def test_criterion_02_projective_calculus(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    comp, chain = 0.0, 0.0
    for _ in range(1000):
        g, h = random_sl2(rng), random_sl2(rng)
        x = rng.uniform()
        d = abs(mobius_angle(g @ h, x) - mobius_angle(g, mobius_angle(h, x)))
        comp = max(comp, min(d, 1 - d))
        lhs = mobius_derivative(g @ h, x)
        rhs = mobius_derivative(g, mobius_angle(h, x)) * mobius_derivative(h, x)
        chain = max(chain, abs(lhs - rhs) / abs(rhs))
    gens = (transfer_matrix(E0, LAM, 1), transfer_matrix(E0, LAM, -1))
    violations = 0
    for _ in range(1000):
        g = Mat2.identity()
        for i in rng.integers(0, 2, int(rng.integers(1, 13))):
            g = g @ gens[i]
        d = mobius_derivative(g, rng.uniform(size=64))
        n2 = g.norm() ** 2
        violations += int(np.sum((d < (1 - 1e-12) / n2) | (d > n2 * (1 + 1e-12))))
    verdict(2, {"composition": (comp <= 1e-10, f"{comp:.2e} <= 1e-10"),
                "chain rule (relative)": (chain <= 1e-8, f"{chain:.2e} <= 1e-8"),
                "sandwich violations": (violations == 0, str(violations))},
            time.perf_counter() - t0, 5.0)


def test_criterion_03_freeness(verdict):
    t0 = time.perf_counter()
    cert = freeness_certificate(real_root([-1, 4, 1], (Fraction(1, 5), Fraction(3, 10))),
                                "entry_two_lambda", 6)
    half = freeness_certificate(rational(1, 2), "entry_two_lambda", 6)
    target = Word.parse("AbAAbA")
    collision = half.status == "collision_found" and target in half.collisions
    is_minus_i = target.evaluate(parabolic_generators(1)).is_scalar(-1)
    verdict(3, {"sqrt5-2 free to length 6": (cert.status == "free_up_to_length",
                                             f"{cert.status}, {cert.words_checked} words"),
                "distances exceed floor": (cert.floor_ok and cert.min_distance > cert.floor.exact,
                                           f"min {float(cert.min_distance):.3e} vs floor {float(cert.floor.exact):.3e}"),
                "mu=1 collision (AB^-1A)^2 = -I": (collision and is_minus_i,
                                                   f"{half.status}, witness {half.witness}")},
            time.perf_counter() - t0, 60.0)


def test_criterion_04_free_case(verdict):
    t0 = time.perf_counter()
    Es = np.linspace(-1.8, 1.8, 37)
    L = [lyapunov_mc(E, 0.0, 10**6, seed=i).L for i, E in enumerate(Es)]
    worst_L = max(abs(v) for v in L)
    ids = ids_sturm(Es, 0.0, 4000, 50, seed=4)
    worst_N = float(np.max(np.abs(ids.N - free_ids(Es))))
    L3 = lyapunov_mc(3.0, 0.0, 10**6, seed=99).L
    verdict(4, {"|L| on |E| <= 1.8": (worst_L <= 5e-3, f"{worst_L:.2e} <= 5e-3"),
                "IDS vs 1 - arccos(E/2)/pi": (worst_N <= 2e-3, f"{worst_N:.2e} <= 2e-3"),
                "L(3)": (abs(L3 - 0.962424) <= 1e-3, f"{L3:.6f} vs 0.962424")},
            time.perf_counter() - t0, 120.0)


def test_criterion_05_thouless(verdict):
    t0 = time.perf_counter()
    grid = np.linspace(-1.5, 1.5, 31)
    window = support_window(LAM, step=5e-3)
    ids = ids_sturm(window, LAM, 4000, 100, seed=5)
    L_th = n_to_l(ids.E, ids.N, grid)
    L_mc = np.array([lyapunov_mc(E, LAM, 10**6, seed=i).L for i, E in enumerate(grid)])
    worst = float(np.max(np.abs(L_th - L_mc)))
    verdict(5, {"max |thouless(N) - L_mc|": (worst <= 2e-2, f"{worst:.2e} <= 2e-2")},
            time.perf_counter() - t0, 600.0)


def test_criterion_06_spectral_gap(verdict):
    t0 = time.perf_counter()
    A = build_operator(E0, LAM, 256, 4096, "plain", "tilde")
    curve = [restricted_norm(A, K) for K in (2, 4, 8, 16, 32, 64)]
    best = min(curve, key=lambda c: c.norm)
    gapped = [c for c in curve if c.norm <= 1 - 1e-4]
    stable = [c for c in gapped if c.sensitivity < 1e-3]
    A0 = build_operator(0.0, 0.0, 64, None, "plain", "tilde")
    control = restricted_norm(A0, 8).norm
    table = ", ".join(f"K={c.K}: {c.norm:.4f} (sens {c.sensitivity:.1e})" for c in curve)
    verdict(6, {"some K <= 64 with norm <= 1 - 1e-4": (bool(gapped), table),
                "truncation sensitivity < 1e-3 at a gapped K": (
                    bool(stable), f"best K={best.K}: |norm(256) - norm(128)| = {best.sensitivity:.2e}"),
                "lambda=0 control norm = 1": (abs(control - 1) <= 1e-9, f"{control:.12f}")},
            time.perf_counter() - t0, 600.0)


def test_criterion_07_smoothing(verdict):
    t0 = time.perf_counter()
    suite = smoothing_suite(E0, LAM, ks=(5,), m_max=60, n_max=256, seed=7)
    r2 = suite.dyadic_decay[5].r2
    A = build_operator(E0, LAM, 256, None, "plain", "raw")
    nu = furstenberg_fixed_point(E0, LAM, 256, A=A)
    dev = deviation_decay(E0, LAM, phi_vector(E0, LAM, 256), 40, nu, A=A)
    d_ratio = dev.values[40] / dev.values[20]
    der = energy_derivative_probe(E0, LAM, 1, ell=30, n_max=128)
    s_ratio = der.deriv_sup[30] / der.deriv_sup[15]
    verdict(7, {"dyadic k=5 exponential fit R^2": (r2 >= 0.95, f"{r2:.4f} >= 0.95"),
                "d40 / d20": (d_ratio <= 0.5, f"{d_ratio:.3e} <= 0.5"),
                "|(T^30 Phi)'| / |(T^15 Phi)'|": (s_ratio <= 0.5, f"{s_ratio:.3e} <= 0.5")},
            time.perf_counter() - t0, 600.0)


def test_criterion_08_derivative_expansion(verdict):
    t0 = time.perf_counter()
    h = 1e-4
    rep = energy_derivative_probe(E0, LAM, 1, ell=20, h=h, n_max=128)
    tol = 1e-4 + h**2 * max(1.0, rep.fd_scale)
    verdict(8, {"expansion vs finite difference": (rep.fd_error <= tol, f"{rep.fd_error:.2e} <= {tol:.2e}")},
            time.perf_counter() - t0, 300.0)


def test_criterion_09_furstenberg(verdict):
    t0 = time.perf_counter()
    fp = furstenberg_fixed_point(E0, LAM, 256)
    mc = furstenberg_mc(E0, LAM, 10**6, seed=9, n_max=32)
    c = fp.n_max
    diff = float(np.max(np.abs(fp.fourier[c - 32:c + 33] - mc.fourier)))
    verdict(9, {"fixed point vs MC, |n| <= 32": (diff <= 1e-2, f"{diff:.2e} <= 1e-2"),
                "stationarity residual": (fp.residual <= 1e-8, f"{fp.residual:.2e} <= 1e-8")},
            time.perf_counter() - t0, 300.0)


def test_criterion_10_bernoulli(verdict):
    t0 = time.perf_counter()
    xi = np.linspace(0.01, 10.0, 400)
    closed = np.sin(4 * np.pi * xi) / (4 * np.pi * xi)
    prod = bernoulli_fourier(0.5, xi)
    err = float(np.max(np.abs(prod - closed)))
    golden = pisot_nondecay_probe(2 / (1 + math.sqrt(5)), 20)
    gmin = min(golden[5:21])
    dyadic = pisot_nondecay_probe(0.5, 12)[12]
    verdict(10, {"lambda=1/2 product vs sinc": (err <= 1e-10, f"{err:.2e} <= 1e-10"),
                 "min_{5<=k<=20} |nu_(1/phi)(phi^k)|": (gmin >= 0.01, f"{gmin:.3e} >= 0.01"),
                 "|nu_(1/2)(2^12)|": (dyadic <= 1e-3, f"{dyadic:.2e} <= 1e-3")},
                time.perf_counter() - t0, 10.0)


def test_criterion_11_halperin(verdict):
    t0 = time.perf_counter()
    with mpmath.workdps(50):
        lam = mpmath.sqrt(5) - 2
        ref = 2 * mpmath.log(2) / mpmath.acosh(1 + lam)
    val = halperin_alpha(LAM)
    grid = np.linspace(0.05, 1.0, 20)
    vals = [halperin_alpha(x) for x in grid]
    mono = all(a > b for a, b in zip(vals, vals[1:]))
    verdict(11, {"alpha0(sqrt5-2) = 2.0557 +- 1e-3": (abs(val - 2.0557) <= 1e-3, f"{val:.6f}"),
                 "agrees with 50-digit evaluation": (abs(val - float(ref)) <= 1e-12,
                                                     f"{abs(val - float(ref)):.1e}"),
                 "monotone decreasing on 20-point grid": (mono, str(mono))},
                time.perf_counter() - t0, 1.0)


def test_criterion_12_reproducibility(verdict, tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig()
    run("spectrum", cfg.replace(outdir=str(tmp_path / "a")))
    run("spectrum", cfg.replace(outdir=str(tmp_path / "b")))
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("spectrum.csv", "ids_window.csv", "thouless.csv")}
    verdict(12, {f"{k} byte-identical": (v, str(v)) for k, v in same.items()},
            time.perf_counter() - t0, 600.0)
