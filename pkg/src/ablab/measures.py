"""Furstenberg measures of the cocycle and Bernoulli convolutions.

Fourier conventions: on the projective line ``nu_hat(n) = int e(-n x) d nu``;
for a Bernoulli convolution on the real line ``nu_hat(xi) = E exp(-2 pi i xi X)``
with ``X = sum v_n lam^n``, which equals ``prod cos(2 pi lam^n xi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cocycle import fp_frame, transfer_matrix
from .errors import InsufficientCutoff, NonConvergence
from .seeding import random_signs
from .transferop import FourierVector, OperatorMatrix, build_operator

N_BINS = 1024
FP_TOL = 1e-9
FP_MAX_ITER = 100_000


@dataclass
class MeasureEstimate:
    """Fourier data, a histogram and provenance of a probability measure.

    ``fourier[n + n_max] = nu_hat(n)``; for Bernoulli convolutions ``n`` indexes
    frequencies ``n / period`` of the measure viewed on ``interval``.
    """

    fourier: np.ndarray
    histogram: np.ndarray
    interval: tuple = (0.0, 1.0)
    meta: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None
    residual: float | None = None
    iterations: int | None = None

    @property
    def n_max(self):
        return (self.fourier.size - 1) // 2

    def coeff(self, n):
        return self.fourier[n + self.n_max]

    def vector(self) -> FourierVector:
        return FourierVector(self.fourier)

    def check(self, tol=1e-12):
        """Assert the structural invariants; returns self."""
        f = self.fourier
        if abs(f[self.n_max] - 1) > tol:
            raise ValueError("nu_hat(0) != 1")
        if np.max(np.abs(f)) > 1 + 1e-9:
            raise ValueError("|nu_hat| exceeds 1")
        if abs(self.histogram.sum() - 1) > tol:
            raise ValueError("histogram mass != 1")
        if np.max(np.abs(f - np.conj(f[::-1]))) > 1e-9:
            raise ValueError("coefficients not hermitian")
        return self

    def to_dict(self):
        return {
            "meta": self.meta,
            "n_max": self.n_max,
            "interval": list(self.interval),
            "fourier_re": self.fourier.real.tolist(),
            "fourier_im": self.fourier.imag.tolist(),
            "stderr": None if self.stderr is None else self.stderr.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
        }

    def histogram_csv(self) -> str:
        lo, hi = self.interval
        edges = np.linspace(lo, hi, self.histogram.size + 1)
        lines = ["lo,hi,mass"]
        lines += [f"{a:.12g},{b:.12g},{m:.17g}" for a, b, m in zip(edges[:-1], edges[1:], self.histogram)]
        return "\n".join(lines) + "\n"


def fejer_histogram(fourier: np.ndarray, bins: int = N_BINS) -> np.ndarray:
    """Bin masses of the Fejer mean of a measure on [0, 1) from its coefficients.

    The density ``sum w_n nu_hat(n) e(n x)`` with triangular weights is
    integrated exactly over each bin; non-constant modes integrate to zero
    over [0, 1), so the masses add up to ``nu_hat(0)``.
    """
    n_max = (fourier.size - 1) // 2
    n = np.arange(-n_max, n_max + 1)
    w = (1 - np.abs(n) / (n_max + 1)) * fourier
    edges = np.arange(bins + 1) / bins
    out = np.full(bins, w[n_max].real / bins)
    nz = n != 0
    # int_a^b e(n x) dx = (e(n b) - e(n a)) / (2 pi i n)
    E = np.exp(2j * np.pi * np.outer(edges, n[nz]))
    prim = E @ (w[nz] / (2j * np.pi * n[nz]))
    out += np.diff(prim).real
    return out


# ---------------------------------------------------------------------------
# Furstenberg measure
# ---------------------------------------------------------------------------

def furstenberg_fixed_point(E: float, lam: float, n_max: int, frame: str = "raw",
                            M: int | None = None, A: OperatorMatrix | None = None,
                            tol: float = FP_TOL, max_iter: int = FP_MAX_ITER) -> MeasureEstimate:
    """Stationary measure from nu_hat = A^H nu_hat with nu_hat(0) = 1.

    Power iteration on the adjoint of the plain Galerkin matrix, renormalized
    each step so that the zero mode stays 1.
    """
    if A is None:
        A = build_operator(E, lam, n_max, M, "plain", frame)
    AH = A.adjoint()
    c = A.n_max
    v = np.zeros(2 * c + 1, dtype=complex)
    v[c] = 1.0
    for it in range(1, max_iter + 1):
        w = AH @ v
        w /= w[c]
        diff = float(np.linalg.norm(w - v))
        v = w
        if diff < tol:
            break
    else:
        raise NonConvergence(f"no fixed point after {max_iter} iterations (last step {diff:.2e})")
    v = 0.5 * (v + np.conj(v[::-1]))
    v[c] = 1.0
    resid = float(np.linalg.norm(v - AH @ v))
    meta = {"source": "fixed_point", "E": float(E), "lam": float(lam), "seed": None,
            "frame": frame, "n_max": c}
    return MeasureEstimate(v, fejer_histogram(v), (0.0, 1.0), meta, None, resid, it)


def _frame_mats(E, lam, frame):
    if frame == "raw":
        return transfer_matrix(E, lam, 1).to_array(), transfer_matrix(E, lam, -1).to_array()
    if frame == "tilde":
        F = fp_frame(E, lam)
        return F.g_plus_tilde.to_array(), F.g_minus_tilde.to_array()
    raise ValueError(f"unknown frame {frame!r}")


def furstenberg_mc(E: float, lam: float, n_samples: int, burn_in: int = 1000, seed: int = 0,
                   n_max: int = 32, frame: str = "raw", batches: int = 100,
                   chunk: int = 65536) -> MeasureEstimate:
    """Empirical stationary measure along one random orbit.

    The standard error of each coefficient comes from batch means over
    ``batches`` consecutive blocks of the orbit.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    gp, gm = _frame_mats(E, lam, frame)
    rng = np.random.default_rng(seed)
    signs = random_signs(rng, burn_in + n_samples)
    x0 = float(rng.random())
    xs = _kernels.projective_orbit(gp, gm, signs, x0, burn_in)

    n = np.arange(0, n_max + 1)
    bsum = np.zeros((batches, n_max + 1), dtype=complex)
    bcount = np.zeros(batches)
    batch_of = (np.arange(n_samples) * batches) // n_samples
    for s in range(0, n_samples, chunk):
        x = xs[s:s + chunk]
        vals = np.exp(-2j * np.pi * np.outer(x, n))
        b = batch_of[s:s + chunk]
        np.add.at(bsum, b, vals)
        np.add.at(bcount, b, 1)
    means = bsum / bcount[:, None]
    pos = bsum.sum(axis=0) / n_samples
    se_pos = np.sqrt(means.real.var(axis=0, ddof=1) + means.imag.var(axis=0, ddof=1)) / math.sqrt(batches)
    fourier = np.concatenate([np.conj(pos[:0:-1]), pos])
    fourier[n_max] = 1.0
    se = np.concatenate([se_pos[:0:-1], se_pos])
    se[n_max] = 0.0
    hist = np.histogram(xs, bins=N_BINS, range=(0.0, 1.0))[0] / n_samples
    meta = {"source": "monte_carlo", "E": float(E), "lam": float(lam), "seed": int(seed),
            "frame": frame, "n_max": n_max, "n_samples": int(n_samples), "burn_in": int(burn_in)}
    return MeasureEstimate(fourier, hist, (0.0, 1.0), meta, se)


# ---------------------------------------------------------------------------
# smoothness diagnostics
# ---------------------------------------------------------------------------

@dataclass
class SmoothnessReport:
    blocks: list
    energies: list
    slope: float
    r2: float
    coefficient_exponent: float
    pairings: list
    verdict: str

    def to_dict(self):
        return dict(self.__dict__)


def block_energies(fourier: np.ndarray):
    """B_k = (sum over 2^k <= |n| < 2^(k+1) of |nu_hat(n)|^2)^(1/2) for full blocks."""
    n_max = (fourier.size - 1) // 2
    ks, Bs = [], []
    k = 0
    while 2 ** (k + 1) - 1 <= n_max:
        n = np.arange(2 ** k, 2 ** (k + 1))
        e = np.sum(np.abs(fourier[n_max + n]) ** 2) + np.sum(np.abs(fourier[n_max - n]) ** 2)
        ks.append(k)
        Bs.append(float(np.sqrt(e)))
        k += 1
    return ks, Bs


def density_smoothness_probe(nu: MeasureEstimate, r: int = 1, floor: float = 1e-14) -> SmoothnessReport:
    """Dyadic-block decay of nu_hat and the pairing with block-supported test functions.

    ``slope`` fits log2 B_k against k.  With |nu_hat(n)| ~ n^(-a) one has
    slope = 1/2 - a, and the density lies in H^r when a > r + 1/2.  The
    pairing entry for block k is |<nu, f_k>| for the real test function
    f_k aligned with nu_hat on that block, scaled to sup |f_k| = 1.
    """
    ks, Bs = block_energies(nu.fourier)
    if len(ks) < 4:
        raise InsufficientCutoff(f"only {len(ks)} dyadic blocks below n_max = {nu.n_max}")
    use = [(k, b) for k, b in zip(ks, Bs) if b > floor]
    if len(use) >= 2:
        x = np.array([k for k, _ in use], float)
        y = np.log2([b for _, b in use])
        slope, icpt = np.polyfit(x, y, 1)
        resid = y - (slope * x + icpt)
        ss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    else:
        slope, r2 = -math.inf, 1.0
    a = 0.5 - slope

    pairings = []
    c = nu.n_max
    for k in ks:
        coeffs = np.zeros_like(nu.fourier)
        n = np.arange(2 ** k, 2 ** (k + 1))
        coeffs[c + n] = nu.fourier[c + n]
        coeffs[c - n] = nu.fourier[c - n]
        f = FourierVector(coeffs)
        sup = f.sup_norm()
        pairings.append(0.0 if sup == 0 else float(abs(np.vdot(nu.fourier, coeffs)) / sup))

    if a > r + 0.5:
        verdict = f"H^{r} density"
    elif a > 0.5:
        verdict = "L^2 density"
    else:
        verdict = "not a density"
    return SmoothnessReport(ks, Bs, float(slope), float(r2), float(a), pairings, verdict)


# ---------------------------------------------------------------------------
# Bernoulli convolutions
# ---------------------------------------------------------------------------

def default_terms(lam: float) -> int:
    return min(int(math.ceil(math.log(1e-16) / math.log(lam))), 10_000)


def bernoulli_fourier(lam: float, xi, terms: int | None = None):
    """prod_{n=0}^{terms} cos(2 pi lam^n xi); vectorized over ``xi``."""
    if not 0 < lam < 1:
        raise ValueError("need 0 < lambda < 1")
    terms = default_terms(lam) if terms is None else min(int(terms), 10_000)
    xi = np.asarray(xi, dtype=float)
    powers = lam ** np.arange(terms + 1)
    out = np.prod(np.cos(2 * np.pi * np.multiply.outer(xi, powers)), axis=-1)
    return float(out) if out.ndim == 0 else out


def bernoulli_tail_bound(lam: float, xi, terms: int | None = None):
    """exp(sum_{n > terms} (2 pi lam^n xi)^2 / 2) - 1."""
    terms = default_terms(lam) if terms is None else min(int(terms), 10_000)
    s = (2 * np.pi * np.asarray(xi, float)) ** 2 * lam ** (2 * (terms + 1)) / (2 * (1 - lam * lam))
    return np.expm1(s)


def bernoulli_interval(lam):
    r = 1.0 / (1.0 - lam)
    return (-r, r)


def bernoulli_estimate(lam: float, n_max: int = 256, terms: int | None = None) -> MeasureEstimate:
    """Coefficients nu_hat(n / P) on the support interval of length P, plus a Fejer histogram."""
    lo, hi = bernoulli_interval(lam)
    P = hi - lo
    n = np.arange(-n_max, n_max + 1)
    # shift so the interval starts at 0: factor e(n lo / P)
    f = bernoulli_fourier(lam, n / P, terms) * np.exp(2j * np.pi * n * lo / P)
    f[n_max] = 1.0
    hist = fejer_histogram(f)
    meta = {"source": "product_formula", "E": None, "lam": float(lam), "seed": None,
            "n_max": n_max, "period": P}
    return MeasureEstimate(f, hist, (lo, hi), meta)


def pisot_nondecay_probe(lam: float, k_max: int, terms: int | None = None) -> list:
    """|nu_hat_lam(lam^-k)| for k = 0..k_max."""
    return [abs(bernoulli_fourier(lam, lam ** -k, terms)) for k in range(k_max + 1)]
