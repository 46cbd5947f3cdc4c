"""Lyapunov exponent and IDS estimators, the Thouless transform, Halperin's
bound and energy-derivative probes.

The Lyapunov exponent is estimated two ways: a Monte Carlo product of random
transfer matrices, and the operator route ``L ~ T_E^l Phi_E``.  The IDS
comes from Sturm counts on random Dirichlet tridiagonals.  The Thouless
relation ``L(E) = int log|E - E'| dN(E')`` links the two.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import InsufficientResolution, SturmBreakdown, SupportTruncated
from .seeding import derive_seed, random_signs
from .transferop import FourierVector, OperatorMatrix, apply_power, build_operator, exp_fit

BURN_IN = 1000
N_BATCHES = 100


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyGrid:
    """Strictly increasing energies inside [-2 + delta, 2 - delta]."""

    delta: float
    points: tuple

    def __post_init__(self):
        pts = tuple(float(e) for e in self.points)
        object.__setattr__(self, "points", pts)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not pts:
            raise ValueError("empty energy grid")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("grid points must be strictly increasing")
        lim = 2 - self.delta
        if pts[0] < -lim - 1e-12 or pts[-1] > lim + 1e-12:
            raise ValueError(f"grid leaves [-{lim}, {lim}]")

    @classmethod
    def uniform(cls, lo, hi, count, delta=0.1):
        return cls(delta, tuple(np.linspace(lo, hi, count)))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def array(self):
        return np.asarray(self.points)


@dataclass(frozen=True)
class SpectralRow:
    E: float
    L_mc: float
    L_mc_se: float
    L_op: float
    L_op_resid: float
    N: float
    N_se: float
    alpha0: float

    COLUMNS = ("E", "L_mc", "L_mc_se", "L_op", "L_op_resid", "N", "N_se", "alpha0")

    def as_tuple(self):
        return tuple(getattr(self, c) for c in self.COLUMNS)


@dataclass(frozen=True)
class LyapunovEstimate:
    L: float
    stderr: float
    batch_means: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.L, self.stderr))


@dataclass(frozen=True)
class OperatorLyapunov:
    L: float
    residual: float
    residuals: list = field(default_factory=list, repr=False)

    def __iter__(self):
        return iter((self.L, self.residual))


@dataclass(frozen=True)
class IDSResult:
    E: np.ndarray
    N: np.ndarray
    stderr: np.ndarray
    retries: int = 0

    def rows(self):
        return list(zip(self.E.tolist(), self.N.tolist(), self.stderr.tolist()))

    def __iter__(self):
        return iter(self.rows())

    def __len__(self):
        return self.E.size


# ---------------------------------------------------------------------------
# Phi_E
# ---------------------------------------------------------------------------

def _x_of(p):
    return p.x if hasattr(p, "x") else p


def phi_E(E, lam, p):
    """Average over +- of log|g_+-(E) (cos, sin)| at theta = pi x."""
    th = np.pi * np.asarray(_x_of(p), dtype=float)
    c, s = np.cos(th), np.sin(th)
    out = 0.0
    for a in (E + lam, E - lam):
        u = a * c - s
        out = out + 0.25 * np.log(u * u + c * c)
    return float(out) if np.ndim(out) == 0 else out


def dphi_dE(E, lam, p):
    """Partial derivative of phi_E in E."""
    th = np.pi * np.asarray(_x_of(p), dtype=float)
    c, s = np.cos(th), np.sin(th)
    out = 0.0
    for a in (E + lam, E - lam):
        u = a * c - s
        out = out + 0.5 * u * c / (u * u + c * c)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Lyapunov exponent
# ---------------------------------------------------------------------------

def lyapunov_mc(E: float, lam: float, steps: int, seed: int,
                batches: int = N_BATCHES, burn_in: int = BURN_IN) -> LyapunovEstimate:
    """Random product estimate with batch-means standard error.

    Parameters
    ----------
    steps : int
        Number of recorded steps (after a burn-in of ``burn_in`` steps).
    seed : int
        Seed of the sign sequence; the same seed gives the same estimate.
    """
    if steps < 1000:
        raise ValueError("steps must be >= 1000")
    if batches < 2 or batches > steps:
        raise ValueError("need 2 <= batches <= steps")
    signs = random_signs(np.random.default_rng(seed), burn_in + steps)
    sums, counts = _kernels.lyapunov_batches(float(E + lam), float(E - lam), signs, burn_in, batches)
    means = sums / counts
    L = float(sums.sum() / steps)
    se = float(np.std(means, ddof=1) / math.sqrt(batches))
    return LyapunovEstimate(L, se, means)


def phi_vector(E, lam, n_max, oversample=8) -> FourierVector:
    return FourierVector.from_function(lambda x: phi_E(E, lam, x), n_max, oversample)


def lyapunov_operator(E: float, lam: float, ell: int, n_max: int = 128, M: int | None = None,
                      A: OperatorMatrix | None = None, check_leak: bool = True) -> OperatorLyapunov:
    """L from T_E^l Phi_E: grid mean and sup - inf oscillation of the iterate."""
    if A is None:
        A = build_operator(E, lam, n_max, M, "plain", "raw")
    f = phi_vector(E, lam, A.n_max)
    it = apply_power(A, f, ell, check_leak=check_leak, history=True).vector
    resid = []
    for g in it:
        v = g.grid_values().real
        resid.append(float(v.max() - v.min()))
    last = it[-1].grid_values().real
    return OperatorLyapunov(float(last.mean()), resid[-1], resid)


# ---------------------------------------------------------------------------
# IDS by Sturm counting
# ---------------------------------------------------------------------------

def _sample_counts(diag, energies):
    counts = _kernels.sturm_counts(diag, energies)
    retries = 0
    bad = np.flatnonzero(counts < 0)
    for i in bad:
        for attempt in range(1, 4):
            retries += 1
            shifted = energies[i] + attempt * 1e-12 * max(1.0, abs(energies[i]))
            c = _kernels.sturm_counts(diag, np.array([shifted]))[0]
            if c >= 0:
                counts[i] = c
                break
        else:
            raise SturmBreakdown(f"zero pivot at E={energies[i]} after 3 perturbations")
    return counts, retries


def ids_sturm(grid, lam: float, sites: int, samples: int, seed: int, threads: int = 1) -> IDSResult:
    """Dirichlet-box IDS: mean fraction of eigenvalues below E over random samples.

    ``grid`` may be an EnergyGrid or any increasing array of energies (the
    Thouless transform needs a window wider than the spectrum).  Sample ``j``
    uses the seed derived from ``(seed, j, "ids")``.
    """
    if sites < 100:
        raise ValueError("sites must be >= 100")
    if samples < 2:
        raise ValueError("samples must be >= 2")
    energies = np.ascontiguousarray(grid.array() if isinstance(grid, EnergyGrid) else grid, dtype=float)

    def task(j):
        rng = np.random.default_rng(derive_seed(seed, j, "ids"))
        diag = lam * random_signs(rng, sites).astype(float)
        return _sample_counts(diag, energies)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(task, range(samples)))
    else:
        results = [task(j) for j in range(samples)]
    frac = np.stack([r[0] for r in results]) / sites
    N = frac.mean(axis=0)
    se = frac.std(axis=0, ddof=1) / math.sqrt(samples)
    return IDSResult(energies, N, se, sum(r[1] for r in results))


def free_ids(E):
    """IDS of the free Laplacian, 1 - arccos(E/2)/pi, clipped outside [-2, 2]."""
    return 1.0 - np.arccos(np.clip(np.asarray(E, dtype=float) / 2, -1, 1)) / np.pi


# ---------------------------------------------------------------------------
# Thouless transform
# ---------------------------------------------------------------------------

def _G(u):
    """Primitive of log|u| with G(0) = 0."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(au > 0, u * np.log(np.where(au > 0, au, 1.0)) - u, 0.0)
    return out


def _unpack(gridN):
    if isinstance(gridN, IDSResult):
        return gridN.E, gridN.N
    arr = np.asarray(list(gridN) if not isinstance(gridN, np.ndarray) else gridN, dtype=float)
    return arr[:, 0], arr[:, 1]


def n_to_l(E, N, at=None, tol=1e-3):
    """L(at) = int log|at - E'| dN(E') with N piecewise linear between grid points.

    Each cell carries uniform density, so the log kernel is integrated exactly
    through its primitive; the singular cell needs no special treatment.
    """
    E, N = np.asarray(E, float), np.asarray(N, float)
    if N[-1] < 1 - tol:
        raise SupportTruncated(f"N(E_max) = {N[-1]:.6f} < 1 - {tol}")
    if N[0] > tol:
        raise SupportTruncated(f"N(E_min) = {N[0]:.6f} > {tol}")
    at = E if at is None else np.atleast_1d(np.asarray(at, float))
    dN = np.diff(N)
    h = np.diff(E)
    w = dN / h
    keep = dN != 0
    a, b, w = E[:-1][keep], E[1:][keep], w[keep]
    out = np.empty(at.size)
    for i, x in enumerate(at):
        out[i] = np.dot(w, _G(b - x) - _G(a - x))
    return out


def _tail_kernel(x, e, lo, hi):
    """int over y outside [lo, hi] of 1/((y - e)(x - y)) dy, for x, e inside."""
    x, e = x[:, None], e[None, :]
    d = x - e
    near = np.abs(d) < 1e-12
    ds = np.where(near, 1.0, d)
    right = np.where(near, -1.0 / (hi - x), np.log((hi - x) / (hi - e)) / ds)
    left = np.where(near, -1.0 / (x - lo), np.log((e - lo) / (x - lo)) / ds)
    return right + left


def l_to_n(E, L, iterations: int = 4):
    """Invert the Thouless relation on a uniform grid wider than the spectrum.

    rho(E) = -(1/pi^2) PV int L'(y) / (E - y) dy.  Inside the window the
    principal value uses the odd-offset rule, which cancels the singular
    point symmetrically.  Outside the window L'(y) = int dN(e) / (y - e) is
    rebuilt from the current estimate of N and integrated analytically;
    starting from a point mass at the centre, a few sweeps of this fixed
    point converge.  rho is tapered to zero at the two window endpoints,
    which lie outside the spectrum, and N is its running integral.
    """
    E, L = np.asarray(E, float), np.asarray(L, float)
    h = E[1] - E[0]
    if not np.allclose(np.diff(E), h, rtol=1e-9, atol=1e-12):
        raise ValueError("L_to_N needs a uniform grid")
    n = E.size
    lo, hi = E[0], E[-1]
    inner = E[1:-1]
    dL = np.gradient(L, h)
    off = np.arange(1, n - 1)[:, None] - np.arange(n)[None, :]
    with np.errstate(divide="ignore"):
        P = np.where(off % 2 == 1, 2 * h / (inner[:, None] - E[None, :]), 0.0)
    pv_in = P @ dL
    mid = 0.5 * (E[1:] + E[:-1])
    K = _tail_kernel(inner, mid, lo, hi)
    mass = np.zeros(n - 1)
    mass[np.argmin(np.abs(mid - 0.5 * (lo + hi)))] = 1.0
    for _ in range(iterations):
        rho = np.zeros(n)
        rho[1:-1] = np.clip(-(pv_in + K @ mass) / math.pi ** 2, 0.0, None)
        mass = 0.5 * h * (rho[1:] + rho[:-1])
    N = np.concatenate([[0.0], np.cumsum(mass)])
    return np.clip(N, 0.0, 1.0)


def thouless(gridN, direction: str = "N_to_L", at=None):
    """Thouless transform on a list of (E, value) pairs; returns (E, value) pairs."""
    E, V = _unpack(gridN)
    if direction == "N_to_L":
        out = n_to_l(E, V, at)
        pts = E if at is None else np.atleast_1d(at)
    elif direction == "L_to_N":
        out = l_to_n(E, V)
        pts = E
    else:
        raise ValueError("direction must be N_to_L or L_to_N")
    return list(zip(np.asarray(pts, float).tolist(), out.tolist()))


# ---------------------------------------------------------------------------
# Hoelder regularity of the IDS
# ---------------------------------------------------------------------------

def halperin_alpha(lam: float) -> float:
    """2 log 2 / arccosh(1 + lambda)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return 2 * math.log(2) / math.acosh(1 + lam)


def holder_probe(ids, window_scales=None, min_scales: int = 4):
    """Slope of log osc(N; I) against log |I| over dyadic windows.

    ``window_scales`` are window lengths in grid steps (default 1, 2, 4, ...
    up to a quarter of the grid).  Returns ``(alpha_hat, r2)``.
    """
    E, N = _unpack(ids)
    h = float(np.median(np.diff(E)))
    n = E.size
    if window_scales is None:
        window_scales = [2 ** j for j in range(int(math.log2(max(n // 4, 1))) + 1)]
    logs_w, logs_o = [], []
    for s in window_scales:
        s = int(s)
        if s < 1 or s >= n:
            continue
        osc = float(np.max(np.abs(N[s:] - N[:-s])))
        if osc > 0:
            logs_w.append(math.log(s * h))
            logs_o.append(math.log(osc))
    if len(logs_w) < min_scales:
        raise InsufficientResolution(f"only {len(logs_w)} usable scales, need {min_scales}")
    x, y = np.array(logs_w), np.array(logs_o)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(slope), r2


# ---------------------------------------------------------------------------
# energy derivatives of T_E^l Phi_E
# ---------------------------------------------------------------------------

@dataclass
class DerivativeReport:
    E: float
    lam: float
    order: int
    ell: int
    h: float
    fd_error: float
    fd_scale: float
    mean_derivative: float
    deriv_sup: list
    nested: list = field(default_factory=list)
    nested_rate: float | None = None
    nested_r2: float | None = None

    def to_dict(self):
        return asdict(self)


def _power(A, f, m):
    return apply_power(A, f, m, check_leak=False).vector


def _derivative_expansion(A, E, lam, ell):
    """d/dE (T^l Phi_E) by the averaged chain rule.

    With d tau_g / dE = -sin^2 tau_g for g = g_+- and 0 for the identity
    letter, d T/dE f = -(T - I/3)(f' sin^2), so

        d(T^l Phi) = T^l dPhi - sum_m T^(l-m) (T - I/3) [(T^(m-1) Phi)' sin^2].
    """
    n = A.n_max
    phi = phi_vector(E, lam, n)
    dphi = FourierVector.from_function(lambda x: dphi_dE(E, lam, x), n)
    out = _power(A, dphi, ell)
    iterates = apply_power(A, phi, ell, check_leak=False, history=True).vector
    sups = []
    for m in range(1, ell + 1):
        d = iterates[m - 1].derivative("theta")
        sups.append(d.sup_norm())
        w = d.times_sin2()
        w = (A @ w) - w * (1 / 3)
        out = out - _power(A, w, ell - m)
    sups.append(iterates[ell].derivative("theta").sup_norm())
    return out, sups


def energy_derivative_probe(E: float, lam: float, k: int = 1, ell: int = 20, h: float = 1e-4,
                            n_max: int = 128, M: int | None = None,
                            splits=None) -> DerivativeReport:
    """Expansion of d/dE (T_E^l Phi_E), cross-checked by a centered difference.

    For ``k = 2`` the nested terms T^m1 (sin^2 (T^m2 (sin^2 (T^m3 Phi)')')')
    are evaluated over ``splits`` (pairs m2, m3) and their sup norms fitted
    against m2 + m3.
    """
    if k not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if M is None:
        M = build_operator(E, lam, n_max, None, "plain", "raw").meta.M
    A = build_operator(E, lam, n_max, M, "plain", "raw", check_quadrature=False)
    expd, sups = _derivative_expansion(A, E, lam, ell)

    vals = []
    for Es in (E + h, E - h):
        As = build_operator(Es, lam, n_max, M, "plain", "raw", check_quadrature=False)
        vals.append(_power(As, phi_vector(Es, lam, n_max), ell).grid_values().real)
    fd = (vals[0] - vals[1]) / (2 * h)
    ex = expd.grid_values().real
    err = float(np.max(np.abs(ex - fd)))
    rep = DerivativeReport(E, lam, k, ell, h, err, float(np.max(np.abs(fd))), float(ex.mean()), sups)

    if k == 2:
        if splits is None:
            splits = [(m, m) for m in range(0, ell // 2 + 1, max(1, ell // 10))]
        phi = phi_vector(E, lam, n_max)
        xs, ys = [], []
        for m2, m3 in splits:
            m1 = max(ell - m2 - m3, 0)
            inner = _power(A, phi, m3).derivative("theta").times_sin2()
            mid = _power(A, inner, m2).derivative("theta").times_sin2()
            term = _power(A, mid, m1).sup_norm()
            rep.nested.append({"m1": m1, "m2": m2, "m3": m3, "sup": term})
            xs.append(m2 + m3)
            ys.append(term)
        if len(xs) >= 2:
            rep.nested_rate, rep.nested_r2 = exp_fit(xs, ys)
    return rep


# ---------------------------------------------------------------------------
# full table
# ---------------------------------------------------------------------------

def support_window(lam, margin=0.3, step=None, sites=None):
    """Uniform energy window covering [-2 - lam, 2 + lam] with a margin."""
    hi = 2 + abs(lam) + margin
    step = step or 5e-3
    n = int(round(2 * hi / step)) + 1
    return np.linspace(-hi, hi, n)


def spectral_rows(grid: EnergyGrid, lam: float, steps: int, sites: int, samples: int,
                  seed: int, ell: int = 40, n_max: int = 128, threads: int = 1,
                  operator: bool = True):
    """One SpectralRow per grid energy.  Task ``i`` draws from seed (seed, i, tag)."""
    Es = grid.array()
    ids = ids_sturm(Es, lam, sites, samples, seed, threads)
    alpha0 = halperin_alpha(lam) if lam > 0 else math.inf

    def task(i):
        E = float(Es[i])
        mc = lyapunov_mc(E, lam, steps, derive_seed(seed, i, "lyapunov"))
        if operator:
            op = lyapunov_operator(E, lam, ell, n_max, check_leak=False)
            L_op, res = op.L, op.residual
        else:
            L_op, res = math.nan, math.nan
        return SpectralRow(E, mc.L, mc.stderr, L_op, res, float(ids.N[i]), float(ids.stderr[i]), alpha0)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(task, range(len(Es))))
    return [task(i) for i in range(len(Es))]
