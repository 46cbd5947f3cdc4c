"""Fourier-Galerkin discretization of the averaging operators on P^1(R).

The plain operator is ``T f = (f + f o tau_{g+} + f o tau_{g-}) / 3``; the
unitary variant replaces each composition by ``(tau_g')^(1/2) (f o tau_g)``.
Matrices act on coefficient vectors indexed by modes ``-n_max..n_max`` with
``A[n, n'] = <T e(n' .), e(n .)>``, computed by an M-point trapezoid rule
(one FFT per column block).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cache import ArtifactCache, operator_key
from .cocycle import fp_frame, mobius_angle, mobius_derivative, transfer_matrix
from .errors import PowerIterationStall, QuadratureUnderResolved, TruncationLeak

log = logging.getLogger(__name__)

QUAD_TOL = 1e-8
LEAK_TOL = 1e-4


# ---------------------------------------------------------------------------
# Fourier vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FourierVector:
    """Coefficients c_n, |n| <= n_max, of f(x) = sum c_n e(n x)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size % 2 != 1:
            raise ValueError("coefficient vector must have odd length 2*n_max+1")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_max(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def __getitem__(self, n):
        return self.coeffs[n + self.n_max]

    @classmethod
    def zeros(cls, n_max):
        return cls(np.zeros(2 * n_max + 1, dtype=complex))

    @classmethod
    def mode(cls, n, n_max, amplitude=1.0):
        c = np.zeros(2 * n_max + 1, dtype=complex)
        c[n + n_max] = amplitude
        return cls(c)

    @classmethod
    def constant(cls, value, n_max):
        return cls.mode(0, n_max, value)

    @classmethod
    def from_samples(cls, values, n_max):
        """Coefficients from samples on the grid j/len(values) (FFT)."""
        values = np.asarray(values)
        G = values.size
        if G < 2 * n_max + 1:
            raise ValueError("need at least 2*n_max+1 samples")
        F = np.fft.fft(values) / G
        n = np.arange(-n_max, n_max + 1)
        return cls(F[n % G])

    @classmethod
    def from_function(cls, func, n_max, oversample=8):
        G = oversample * (2 * n_max + 1)
        x = np.arange(G) / G
        return cls.from_samples(func(x), n_max)

    def resized(self, n_max) -> "FourierVector":
        """Zero-pad or truncate to a new cutoff."""
        out = np.zeros(2 * n_max + 1, dtype=complex)
        m = min(n_max, self.n_max)
        out[n_max - m: n_max + m + 1] = self.coeffs[self.n_max - m: self.n_max + m + 1]
        return FourierVector(out)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(2j * np.pi * np.multiply.outer(x, self.modes)) @ self.coeffs

    def grid_values(self, factor=4):
        """Values on the equispaced grid of size ``factor * (2 n_max + 1)``."""
        G = factor * (2 * self.n_max + 1)
        buf = np.zeros(G, dtype=complex)
        buf[self.modes % G] = self.coeffs
        return np.fft.ifft(buf) * G

    def sup_norm(self, factor=4) -> float:
        return float(np.max(np.abs(self.grid_values(factor))))

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def hs_norm(self, s) -> float:
        w = (1.0 + (2 * np.pi * self.modes) ** 2) ** (s / 2)
        return float(np.linalg.norm(w * self.coeffs))

    def derivative(self, variable="x") -> "FourierVector":
        """Spectral derivative in ``x`` or in the angle ``theta = pi x``."""
        scale = 2j * np.pi if variable == "x" else 2j
        return FourierVector(scale * self.modes * self.coeffs)

    def times_sin2(self) -> "FourierVector":
        """Multiply by sin^2(pi x) = 1/2 - (e(x) + e(-x))/4 (truncated)."""
        c = self.coeffs
        out = 0.5 * c
        out[1:] -= 0.25 * c[:-1]
        out[:-1] -= 0.25 * c[1:]
        return FourierVector(out)

    def is_real(self, tol=1e-12) -> bool:
        return bool(np.allclose(self.coeffs, np.conj(self.coeffs[::-1]), atol=tol))

    def __add__(self, other):
        return FourierVector(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return FourierVector(self.coeffs - other.coeffs)

    def __mul__(self, s):
        return FourierVector(self.coeffs * s)

    __rmul__ = __mul__


def random_trig_poly(n_max, rng, support=None, decay=None, real=True) -> FourierVector:
    """Random trigonometric polynomial with optional mode support/decay profile."""
    n = np.arange(-n_max, n_max + 1)
    c = rng.normal(size=n.size) + 1j * rng.normal(size=n.size)
    if decay is not None:
        c *= np.exp(-np.abs(n) / decay)
    if support is not None:
        c *= support(n)
    if real:
        c = 0.5 * (c + np.conj(c[::-1]))
    nrm = np.linalg.norm(c)
    return FourierVector(c / nrm if nrm else c)


# ---------------------------------------------------------------------------
# operator matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorMeta:
    E: float
    lam: float
    M: int
    variant: str = "plain"
    frame: str = "raw"


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    n_max: int
    entries: np.ndarray
    meta: OperatorMeta

    @property
    def modes(self):
        return np.arange(-self.n_max, self.n_max + 1)

    def block(self, n_max) -> "OperatorMatrix":
        """Central sub-block for a smaller cutoff."""
        if n_max > self.n_max:
            raise ValueError("sub-block cutoff exceeds matrix cutoff")
        lo = self.n_max - n_max
        sub = self.entries[lo: lo + 2 * n_max + 1, lo: lo + 2 * n_max + 1]
        return OperatorMatrix(n_max, sub.copy(), self.meta)

    def __matmul__(self, f: FourierVector) -> FourierVector:
        return FourierVector(self.entries @ f.resized(self.n_max).coeffs)

    def adjoint(self) -> np.ndarray:
        return self.entries.conj().T


def composition_matrix(g, n_max: int, M: int, unitary: bool = False, chunk: int = 256) -> np.ndarray:
    """Galerkin matrix of f -> f o tau_g (times sqrt(tau_g') if ``unitary``)."""
    x = np.arange(M) / M
    y = mobius_angle(g, x)
    weight = np.sqrt(mobius_derivative(g, x)) if unitary else None
    n = np.arange(-n_max, n_max + 1)
    rows = n % M
    out = np.empty((n.size, n.size), dtype=complex)
    for start in range(0, n.size, chunk):
        cols = n[start: start + chunk]
        Z = np.exp(2j * np.pi * np.multiply.outer(y, cols))
        if weight is not None:
            Z *= weight[:, None]
        F = np.fft.fft(Z, axis=0) / M
        out[:, start: start + chunk] = F[rows, :]
    return out


def cocycle_maps(E: float, lam: float, frame: str):
    if frame == "raw":
        return transfer_matrix(E, lam, 1), transfer_matrix(E, lam, -1)
    if frame == "tilde":
        fr = fp_frame(E, lam)
        return fr.g_plus_tilde, fr.g_minus_tilde
    raise ValueError(f"unknown frame {frame!r}")


def min_quadrature(n_max: int) -> int:
    """Smallest admissible M: eight samples per unit of mode bandwidth 2 n_max."""
    return 16 * n_max


def _assemble(E, lam, n_max, M, variant, frame):
    unitary = variant == "unitary"
    if variant not in ("plain", "unitary"):
        raise ValueError(f"unknown variant {variant!r}")
    gp, gm = cocycle_maps(E, lam, frame)
    size = 2 * n_max + 1
    return (np.eye(size) + composition_matrix(gp, n_max, M, unitary)
            + composition_matrix(gm, n_max, M, unitary)) / 3.0


def build_operator(E: float, lam: float, n_max: int, M: int | None = None,
                   variant: str = "plain", frame: str = "raw",
                   check_quadrature: bool = True, cache: ArtifactCache | None = None) -> OperatorMatrix:
    """Galerkin matrix of the averaging operator at (E, lambda).

    With ``M=None`` the quadrature size starts at ``16 n_max`` and is
    doubled until entries are stable to 1e-8.  With an explicit ``M`` a single
    doubling check is made and QuadratureUnderResolved is raised on failure.
    """
    E, lam = float(E), float(lam)
    explicit = M is not None
    if M is None:
        M = min_quadrature(n_max)
    if M < min_quadrature(n_max):
        raise ValueError(f"M={M} below 16 n_max = {min_quadrature(n_max)}")

    key = operator_key(E, lam, n_max, M, variant, frame)
    if cache is not None:
        hit = cache.load_operator(key)
        if hit is not None:
            return OperatorMatrix(n_max, hit[0], OperatorMeta(E, lam, M, variant, frame))

    A = _assemble(E, lam, n_max, M, variant, frame)
    if check_quadrature:
        for _ in range(6):
            A2 = _assemble(E, lam, n_max, 2 * M, variant, frame)
            diff = float(np.max(np.abs(A2 - A)))
            if diff <= QUAD_TOL:
                break
            if explicit:
                raise QuadratureUnderResolved(f"entries moved by {diff:.3e} when M doubled from {M}")
            M, A = 2 * M, A2
        else:
            raise QuadratureUnderResolved(f"no stable quadrature up to M={M}")

    if cache is not None:
        cache.store_operator(key, A, E=E, lam=lam, n_max=n_max, M=M, variant=variant, frame=frame)
    return OperatorMatrix(n_max, A, OperatorMeta(E, lam, M, variant, frame))


def average_operator(mats, n_max: int, M: int | None = None, unitary: bool = True) -> np.ndarray:
    """Galerkin matrix of (1/2R) sum_g (rho_g + rho_{g^-1}) over ``mats``."""
    M = M or min_quadrature(n_max)
    acc = np.zeros((2 * n_max + 1,) * 2, dtype=complex)
    for g in mats:
        acc += composition_matrix(g, n_max, M, unitary)
        acc += composition_matrix(g.inv(), n_max, M, unitary)
    return acc / (2 * len(mats))


# ---------------------------------------------------------------------------
# powers, norms, gaps
# ---------------------------------------------------------------------------

@dataclass
class PowerResult:
    vector: FourierVector
    leakage: list = field(default_factory=list)


def leakage(f: FourierVector, frac=0.1) -> float:
    top = np.abs(f.modes) > (1 - frac) * f.n_max
    return float(np.linalg.norm(f.coeffs[top]))


def apply_power(A: OperatorMatrix, f: FourierVector, m: int, check_leak: bool = True,
                history: bool = False):
    """A^m f by repeated products, tracking mass in the top 10% of modes.

    Returns a PowerResult; with ``history=True`` the vector attribute holds the
    list of iterates ``f, A f, ..., A^m f``.
    """
    if f.n_max > A.n_max:
        raise ValueError("vector cutoff exceeds operator cutoff")
    ref = f.l2_norm() or 1.0
    cur = f.resized(A.n_max).coeffs
    leaks, iterates = [], [FourierVector(cur)]
    for step in range(m):
        cur = A.entries @ cur
        lk = leakage(FourierVector(cur)) / ref
        leaks.append(lk)
        if check_leak and lk > LEAK_TOL:
            raise TruncationLeak(f"step {step + 1}: leakage {lk:.2e} of |f|_2; increase n_max")
        if history:
            iterates.append(FourierVector(cur))
    return PowerResult(iterates if history else FourierVector(cur), leaks)


def restricted_mask(n_max, K):
    return np.abs(np.arange(-n_max, n_max + 1)) >= K


def power_norm(B: np.ndarray, tol: float = 1e-6, max_iter: int = 10_000, seed: int = 0):
    """Largest singular value of B by power iteration on B^H B.

    Stops when the Rayleigh quotient moves by less than ``tol**2`` relative
    per step and the eigen-residual is below ``tol`` (relative).
    """
    if B.size == 0:
        return 0.0, 0
    rng = np.random.default_rng(seed)
    v = rng.normal(size=B.shape[1]) + 1j * rng.normal(size=B.shape[1])
    v /= np.linalg.norm(v)
    rho_old = None
    for it in range(1, max_iter + 1):
        w = B.conj().T @ (B @ v)
        rho = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, it
        resid = np.linalg.norm(w - rho * v) / max(rho, 1e-300)
        if rho_old is not None and abs(rho - rho_old) <= tol**2 * rho and resid <= tol:
            return float(np.sqrt(rho)), it
        rho_old = rho
        v = w / nw
    raise PowerIterationStall(f"no convergence after {max_iter} iterations")


@dataclass
class RestrictedNorm:
    K: int
    norm: float
    half_norm: float
    sensitivity: float
    iterations: int

    @property
    def gap(self):
        return 1.0 - self.norm


def restricted_norm(A: OperatorMatrix, K: int, tol: float = 1e-6, max_iter: int = 10_000) -> RestrictedNorm:
    """Norm of Q_K A Q_K (modes |n| >= K) plus its value on the half-size block."""
    if not K < A.n_max / 2:
        raise ValueError("need K < n_max / 2")
    q = restricted_mask(A.n_max, K)
    norm, it = power_norm(A.entries[np.ix_(q, q)], tol, max_iter)
    half = A.block(A.n_max // 2)
    qh = restricted_mask(half.n_max, K)
    half_norm, _ = power_norm(half.entries[np.ix_(qh, qh)], tol, max_iter)
    return RestrictedNorm(K, norm, half_norm, abs(norm - half_norm), it)


def gap_curve(A: OperatorMatrix, Ks) -> list[RestrictedNorm]:
    return [restricted_norm(A, K) for K in Ks]


@dataclass
class ExpanderNorm:
    R: int
    K: int
    norm: float
    below_half: bool


def expander_average_norm(alpha, tau: float, K: int, n_max: int, M: int | None = None,
                          require_brenner: bool = True, family=None) -> ExpanderNorm:
    """Restricted norm of the unitary average over the expander family."""
    from .cocycle import expander_family

    mats = family if family is not None else expander_family(alpha, tau, require_brenner)
    Avg = average_operator(mats, n_max, M, unitary=True)
    q = restricted_mask(n_max, K)
    B = Avg[np.ix_(q, q)]
    # rho_{g^-1} = rho_g^*, so the average is Hermitian; its eigenvalues near 1
    # cluster tightly when lambda is small, which stalls power iteration
    if np.max(np.abs(B - B.conj().T)) <= 1e-10:
        norm = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (B + B.conj().T)))))
    else:
        norm, _ = power_norm(B)
    return ExpanderNorm(len(mats), K, norm, norm < 0.5)


# ---------------------------------------------------------------------------
# fits and smoothing diagnostics
# ---------------------------------------------------------------------------

@dataclass
class Curve:
    x: list
    y: list
    rate: float = float("nan")
    r2: float = float("nan")

    def to_dict(self):
        return {"x": list(map(float, self.x)), "y": list(map(float, self.y)),
                "rate": self.rate, "r2": self.r2}


def exp_fit(x, y, floor=1e-13):
    """Fit log y = a + rate * x over points with y above ``floor * max(y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > floor * np.max(y)
    if keep.sum() < 3:
        return float("nan"), float("nan")
    lx, ly = x[keep], np.log(y[keep])
    slope, icpt = np.polyfit(lx, ly, 1)
    pred = slope * lx + icpt
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum((ly - pred) ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(r2)


def _curve(x, y):
    rate, r2 = exp_fit(x, y)
    return Curve(list(x), list(y), rate, r2)


@dataclass
class SmoothingReport:
    E: float
    lam: float
    boundedness: Curve
    dyadic_decay: dict
    sobolev: dict
    derivative_decay: dict
    single_mode: Curve
    no_gap: bool
    sobolev_envelope: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "E": self.E, "lam": self.lam, "no_gap": self.no_gap,
            "boundedness": self.boundedness.to_dict(),
            "dyadic_decay": {str(k): c.to_dict() for k, c in self.dyadic_decay.items()},
            "sobolev": {str(k): c.to_dict() for k, c in self.sobolev.items()},
            "sobolev_envelope": {str(k): v for k, v in self.sobolev_envelope.items()},
            "derivative_decay": {str(k): c.to_dict() for k, c in self.derivative_decay.items()},
            "single_mode": self.single_mode.to_dict(),
        }


def dyadic_support(k):
    return lambda n: ((np.abs(n) > 2**k) & (np.abs(n) <= 2 ** (k + 1))).astype(float)


def smoothing_suite(E: float, lam: float, ks=(3, 4, 5), m_max: int = 60, s_values=(1, 2),
                    n_max: int | None = None, M: int | None = None, frame: str = "tilde",
                    n_random: int = 8, seed: int = 0, A: OperatorMatrix | None = None) -> SmoothingReport:
    """Measured boundedness, dyadic decay, Sobolev and derivative-decay curves."""
    kmax = max(ks)
    n_max = n_max or 2 ** (kmax + 3)
    if n_max < 2 ** (kmax + 2):
        raise ValueError("n_max must be >= 2^(k+2) for the largest k")
    if A is None:
        A = build_operator(E, lam, n_max, M, "plain", frame)
    rng = np.random.default_rng(seed)
    ms = list(range(m_max + 1))

    def norms(f, fn):
        it = apply_power(A, f, m_max, check_leak=False, history=True).vector
        return [fn(g) for g in it]

    # (i) sup_m |T^m f|_2 / |f|_2 over random f
    sups = []
    for _ in range(n_random):
        f = random_trig_poly(n_max // 2, rng)
        vals = norms(f, FourierVector.l2_norm)
        sups.append(max(vals) / vals[0])
    bounded = Curve(list(range(n_random)), sups)

    # (ii) f supported on 2^k < |n| <= 2^(k+1)
    dyadic = {}
    for k in ks:
        f = random_trig_poly(n_max, rng, support=dyadic_support(k))
        dyadic[k] = _curve(ms, norms(f, FourierVector.l2_norm))

    # (iii) H^s norms against C|f|_2 + e^{-cm}|f|_{H^s}
    sob, env = {}, {}
    f = random_trig_poly(n_max // 2, rng, decay=n_max / 16)
    for s in s_values:
        vals = norms(f, lambda g, s=s: g.hs_norm(s))
        C = vals[-1] / f.l2_norm()
        excess = np.maximum(np.asarray(vals) - C * f.l2_norm(), 0.0)
        rate, r2 = exp_fit(ms, excess + 1e-300)
        sob[s] = Curve(ms, vals, rate, r2)
        env[s] = {"C": C, "rate": rate, "r2": r2,
                  "bounded_by_envelope": bool(all(
                      v <= C * f.l2_norm() + vals[0] * np.exp(rate * m) + 1e-9 * vals[0]
                      for m, v in zip(ms, vals))) if np.isfinite(rate) else False}

    # (iv) |(T^l f)'|_{H^s} for a smooth f
    deriv = {}
    g = random_trig_poly(n_max // 2, rng, decay=4.0)
    for s in s_values:
        deriv[s] = _curve(ms, norms(g, lambda h, s=s: h.derivative().hs_norm(s)))

    k0 = min(ks)
    single = FourierVector.mode(2**k0 + 1, n_max)
    single_curve = _curve(ms, norms(single, FourierVector.l2_norm))

    decays = [c.y[-1] / c.y[0] for c in dyadic.values()]
    no_gap = bool(max(decays) > 0.99)
    return SmoothingReport(E, lam, bounded, dyadic, sob, deriv, single_curve, no_gap, env)


def pairing(f: FourierVector, nu_fourier) -> complex:
    """<nu, f> = sum_n f_n conj(nu^(n)) with nu^(n) = int e(-n x) d nu."""
    if not isinstance(nu_fourier, FourierVector):
        nu_fourier = FourierVector(getattr(nu_fourier, "fourier", nu_fourier))
    m = min(f.n_max, nu_fourier.n_max)
    a = f.resized(m).coeffs
    b = nu_fourier.resized(m).coeffs
    return complex(np.sum(a * np.conj(b)))


@dataclass
class DeviationDecay:
    values: list
    rate: float
    r2: float
    mean: complex


def deviation_decay(E: float, lam: float, f: FourierVector, ell_max: int, nu,
                    frame: str = "raw", n_max: int | None = None, M: int | None = None,
                    A: OperatorMatrix | None = None) -> DeviationDecay:
    """d_l = sup |T^l f - <nu, f>| for l = 0..ell_max with an exponential fit."""
    nu_f = nu.fourier if hasattr(nu, "fourier") else nu
    if A is None:
        A = build_operator(E, lam, n_max or max(f.n_max, nu_f.n_max), M, "plain", frame)
    mean = pairing(f, nu_f)
    it = apply_power(A, f, ell_max, check_leak=False, history=True).vector
    d = []
    for g in it:
        vals = g.grid_values()
        d.append(float(np.max(np.abs(vals - mean))))
    rate, r2 = exp_fit(range(ell_max + 1), d)
    return DeviationDecay(d, rate, r2, mean)
