"""Unit-determinant 2x2 matrices, the transfer cocycle and its projective action.

Lines through the origin are parametrized by ``x`` in [0, 1) with angle
``theta = pi * x``, so Fourier modes on the projective line are ``e(n x)``.
Matrices may carry floats or exact field elements; the exact domain is used
for identities and for freeness certification.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterator

import numpy as np

from .errors import (
    EnergyOutOfRange,
    HypothesisFailed,
    IdentityMismatch,
    LengthCapExceeded,
    NormBoundViolated,
)
from .numberfield import (
    AlgebraicNumber,
    FieldElement,
    NumberField,
    diophantine_floor,
    hypothesis_check,
)

MAX_ENUM_LENGTH = 14
MAX_CERT_LENGTH = 12


@dataclass(frozen=True)
class Mat2:
    """[[a, b], [c, d]] over floats, Fractions or field elements."""

    a: Any
    b: Any
    c: Any
    d: Any

    @classmethod
    def identity(cls, one=1.0):
        zero = one - one
        return cls(one, zero, zero, one)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        return cls(float(arr[0, 0]), float(arr[0, 1]), float(arr[1, 0]), float(arr[1, 1]))

    def __matmul__(self, o: "Mat2") -> "Mat2":
        return Mat2(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )

    def __neg__(self):
        return Mat2(-self.a, -self.b, -self.c, -self.d)

    def __sub__(self, o: "Mat2") -> "Mat2":
        return Mat2(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)

    def __add__(self, o: "Mat2") -> "Mat2":
        return Mat2(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)

    def scale(self, s) -> "Mat2":
        return Mat2(s * self.a, s * self.b, s * self.c, s * self.d)

    def det(self):
        return self.a * self.d - self.b * self.c

    def trace(self):
        return self.a + self.d

    def inv(self) -> "Mat2":
        """Inverse assuming unit determinant."""
        return Mat2(self.d, -self.b, -self.c, self.a)

    def entries(self):
        return (self.a, self.b, self.c, self.d)

    def to_array(self) -> np.ndarray:
        return np.array([[float(self.a), float(self.b)], [float(self.c), float(self.d)]])

    def norm(self) -> float:
        """Spectral norm (as a double)."""
        return float(np.linalg.norm(self.to_array(), 2))

    def is_scalar(self, s) -> bool:
        """Exact test ``self == s * I``."""
        return self.b == 0 and self.c == 0 and self.a == s and self.d == s


def _as_entries(g):
    if isinstance(g, Mat2):
        return tuple(float(v) for v in g.entries())
    arr = np.asarray(g, dtype=float)
    return float(arr[0, 0]), float(arr[0, 1]), float(arr[1, 0]), float(arr[1, 1])


def rotation(kappa: float) -> Mat2:
    c, s = math.cos(kappa), math.sin(kappa)
    return Mat2(c, -s, s, c)


def transfer_matrix(E, lam, sign: int = 1) -> Mat2:
    """g_+ = [[E+lam, -1], [1, 0]] (``sign=+1``) or g_- (``sign=-1``)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return Mat2(E + lam if sign > 0 else E - lam, -1, 1, 0)


def _exact(x):
    return isinstance(x, (FieldElement, Fraction, int))


def parabolic_pair(E, lam):
    """h1 = g+ g-^{-1} and h2 = g+^{-1} g-, checked against their closed form."""
    gp, gm = transfer_matrix(E, lam, 1), transfer_matrix(E, lam, -1)
    h1 = gp @ gm.inv()
    h2 = gp.inv() @ gm
    two_lam = 2 * lam
    want1 = (1, two_lam, 0, 1)
    want2 = (1, 0, two_lam, 1)
    if _exact(E) and _exact(lam):
        ok = h1.entries() == want1 and h2.entries() == want2
    else:
        got = np.array([float(v) for v in h1.entries() + h2.entries()])
        ref = np.array([float(v) for v in want1 + want2])
        ok = bool(np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, abs(E), abs(float(lam))) * 4)
    if not ok:
        raise IdentityMismatch(f"parabolic identity failed at E={E}, lambda={lam}")
    return h1, h2


@dataclass(frozen=True)
class FPFrame:
    E: float
    lam: float
    kappa: float
    S: Mat2
    g_plus_tilde: Mat2
    g_minus_tilde: Mat2
    conditioning: float
    max_identity_error: float


def fp_closed_form(kappa: float, lam: float, sign: int) -> Mat2:
    c, s = math.cos(kappa), math.sin(kappa)
    return Mat2(c + sign * lam, -s + sign * lam * c / s, s, c)


def fp_frame(E: float, lam: float = 0.0) -> FPFrame:
    """Conjugate the cocycle into a perturbed rotation (requires |E| < 2)."""
    if not abs(E) < 2:
        raise EnergyOutOfRange(f"|E| = {abs(E)} must be < 2")
    kappa = math.acos(E / 2)
    c, s = math.cos(kappa), math.sin(kappa)
    r = s ** -0.5
    S = Mat2(r, -c * r, 0.0, s * r)
    Sinv = S.inv()
    errs = []
    tilde = []
    for sign in (1, -1):
        gt = S @ transfer_matrix(E, lam, sign) @ Sinv
        ref = fp_closed_form(kappa, lam, sign)
        scale = max(1.0, max(abs(v) for v in ref.entries()))
        err = max(abs(x - y) for x, y in zip(gt.entries(), ref.entries()))
        if err > 1e-12 * scale:
            raise IdentityMismatch(f"conjugated cocycle off closed form by {err:.3e} at E={E}")
        errs.append(err / scale)
        tilde.append(gt)
    cond = S.norm() * Sinv.norm()
    return FPFrame(E, lam, kappa, S, tilde[0], tilde[1], cond, max(errs))


# ---------------------------------------------------------------------------
# projective action on x in [0, 1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectivePoint:
    """The line at angle ``pi * x``; ``x`` is kept in [0, 1)."""

    x: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(_wrap(self.x)))

    @property
    def theta(self):
        return math.pi * self.x


def _wrap(x):
    y = np.mod(x, 1.0)
    return np.where(y >= 1.0, 0.0, y) if isinstance(y, np.ndarray) else (0.0 if y >= 1.0 else y)


def _components(g, x):
    a, b, c, d = _as_entries(g)
    th = np.pi * np.asarray(x, dtype=float)
    ct, st = np.cos(th), np.sin(th)
    return a * ct + b * st, c * ct + d * st


def mobius_angle(g, p):
    """Image of the line ``p`` under ``g``; accepts floats, arrays or ProjectivePoint."""
    if isinstance(p, ProjectivePoint):
        return ProjectivePoint(float(mobius_angle(g, p.x)))
    u, v = _components(g, p)
    y = _wrap(np.arctan2(v, u) / np.pi)
    return float(y) if np.ndim(y) == 0 else y


def mobius_derivative(g, p):
    """d tau_g / d theta = 1 / |g (cos, sin)|^2 (same in the x variable)."""
    if isinstance(p, ProjectivePoint):
        p = p.x
    u, v = _components(g, p)
    out = 1.0 / (u * u + v * v)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# words in two generators
# ---------------------------------------------------------------------------

LETTERS = ("A", "A⁻¹", "B", "B⁻¹")
_ASCII = {"A": 0, "a": 1, "B": 2, "b": 3}


@dataclass(frozen=True)
class Word:
    """Reduced word; letters 0..3 stand for A, A^-1, B, B^-1."""

    letters: tuple = ()

    def __post_init__(self):
        for x, y in zip(self.letters, self.letters[1:]):
            if x ^ 1 == y:
                raise ValueError("word is not reduced")

    @classmethod
    def parse(cls, text: str) -> "Word":
        """Parse ``"AbAAbA"`` (lower case = inverse)."""
        return cls(tuple(_ASCII[ch] for ch in text if not ch.isspace()))

    def __len__(self):
        return len(self.letters)

    def __str__(self):
        return " ".join(LETTERS[i] for i in self.letters) or "1"

    def ascii(self):
        return "".join("AaBb"[i] for i in self.letters)

    def evaluate(self, gens):
        """Left-to-right product; ``gens`` is (A, A^-1, B, B^-1)."""
        out = None
        for i in self.letters:
            out = gens[i] if out is None else out @ gens[i]
        return out


def _check_cap(ell, cap):
    if ell > cap:
        raise LengthCapExceeded(f"length {ell} exceeds cap {cap}")


def reduced_words(ell: int, first_letters=(0, 1, 2, 3)) -> Iterator[Word]:
    """All reduced words of length 1..ell, by length then lexicographically.

    ``first_letters`` restricts the enumeration to the subtrees starting with
    those letters, which gives a deterministic partition for parallel search.
    """
    _check_cap(ell, MAX_ENUM_LENGTH)
    level = [(i,) for i in first_letters]
    for _ in range(ell):
        yield from (Word(w) for w in level)
        level = [w + (j,) for w in level for j in range(4) if j != w[-1] ^ 1]


def count_reduced_words(k: int) -> int:
    return 4 * 3 ** (k - 1)


def parabolic_generators(mu):
    A = Mat2(1, mu, 0, 1)
    B = Mat2(1, 0, mu, 1)
    return (A, A.inv(), B, B.inv())


@dataclass
class FreenessCertificate:
    lam: AlgebraicNumber
    mu_mode: str
    mu_entry: str
    max_length: int
    status: str
    witness: Word | None
    collisions: list = field(default_factory=list)
    min_distance: Fraction | None = None
    min_distance_word: Word | None = None
    floor: Any = None
    floor_ok: bool = True
    words_checked: int = 0

    def to_dict(self):
        return {
            "lambda": self.lam.to_dict(),
            "mu_mode": self.mu_mode,
            "mu_entry": self.mu_entry,
            "max_length": self.max_length,
            "status": self.status,
            "witness": None if self.witness is None else self.witness.ascii(),
            "collisions": [w.ascii() for w in self.collisions],
            "min_distance": None if self.min_distance is None else str(self.min_distance),
            "min_distance_float": None if self.min_distance is None else float(self.min_distance),
            "min_distance_word": None if self.min_distance_word is None else self.min_distance_word.ascii(),
            "floor": float(self.floor.exact) if self.floor else None,
            "floor_log10": self.floor.log10 if self.floor else None,
            "floor_ok": self.floor_ok,
            "words_checked": self.words_checked,
        }


def _distance_lower_bound(m: Mat2):
    """Certified lower bound on max-entry |w - 1|, exact rational."""
    best = Fraction(0)
    for e in (m.a - 1, m.b, m.c, m.d - 1):
        if isinstance(e, FieldElement):
            lb = e.abs_lower_bound()
        else:
            lb = abs(Fraction(e))
        best = max(best, lb)
    return best


def freeness_certificate(alpha: AlgebraicNumber, mu_mode: str, ell_max: int) -> FreenessCertificate:
    """Exhaustive exact search for +-identity among reduced words up to ``ell_max``.

    ``mu_mode`` is ``"entry_lambda"`` (parabolic entry lambda) or
    ``"entry_two_lambda"`` (entry 2*lambda, as in h1, h2 of the cocycle).
    Every non-collision word also gets a certified lower bound on its distance
    to the identity, compared with the diophantine floor at its own length.
    """
    _check_cap(ell_max, MAX_CERT_LENGTH)
    if mu_mode not in ("entry_lambda", "entry_two_lambda"):
        raise ValueError(f"unknown mu_mode {mu_mode!r}")
    K = NumberField(alpha)
    mult = 1 if mu_mode == "entry_lambda" else 2
    mu = K.gen * mult
    gens = parabolic_generators(mu)
    floors = {k: diophantine_floor(alpha, mult, k).exact for k in range(1, ell_max + 1)}

    one = K.one
    collisions = []
    cap = ell_max
    min_dist, min_word = None, None
    floor_ok = True
    checked = 0

    # depth-first over the prefix tree with memoized prefix products
    stack = [((i,), gens[i]) for i in (3, 2, 1, 0)]
    while stack:
        word, m = stack.pop()
        k = len(word)
        if k > cap:
            continue
        checked += 1
        if m.is_scalar(one) or m.is_scalar(-one):
            collisions.append(Word(word))
            cap = k
            continue
        dist = _distance_lower_bound(m)
        if dist < floors[k]:
            floor_ok = False
        if min_dist is None or dist < min_dist:
            min_dist, min_word = dist, Word(word)
        if k < cap:
            for j in (3, 2, 1, 0):
                if j != word[-1] ^ 1:
                    stack.append((word + (j,), m @ gens[j]))

    collisions = sorted((w for w in collisions if len(w) == cap), key=lambda w: (len(w), w.letters))
    status = "collision_found" if collisions else "free_up_to_length"
    return FreenessCertificate(
        lam=alpha,
        mu_mode=mu_mode,
        mu_entry="lambda" if mult == 1 else "2*lambda",
        max_length=ell_max,
        status=status,
        witness=collisions[0] if collisions else None,
        collisions=collisions,
        min_distance=min_dist,
        min_distance_word=min_word,
        floor=diophantine_floor(alpha, mult, ell_max),
        floor_ok=floor_ok,
        words_checked=checked,
    )


def expander_family(alpha, tau: float, require_brenner: bool = True) -> list[Mat2]:
    """g_r = h1^r h2^r (parabolic entry lambda) for r = 1..floor(lambda^-tau)."""
    if not 0 < tau < 0.5:
        raise ValueError("tau must lie in (0, 1/2)")
    lam = float(alpha)
    if not 0 < lam < 1:
        raise ValueError("expander family needs 0 < lambda < 1")
    if require_brenner:
        if not isinstance(alpha, AlgebraicNumber):
            raise HypothesisFailed("Brenner condition needs an algebraic lambda")
        if not hypothesis_check(alpha, C=alpha.degree + 1).brenner_ok:
            raise HypothesisFailed("no conjugate of 2*lambda has modulus >= 2")
    R = math.floor(math.exp(-tau * math.log(lam)) + 1e-12)
    bound = math.sqrt(lam)
    family = []
    for r in range(1, R + 1):
        t = r * lam
        g = Mat2(1.0 + t * t, t, t, 1.0)
        dist = (g - Mat2.identity()).norm()
        if not dist < bound:
            raise NormBoundViolated(f"|1 - g_{r}| = {dist:.4g} >= lambda^(1/2) = {bound:.4g}")
        family.append(g)
    return family
