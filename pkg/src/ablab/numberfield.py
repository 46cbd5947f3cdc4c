"""Exact arithmetic in Q(lambda) and arithmetic checks on the coupling.

A coupling is stored as its primitive integer minimal polynomial together
with a rational isolating interval.  Field elements are coordinate vectors
of rationals in the power basis 1, lambda, ..., lambda^(d-1); no floating
point enters any decision made here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Sequence

import numpy as np

from .errors import (
    ConvergenceFailure,
    DivisionByZero,
    MultipleRootsInInterval,
    NoRootInInterval,
    ReduciblePolynomial,
)

ROOT_WIDTH = Fraction(1, 10**12)


# ---------------------------------------------------------------------------
# dense polynomials over Q, coefficient lists low -> high
# ---------------------------------------------------------------------------

def _trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def poly_eval(p, x):
    acc = 0
    for c in reversed(p):
        acc = acc * x + c
    return acc


def poly_mul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return _trim(out)


def poly_sub(p, q):
    n = max(len(p), len(q))
    p = list(p) + [0] * (n - len(p))
    q = list(q) + [0] * (n - len(q))
    return _trim([a - b for a, b in zip(p, q)])


def poly_divmod(p, q):
    p = [Fraction(c) for c in _trim(p)]
    q = [Fraction(c) for c in _trim(q)]
    if q == [0]:
        raise DivisionByZero("polynomial division by zero")
    if len(p) < len(q):
        return [Fraction(0)], p
    quot = [Fraction(0)] * (len(p) - len(q) + 1)
    lead = q[-1]
    for k in range(len(p) - len(q), -1, -1):
        coef = p[k + len(q) - 1] / lead
        quot[k] = coef
        if coef:
            for j, b in enumerate(q):
                p[k + j] -= coef * b
    rem = _trim(p[: len(q) - 1] or [Fraction(0)])
    return _trim(quot), rem


def poly_derivative(p):
    if len(p) == 1:
        return [Fraction(0)]
    return [i * c for i, c in enumerate(p)][1:]


def sturm_sequence(p):
    seq = [[Fraction(c) for c in p], poly_derivative([Fraction(c) for c in p])]
    while len(seq[-1]) > 1 or seq[-1][0] != 0:
        _, r = poly_divmod(seq[-2], seq[-1])
        if r == [0]:
            break
        seq.append([-c for c in r])
    return seq


def _sign_changes(values):
    signs = [v > 0 for v in values if v != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def sturm_count(seq, lo, hi):
    """Number of distinct real roots in ``(lo, hi]`` (``lo`` not a root)."""
    return _sign_changes([poly_eval(s, lo) for s in seq]) - _sign_changes(
        [poly_eval(s, hi) for s in seq]
    )


def _divisors(n):
    n = abs(n)
    small, large = [], []
    i = 1
    while i * i <= n:
        if n % i == 0:
            small.append(i)
            if i * i != n:
                large.append(n // i)
        i += 1
    return small + large[::-1]


def _primitive(coeffs):
    coeffs = [int(c) for c in coeffs]
    g = reduce(math.gcd, coeffs, 0)
    coeffs = [c // g for c in coeffs]
    if coeffs[-1] < 0:
        coeffs = [-c for c in coeffs]
    return coeffs


def rational_roots(coeffs):
    """All rational roots of an integer polynomial (rational-root test)."""
    coeffs = _trim(coeffs)
    if coeffs[0] == 0:
        rest = rational_roots(coeffs[1:]) if len(coeffs) > 2 else []
        return sorted({Fraction(0), *rest})
    roots = set()
    for p in _divisors(coeffs[0]):
        for q in _divisors(coeffs[-1]):
            for cand in (Fraction(p, q), Fraction(-p, q)):
                if poly_eval(coeffs, cand) == 0:
                    roots.add(cand)
    return sorted(roots)


def _has_quadratic_factor(coeffs):
    """Quartic check: does the polynomial split into two rational quadratics?

    Candidate factors come from pairing the numerical roots (the pair sums are
    the roots of the resolvent cubic); each candidate is confirmed by exact
    division, so a positive answer is always certified.
    """
    roots = np.roots([float(c) for c in reversed(coeffs)])
    lead = coeffs[-1]
    for i in range(4):
        for j in range(i + 1, 4):
            s = roots[i] + roots[j]
            p = roots[i] * roots[j]
            if abs(s.imag) > 1e-6 * max(1.0, abs(s)) or abs(p.imag) > 1e-6 * max(1.0, abs(p)):
                continue
            for c in _divisors(lead):
                cs, cp = c * s.real, c * p.real
                rs, rp = round(cs), round(cp)
                if abs(cs - rs) > 1e-6 * max(1.0, abs(cs)) or abs(cp - rp) > 1e-6 * max(1.0, abs(cp)):
                    continue
                _, rem = poly_divmod(coeffs, [rp, -rs, c])
                if rem == [0]:
                    return True
    return False


def is_irreducible(coeffs):
    """Exact irreducibility test for degree <= 4; ``None`` above that."""
    d = len(coeffs) - 1
    if d == 1:
        return True
    if d > 4:
        return None
    if rational_roots(coeffs):
        return False
    if d == 4 and _has_quadratic_factor(coeffs):
        return False
    return True


# ---------------------------------------------------------------------------
# algebraic numbers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlgebraicNumber:
    """A real algebraic number: minimal polynomial plus isolating interval."""

    coeffs: tuple
    isolating_interval: tuple
    float_value: float
    irreducibility_verified: bool = True

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def height(self) -> int:
        return max(abs(c) for c in self.coeffs)

    @property
    def leading(self) -> int:
        return self.coeffs[-1]

    def __float__(self):
        return self.float_value

    def enclosure(self, width=Fraction(1, 2**200)):
        """Isolating interval bisected down to ``width`` (exact rationals)."""
        lo, hi = self.isolating_interval
        if lo == hi:
            return lo, hi
        return _cached_bisect(self.coeffs, lo, hi, width)

    def to_dict(self):
        lo, hi = self.isolating_interval
        return {
            "coeffs": list(self.coeffs),
            "isolating_interval": [str(lo), str(hi)],
            "float_value": self.float_value,
            "irreducibility_verified": self.irreducibility_verified,
        }


@lru_cache(maxsize=256)
def _cached_bisect(coeffs, lo, hi, width):
    return _bisect(list(coeffs), lo, hi, width)


def _bisect(coeffs, lo, hi, width):
    plo = poly_eval(coeffs, lo)
    while hi - lo >= width:
        mid = (lo + hi) / 2
        pm = poly_eval(coeffs, mid)
        if pm == 0:
            return mid, mid
        if (pm > 0) == (plo > 0):
            lo, plo = mid, pm
        else:
            hi = mid
    return lo, hi


def real_root(coeffs: Sequence[int], interval) -> AlgebraicNumber:
    """Build the unique root of ``sum coeffs[j] x^j`` inside ``interval``.

    The polynomial is made primitive with a positive leading coefficient and
    the interval is refined by exact bisection until its width is below
    ``1e-12`` (and below one ulp-scale of the root).
    """
    raw = list(coeffs)
    if not raw or all(c == 0 for c in raw):
        raise ValueError("coefficients must not all be zero")
    if any(Fraction(c).denominator != 1 for c in raw):
        raise ValueError("coefficients must be integers")
    poly = _primitive(_trim([int(c) for c in raw]))
    if len(poly) < 2:
        raise ValueError("polynomial must have degree >= 1")
    lo, hi = (Fraction(str(v)) if isinstance(v, float) else Fraction(v) for v in interval)
    if not lo < hi:
        raise ValueError("isolating interval needs lo < hi")

    irreducible = is_irreducible(poly)
    if irreducible is False:
        raise ReduciblePolynomial(f"{poly} factors over Q")

    # Sturm counts need endpoints that are not roots.
    nudge = (hi - lo) / 2**64
    if poly_eval(poly, lo) == 0:
        lo += nudge
    if poly_eval(poly, hi) == 0:
        hi -= nudge
    count = sturm_count(sturm_sequence(poly), lo, hi)
    if count == 0:
        raise NoRootInInterval(f"no root of {poly} in ({lo}, {hi})")
    if count > 1:
        raise MultipleRootsInInterval(f"{count} roots of {poly} in ({lo}, {hi})")

    scale = max(Fraction(1), abs(lo), abs(hi))
    lo, hi = _bisect(poly, lo, hi, min(ROOT_WIDTH, scale / 2**56))
    if lo == hi and len(poly) > 2:
        raise ReduciblePolynomial(f"{poly} has the rational root {lo}")
    value = float((lo + hi) / 2)
    return AlgebraicNumber(tuple(poly), (lo, hi), value, irreducible is True)


def rational(p: int, q: int = 1) -> AlgebraicNumber:
    """Degree-one algebraic number ``p/q``."""
    x = Fraction(p, q)
    return real_root([-x.numerator, x.denominator], (x - 1, x + 1))


def _poly_residual_ok(coeffs, z, factor):
    d = len(coeffs) - 1
    h = max(abs(c) for c in coeffs)
    val = complex(poly_eval([float(c) for c in coeffs], z))
    return abs(val) <= factor * (d + 1) * h * max(1.0, abs(z)) ** d, abs(val)


def conjugates(alpha: AlgebraicNumber) -> list[complex]:
    """All complex roots of the minimal polynomial, Newton-polished."""
    c = [float(x) for x in alpha.coeffs]
    if alpha.degree == 1:
        return [complex(-c[0] / c[1])]
    dc = [i * x for i, x in enumerate(c)][1:]
    out = []
    for z in np.roots(c[::-1]):
        z = complex(z)
        for _ in range(100):
            ok, _ = _poly_residual_ok(alpha.coeffs, z, 1e-12)
            if ok:
                break
            dz = complex(poly_eval(dc, z))
            if dz == 0:
                break
            z = z - complex(poly_eval(c, z)) / dz
        ok, res = _poly_residual_ok(alpha.coeffs, z, 1e-8)
        if not ok:
            raise ConvergenceFailure(f"conjugate {z} has residual {res}")
        if abs(z.imag) <= 1e-14 * max(1.0, abs(z)):
            z = complex(z.real, 0.0)
        out.append(z)
    return sorted(out, key=lambda z: (-z.real, z.imag))


def integrality_scale(alpha: AlgebraicNumber) -> int:
    """N = leading coefficient; N*lambda is an algebraic integer and N <= H."""
    return alpha.leading


def pisot_check(alpha: AlgebraicNumber) -> bool:
    """True iff 1/lambda is a Pisot number."""
    if alpha.coeffs[0] == 0:
        return False
    rev = _primitive(list(reversed(alpha.coeffs)))
    if rev[-1] != 1:
        return False
    inv = 1.0 / alpha.float_value
    if inv <= 1.0:
        return False
    others = [z for z in conjugates(alpha) if abs(z - alpha.float_value) > 1e-9 * max(1, abs(z))]
    if len(others) != alpha.degree - 1:
        return False
    return all(abs(z) > 1.0 for z in others)


@dataclass(frozen=True)
class HypothesisReport:
    degree: int
    C: float
    degree_ok: bool
    height: int
    height_bound: float
    height_ok: bool
    max_conjugate_modulus: float
    conjugate_ok: bool
    max_brenner_modulus: float
    brenner_ok: bool
    pisot: bool
    irreducibility_verified: bool

    @property
    def all_ok(self):
        return self.degree_ok and self.height_ok and self.conjugate_ok and self.brenner_ok

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def hypothesis_check(alpha: AlgebraicNumber, C: float) -> HypothesisReport:
    lam = alpha.float_value
    if not 0 < lam < 1:
        raise ValueError("hypothesis_check needs 0 < lambda < 1")
    conj = conjugates(alpha)
    max_mod = max(abs(z) for z in conj)
    bound = (1.0 / lam) ** C
    return HypothesisReport(
        degree=alpha.degree,
        C=C,
        degree_ok=alpha.degree < C,
        height=alpha.height,
        height_bound=bound,
        height_ok=alpha.height < bound,
        max_conjugate_modulus=max_mod,
        conjugate_ok=max_mod >= 1.0,
        max_brenner_modulus=2.0 * max_mod,
        brenner_ok=2.0 * max_mod >= 2.0,
        pisot=pisot_check(alpha),
        irreducibility_verified=alpha.irreducibility_verified,
    )


@dataclass(frozen=True)
class DiophantineFloor:
    exact: Fraction
    mantissa: float
    exponent: int
    value: float
    log10: float


def diophantine_floor(alpha: AlgebraicNumber, R: int, ell: int) -> DiophantineFloor:
    """Certified lower bound on |f(lambda)| for nonzero word entries of length ell.

    Equal to ``N^(-d*D) * ((2+R)*(1+H))^(-2*ell*(d-1))`` with ``D = 2*ell``.
    """
    if R < 1 or ell < 1:
        raise ValueError("R and ell must be positive")
    d, H, N = alpha.degree, alpha.height, integrality_scale(alpha)
    D = 2 * ell
    base = (2 + R) * (1 + H)
    expo = 2 * ell * (d - 1)
    exact = Fraction(1, N ** (d * D) * base**expo)
    log10 = -(d * D) * math.log10(N) - expo * math.log10(base)
    e = math.floor(log10)
    return DiophantineFloor(exact, 10 ** (log10 - e), e, 10.0**log10, log10)


# ---------------------------------------------------------------------------
# the field Q(lambda)
# ---------------------------------------------------------------------------

class NumberField:
    """Q(lambda) in the power basis; reduction uses the minimal polynomial."""

    def __init__(self, alpha: AlgebraicNumber):
        self.alpha = alpha
        self.degree = alpha.degree
        lead = Fraction(alpha.leading)
        self._monic = [Fraction(c) / lead for c in alpha.coeffs]

    def __eq__(self, other):
        return isinstance(other, NumberField) and other.alpha.coeffs == self.alpha.coeffs

    def __hash__(self):
        return hash(self.alpha.coeffs)

    def __repr__(self):
        return f"NumberField({list(self.alpha.coeffs)})"

    def reduce(self, poly):
        d = self.degree
        p = [Fraction(c) for c in poly]
        for k in range(len(p) - 1, d - 1, -1):
            c = p[k]
            if c:
                for j in range(d):
                    p[k - d + j] -= c * self._monic[j]
            p[k] = Fraction(0)
        p = p[:d] + [Fraction(0)] * (d - len(p))
        return tuple(p)

    def element(self, coords) -> "FieldElement":
        return FieldElement(self, self.reduce(coords))

    def __call__(self, x) -> "FieldElement":
        if isinstance(x, FieldElement):
            return x
        return self.element([Fraction(x)])

    @property
    def gen(self) -> "FieldElement":
        if self.degree == 1:
            return self.element([Fraction(-self.alpha.coeffs[0], self.alpha.coeffs[1])])
        return self.element([0, 1])

    @property
    def zero(self):
        return self.element([0])

    @property
    def one(self):
        return self.element([1])


@dataclass(frozen=True, eq=False)
class FieldElement:
    field: NumberField
    coords: tuple

    def _coerce(self, other):
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise ValueError("elements live in different fields")
            return other
        if isinstance(other, (int, Fraction)):
            return self.field(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return FieldElement(self.field, tuple(a + b for a, b in zip(self.coords, other.coords)))

    __radd__ = __add__

    def __neg__(self):
        return FieldElement(self.field, tuple(-a for a in self.coords))

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return FieldElement(self.field, tuple(a - b for a, b in zip(self.coords, other.coords)))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self.field.element(poly_mul(list(self.coords), list(other.coords)))

    __rmul__ = __mul__

    def inverse(self):
        if self.is_zero():
            raise DivisionByZero("inverse of zero")
        # extended Euclid: s*a + t*m = g
        m = list(self.field._monic)
        r0, r1 = m, _trim(list(self.coords))
        s0, s1 = [Fraction(0)], [Fraction(1)]
        while r1 != [0]:
            q, r = poly_divmod(r0, r1)
            r0, r1 = r1, r
            s0, s1 = s1, poly_sub(s0, poly_mul(q, s1))
        if len(r0) != 1:
            raise DivisionByZero("element is a zero divisor (polynomial not irreducible)")
        return self.field.element([c / r0[0] for c in s0])

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other.inverse()

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return self.coords == other.coords

    def __hash__(self):
        return hash(self.coords)

    def is_zero(self):
        return all(c == 0 for c in self.coords)

    def __float__(self):
        return float(poly_eval([float(c) for c in self.coords], self.field.alpha.float_value))

    def conjugate_values(self):
        poly = [float(c) for c in self.coords]
        return [complex(poly_eval(poly, z)) for z in conjugates(self.field.alpha)]

    def norm(self) -> Fraction:
        """Field norm: determinant of the multiplication-by-self map."""
        d = self.field.degree
        basis = [self.field.element([0] * j + [1]) for j in range(d)]
        cols = [(self * b).coords for b in basis]
        mat = [[cols[j][i] for j in range(d)] for i in range(d)]
        return _fraction_det(mat)

    def abs_lower_bound(self) -> Fraction:
        """Certified rational lower bound on ``|value|`` for a nonzero element.

        Evaluates the coordinate polynomial on a shrinking rational enclosure
        of lambda with exact interval arithmetic.
        """
        if self.is_zero():
            return Fraction(0)
        poly = list(self.coords)
        for bits in (64, 128, 256, 512, 1024):
            lo, hi = self.field.alpha.enclosure(Fraction(1, 2**bits))
            flo, fhi = _interval_horner(poly, lo, hi)
            if flo > 0:
                return flo
            if fhi < 0:
                return -fhi
        raise ConvergenceFailure("could not separate a nonzero element from 0")

    def __repr__(self):
        return f"FieldElement({[str(c) for c in self.coords]})"


def _interval_horner(poly, lo, hi):
    alo = ahi = Fraction(0)
    for c in reversed(poly):
        prods = (alo * lo, alo * hi, ahi * lo, ahi * hi)
        alo, ahi = min(prods) + c, max(prods) + c
    return alo, ahi


def _fraction_det(mat):
    mat = [list(row) for row in mat]
    n = len(mat)
    det = Fraction(1)
    for i in range(n):
        piv = next((r for r in range(i, n) if mat[r][i] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != i:
            mat[i], mat[piv] = mat[piv], mat[i]
            det = -det
        det *= mat[i][i]
        for r in range(i + 1, n):
            f = mat[r][i] / mat[i][i]
            if f:
                for c in range(i, n):
                    mat[r][c] -= f * mat[i][c]
    return det


def field_ops(a: FieldElement, b: FieldElement, op: str) -> FieldElement:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "inv":
        return a.inverse()
    raise ValueError(f"unknown op {op!r}")
