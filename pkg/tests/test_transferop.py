import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ablab import transferop
from ablab.cocycle import Mat2, expander_family, fp_frame, mobius_angle, transfer_matrix
from ablab.errors import PowerIterationStall, QuadratureUnderResolved, TruncationLeak
from ablab.measures import furstenberg_fixed_point
from ablab.numberfield import rational
from ablab.spectrum import phi_E
from ablab.transferop import (
    FourierVector,
    OperatorMatrix,
    OperatorMeta,
    apply_power,
    build_operator,
    composition_matrix,
    deviation_decay,
    exp_fit,
    expander_average_norm,
    gap_curve,
    pairing,
    power_norm,
    random_trig_poly,
    restricted_norm,
    smoothing_suite,
)

LAM = math.sqrt(5) - 2


@pytest.fixture(scope="module")
def A_raw():
    return build_operator(0.5, LAM, 64, frame="raw")


def test_fourier_vector_basics():
    f = FourierVector.from_function(lambda x: np.cos(2 * np.pi * 3 * x), 8)
    assert f[3] == pytest.approx(0.5) and f[-3] == pytest.approx(0.5)
    assert f.is_real()
    assert f.evaluate(0.1) == pytest.approx(math.cos(0.6 * math.pi))
    e = FourierVector.mode(5, 8)
    assert e.hs_norm(2) == pytest.approx(1 + (2 * math.pi * 5) ** 2)
    d = f.derivative("theta")
    assert d[3] == pytest.approx(3j)
    s = FourierVector.constant(1.0, 4).times_sin2()
    x = np.linspace(0, 1, 7)
    assert s.evaluate(x).real == pytest.approx(np.sin(np.pi * x) ** 2)


def test_composition_entry_against_mpmath():
    g = transfer_matrix(0.5, LAM, 1)
    C = composition_matrix(g, 6, 512)
    for n, m in [(0, 1), (2, -3), (-1, 4)]:
        f = lambda x: mpmath.expj(2 * mpmath.pi * (m * mobius_angle(g, float(x)) - n * x))
        ref = complex(mpmath.quad(f, mpmath.linspace(0, 1, 9)))
        assert C[n + 6, m + 6] == pytest.approx(ref, abs=1e-9)


def test_free_tilde_is_diagonal():
    E = 0.7
    A = build_operator(E, 0.0, 16, frame="tilde")
    kappa = math.acos(E / 2)
    n = np.arange(-16, 17)
    want = (1 + 2 * np.exp(2j * np.pi * n * kappa / np.pi)) / 3
    assert np.diag(A.entries) == pytest.approx(want, abs=1e-12)
    off = A.entries - np.diag(np.diag(A.entries))
    assert np.max(np.abs(off)) < 1e-12


def test_resonant_mode_at_zero_energy():
    A = build_operator(0.0, 0.0, 8, frame="tilde")
    assert A.entries[8 + 2, 8 + 2] == pytest.approx(1.0, abs=1e-12)


def test_constants_are_fixed(A_raw):
    col = A_raw.entries[:, A_raw.n_max]
    assert abs(col[A_raw.n_max] - 1) <= 1e-8
    col = np.delete(col, A_raw.n_max)
    assert np.max(np.abs(col)) <= 1e-8


def test_hermitian_symmetry(A_raw):
    E = A_raw.entries
    assert np.max(np.abs(E[::-1, ::-1] - E.conj())) <= 1e-12


def test_quadrature_doubling(A_raw):
    B = build_operator(0.5, LAM, 64, M=2 * A_raw.meta.M, frame="raw", check_quadrature=False)
    assert np.max(np.abs(B.entries - A_raw.entries)) < 1e-8


def test_quadrature_failure_is_reported(monkeypatch):
    monkeypatch.setattr(transferop, "QUAD_TOL", 0.0)
    with pytest.raises(QuadratureUnderResolved):
        build_operator(0.5, LAM, 8, M=128)
    with pytest.raises(ValueError):
        build_operator(0.5, LAM, 8, M=64)


def test_entry_decay():
    A = build_operator(0.5, LAM, 128, frame="raw")
    n = np.arange(8, 40)
    for row in (1, 2):
        a = np.abs(A.entries[128 + row, 128 + n])
        slope = np.polyfit(np.log(n), np.log(a), 1)[0]
        assert slope <= -3


def test_apply_power_constant(A_raw):
    f = FourierVector.constant(1.0, 64)
    g = apply_power(A_raw, f, 30).vector
    assert g.coeffs == pytest.approx(f.coeffs, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sup_norm_contracts(seed):
    A = _A_small()
    f = random_trig_poly(12, np.random.default_rng(seed), decay=3.0)
    # dense reference grid: the 4x grid can miss the sup of f by a few percent
    s0 = np.max(np.abs(f.evaluate(np.arange(2**16) / 2**16)))
    it = apply_power(A, f, 50, check_leak=False, history=True).vector
    for g in it:
        assert g.sup_norm() <= s0 * (1 + 1e-6)


_CACHE = {}


def _A_small():
    if "A" not in _CACHE:
        _CACHE["A"] = build_operator(0.5, LAM, 64, frame="raw")
    return _CACHE["A"]


def test_diagonal_power_formula():
    E = 0.7
    A = build_operator(E, 0.0, 16, frame="tilde")
    f = random_trig_poly(8, np.random.default_rng(1))
    g = apply_power(A, f, 7).vector
    n = np.arange(-16, 17)
    mult = ((1 + 2 * np.exp(2j * n * math.acos(E / 2))) / 3) ** 7
    assert g.coeffs == pytest.approx(mult * f.resized(16).coeffs, abs=1e-12)


def test_truncation_leak():
    A = build_operator(0.5, 0.5, 16, frame="raw")
    with pytest.raises(TruncationLeak):
        apply_power(A, FourierVector.mode(15, 16), 3)


def test_restricted_norm_controls():
    A = build_operator(0.0, 0.0, 32, frame="tilde")
    for K in (1, 2):
        assert restricted_norm(A, K).norm == pytest.approx(1.0, abs=1e-9)
    I = OperatorMatrix(16, np.eye(33, dtype=complex), OperatorMeta(0, 0, 0, "plain", "raw"))
    assert restricted_norm(I, 4).norm == pytest.approx(1.0)
    with pytest.raises(ValueError):
        restricted_norm(I, 8)


def test_restricted_norm_monotone_in_k():
    A = build_operator(0.5, LAM, 64, frame="tilde")
    curve = gap_curve(A, [2, 4, 8, 16])
    norms = [c.norm for c in curve]
    assert all(b <= a + 1e-6 for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1


def test_power_norm_matches_svd():
    B = np.random.default_rng(4).normal(size=(40, 40))
    nrm, _ = power_norm(B, tol=1e-9, max_iter=100_000)
    assert nrm == pytest.approx(np.linalg.norm(B, 2), rel=1e-6)
    with pytest.raises(PowerIterationStall):
        power_norm(B, tol=1e-15, max_iter=3)


def test_expander_average():
    # R = 1: (rho_g + rho_g^-1)/2 is an average of unitaries
    fam = [Mat2(1 + LAM**2, LAM, LAM, 1.0)]
    assert expander_average_norm(None, 0.4, 4, 32, family=fam).norm <= 1 + 1e-9
    ident = [Mat2.identity()] * 3
    assert expander_average_norm(None, 0.4, 4, 32, family=ident).norm == pytest.approx(1.0, abs=1e-9)
    fam = expander_family(rational(1, 100), 0.4, require_brenner=False)
    ex = expander_average_norm(None, 0.4, 32, 256, family=fam)
    assert ex.R == 6 and ex.norm < 1


def test_smoothing_suite_free_resonance():
    rep = smoothing_suite(0.0, 0.0, ks=(0,), m_max=20, n_max=16, n_random=2)
    assert rep.no_gap


def test_smoothing_suite_shapes():
    rep = smoothing_suite(0.5, LAM, ks=(3,), m_max=30, n_max=64, n_random=3)
    assert not rep.no_gap
    assert max(rep.boundedness.y) <= 1 + 1e-6
    for s, c in rep.sobolev.items():
        assert c.y[0] > 0
    ys = rep.single_mode.y
    assert all(b <= a * (1 + 1e-6) for a, b in zip(ys, ys[1:]))


def test_deviation_decay_trivial():
    nu = FourierVector.constant(1.0, 16)
    d = deviation_decay(0.7, 0.0, FourierVector.constant(2.0, 16), 10, nu, frame="tilde")
    assert max(d.values) <= 1e-12
    E = 0.7
    kappa = math.acos(E / 2)
    d = deviation_decay(E, 0.0, FourierVector.mode(1, 16), 12, nu, frame="tilde")
    q = abs((1 + 2 * np.exp(2j * kappa)) / 3)
    assert d.values == pytest.approx([q**k for k in range(13)], rel=1e-9)


def test_frame_covariance_of_lyapunov_functional():
    E = 0.5
    nu_raw = furstenberg_fixed_point(E, LAM, 128, frame="raw")
    nu_t = furstenberg_fixed_point(E, LAM, 128, frame="tilde")
    phi = FourierVector.from_function(lambda x: phi_E(E, LAM, x), 128)
    Sinv = fp_frame(E, LAM).S.inv()
    phi_t = FourierVector.from_function(lambda x: phi_E(E, LAM, mobius_angle(Sinv, x)), 128)
    a = pairing(phi, nu_raw.fourier)
    b = pairing(phi_t, nu_t.fourier)
    assert abs(a - b) <= 1e-6


def test_exp_fit():
    x = np.arange(20)
    rate, r2 = exp_fit(x, 3 * np.exp(-0.4 * x))
    assert rate == pytest.approx(-0.4) and r2 == pytest.approx(1.0)


def test_unitary_variant_is_a_contraction():
    for frame in ("raw", "tilde"):
        U = build_operator(0.5, LAM, 32, None, "unitary", frame)
        assert np.linalg.norm(U.entries, 2) <= 1 + 1e-6
    # the plain variant carries a Jacobian factor and can exceed 1
    P = build_operator(0.5, LAM, 32, None, "plain", "raw")
    assert np.linalg.norm(P.entries, 2) > 1
