import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from philab import tensorops as to
from philab.errors import SingularityError, UsageError
from philab.orlicz import NFunction
from philab.suites import line_integral_error

from conftest import ALL_FAMILIES, SMOOTH_FAMILIES, fam_id

shapes = st.tuples(st.integers(1, 3), st.integers(1, 3))
entries = st.floats(-10, 10, allow_nan=False, allow_subnormal=False)


def _mat(shape):
    return arrays(np.float64, shape, elements=entries)


def unit(N, n, rng):
    Q = rng.standard_normal((N, n))
    return Q / np.linalg.norm(Q)


# -- A, V ----------------------------------------------------------------------------


def test_A_examples(rng):
    Q = rng.standard_normal((2, 3))
    np.testing.assert_allclose(to.A_of(NFunction.power(2), Q), 2 * Q, rtol=1e-15)
    for phi in ALL_FAMILIES:
        assert np.all(to.A_of(phi, np.zeros((2, 2))) == 0)
    Q2 = 2 * unit(3, 2, rng)
    np.testing.assert_allclose(to.A_of(NFunction.power(3), Q2), 6 * Q2, rtol=1e-14)


def test_V_examples(rng):
    Q = rng.standard_normal((3, 3))
    np.testing.assert_array_equal(to.Vp_of(2, 0.0, Q), Q)
    np.testing.assert_allclose(to.V_of(NFunction.power(2), Q), math.sqrt(2) * Q, rtol=1e-15)
    Q1 = unit(2, 2, rng)
    np.testing.assert_allclose(to.V_of(NFunction.power(3), Q1), math.sqrt(3) * Q1, rtol=1e-14)
    assert np.all(to.V_of(NFunction.power(1.5), np.zeros((1, 1))) == 0)
    Vp = to.Vp_of(3, 0.5, Q)
    np.testing.assert_allclose(Vp, (0.5 + np.linalg.norm(Q)) ** 0.5 * Q, rtol=1e-14)
    with pytest.raises(UsageError):
        to.Vp_of(3, -1.0, Q)


def test_rejects_non_finite():
    with pytest.raises(UsageError):
        to.A_of(NFunction.power(2), np.array([[np.nan]]))
    with pytest.raises(UsageError):
        to.A_of(NFunction.power(2), np.ones(3))


def test_shifted_operators(rng):
    phi = NFunction.power(3)
    Q = rng.standard_normal((2, 2))
    a = 0.7
    t = np.linalg.norm(Q)
    np.testing.assert_allclose(to.A_shifted(phi, a, Q), to.A_of(phi.shifted(a), Q), rtol=1e-14)
    np.testing.assert_allclose(to.A_shifted(phi, a, Q), 3 * (a + t) * Q, rtol=1e-14)
    np.testing.assert_allclose(to.V_shifted(phi, a, Q), to.V_of(phi.shifted(a), Q), rtol=1e-14)


# -- Hessian -------------------------------------------------------------------------


@pytest.mark.parametrize("N,n", [(1, 1), (2, 3), (3, 2)])
def test_hessian_examples(N, n, rng):
    Q = rng.standard_normal((N, n))
    np.testing.assert_allclose(to.hessian_matrix(NFunction.power(2), Q), 2 * np.eye(N * n), atol=1e-14)
    Q1 = unit(N, n, rng)
    ev = to.dense_eigenvalues(NFunction.power(3), Q1)
    np.testing.assert_allclose(ev, [3] * (N * n - 1) + [6], rtol=1e-13)
    ev = to.dense_eigenvalues(NFunction.power(1.5), Q1)
    np.testing.assert_allclose(ev, [0.75] + [1.5] * (N * n - 1), rtol=1e-13)


def test_hessian_tensor_layout(rng):
    # A[i, alpha, j, beta] = d A(Q)_j^beta / d Q_i^alpha, checked by differences
    phi = NFunction.powerlog(2)
    Q = rng.standard_normal((2, 3))
    H = to.hessian(phi, Q)
    assert H.shape == (3, 2, 3, 2)
    h = 1e-6
    for i in range(3):
        for a in range(2):
            E = np.zeros_like(Q)
            E[a, i] = h
            dA = (to.A_of(phi, Q + E) - to.A_of(phi, Q - E)) / (2 * h)
            np.testing.assert_allclose(H[i, a].T, dA, rtol=1e-7, atol=1e-8)
    # symmetry A_ij^ab = A_ji^ba
    np.testing.assert_allclose(H, H.transpose(2, 3, 0, 1), rtol=1e-15)


def test_hessian_singular_at_zero():
    with pytest.raises(SingularityError):
        to.hessian_matrix(NFunction.power(3), np.zeros((2, 2)))
    sh = NFunction.power(3).shifted(0.5)
    H = to.hessian_matrix(sh, np.zeros((2, 2)))
    np.testing.assert_allclose(H, float(sh.deriv2(0.0)) * np.eye(4), rtol=1e-15)
    assert float(sh.deriv2(0.0)) == pytest.approx(1.5)


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
def test_ellipticity_band(phi, rng):
    for N, n in [(1, 1), (1, 3), (2, 2), (3, 3)]:
        P = rng.standard_normal((500, N, n)) * np.exp(rng.uniform(-4, 4, 500))[:, None, None]
        lmin, lmax, lo, hi = to.ellipticity_check(phi, P)
        assert np.all(lmin >= lo * (1 - 1e-8)) and np.all(lmax <= hi * (1 + 1e-8))


def test_ellipticity_examples(rng):
    Q = unit(2, 2, rng)
    assert to.ellipticity_check(NFunction.power(2), Q) == pytest.approx((2, 2, 2, 2))
    assert to.ellipticity_check(NFunction.power(3), Q) == pytest.approx((3, 6, 3, 6))
    assert to.ellipticity_check(NFunction.power(1.5), Q) == pytest.approx((0.75, 1.5, 0.75, 1.5))
    with pytest.raises(UsageError):
        to.ellipticity_check(NFunction.power(3), np.zeros((2, 2)))


@given(shape=shapes, data=st.data())
def test_analytic_eigenvalues_match_dense(shape, data):
    Q = data.draw(_mat(shape))
    if np.linalg.norm(Q) < 1e-3:
        return
    for phi in (NFunction.power(3), NFunction.power(1.5), NFunction.powerlog(2)):
        lmin, lmax, _, _ = to.ellipticity_check(phi, Q)
        ev = to.dense_eigenvalues(phi, Q)
        assert ev[0] == pytest.approx(lmin, rel=1e-10)
        assert ev[-1] == pytest.approx(lmax, rel=1e-10)


# -- monotonicity --------------------------------------------------------------------


def test_monotonicity_examples(rng):
    P = rng.standard_normal((2, 2))
    for phi in ALL_FAMILIES:
        assert to.monotonicity_triple(phi, P, P) == (0.0, 0.0, 0.0)
    Q = rng.standard_normal((2, 2))
    d2 = np.sum((P - Q) ** 2)
    pair, mod, vd = to.monotonicity_triple(NFunction.power(2), P, Q)
    assert pair == pytest.approx(2 * d2, rel=1e-13)
    assert vd == pytest.approx(2 * d2, rel=1e-13)
    assert mod == pytest.approx(d2, rel=1e-13)


def test_monotonicity_collinear_power3():
    e = np.zeros((2, 2))
    e[0, 1] = 1.0
    pair, mod, vd = to.monotonicity_triple(NFunction.power(3), 2 * e, e)
    assert pair == pytest.approx(9.0, rel=1e-14)
    # scalar reduction: V(t) = sqrt(phi'(t)/t) t = sqrt(3 t^3)
    assert vd == pytest.approx((math.sqrt(24) - math.sqrt(3)) ** 2, rel=1e-13)
    ref, _ = integrate.quad(lambda s: 3 * (2 + s) * s, 0, 1)
    assert mod == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("phi", ALL_FAMILIES[:5], ids=fam_id)
@given(shape=shapes, data=st.data())
def test_pairing_nonnegative(phi, shape, data):
    P, Q = data.draw(_mat(shape)), data.draw(_mat(shape))
    pair, _, _ = to.monotonicity_triple(phi, P, Q)
    assert pair >= -1e-12 * (np.linalg.norm(P) + np.linalg.norm(Q)) ** 2


def test_minpowers_is_not_monotone():
    # phi' drops from 3 to 1.5 at t = 1, so A is not monotone across the kink
    phi = NFunction.minpowers(1.5, 3)
    pair, _, _ = to.monotonicity_triple(phi, np.array([[1.01]]), np.array([[0.99]]))
    assert pair < 0


@pytest.mark.parametrize("phi", SMOOTH_FAMILIES, ids=fam_id)
def test_v_band_power_like(phi, rng):
    P = rng.standard_normal((5000, 2, 2))
    Q = rng.standard_normal((5000, 2, 2))
    pair, mod, vd = to.monotonicity_triple(phi, P, Q)
    r = pair / vd
    assert 0.5 < r.min() <= r.max() < 2
    r2 = pair / mod
    assert 0.2 < r2.min() <= r2.max() < 5


# -- shifted differences -------------------------------------------------------------


def test_a_difference_examples(rng):
    Q = rng.standard_normal((2, 2))
    assert to.a_difference_bounds(NFunction.power(3), 0.0, Q) == (0.0, 0.0, 0.0, 0.0)
    dA, bA, _, _ = to.a_difference_bounds(NFunction.power(2), 0.8, Q)
    assert dA == 0.0 and bA > 0
    Q1 = unit(2, 2, rng)
    out = to.a_difference_bounds(NFunction.power(3), 1.0, Q1)
    assert all(np.isfinite(out))
    assert out[0] <= out[1]
    with pytest.raises(UsageError):
        to.a_difference_bounds(NFunction.power(3), -1.0, Q1)


@pytest.mark.parametrize("phi", SMOOTH_FAMILIES, ids=fam_id)
def test_a_difference_bound_up_to_cubic(phi, rng):
    P = rng.standard_normal((3000, 2, 3))
    a = np.exp(rng.uniform(-5, 3))
    dA, bA, dV, bV = to.a_difference_bounds(phi, a, P)
    assert np.all(dA <= bA * (1 + 1e-12))
    assert np.max(dV / bV) < 10


def test_a_difference_bound_fails_beyond_cubic():
    # phi'(x+a)(x-a)/(x+a) <= phi'(x) fails for quartic growth
    dA, bA, _, _ = to.a_difference_bounds(NFunction.power(4), 0.1, np.array([[1.0]]))
    assert dA == pytest.approx(4 * (1.1**2 - 1), rel=1e-12)
    assert dA > bA


def test_hessian_holder_examples(rng):
    phi = NFunction.power(3)
    Q = unit(2, 2, rng)
    assert to.hessian_holder_ratio(phi, Q, Q) == 0.0
    P = rng.standard_normal((2, 2))
    assert to.hessian_holder_ratio(NFunction.power(2), Q, Q + 0.1 * P / np.linalg.norm(P)) == 0.0
    r1 = to.hessian_holder_ratio(phi, Q, 0.75 * Q)
    r2 = to.hessian_holder_ratio(phi, Q, 0.875 * Q)
    assert np.isfinite(r1) and r2 == pytest.approx(r1, rel=0.25)
    with pytest.raises(UsageError):
        to.hessian_holder_ratio(phi, Q, 0.4 * Q)
    with pytest.raises(UsageError):
        to.hessian_holder_ratio(phi, np.zeros((2, 2)), Q)


def test_hessian_holder_bounded_for_power(rng):
    phi = NFunction.power(3, gamma1=1.0)
    worst = 0.0
    for _ in range(300):
        Q = rng.standard_normal((2, 2))
        D = rng.standard_normal((2, 2))
        P = Q + rng.uniform(0, 0.5) * np.linalg.norm(Q) * D / np.linalg.norm(D)
        worst = max(worst, to.hessian_holder_ratio(phi, Q, P))
    assert worst < 3


# -- invariants ----------------------------------------------------------------------


@pytest.mark.parametrize("phi", SMOOTH_FAMILIES, ids=fam_id)
def test_line_integral_gauss(phi, rng):
    Q = rng.standard_normal((300, 2, 2))
    D = rng.standard_normal((300, 2, 2))
    P = Q + 0.5 * np.linalg.norm(Q, axis=(1, 2))[:, None, None] * D / np.linalg.norm(D, axis=(1, 2))[:, None, None]
    assert line_integral_error(phi, P, Q).max() <= 1e-6


@pytest.mark.parametrize("phi", SMOOTH_FAMILIES, ids=fam_id)
def test_line_integral_midpoint(phi, rng):
    # the 64-node midpoint rule carries an O(h^2) error, about 1e-5 relative
    Q = rng.standard_normal((300, 2, 2))
    D = rng.standard_normal((300, 2, 2))
    P = Q + 0.5 * np.linalg.norm(Q, axis=(1, 2))[:, None, None] * D / np.linalg.norm(D, axis=(1, 2))[:, None, None]
    x = (np.arange(64) + 0.5) / 64 * 2 - 1
    err = line_integral_error(phi, P, Q, x, np.full(64, 2 / 64))
    assert err.max() <= 1e-3


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
@given(shape=shapes, data=st.data(), seed=st.integers(0, 2**32 - 1))
def test_rotation_equivariance(phi, shape, data, seed):
    Q = data.draw(_mat(shape))
    n = shape[1]
    R, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    np.testing.assert_allclose(to.A_of(phi, Q @ R), to.A_of(phi, Q) @ R, rtol=1e-12, atol=1e-12 * (1 + np.abs(to.A_of(phi, Q)).max()))
    assert np.linalg.norm(to.V_of(phi, Q @ R)) == pytest.approx(np.linalg.norm(to.V_of(phi, Q)), rel=1e-12, abs=1e-300)
