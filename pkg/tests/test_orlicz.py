import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize

from philab import orlicz as oz
from philab.errors import DomainError, UsageError
from philab.orlicz import Family, NFunction, ShiftedNFunction

from conftest import ALL_FAMILIES, SMOOTH_FAMILIES, fam_id

pos = st.floats(1e-3, 1e3, allow_nan=False)


# -- construction ----------------------------------------------------------


@pytest.mark.parametrize("p", [0.9, 1.0, -2.0, math.nan, math.inf])
def test_rejects_bad_p(p):
    with pytest.raises(UsageError):
        NFunction.power(p)


def test_power_needs_equal_exponents():
    with pytest.raises(UsageError):
        NFunction(Family.POWER, 2.0, 3.0)
    with pytest.raises(UsageError):
        NFunction.maxpowers(3, 2)
    with pytest.raises(UsageError):
        NFunction(Family.MINPOWERS, 2.0)
    with pytest.raises(UsageError):
        NFunction.powerlog(2, q=2.5)
    with pytest.raises(UsageError):
        NFunction.power(2, L=0.5)


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
def test_normalisation_and_monotone(phi):
    assert phi(0.0) == 0.0
    assert phi(1.0) == pytest.approx(1.0, rel=1e-15)
    t = np.logspace(-6, 6, 500)
    v = phi(t)
    assert np.all(np.diff(v) > 0)
    assert phi.deriv(0.0) == 0.0
    assert np.all(phi.deriv(t) > 0)


@pytest.mark.parametrize("bad", [-1.0, -1e-300, math.nan, math.inf])
def test_domain_errors(bad):
    phi = NFunction.power(3)
    with pytest.raises(DomainError):
        phi(bad)
    with pytest.raises(DomainError):
        phi.deriv(np.array([1.0, bad]))
    with pytest.raises(DomainError):
        phi.shifted(1.0)(bad)


def test_deriv2_at_zero_rejected():
    with pytest.raises(DomainError):
        NFunction.power(3).deriv2(0.0)
    # the shifted function is C^2 up to t = 0
    assert NFunction.power(3).shifted(1.0).deriv2(0.0) == pytest.approx(3.0)


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
def test_record_round_trip(phi):
    rec = phi.to_record()
    assert NFunction.from_record(rec) == phi
    assert set(rec) <= {"family", "p", "q", "L", "gamma1", "c_h"}


def test_record_errors():
    with pytest.raises(UsageError):
        NFunction.from_record({"family": "power"})
    with pytest.raises(UsageError):
        NFunction.from_record({"family": "cubic", "p": "3"})
    with pytest.raises(UsageError):
        NFunction.from_record({"family": "power", "p": "x"})
    with pytest.raises(UsageError):
        NFunction.from_record({"family": "power", "p": "3", "colour": "red"})
    phi = NFunction.from_record({"family": "power", "p": "3", "gamma1": "1", "c_h": "2.5"})
    assert (phi.gamma1, phi.c_h) == (1.0, 2.5)


# -- evaluation examples ------------------------------------------------------


def test_eval_examples():
    assert NFunction.power(3)(2.0) == 8.0
    assert NFunction.power(2).shifted(1.0)(1.0) == pytest.approx(1.0, rel=1e-14)
    # independent oracle: adaptive quadrature of 3(1+s)^2 s/(1+s)
    ref, _ = integrate.quad(lambda s: 3 * (1 + s) ** 2 * s / (1 + s), 0, 1, epsabs=0, epsrel=1e-13)
    assert ref == pytest.approx(2.5, rel=1e-13)
    assert NFunction.power(3).shifted(1.0)(1.0) == pytest.approx(ref, rel=1e-13)


def test_derivative_examples():
    phi = NFunction.power(3)
    assert phi.deriv(2.0) == 12.0
    assert phi.deriv2(2.0) == 12.0
    assert np.all(NFunction.power(2).deriv2(np.array([1e-3, 1.0, 7.0])) == 2.0)
    sh = phi.shifted(1.0)
    h = 1e-5
    fd = (sh(1 + h) - sh(1 - h)) / (2 * h)
    assert fd == pytest.approx(6.0, rel=1e-8)
    assert sh.deriv(1.0) == pytest.approx(6.0, rel=1e-14)


def _quad_shift(base, a, t):
    pts = [k - a for k in base.kinks if 0 < k - a < t]
    f = lambda s: float(base.deriv(a + s)) * s / (a + s)
    val, _ = integrate.quad(f, 0, t, points=pts or None, epsabs=0, epsrel=1e-13, limit=200)
    return val


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
@pytest.mark.parametrize("a,t", [(0.01, 0.3), (0.5, 0.5), (1.0, 1.0), (0.2, 3.0), (3.0, 0.01),
                                 (1e-4, 50.0), (0.7, 0.3), (0.999, 1e-3)])
def test_shift_against_adaptive_quadrature(phi, a, t):
    assert float(phi.shifted(a)(t)) == pytest.approx(_quad_shift(phi, a, t), rel=1e-12)


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
@given(a=pos, b=pos, t=pos)
def test_shift_composition(phi, a, b, t):
    from philab.tensorops import shift_of

    assert shift_of(phi.shifted(a), b, t) == pytest.approx(float(phi.shifted(a + b)(t)), rel=1e-12)


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
def test_shift_zero_is_identity(phi, rng):
    t = np.exp(rng.uniform(-7, 7, 1000))
    sh = phi.shifted(0.0)
    assert np.array_equal(sh(t), phi(t))
    assert np.array_equal(sh.deriv(t), phi.deriv(t))
    assert np.array_equal(sh.deriv2(t), phi.deriv2(t))
    assert sh.p == phi.p and sh.q == phi.q


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
def test_shifted_derivative_identity(phi, rng):
    a = np.exp(rng.uniform(-4, 3, 200))
    t = np.exp(rng.uniform(-4, 3, 200))
    expect = phi.deriv(a + t) * t / (a + t)
    got = np.array([ShiftedNFunction(phi, ai).deriv(ti) for ai, ti in zip(a, t)])
    np.testing.assert_allclose(got, expect, rtol=1e-14)


def test_shifted_vectorises_over_shift():
    phi = NFunction.powerlog(2)
    a = np.array([0.0, 0.5, 2.0])
    t = np.array([1.0, 1.0, 0.25])
    got = oz.shifted_eval(phi, a, t)
    want = [float(phi.shifted(ai)(ti)) for ai, ti in zip(a, t)]
    np.testing.assert_allclose(got, want, rtol=1e-15)


# -- derivatives vs finite differences ---------------------------------------


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
@pytest.mark.parametrize("a", [0.0, 0.1, 2.0])
def test_fd_derivatives(phi, a, rng):
    f = phi.shifted(a) if a else phi
    t = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), 100))
    e1, e2 = oz.fd_derivative_error(f, t)
    assert e1 <= 1e-6 and e2 <= 1e-6


def test_kink_one_sided_second_derivative():
    phi = NFunction.maxpowers(1.5, 3)
    assert phi.deriv2(1.0) == pytest.approx(6.0)  # right limit of 3t^2 -> 6t
    assert NFunction.minpowers(1.5, 3).deriv2(1.0) == pytest.approx(0.75)


# -- conjugate ------------------------------------------------------------------


def _grid_conjugate(phi, s):
    t = np.linspace(0, 10, 2_000_001)
    return float(np.max(s * t - phi(t)))


@pytest.mark.parametrize("phi,s,want", [(NFunction.power(2), 2.0, 1.0), (NFunction.power(3), 3.0, 2.0)])
def test_conjugate_examples(phi, s, want):
    assert phi.conjugate(s) == pytest.approx(want, rel=1e-14)
    assert _grid_conjugate(phi, s) == pytest.approx(want, rel=1e-9)


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
def test_conjugate_zero(phi):
    assert phi.conjugate(0.0) == 0.0


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
@pytest.mark.parametrize("s", [1e-3, 0.3, 1.0, 2.5, 40.0, 1e3])
def test_numeric_conjugate_vs_bounded_optimiser(phi, s):
    # oracle: bounded scalar maximisation started from several brackets
    best = 0.0
    for lo, hi in [(0, 1), (1, 10), (10, 1e3), (1e3, 1e6)]:
        r = optimize.minimize_scalar(lambda t: -(s * t - float(phi(t))), bounds=(lo, hi),
                                     method="bounded", options={"xatol": 1e-12 * hi})
        best = max(best, -r.fun)
    # a kink can carry the maximiser for a whole range of slopes
    best = max([best] + [s * k - float(phi(k)) for k in phi.kinks])
    got = float(oz.conjugate(phi, s))
    assert got == pytest.approx(best, rel=1e-9, abs=1e-300)
    assert got >= best * (1 - 1e-12)


def test_numeric_conjugate_matches_closed_form_for_power(rng):
    # evaluate the numeric path on a shifted copy with a negligible shift
    phi = NFunction.power(3)
    s = np.exp(rng.uniform(-3, 5, 50))
    closed = phi.conjugate(s)
    numeric = oz.conjugate(phi.shifted(1e-12), s)
    np.testing.assert_allclose(numeric, closed, rtol=1e-8)


# -- Young -----------------------------------------------------------------------


def test_young_examples():
    assert oz.young_gap(NFunction.power(2), 2.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    for phi in ALL_FAMILIES:
        assert oz.young_gap(phi, 0.0, 0.0) == 0.0
    phi = NFunction.power(3)
    star1 = (2 / 3) * (1 / 3) ** 0.5  # (p-1)(s/p)^{p/(p-1)}
    assert oz.young_gap(phi, 1.0, 2.0) == pytest.approx(8 + star1 - 2, rel=1e-14)


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
@given(s=st.floats(0, 1e4), t=st.floats(0, 1e3))
def test_young_inequality(phi, s, t):
    gap = oz.young_gap(phi, s, t)
    assert gap >= -1e-9 * (float(phi(t)) + float(phi.conjugate(s)) + 1)


@pytest.mark.parametrize("phi", SMOOTH_FAMILIES + [ALL_FAMILIES[4]], ids=fam_id)
def test_young_equality(phi, rng):
    t = np.exp(rng.uniform(-6, 6, 2000))
    s = phi.deriv(t)
    gap = oz.young_gap(phi, s, t)
    np.testing.assert_array_less(np.abs(gap), 1e-6 * (phi(t) + phi.conjugate(s)))


def test_young_equality_fails_for_non_convex_minpowers():
    # min(t^1.5, t^3): s = phi'(0.9) is attained again past the kink with a larger value
    phi = NFunction.minpowers(1.5, 3)
    t = 0.9
    assert oz.young_gap(phi, phi.deriv(t), t) > 1e-3


# -- checkers -----------------------------------------------------------------------


@pytest.mark.parametrize("phi,band", [(NFunction.power(3), (3, 3)), (NFunction.power(1.5), (1.5, 1.5))])
def test_characteristic_examples(phi, band):
    np.testing.assert_allclose(oz.check_characteristic(phi), band, rtol=1e-14)


def test_characteristic_powerlog():
    lo, hi = oz.check_characteristic(NFunction.powerlog(2))
    assert 2 < lo and hi <= 3


@pytest.mark.parametrize("phi,band", [(NFunction.power(3), (2, 2)), (NFunction.power(2), (1, 1))])
def test_assumption2_examples(phi, band):
    np.testing.assert_allclose(oz.check_assumption2(phi), band, rtol=1e-14)


def test_assumption2_powerlog():
    lo, hi = oz.check_assumption2(NFunction.powerlog(2))
    assert 1 <= lo and hi <= 2


def test_empty_grid():
    with pytest.raises(UsageError):
        oz.check_characteristic(NFunction.power(2), [])
    with pytest.raises(UsageError):
        oz.check_assumption2(NFunction.maxpowers(2, 3), [1.0])  # only the kink


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
def test_characteristic_bands_all_families(phi):
    lo, hi = oz.check_characteristic(phi)
    assert lo >= phi.p * (1 - 1e-10) and hi <= phi.q * (1 + 1e-10)
    lo, hi = oz.check_assumption2(phi)
    assert lo >= (phi.p - 1) * (1 - 1e-10) and hi <= (phi.q - 1) * (1 + 1e-10)


@pytest.mark.parametrize("phi", SMOOTH_FAMILIES, ids=fam_id)
@pytest.mark.parametrize("a", [0.01, 1.0, 100.0])
def test_shifted_characteristic(phi, a):
    sh = phi.shifted(a)
    lo, hi = oz.check_characteristic(sh)
    assert lo >= sh.p * (1 - 1e-10) and hi <= sh.q * (1 + 1e-10)
    lo, hi = oz.check_assumption2(sh)
    assert lo >= (sh.p - 1) * (1 - 1e-10) and hi <= (sh.q - 1) * (1 + 1e-10)


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
def test_scaling_bands(phi, rng):
    t = np.exp(rng.uniform(-7, 7, 5000))
    assert oz.scaling_band_margin(phi, t, rng.uniform(0.01, 1, 5000)) >= -1e-12
    assert oz.scaling_band_margin(phi, t, rng.uniform(1, 100, 5000)) >= -1e-12


@pytest.mark.parametrize("phi", SMOOTH_FAMILIES, ids=fam_id)
def test_almost_monotone(phi, rng):
    s, t = np.exp(rng.uniform(-7, 7, (2, 10_000)))
    assert oz.almost_monotone_margin(phi, s, t) >= -1e-12


@pytest.mark.parametrize("phi", ALL_FAMILIES, ids=fam_id)
def test_conjugate_band_independent_of_t(phi, rng):
    lo1, hi1 = oz.conjugate_band(phi, np.exp(rng.uniform(-7, 7, 2000)))
    lo2, hi2 = oz.conjugate_band(phi, np.exp(rng.uniform(-7, 7, 20_000)))
    assert 0 < lo1 and hi1 < np.inf
    assert lo2 == pytest.approx(lo1, rel=0.1) and hi2 == pytest.approx(hi1, rel=0.1)


def test_power_conjugate_band_exact():
    # phi*(phi'(t)) = (p-1) t^p for powers
    lo, hi = oz.conjugate_band(NFunction.power(3), np.logspace(-3, 3, 50))
    assert lo == pytest.approx(2, rel=1e-12) and hi == pytest.approx(2, rel=1e-12)


def test_shift_equivalence_examples():
    r = oz.shift_equivalence_ratios(NFunction.power(2), 0.0, 1.0)
    np.testing.assert_allclose(r, (0.5, 0.5, 1.0), rtol=1e-15)
    for t in (1e-3, 0.7, 40.0):
        assert oz.shift_equivalence_ratios(NFunction.power(2.5), 0.0, t)[0] == pytest.approx(1 / 2.5)
    r = oz.shift_equivalence_ratios(NFunction.power(3), 1.0, 1.0)
    assert all(0.1 <= x <= 10 for x in r)
    with pytest.raises(DomainError):
        oz.shift_equivalence_ratios(NFunction.power(3), 1.0, 0.0)


@pytest.mark.parametrize("phi", SMOOTH_FAMILIES, ids=fam_id)
def test_shift_equivalence_band_stable(phi, rng):
    def band(m):
        a, t = np.exp(rng.uniform(-7, 7, (2, m)))
        rs = oz.shift_equivalence_ratios(phi, a, t)
        return min(r.min() for r in rs), max(r.max() for r in rs)

    (lo1, hi1), (lo2, hi2) = band(10_000), band(100_000)
    assert lo2 == pytest.approx(lo1, rel=0.1) and hi2 == pytest.approx(hi1, rel=0.1)


def test_change_of_shift_examples(rng):
    phi = NFunction.power(3)
    a = rng.standard_normal((100, 2))
    t = np.exp(rng.uniform(-3, 3, 100))
    # identical shifts: c = 1 exactly
    assert oz.change_of_shift_constant(phi, 0.5, a, a, t) == pytest.approx(1.0, rel=1e-14)
    # equal magnitudes
    b = -a
    assert oz.change_of_shift_constant(phi, 0.5, a, b, t) <= 1 + 1e-12
    with pytest.raises(UsageError):
        oz.change_of_shift_constant(phi, 0.0, a, a, t)


def test_change_of_shift_stable():
    phi = NFunction.power(2)

    def c(m, seed):
        g = np.random.default_rng(seed)
        a, b = g.standard_normal((2, m, 2))
        return oz.change_of_shift_constant(phi, 0.5, a, b, np.exp(g.uniform(-5, 5, m)))

    c4, c5 = c(10_000, 1), c(100_000, 2)
    assert np.isfinite(c4) and abs(c5 - c4) < 0.1 * c4
