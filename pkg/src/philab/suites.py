"""Randomised property suites behind ``philab verify``.

Each check draws from its own generator, seeded by ``(seed, crc32(check_id))``,
so results do not depend on which other checks run or in what order.
Checks that the N-function is not expected to satisfy (for example the
monotonicity of A for a non-convex family) are run and reported with
status ``recorded`` instead of ``true``/``false``.
"""
from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import orlicz as oz
from . import tensorops as to
from .errors import UsageError
from .orlicz import Family

__all__ = ["CheckResult", "CHECKS", "run_suite", "substream", "SUITE_HEADER", "sample_pairs",
           "band_constant"]

SUITE_HEADER = ("check_id", "samples", "worst_margin", "band_lo", "band_hi", "pass")

SHAPES = [(N, n) for N in (1, 2, 3) for n in (1, 2, 3)]


@dataclass(frozen=True)
class CheckResult:
    check_id: str
    samples: int
    worst_margin: float
    band_lo: float
    band_hi: float
    status: str  # "true", "false" or "recorded"

    @property
    def failed(self):
        return self.status == "false"

    def row(self):
        return [self.check_id, str(self.samples), repr(float(self.worst_margin)),
                repr(float(self.band_lo)), repr(float(self.band_hi)), self.status]


def substream(seed, check_id):
    return np.random.default_rng([int(seed), zlib.crc32(check_id.encode("utf-8"))])


def _smooth(phi):
    # C^2 on (0, inf) and convex: the families the structural assumptions cover
    return not phi.kinks


def _convex(phi):
    return phi.family is not Family.MINPOWERS


def _status(ok, hard=True):
    if not hard:
        return "recorded"
    return "true" if ok else "false"


def _logu(rng, m, lo=1e-3, hi=1e3):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), m))


def sample_pairs(rng, samples, near_fraction=0.1):
    """(P, Q) batches over all (N, n) in {1,2,3}^2.

    Entries are standard normal; a fraction of the pairs are near-collinear
    and near-coincident (|P - Q| <= 1e-6 |P|).
    """
    out = []
    per = np.full(len(SHAPES), samples // len(SHAPES))
    per[: samples % len(SHAPES)] += 1
    for (N, n), m in zip(SHAPES, per):
        P = rng.standard_normal((m, N, n))
        Q = rng.standard_normal((m, N, n))
        k = int(round(near_fraction * m))
        if k:
            d = rng.standard_normal((k, N, n))
            d *= (rng.uniform(0, 1e-6, k) * to.frob(P[:k]) / to.frob(d))[:, None, None]
            Q[:k] = P[:k] * (1 + rng.uniform(-1e-6, 1e-6, k))[:, None, None] + d
        out.append((P, Q))
    return out


def band_constant(lo, hi):
    """Smallest C with [lo, hi] inside [1/C, C]."""
    return max(hi, 1.0 / lo)


# -- orlicz checks -----------------------------------------------------------


def check_characteristic(phi, rng, samples):
    lo, hi = oz.check_characteristic(phi)
    margin = min(lo - phi.p, phi.q - hi)
    return CheckResult("characteristic", 400, margin, lo, hi,
                       _status(margin >= -1e-10 * phi.q))


def check_assumption2(phi, rng, samples):
    lo, hi = oz.check_assumption2(phi)
    margin = min(lo - (phi.p - 1), (phi.q - 1) - hi)
    return CheckResult("assumption2", 400, margin, lo, hi,
                       _status(margin >= -1e-10 * phi.q))


def check_scaling(phi, rng, samples):
    t = _logu(rng, samples)
    c = np.where(rng.uniform(size=samples) < 0.5, rng.uniform(0.01, 1, samples),
                 rng.uniform(1, 100, samples))
    margin = oz.scaling_band_margin(phi, t, c)
    return CheckResult("scaling_bands", samples, margin, float(c.min()), float(c.max()),
                       _status(margin >= -1e-10))


def check_young(phi, rng, samples):
    t = _logu(rng, samples)
    s = np.asarray(phi.deriv(_logu(rng, samples)))
    gap = oz.young_gap(phi, s, t)
    scale = np.asarray(phi(t)) + np.asarray(oz.conjugate(phi, s)) + 1
    rel = gap / scale
    margin = float(rel.min()) + 1e-9
    return CheckResult("young_gap", samples, margin, float(rel.min()), float(rel.max()),
                       _status(margin >= 0))


def check_young_equality(phi, rng, samples):
    t = _logu(rng, samples)
    s = np.asarray(phi.deriv(t))
    gap = oz.young_gap(phi, s, t)
    rel = np.abs(gap) / (np.asarray(phi(t)) + np.asarray(oz.conjugate(phi, s)))
    worst = float(rel.max())
    # for a non-convex phi, s = phi'(t) need not attain the supremum at t
    return CheckResult("young_equality", samples, 1e-6 - worst, float(rel.min()), worst,
                       _status(worst <= 1e-6, _convex(phi)))


def check_conjugate_band(phi, rng, samples):
    lo, hi = oz.conjugate_band(phi, _logu(rng, samples))
    ok = math.isfinite(hi) and lo > 0
    return CheckResult("conjugate_band", samples, lo, lo, hi, _status(ok))


def check_fd(phi, rng, samples):
    m = min(samples, 100)
    e1, e2 = oz.fd_derivative_error(phi, _logu(rng, m))
    worst = max(e1, e2)
    return CheckResult("fd_derivatives", m, 1e-6 - worst, e1, e2, _status(worst <= 1e-6))


def check_shift_zero(phi, rng, samples):
    t = _logu(rng, samples)
    sh = phi.shifted(0.0)
    same = (np.array_equal(sh(t), phi(t)) and np.array_equal(sh.deriv(t), phi.deriv(t))
            and np.array_equal(sh.deriv2(t), phi.deriv2(t)))
    return CheckResult("shift_zero_identity", samples, 0.0 if same else -1.0, 0.0, 0.0,
                       _status(same))


def check_almost_monotone(phi, rng, samples):
    s, t = _logu(rng, samples), _logu(rng, samples)
    margin = oz.almost_monotone_margin(phi, s, t)
    return CheckResult("almost_monotone", samples, margin, float(phi.L), float(phi.L),
                       _status(margin >= -1e-10, _smooth(phi)))


def check_shift_equivalence(phi, rng, samples):
    a, t = _logu(rng, samples), _logu(rng, samples)
    rs = oz.shift_equivalence_ratios(phi, a, t)
    lo = min(float(np.min(r)) for r in rs)
    hi = max(float(np.max(r)) for r in rs)
    ok = lo > 0 and math.isfinite(hi)
    return CheckResult("shift_equivalence", samples, lo, lo, hi, _status(ok, ok or _smooth(phi)))


def check_change_of_shift(phi, rng, samples, eta=0.5):
    a = rng.standard_normal((samples, 2))
    b = rng.standard_normal((samples, 2))
    t = _logu(rng, samples, 1e-2, 1e2)
    c = oz.change_of_shift_constant(phi, eta, a, b, t)
    return CheckResult("change_of_shift", samples, c, eta, c, _status(math.isfinite(c)))


# -- tensorops checks --------------------------------------------------------


def check_ellipticity(phi, rng, samples):
    worst = math.inf
    for P, _ in sample_pairs(rng, samples, 0.0):
        lmin, lmax, lo, hi = to.ellipticity_check(phi, P)
        worst = min(worst, float(np.min((lmin - lo) / lo)), float(np.min((hi - lmax) / hi)))
    return CheckResult("ellipticity", samples, worst, min(phi.p - 1, 1), max(phi.q - 1, 1),
                       _status(worst >= -1e-8))


def check_dense_eigen(phi, rng, samples):
    worst = 0.0
    for P, _ in sample_pairs(rng, samples, 0.0):
        lmin, lmax, _, _ = to.ellipticity_check(phi, P)
        ev = to.dense_eigenvalues(phi, P)
        err = np.maximum(np.abs(ev[..., 0] - lmin) / lmax, np.abs(ev[..., -1] - lmax) / lmax)
        worst = max(worst, float(err.max()))
    return CheckResult("dense_eigen", samples, 1e-10 - worst, 0.0, worst,
                       _status(worst <= 1e-10))


def _pairing_stats(phi, rng, samples):
    pair, mod, vd, scale = [], [], [], []
    for P, Q in sample_pairs(rng, samples):
        a, b, c = to.monotonicity_triple(phi, P, Q)
        pair.append(a)
        mod.append(b)
        vd.append(c)
        scale.append((to.frob(P) + to.frob(Q)) ** 2)
    return (np.concatenate(pair), np.concatenate(mod), np.concatenate(vd),
            np.concatenate(scale))


def check_monotonicity(phi, rng, samples):
    pair, _, _, scale = _pairing_stats(phi, rng, samples)
    rel = pair / scale
    margin = float(rel.min()) + 1e-12
    return CheckResult("monotonicity", samples, margin, float(rel.min()), float(rel.max()),
                       _status(margin >= 0, _convex(phi)))


def _ratio_band(num, den):
    ok = den > 0
    r = num[ok] / den[ok]
    return float(r.min()), float(r.max())


def check_v_band(phi, rng, samples):
    pair, _, vd, _ = _pairing_stats(phi, rng, samples)
    lo, hi = _ratio_band(pair, vd)
    return CheckResult("pairing_vs_v", samples, band_constant(lo, hi) if lo > 0 else -math.inf,
                       lo, hi, "recorded")


def check_modular_band(phi, rng, samples):
    pair, mod, _, _ = _pairing_stats(phi, rng, samples)
    lo, hi = _ratio_band(pair, mod)
    return CheckResult("pairing_vs_modular", samples,
                       band_constant(lo, hi) if lo > 0 else -math.inf, lo, hi, "recorded")


def check_a_difference(phi, rng, samples):
    worst_a, worst_v = math.inf, 0.0
    for P, _ in sample_pairs(rng, samples, 0.0):
        a = float(rng.exponential())
        dA, bA, dV, bV = to.a_difference_bounds(phi, a, P)
        with np.errstate(invalid="ignore", divide="ignore"):
            worst_a = min(worst_a, float(np.min((bA - dA) / np.maximum(bA, 1e-300))))
            worst_v = max(worst_v, float(np.max(dV / np.maximum(bV, 1e-300))))
    hard = _smooth(phi) and phi.q <= 3
    return CheckResult("a_difference", samples, worst_a, 0.0, worst_v,
                       _status(worst_a >= -1e-10, hard))


def check_a_lipschitz_band(phi, rng, samples):
    lo, hi = math.inf, 0.0
    for P, Q in sample_pairs(rng, samples):
        num = to.frob(to.A_of(phi, P) - to.A_of(phi, Q))
        den = np.asarray(to.shift_deriv_of(phi, to.frob(P), to.frob(P - Q)))
        a, b = _ratio_band(num, den)
        lo, hi = min(lo, a), max(hi, b)
    return CheckResult("a_difference_band", samples, band_constant(lo, hi), lo, hi, "recorded")


def check_shift_comparison(phi, rng, samples):
    s, t = rng.standard_normal((samples, 2)), rng.standard_normal((samples, 2))
    ns, nt = np.linalg.norm(s, axis=1), np.linalg.norm(t, axis=1)
    d = np.linalg.norm(s - t, axis=1)
    keep = d > 0
    num = np.asarray(phi.deriv2(ns[keep] + nt[keep])) * d[keep]
    den = np.asarray(to.shift_deriv_of(phi, ns[keep], d[keep]))
    lo, hi = _ratio_band(num, den)
    return CheckResult("shift_comparison", samples, band_constant(lo, hi), lo, hi, "recorded")


def check_shift_triangle(phi, rng, samples):
    s1, s2, t = (rng.standard_normal((samples, 2)) for _ in range(3))
    n = lambda x: np.linalg.norm(x, axis=1)
    lhs = np.asarray(to.shift_deriv_of(phi, n(s2), n(s1 - s2)))
    rhs = (np.asarray(to.shift_deriv_of(phi, n(t), n(s1 - t)))
           + np.asarray(to.shift_deriv_of(phi, n(t), n(s2 - t))))
    lo, hi = _ratio_band(lhs, rhs)
    return CheckResult("shift_triangle", samples, hi, lo, hi, _status(math.isfinite(hi)))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def line_integral_error(phi, P, Q, nodes=_GL_X, weights=_GL_W):
    """Relative error of int_0^1 D^2phi(Q + s(P-Q)) (P-Q) ds against A(P) - A(Q)."""
    D = P - Q
    s = 0.5 * (nodes + 1)
    w = 0.5 * weights
    shape = P.shape[:-2]
    d = P.shape[-2] * P.shape[-1]
    pts = Q[None] + s.reshape((-1,) + (1,) * P.ndim) * D[None]
    H = to.hessian_matrix(phi, pts)
    integrand = np.einsum("s...ij,...j->s...i", H, D.reshape(shape + (d,)))
    approx = np.tensordot(w, integrand, axes=1)
    exact = (to.A_of(phi, P) - to.A_of(phi, Q)).reshape(shape + (d,))
    return np.linalg.norm(approx - exact, axis=-1) / np.linalg.norm(exact, axis=-1)


def check_line_integral(phi, rng, samples):
    worst = 0.0
    m = min(samples, 2000)
    for Q, R in sample_pairs(rng, m, 0.0):
        # keep the segment at distance >= |Q|/2 from the origin
        dirn = R / to.frob(R)[:, None, None]
        P = Q + 0.5 * to.frob(Q)[:, None, None] * dirn
        worst = max(worst, float(np.max(line_integral_error(phi, P, Q))))
    return CheckResult("line_integral", m, 1e-6 - worst, 0.0, worst,
                       _status(worst <= 1e-6, _smooth(phi)))


def check_rotation(phi, rng, samples):
    worst = 0.0
    for P, _ in sample_pairs(rng, samples, 0.0):
        n = P.shape[-1]
        Rm, _ = np.linalg.qr(rng.standard_normal((n, n)))
        a1 = to.A_of(phi, P @ Rm)
        a2 = to.A_of(phi, P) @ Rm
        v1, v2 = to.frob(to.V_of(phi, P @ Rm)), to.frob(to.V_of(phi, P))
        err = np.maximum(to.frob(a1 - a2) / np.maximum(to.frob(a2), 1e-300),
                         np.abs(v1 - v2) / np.maximum(v2, 1e-300))
        worst = max(worst, float(err.max()))
    return CheckResult("rotation", samples, 1e-12 - worst, 0.0, worst, _status(worst <= 1e-12))


def check_hessian_holder(phi, rng, samples):
    m = min(samples, 2000)
    ratios = []
    for Q, R in sample_pairs(rng, m, 0.0):
        frac = rng.uniform(0.01, 0.5, len(Q))
        P = Q + (frac * to.frob(Q) / to.frob(R))[:, None, None] * R
        for k in range(len(Q)):
            ratios.append(to.hessian_holder_ratio(phi, Q[k], P[k]))
    hi = float(np.max(ratios))
    c_h = getattr(phi, "c_h", None)
    hard = c_h is not None
    ok = hi <= c_h if hard else math.isfinite(hi)
    return CheckResult("hessian_holder", m, (c_h - hi) if hard else hi, float(np.min(ratios)), hi,
                       _status(ok, hard or _smooth(phi)))


CHECKS = {
    "characteristic": check_characteristic,
    "assumption2": check_assumption2,
    "scaling_bands": check_scaling,
    "young_gap": check_young,
    "young_equality": check_young_equality,
    "conjugate_band": check_conjugate_band,
    "fd_derivatives": check_fd,
    "shift_zero_identity": check_shift_zero,
    "almost_monotone": check_almost_monotone,
    "shift_equivalence": check_shift_equivalence,
    "change_of_shift": check_change_of_shift,
    "ellipticity": check_ellipticity,
    "dense_eigen": check_dense_eigen,
    "monotonicity": check_monotonicity,
    "pairing_vs_v": check_v_band,
    "pairing_vs_modular": check_modular_band,
    "a_difference": check_a_difference,
    "a_difference_band": check_a_lipschitz_band,
    "shift_comparison": check_shift_comparison,
    "shift_triangle": check_shift_triangle,
    "line_integral": check_line_integral,
    "rotation": check_rotation,
    "hessian_holder": check_hessian_holder,
}


def run_suite(phi, seed, samples=10_000, checks=None, threads=1):
    """Run the named checks (default: all) and return results in CHECKS order."""
    names = list(CHECKS) if checks is None else list(checks)
    unknown = [c for c in names if c not in CHECKS]
    if unknown:
        raise UsageError(f"unknown checks: {', '.join(unknown)}")

    def one(name):
        return CHECKS[name](phi, substream(seed, name), samples)

    if threads <= 1:
        return [one(c) for c in names]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, names))
