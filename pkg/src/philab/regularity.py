"""Diagnostics evaluating both sides of the regularity estimates on fields.

Every average and supremum is taken element-wise: on each stored time
slice a P1 field has one gradient per element and its barycentric value
is the vertex mean.  An element belongs to the ball ``B_r(x0)`` when its
barycenter does, and slice ``k`` (representing ``(t_{k-1}, t_k]``) belongs
to the time window ``(t0 - depth, t0]`` when ``t_k`` does.  Space-time
averages weight element ``e`` on slice ``k`` by ``|e| * (t_k - t_{k-1})``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import AssumptionViolation, DomainError, FitDegenerateError, NumericError, UsageError
from .orlicz import NFunction, ShiftedNFunction
from .tensorops import frob

__all__ = [
    "EstimateId",
    "EstimateReport",
    "IntrinsicCylinder",
    "HolderFit",
    "CylinderSelection",
    "REPORT_HEADER",
    "lambda_exponent",
    "lambda_intrinsic",
    "chi0",
    "chi1",
    "embedding_theta",
    "select",
    "plain_cylinder",
    "sup_u_check",
    "grad_sup_check",
    "oscillation",
    "holder_fit",
    "density_diagnostics",
    "embedding_check",
    "reports_to_csv",
]

_TOL = 1e-12


class EstimateId(str, Enum):
    SupU = "SupU"
    SupGrad = "SupGrad"
    OscDecay = "OscDecay"
    Embedding = "Embedding"
    DensityNondeg = "DensityNondeg"
    DensityDeg = "DensityDeg"


REPORT_HEADER = ("estimate_id", "lhs", "rhs", "constant", "lambda", "r", "R", "eps",
                 "h", "dt", "n", "N", "p", "q")


@dataclass(frozen=True)
class EstimateReport:
    estimate_id: EstimateId
    lhs: float
    rhs: float
    constant: float
    lam: float = math.nan
    r: float = math.nan
    R: float = math.nan
    eps: float = math.nan
    h: float = math.nan
    dt: float = math.nan
    n: int = 0
    N: int = 0
    p: float = math.nan
    q: float = math.nan
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.lhs < 0 or self.rhs < 0:
            raise NumericError(f"{self.estimate_id}: negative side lhs={self.lhs}, rhs={self.rhs}")

    def row(self):
        vals = [self.estimate_id.value]
        for name in REPORT_HEADER[1:]:
            v = getattr(self, "lam" if name == "lambda" else name)
            vals.append(str(v) if isinstance(v, int) else repr(float(v)))
        return vals


def reports_to_csv(reports, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for rep in reports:
        w.writerow(rep.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _base(phi):
    return phi.base if isinstance(phi, ShiftedNFunction) else phi


@dataclass(frozen=True)
class IntrinsicCylinder:
    """B_r(x0) x (t0 - r^2/phi''(lam), t0] for the base N-function phi."""

    x0: tuple
    t0: float
    r: float
    lam: float
    phi: NFunction

    def __post_init__(self):
        if not (self.r > 0):
            raise UsageError("cylinder radius must be > 0")
        if not (self.lam > 0):
            raise UsageError("lambda must be > 0")
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))

    @property
    def time_depth(self):
        return self.r**2 / float(_base(self.phi).deriv2(self.lam))


@dataclass(frozen=True)
class _Plain:
    # lambda-free cylinder B_r x (t0 - r^2, t0]
    x0: tuple
    t0: float
    r: float

    @property
    def time_depth(self):
        return self.r**2


def plain_cylinder(x0, t0, r):
    if not (r > 0):
        raise UsageError("cylinder radius must be > 0")
    return _Plain(tuple(float(v) for v in np.atleast_1d(x0)), float(t0), float(r))


class CylinderSelection(NamedTuple):
    elements: np.ndarray  # indices into the mesh elements
    slices: np.ndarray  # indices into field.times
    weights: np.ndarray  # (len(slices), len(elements)) space-time weights


def _check_inside(fld, cyl):
    m = fld.mesh
    x0 = np.asarray(cyl.x0, dtype=float)
    if x0.shape != (m.n,):
        raise UsageError(f"center has dimension {x0.size}, mesh has n={m.n}")
    if np.any(x0 - cyl.r < -_TOL) or np.any(x0 + cyl.r > 1 + _TOL):
        raise DomainError(f"ball B_{cyl.r}({cyl.x0}) leaves the unit domain")
    t0 = cyl.t0
    if t0 > fld.times[-1] + _TOL or t0 - cyl.time_depth < fld.times[0] - _TOL:
        raise DomainError(
            f"time window ({t0 - cyl.time_depth}, {t0}] leaves [{fld.times[0]}, {fld.times[-1]}]")


def select(fld, cyl, check=True):
    """Elements and slices of ``fld`` inside the cylinder ``cyl``."""
    if check:
        _check_inside(fld, cyl)
    m = fld.mesh
    x0 = np.asarray(cyl.x0, dtype=float)
    dist = np.sqrt(np.sum((m.centroids - x0) ** 2, axis=1))
    elems = np.nonzero(dist < cyl.r)[0]
    t = fld.times
    lo = cyl.t0 - cyl.time_depth
    slices = np.nonzero((t > lo) & (t <= cyl.t0) & (fld.time_weights > 0))[0]
    if elems.size == 0 or slices.size == 0:
        raise UsageError("cylinder contains no element or no time slice")
    w = np.outer(fld.time_weights[slices], m.measures[elems])
    return CylinderSelection(elems, slices, w)


def _avg(values, sel):
    return float(np.sum(values * sel.weights) / np.sum(sel.weights))


def _grad_mod(fld, sel):
    Du = fld.gradients()[np.ix_(sel.slices, sel.elements)]
    return frob(Du)


def _u_mod(fld, sel):
    ue = fld.element_values()[np.ix_(sel.slices, sel.elements)]
    return np.sqrt(np.sum(ue * ue, axis=-1))


def lambda_exponent(n, p):
    den = (n + 2) * p - 2 * n
    if den <= 0:
        raise AssumptionViolation(f"need p > 2n/(n+2); got p={p}, n={n}")
    return 2.0 / den


def chi0(n, p, q):
    return min((p * (n + 2) / n - 2) / q, 2.0 / n)


def chi1(n, p):
    return 4.0 / n + p - 2


def _context(fld, phi, eps=math.nan):
    b = _base(phi)
    dt = float(np.max(fld.time_weights)) if len(fld.times) > 1 else math.nan
    return dict(h=fld.mesh.h, dt=dt, n=fld.mesh.n, N=fld.N, p=float(b.p), q=float(b.q), eps=eps)


def lambda_intrinsic(fld, phi, region):
    """(avg_region phi(|Du|) + 1)^{2/((n+2)p-2n)}, phi the base N-function."""
    b = _base(phi)
    expo = lambda_exponent(fld.mesh.n, b.p)
    sel = select(fld, region)
    avg = _avg(np.asarray(b(_grad_mod(fld, sel))), sel)
    return (avg + 1.0) ** expo


def _ratio(lhs, rhs):
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def sup_u_check(fld, phi, r, z0):
    """Bounded-solution estimate on the plain cylinders Q_r and Q_2r."""
    b = _base(phi)
    n = fld.mesh.n
    x0, t0 = z0
    sel_in = select(fld, plain_cylinder(x0, t0, r))
    sel_out = select(fld, plain_cylinder(x0, t0, 2 * r))
    c0 = chi0(n, b.p, b.q)
    if not (c0 > 0):
        raise AssumptionViolation(f"chi0 = {c0} is not positive")
    s_in = _u_mod(fld, sel_in) / r
    lhs = float(np.max(b(s_in)))
    s = _u_mod(fld, sel_out) / r
    ph = np.asarray(b(s))
    psi = np.maximum(s * s, ph)
    rhs = _avg(psi * ph**c0, sel_out) ** (1.0 / c0) + 1.0
    return EstimateReport(EstimateId.SupU, lhs, rhs, _ratio(lhs, rhs), r=r, R=2 * r,
                          extra={"chi0": c0}, **_context(fld, phi))


def grad_sup_check(fld, phi, r, z0, epsilon):
    """Gradient sup estimate; rhs uses the shifted phi_eps on Q_2r."""
    b = _base(phi)
    n = fld.mesh.n
    expo = lambda_exponent(n, b.p)
    x0, t0 = z0
    sel_in = select(fld, plain_cylinder(x0, t0, r))
    sel_out = select(fld, plain_cylinder(x0, t0, 2 * r))
    lhs = float(np.max(_grad_mod(fld, sel_in)))
    phe = b.shifted(epsilon) if epsilon > 0 else b
    avg = _avg(np.asarray(phe(_grad_mod(fld, sel_out))), sel_out)
    rhs = (avg + 1.0) ** expo
    return EstimateReport(EstimateId.SupGrad, lhs, rhs, _ratio(lhs, rhs), r=r, R=2 * r,
                          extra={"chi1": chi1(n, b.p)}, **_context(fld, phi, epsilon))


def _diameter(pts):
    pts = np.unique(pts, axis=0)
    if len(pts) < 2:
        return 0.0
    if pts.shape[1] == 1:
        return float(pts.max() - pts.min())
    if len(pts) > 64:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except (QhullError, ValueError):
            pass  # flat point sets: fall back to all pairs
    best = 0.0
    chunk = max(1, 2_000_000 // len(pts))
    for i in range(0, len(pts), chunk):
        d = pts[i:i + chunk, None, :] - pts[None, :, :]
        best = max(best, float(np.max(np.einsum("ijk,ijk->ij", d, d))))
    return math.sqrt(best)


def oscillation(fld, cyl):
    """Diameter of {Du(e, t_k)} over the cylinder in the Frobenius norm."""
    sel = select(fld, cyl)
    Du = fld.gradients()[np.ix_(sel.slices, sel.elements)]
    return _diameter(Du.reshape(-1, Du.shape[-2] * Du.shape[-1]))


class HolderFit(NamedTuple):
    alpha: float
    intercept: float
    residual: float
    excluded: int
    lam: float
    radii: tuple
    osc: tuple


def holder_fit(fld, phi, z0, R, radii):
    """Least-squares slope of log osc(Q^lam_r) against log(r * scale).

    ``scale = max(phi''(lam)^{1/2}, phi''(lam)^{-1/2}) / R`` with ``lam``
    from the plain cylinder Q_2R.  Zero oscillations are dropped and
    counted in ``excluded``.
    """
    radii = [float(r) for r in radii]
    if len(radii) < 4:
        raise UsageError("holder_fit needs at least 4 radii")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise UsageError("radii must be strictly decreasing")
    b = _base(phi)
    x0, t0 = z0
    lam = lambda_intrinsic(fld, b, plain_cylinder(x0, t0, 2 * R))
    d2 = float(b.deriv2(lam))
    scale = max(math.sqrt(d2), 1.0 / math.sqrt(d2)) / R
    osc = [oscillation(fld, IntrinsicCylinder(x0, t0, r, lam, b)) for r in radii]
    keep = [(r, o) for r, o in zip(radii, osc) if o > 0]
    if len(keep) < 2:
        raise FitDegenerateError(f"only {len(keep)} nonzero oscillations among {len(osc)}")
    x = np.log([r * scale for r, _ in keep])
    y = np.log([o for _, o in keep])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sum((A @ coef - y) ** 2))
    return HolderFit(float(coef[0]), float(coef[1]), res, len(osc) - len(keep), lam,
                     tuple(radii), tuple(osc))


def density_diagnostics(fld, cyl, sigma):
    """Fraction of Q^lam_r where |Du| <= (1 - sigma) lam.

    Returns ``(fraction, fraction <= sigma, fraction > sigma)``.
    """
    if not (0 < sigma < 0.5):
        raise UsageError(f"sigma must lie in (0, 1/2), got {sigma}")
    sel = select(fld, cyl)
    small = _grad_mod(fld, sel) <= (1 - sigma) * cyl.lam
    frac = float(np.sum(sel.weights * small) / np.sum(sel.weights))
    return frac, frac <= sigma, frac > sigma


def embedding_theta(n, m, p, q):
    return n * (n * m - n * q - m * q) / ((n + m) * (n * m - n * q - m * p))


def embedding_check(fld, phi, m, r, time_window, x0=None, component=0, theta=None):
    """Parabolic embedding on B_r(x0) x (t_lo, t_hi] for one component f.

    lhs = avg phi(|f/r|)^{(n+m)/n}; rhs = (avg [phi(|Df|) + phi(|f/r|)])^{theta (n+m)/n}
    * phi((max_t avg_x |f/r|^m)^{1/m})^{(1-theta)(n+m)/n}.  Both averages on
    the first factor run over space-time.
    """
    b = _base(phi)
    n = fld.mesh.n
    if not (max(1.0, m * n / (n + m)) < b.p <= b.q):
        raise AssumptionViolation(f"need max(1, mn/(n+m)) < p <= q, got p={b.p}, m={m}, n={n}")
    if theta is None:
        theta = embedding_theta(n, m, b.p, b.q)
    if not (0 < theta < 1):
        raise AssumptionViolation(f"theta = {theta} outside (0, 1)")
    if x0 is None:
        x0 = np.full(n, 0.5)
    t_lo, t_hi = time_window
    if not (t_hi > t_lo):
        raise UsageError("time window must have t_hi > t_lo")
    cyl = _Window(tuple(np.atleast_1d(np.asarray(x0, dtype=float))), float(t_hi), float(r),
                  float(t_hi - t_lo))
    sel = select(fld, cyl)
    f = fld.element_values()[np.ix_(sel.slices, sel.elements)][..., component]
    Df = fld.gradients()[np.ix_(sel.slices, sel.elements)][..., component, :]
    s = np.abs(f) / r
    ph = np.asarray(b(s))
    k = (n + m) / n
    lhs = _avg(ph**k, sel)
    first = _avg(np.asarray(b(np.sqrt(np.sum(Df * Df, axis=-1)))) + ph, sel)
    wx = sel.weights / np.sum(sel.weights, axis=1, keepdims=True)
    sup_t = float(np.max(np.sum(s**m * wx, axis=1)))
    second = float(b(sup_t ** (1.0 / m)))
    rhs = first ** (theta * k) * second ** ((1 - theta) * k)
    return EstimateReport(EstimateId.Embedding, lhs, rhs, _ratio(lhs, rhs), r=r,
                          R=math.nan, extra={"theta": theta, "m": m}, **_context(fld, phi))


@dataclass(frozen=True)
class _Window:
    x0: tuple
    t0: float
    r: float
    time_depth: float
