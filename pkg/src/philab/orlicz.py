"""N-functions, their shifts and conjugates, and sampled checks of the
standard Orlicz growth inequalities.

All evaluators accept scalars or numpy arrays and return the same shape
(python floats for scalar input).  Every family is normalised so that
``phi(1) == 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import DomainError, UsageError

__all__ = [
    "Family",
    "NFunction",
    "ShiftedNFunction",
    "shifted_eval",
    "shifted_deriv",
    "conjugate",
    "check_characteristic",
    "check_assumption2",
    "young_gap",
    "shift_equivalence_ratios",
    "change_of_shift_constant",
    "scaling_band_margin",
    "almost_monotone_margin",
    "conjugate_band",
    "fd_derivative_error",
    "default_grid",
]

_LOG2 = math.log(2.0)
KINK_SKIP = 1e-8


class Family(str, Enum):
    POWER = "power"
    POWERLOG = "powerlog"
    MAXPOWERS = "maxpowers"
    MINPOWERS = "minpowers"


def _nonneg(t, name="t"):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"{name} must be finite and >= 0, got {t!r}")
    return arr


def _out(arr, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def default_grid(num=400, lo=1e-6, hi=1e6):
    return np.logspace(math.log10(lo), math.log10(hi), num)


@dataclass(frozen=True)
class NFunction:
    """Closed-form growth function ``phi`` with ``phi(1) = 1``.

    ``power``      t**p
    ``powerlog``   t**p * log(1+t) / log 2      (q defaults to p + 1)
    ``maxpowers``  max(t**p, t**q)              (kink at t = 1)
    ``minpowers``  min(t**p, t**q)              (kink at t = 1)

    ``L`` is the almost-monotonicity constant; ``gamma1`` and ``c_h`` are
    the optional Hessian-Hölder data.
    """

    family: Family
    p: float
    q: float | None = None
    L: float = 1.0
    gamma1: float | None = None
    c_h: float | None = None

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        p = float(self.p)
        object.__setattr__(self, "p", p)
        if not (math.isfinite(p) and p > 1):
            raise UsageError(f"growth exponent p must satisfy p > 1, got {p}")
        q = self.q
        if q is None:
            if fam in (Family.MAXPOWERS, Family.MINPOWERS):
                raise UsageError(f"{fam.value} needs an explicit q")
            q = p + 1.0 if fam is Family.POWERLOG else p
        q = float(q)
        object.__setattr__(self, "q", q)
        if not (math.isfinite(q) and q >= p):
            raise UsageError(f"need p <= q, got p={p}, q={q}")
        if fam is Family.POWER and q != p:
            raise UsageError("power family has p == q")
        if fam is Family.POWERLOG and q < p + 1.0:
            raise UsageError("powerlog family needs q >= p + 1")
        if not (self.L >= 1):
            raise UsageError(f"L must be >= 1, got {self.L}")
        for name in ("gamma1", "c_h"):
            val = getattr(self, name)
            if val is not None and not (val > 0):
                raise UsageError(f"{name} must be > 0 when given")

    # constructors -----------------------------------------------------
    @classmethod
    def power(cls, p, **kw):
        return cls(Family.POWER, p, **kw)

    @classmethod
    def powerlog(cls, p, **kw):
        return cls(Family.POWERLOG, p, **kw)

    @classmethod
    def maxpowers(cls, p, q, **kw):
        return cls(Family.MAXPOWERS, p, q, **kw)

    @classmethod
    def minpowers(cls, p, q, **kw):
        return cls(Family.MINPOWERS, p, q, **kw)

    # structure ------------------------------------------------------------
    @property
    def kinks(self):
        if self.family in (Family.MAXPOWERS, Family.MINPOWERS) and self.q > self.p:
            return (1.0,)
        return ()

    @property
    def base(self):
        return self

    @property
    def shift(self):
        return 0.0

    def _pieces(self):
        """(lo, hi, k) ranges on which phi(x) == x**k, or None."""
        if self.family is Family.POWER:
            return [(0.0, math.inf, self.p)]
        if self.family is Family.MAXPOWERS:
            return [(0.0, 1.0, self.p), (1.0, math.inf, self.q)]
        if self.family is Family.MINPOWERS:
            return [(0.0, 1.0, self.q), (1.0, math.inf, self.p)]
        return None

    def _exponent(self, x):
        # derivatives at the kink are right limits
        if self.family is Family.MAXPOWERS:
            return np.where(x < 1.0, self.p, self.q)
        if self.family is Family.MINPOWERS:
            return np.where(x < 1.0, self.q, self.p)
        return self.p

    def shifted(self, a):
        return ShiftedNFunction(self, a)

    # evaluators -----------------------------------------------------------
    def __call__(self, t):
        x = _nonneg(t)
        return _out(self._value(x), t)

    def deriv(self, t):
        x = _nonneg(t)
        return _out(self._deriv(x), t)

    def deriv2(self, t):
        x = _nonneg(t)
        if np.any(x == 0):
            raise DomainError("second derivative is only defined for t > 0")
        return _out(self._deriv2(x), t)

    def diffusivity(self, t):
        """phi'(t)/t, with the t -> 0 limit (0, 2 or inf) at t = 0."""
        x = _nonneg(t)
        return _out(self._diffusivity(x), t)

    def conjugate(self, s):
        return conjugate(self, s)

    def _value(self, x):
        if self.family is Family.POWERLOG:
            return x**self.p * np.log1p(x) / _LOG2
        return x ** self._exponent(x)

    def _deriv(self, x):
        if self.family is Family.POWERLOG:
            return x ** (self.p - 1) * (self.p * np.log1p(x) + x / (1 + x)) / _LOG2
        k = self._exponent(x)
        return k * x ** (k - 1)

    def _deriv2(self, x):
        p = self.p
        if self.family is Family.POWERLOG:
            s = x / (1 + x)
            return x ** (p - 2) * (p * (p - 1) * np.log1p(x) + 2 * p * s - s * s) / _LOG2
        k = self._exponent(x)
        with np.errstate(divide="ignore"):
            return k * (k - 1) * x ** (k - 2)

    def _diffusivity(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.family is Family.POWERLOG:
                out = x ** (self.p - 2) * (self.p * np.log1p(x) + x / (1 + x)) / _LOG2
                # behaves like (p+1) x^(p-1) near the origin
                return np.where(x == 0, 0.0, out)
            k = self._exponent(x)
            return k * x ** (k - 2)

    # serialisation --------------------------------------------------------
    def to_record(self):
        rec = {"family": self.family.value, "p": repr(self.p), "q": repr(self.q),
               "L": repr(float(self.L))}
        if self.gamma1 is not None:
            rec["gamma1"] = repr(float(self.gamma1))
        if self.c_h is not None:
            rec["c_h"] = repr(float(self.c_h))
        return rec

    @classmethod
    def from_record(cls, rec: Mapping[str, str]):
        unknown = set(rec) - {"family", "p", "q", "L", "gamma1", "c_h"}
        if unknown:
            raise UsageError(f"unknown N-function keys: {sorted(unknown)}")
        try:
            fam = Family(str(rec["family"]).strip().lower())
            p = float(rec["p"])
            q = float(rec["q"]) if rec.get("q") not in (None, "") else None
            L = float(rec.get("L", 1.0))
            g = float(rec["gamma1"]) if rec.get("gamma1") not in (None, "") else None
            c = float(rec["c_h"]) if rec.get("c_h") not in (None, "") else None
        except KeyError as exc:
            raise UsageError(f"missing N-function key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise UsageError(f"bad N-function record: {exc}") from None
        return cls(fam, p, q, L, g, c)

    def label(self):
        if self.family is Family.POWER:
            return f"power({self.p:g})"
        if self.family is Family.POWERLOG:
            return f"powerlog({self.p:g})"
        return f"{self.family.value}({self.p:g},{self.q:g})"


# ---------------------------------------------------------------------------
# shifted functions


def _series_coeffs(k, jmax=12):
    return [(k**j - k * (k - 1) ** (j - 1)) / math.factorial(j) for j in range(2, jmax + 1)]


def _expm1_gap(k, l):
    """expm1(k l) - k/(k-1) expm1((k-1) l) without cancellation for small l."""
    direct = np.expm1(k * l) - k / (k - 1) * np.expm1((k - 1) * l)
    small = l < 0.05
    if np.any(small):
        ls = np.where(small, l, 0.0)
        ser = np.zeros_like(ls)
        for c in reversed(_series_coeffs(k)):
            ser = (ser + c) * ls
        ser = ser * ls
        direct = np.where(small, ser, direct)
    return direct


def _power_piece(x0, length, a, k):
    # int_{x0}^{x0+length} k x^(k-2) (x - a) dx  for 0 < a <= x0
    l = np.log1p(length / x0)
    return x0 ** (k - 1) * (x0 * _expm1_gap(k, l) + (x0 - a) * k / (k - 1) * np.expm1((k - 1) * l))


def _graded_rule(panels=40, nodes=16):
    xi, wi = np.polynomial.legendre.leggauss(nodes)
    us, ws = [], []
    for j in range(panels):
        lo, hi = 2.0 ** (-j - 1), 2.0 ** (-j)
        us.append(lo + (hi - lo) * (xi + 1) / 2)
        ws.append((hi - lo) * wi / 2)
    lo, hi = 0.0, 2.0 ** (-panels)
    us.append(lo + (hi - lo) * (xi + 1) / 2)
    ws.append((hi - lo) * wi / 2)
    return np.concatenate(us), np.concatenate(ws)


_GRADED_U, _GRADED_W = _graded_rule()


def _shifted_quadrature(base, a, t, chunk=2048):
    """int_0^t phi'(a+s) s/(a+s) ds on geometrically graded Gauss panels."""
    out = np.empty_like(t)
    flat_a, flat_t, flat_o = a.ravel(), t.ravel(), out.ravel()
    for i in range(0, flat_t.size, chunk):
        ta = flat_t[i:i + chunk, None]
        aa = flat_a[i:i + chunk, None]
        s = ta * _GRADED_U[None, :]
        g = base._diffusivity(aa + s) * s
        flat_o[i:i + chunk] = ta[:, 0] * (g @ _GRADED_W)
    return out


def shifted_eval(phi: NFunction, a, t):
    """phi_a(t), vectorised over both the shift ``a`` and the argument ``t``."""
    a_in, t_in = a, t
    a, x = np.broadcast_arrays(_nonneg(a, "shift"), _nonneg(t))
    res = np.zeros(x.shape)
    zero = a == 0
    if np.any(zero):
        res[zero] = phi._value(x[zero])
    pos = ~zero & (x > 0)
    if np.any(pos):
        ap, tp = a[pos], x[pos]
        pieces = phi._pieces()
        if pieces is None:
            res[pos] = _shifted_quadrature(phi, ap, tp)
        else:
            acc = np.zeros(ap.shape)
            for lo, hi, k in pieces:
                x0 = np.maximum(ap, lo)
                # length from t directly: a + t would round when t << a
                length = np.minimum(tp - (x0 - ap), hi - x0)
                m = length > 0
                if np.any(m):
                    acc[m] += _power_piece(x0[m], length[m], ap[m], k)
            res[pos] = acc
    if np.ndim(t_in) or np.ndim(a_in):
        return res
    return float(res)


def shifted_deriv(phi: NFunction, a, t):
    """phi_a'(t) = phi'(a+t) t/(a+t), vectorised over ``a`` and ``t``."""
    a = _nonneg(a, "shift")
    x = _nonneg(t)
    res = phi._diffusivity(a + x) * x
    res = np.where(a + x == 0, 0.0, res)
    if np.ndim(t) or np.ndim(a):
        return res
    return float(res)


@dataclass(frozen=True)
class ShiftedNFunction:
    """phi_a with phi_a'(t) = phi'(a+t) t/(a+t).

    Growth exponents are reported as ``min(p, 2)`` and ``max(q, 2)``: the
    shifted function interpolates between quadratic behaviour below ``a``
    and the base growth above it.  With ``a == 0`` every evaluator
    delegates to the base function.
    """

    base: NFunction
    a: float

    def __post_init__(self):
        a = float(self.a)
        if not (math.isfinite(a) and a >= 0):
            raise DomainError(f"shift must be finite and >= 0, got {self.a!r}")
        object.__setattr__(self, "a", a)

    @property
    def shift(self):
        return self.a

    @property
    def p(self):
        return self.base.p if self.a == 0 else min(self.base.p, 2.0)

    @property
    def q(self):
        return self.base.q if self.a == 0 else max(self.base.q, 2.0)

    @property
    def family(self):
        return self.base.family

    @property
    def kinks(self):
        return tuple(k - self.a for k in self.base.kinks if k > self.a)

    def __call__(self, t):
        if self.a == 0:
            return self.base(t)
        return shifted_eval(self.base, self.a, t)

    def deriv(self, t):
        if self.a == 0:
            return self.base.deriv(t)
        return shifted_deriv(self.base, self.a, t)

    def deriv2(self, t):
        if self.a == 0:
            return self.base.deriv2(t)
        x = _nonneg(t)
        y = self.a + x
        res = self.base._deriv2(y) * x / y + self.base._diffusivity(y) * self.a / y
        return _out(res, t)

    def diffusivity(self, t):
        if self.a == 0:
            return self.base.diffusivity(t)
        x = _nonneg(t)
        return _out(self.base._diffusivity(self.a + x), t)

    def conjugate(self, s):
        return conjugate(self, s)

    def _value(self, x):
        return np.asarray(self(x), dtype=float)

    def _deriv(self, x):
        return np.asarray(self.deriv(x), dtype=float)

    def _deriv2(self, x):
        return np.asarray(self.deriv2(x), dtype=float)

    def _diffusivity(self, x):
        return np.asarray(self.diffusivity(x), dtype=float)

    def label(self):
        return f"{self.base.label()}_shift{self.a:g}"


# ---------------------------------------------------------------------------
# conjugate and Young


_CONJ_GRID = np.logspace(-8, 8, 256)


def conjugate(phi, s, golden_steps=60):
    """phi*(s) = sup_{t >= 0} (s t - phi(t)).

    Closed form for the power family; otherwise the maximiser is bracketed
    on a 256-point log grid and refined by golden-section search.
    """
    sa = _nonneg(s, "s")
    base = getattr(phi, "base", phi)
    if phi is base and base.family is Family.POWER:
        p = base.p
        tstar = (sa / p) ** (1.0 / (p - 1))
        return _out((p - 1) * tstar**p, s)

    flat = sa.ravel()
    grid = _CONJ_GRID
    fgrid = np.asarray(phi(grid), dtype=float)
    obj = flat[:, None] * grid[None, :] - fgrid[None, :]
    idx = np.argmax(obj, axis=1)
    best = np.maximum(obj[np.arange(flat.size), idx], 0.0)
    lo = np.where(idx > 0, grid[np.maximum(idx - 1, 0)], 0.0)
    hi = grid[np.minimum(idx + 1, grid.size - 1)]

    def h(t):
        return flat * t - np.asarray(phi(t), dtype=float)

    invphi = (math.sqrt(5) - 1) / 2
    for _ in range(golden_steps):
        x1 = hi - invphi * (hi - lo)
        x2 = lo + invphi * (hi - lo)
        left = h(x1) >= h(x2)
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
    mid = 0.5 * (lo + hi)
    f1, f2 = h(mid), h(lo)
    res = np.maximum(best, np.maximum(f1, f2))
    res = np.where(flat == 0, 0.0, res)
    return _out(res.reshape(sa.shape), s)


def young_gap(phi, s, t):
    """phi(t) + phi*(s) - s t (non-negative by Young's inequality)."""
    sa, ta = _nonneg(s, "s"), _nonneg(t)
    res = np.asarray(phi(ta)) + np.asarray(conjugate(phi, sa)) - sa * ta
    if np.ndim(s) or np.ndim(t):
        return res
    return float(res)


# ---------------------------------------------------------------------------
# checkers


def _grid_without_kinks(phi, t_grid):
    if t_grid is None:
        t_grid = default_grid()
    t = np.asarray(t_grid, dtype=float).ravel()
    if t.size == 0:
        raise UsageError("t_grid is empty")
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise DomainError("t_grid must contain finite positive values")
    for k in phi.kinks:
        t = t[np.abs(t - k) > KINK_SKIP * k]
    if t.size == 0:
        raise UsageError("t_grid contains only kink points")
    return t


def check_characteristic(phi, t_grid=None):
    """Extremes of t phi'(t)/phi(t) over the grid; expect [p, q]."""
    t = _grid_without_kinks(phi, t_grid)
    r = t * np.asarray(phi.deriv(t)) / np.asarray(phi(t))
    return float(r.min()), float(r.max())


def check_assumption2(phi, t_grid=None):
    """Extremes of t phi''(t)/phi'(t) over the grid; expect [p-1, q-1]."""
    t = _grid_without_kinks(phi, t_grid)
    r = t * np.asarray(phi.deriv2(t)) / np.asarray(phi.deriv(t))
    return float(r.min()), float(r.max())


def shift_equivalence_ratios(phi: NFunction, a, t):
    """Return the three ratios behind the standard shifted equivalences.

    ``phi_a(t) / (phi_a'(t) t)``, ``phi_a(t) / (phi''(a+t) t^2)`` and
    ``phi(a+t) / (phi_a(t) + phi(a))``.
    """
    ta = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(ta)) or np.any(ta <= 0):
        raise DomainError("t must be > 0")
    aa = _nonneg(a, "shift")
    val = np.asarray(shifted_eval(phi, aa, ta))
    r1 = val / (np.asarray(shifted_deriv(phi, aa, ta)) * ta)
    r2 = val / (phi._deriv2(aa + ta) * ta * ta)
    r3 = phi._value(aa + ta) / (val + phi._value(aa))
    if np.ndim(a) or np.ndim(t):
        return r1, r2, r3
    return float(r1), float(r2), float(r3)


def change_of_shift_constant(phi: NFunction, eta, a, b, t):
    """Smallest c with phi_|a|(t) <= c phi_|b|(t) + eta phi_|a|(|a-b|).

    ``a`` and ``b`` are sample arrays of shape (m,) (signed reals) or
    (m, d) (flattened matrices); ``t`` has shape (m,).
    """
    if not eta > 0:
        raise UsageError(f"eta must be > 0, got {eta}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = _nonneg(t).ravel()
    if a.shape != b.shape or a.shape[0] != t.size:
        raise UsageError("a, b, t sample counts differ")
    if a.ndim == 1:
        na, nb, dist = np.abs(a), np.abs(b), np.abs(a - b)
    else:
        flat = (a.shape[0], -1)
        na = np.linalg.norm(a.reshape(flat), axis=1)
        nb = np.linalg.norm(b.reshape(flat), axis=1)
        dist = np.linalg.norm((a - b).reshape(flat), axis=1)
    lhs = shifted_eval(phi, na, t) - eta * shifted_eval(phi, na, dist)
    den = shifted_eval(phi, nb, t)
    ok = den > 0
    if not np.any(ok):
        return 0.0
    return float(max(0.0, np.max(lhs[ok] / den[ok])))


def scaling_band_margin(phi, t, c):
    """Worst relative violation of c^q phi(t) <= phi(ct) <= c^p phi(t) (c < 1)
    or c^p phi(t) <= phi(ct) <= c^q phi(t) (c > 1); >= 0 means satisfied."""
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=float)
    f, fc = np.asarray(phi(t)), np.asarray(phi(c * t))
    lo_e = np.where(c < 1, phi.q, phi.p)
    hi_e = np.where(c < 1, phi.p, phi.q)
    lo = c**lo_e * f
    hi = c**hi_e * f
    return float(np.min(np.minimum(fc - lo, hi - fc) / np.maximum(fc, 1e-300)))


def almost_monotone_margin(phi, s, t):
    """Two-point check that phi/t^p is almost increasing and phi/t^q almost
    decreasing with constant L.  Returns the worst relative margin."""
    s, t = np.minimum(s, t), np.maximum(s, t)
    fs, ft = np.asarray(phi(s)), np.asarray(phi(t))
    L = getattr(phi, "L", getattr(getattr(phi, "base", None), "L", 1.0))
    inc = (L * ft / t**phi.p - fs / s**phi.p) / (L * ft / t**phi.p)
    dec = (L * fs / s**phi.q - ft / t**phi.q) / (L * fs / s**phi.q)
    return float(min(inc.min(), dec.min()))


def conjugate_band(phi, t):
    """Range of phi*(phi'(t)) / phi(t) over the samples."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(conjugate(phi, np.asarray(phi.deriv(t)))) / np.asarray(phi(t))
    return float(r.min()), float(r.max())


def fd_derivative_error(phi, t, rel_step=1e-5):
    """Max relative error of deriv/deriv2 against centred differences.

    Points whose stencil straddles a kink are dropped.
    """
    t = np.asarray(t, dtype=float)
    h = rel_step * t
    for k in phi.kinks:
        t_ok = np.abs(t - k) > 2 * h
        t, h = t[t_ok], h[t_ok]
    f = lambda x: np.asarray(phi(x), dtype=float)
    d = lambda x: np.asarray(phi.deriv(x), dtype=float)
    fd1 = (f(t + h) - f(t - h)) / (2 * h)
    fd2 = (d(t + h) - d(t - h)) / (2 * h)
    e1 = np.abs(fd1 - d(t)) / np.abs(d(t))
    e2 = np.abs(fd2 - np.asarray(phi.deriv2(t))) / np.abs(np.asarray(phi.deriv2(t)))
    return float(e1.max()), float(e2.max())
