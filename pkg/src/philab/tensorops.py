"""Uhlenbeck-type operators on gradient matrices.

A gradient matrix ``Q`` is an array of shape ``(..., N, n)`` with
``Q[..., alpha, i]`` the derivative of component ``alpha`` in direction
``i``.  Leading axes are batch axes; every operator here broadcasts over
them.  ``phi`` may be an :class:`~philab.orlicz.NFunction` or a
:class:`~philab.orlicz.ShiftedNFunction`.
"""
from __future__ import annotations

import numpy as np

from .errors import SingularityError, UsageError
from .orlicz import shifted_deriv, shifted_eval

__all__ = [
    "frob",
    "A_of",
    "V_of",
    "Vp_of",
    "A_shifted",
    "V_shifted",
    "hessian_matrix",
    "hessian",
    "ellipticity_check",
    "dense_eigenvalues",
    "monotonicity_triple",
    "a_difference_bounds",
    "hessian_holder_ratio",
    "shift_of",
    "shift_deriv_of",
]


def frob(Q):
    Q = np.asarray(Q, dtype=float)
    return np.sqrt(np.sum(Q * Q, axis=(-2, -1)))


def _check_finite(Q):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim < 2:
        raise UsageError("gradient matrices need shape (..., N, n)")
    if not np.all(np.isfinite(Q)):
        raise UsageError("gradient matrix has non-finite entries")
    return Q


def _coef(phi, t):
    # phi'(t)/t with the A(0) = 0 convention: the coefficient is irrelevant there
    c = np.asarray(phi.diffusivity(np.where(t == 0, 1.0, t)), dtype=float)
    return np.where(t == 0, 0.0, c)


def shift_of(phi, b, t):
    """(phi)_b(t).  Shifts compose additively: (phi_a)_b = phi_{a+b}."""
    return shifted_eval(phi.base, phi.shift + np.asarray(b, dtype=float), t)


def shift_deriv_of(phi, b, t):
    return shifted_deriv(phi.base, phi.shift + np.asarray(b, dtype=float), t)


def A_of(phi, Q):
    """phi'(|Q|)/|Q| * Q, with A(0) = 0."""
    Q = _check_finite(Q)
    t = frob(Q)
    return _coef(phi, t)[..., None, None] * Q


def V_of(phi, Q):
    """sqrt(phi'(|Q|)/|Q|) * Q, with V(0) = 0."""
    Q = _check_finite(Q)
    t = frob(Q)
    return np.sqrt(_coef(phi, t))[..., None, None] * Q


def Vp_of(p, a, Q):
    """(a + |Q|)^((p-2)/2) * Q."""
    Q = _check_finite(Q)
    if a < 0:
        raise UsageError("shift a must be >= 0")
    s = a + frob(Q)
    with np.errstate(divide="ignore"):
        c = np.where(s == 0, 0.0, np.power(np.where(s == 0, 1.0, s), (p - 2) / 2))
    return c[..., None, None] * Q


def A_shifted(phi, a, Q):
    """A^a(Q) = phi_a'(|Q|)/|Q| Q = phi'(a+|Q|)/(a+|Q|) Q."""
    Q = _check_finite(Q)
    t = frob(Q)
    c = phi.base._diffusivity(phi.shift + a + t)
    c = np.where(phi.shift + a + t == 0, 0.0, c)
    return c[..., None, None] * Q


def V_shifted(phi, a, Q):
    Q = _check_finite(Q)
    t = frob(Q)
    c = phi.base._diffusivity(phi.shift + a + t)
    c = np.where(phi.shift + a + t == 0, 0.0, c)
    return np.sqrt(c)[..., None, None] * Q


def hessian_matrix(phi, Q):
    """D^2_Q phi(|Q|) as a symmetric (Nn x Nn) matrix per batch entry.

    Rows and columns follow ``Q.reshape(..., N*n)`` (component-major).
    The structure is identity plus a rank-one correction along ``Q``:
    eigenvalue phi''(|Q|) on span(Q), phi'(|Q|)/|Q| on its complement.
    """
    Q = _check_finite(Q)
    t = frob(Q)
    zero = t == 0
    if np.any(zero) and phi.shift == 0:
        raise SingularityError("Hessian of an unshifted phi is singular at Q = 0")
    shape = Q.shape[:-2]
    d = Q.shape[-2] * Q.shape[-1]
    q = Q.reshape(shape + (d,))
    ts = np.where(zero, 1.0, t)
    c = np.asarray(phi.diffusivity(np.where(zero, 0.0, t)), dtype=float)
    d2 = np.asarray(phi.deriv2(np.where(zero, 0.0, t)), dtype=float)
    # at Q = 0 (shifted only) both coefficients equal phi_a''(0)
    rank1 = np.where(zero, 0.0, (d2 - c) / ts**2)
    H = c[..., None, None] * np.eye(d) + rank1[..., None, None] * (q[..., :, None] * q[..., None, :])
    return H


def hessian(phi, Q):
    """Rank-4 tensor A[i, alpha, j, beta] = d A(Q)_j^beta / d Q_i^alpha."""
    Q = _check_finite(Q)
    N, n = Q.shape[-2:]
    H = hessian_matrix(phi, Q).reshape(Q.shape[:-2] + (N, n, N, n))
    return np.swapaxes(H, -4, -3).swapaxes(-2, -1)


def ellipticity_check(phi, Q):
    """Extreme eigenvalues of the Hessian and the ellipticity band.

    Returns ``(lambda_min, lambda_max, lower_bound, upper_bound)`` using the
    analytic two-eigenvalue structure; broadcasts over batch axes.
    """
    Q = _check_finite(Q)
    t = frob(Q)
    if np.any(t == 0):
        raise UsageError("ellipticity check needs |Q| > 0")
    d = Q.shape[-2] * Q.shape[-1]
    c = np.asarray(phi.diffusivity(t), dtype=float)
    d2 = np.asarray(phi.deriv2(t), dtype=float)
    if d == 1:
        lam_min = lam_max = d2
    else:
        lam_min, lam_max = np.minimum(c, d2), np.maximum(c, d2)
    lo = min(phi.p - 1.0, 1.0) * c
    hi = max(phi.q - 1.0, 1.0) * c
    if np.ndim(t) == 0:
        return float(lam_min), float(lam_max), float(lo), float(hi)
    return lam_min, lam_max, lo, hi


def dense_eigenvalues(phi, Q):
    """Sorted eigenvalues of the assembled Hessian (dense symmetric solver)."""
    return np.linalg.eigvalsh(hessian_matrix(phi, Q))


def monotonicity_triple(phi, P, Q):
    """((A(P)-A(Q)):(P-Q), phi_|P|(|P-Q|), |V(P)-V(Q)|^2)."""
    P = _check_finite(P)
    Q = _check_finite(Q)
    D = P - Q
    pairing = np.sum((A_of(phi, P) - A_of(phi, Q)) * D, axis=(-2, -1))
    modular = shift_of(phi, frob(P), frob(D))
    dV = V_of(phi, P) - V_of(phi, Q)
    vdist = np.sum(dV * dV, axis=(-2, -1))
    if np.ndim(pairing) == 0:
        return float(pairing), float(modular), float(vdist)
    return pairing, np.asarray(modular), vdist


def a_difference_bounds(phi, a, Q, c_v=1.0):
    """Compare the shifted and unshifted operators at ``Q``.

    Returns ``(|A^a(Q)-A(Q)|, phi'_|Q|(a), |V^a(Q)-V(Q)|^2, c_v phi_|Q|(a))``.
    The first entry is at most the second whenever q <= 3; for faster
    growth the inequality only holds up to a constant.
    """
    Q = _check_finite(Q)
    if a < 0:
        raise UsageError("shift a must be >= 0")
    t = frob(Q)
    dA = A_shifted(phi, a, Q) - A_of(phi, Q)
    dV = V_shifted(phi, a, Q) - V_of(phi, Q)
    out = (
        frob(dA),
        np.asarray(shift_deriv_of(phi, t, a), dtype=float),
        np.sum(dV * dV, axis=(-2, -1)),
        c_v * np.asarray(shift_of(phi, t, a), dtype=float),
    )
    if np.ndim(t) == 0:
        return tuple(float(v) for v in out)
    return out


def hessian_holder_ratio(phi, Q, P, gamma1=None):
    """|D^2 phi(|Q|) - D^2 phi(|P|)|_F / ((|Q-P|/|Q|)^gamma1 phi''(|Q|))."""
    Q = _check_finite(Q)
    P = _check_finite(P)
    tq = float(frob(Q))
    dist = float(frob(Q - P))
    if tq == 0:
        raise UsageError("need |Q| > 0")
    if dist > 0.5 * tq:
        raise UsageError("need |Q - P| <= |Q|/2")
    if dist == 0:
        return 0.0
    if gamma1 is None:
        gamma1 = getattr(phi.base, "gamma1", None) or 1.0
    num = np.linalg.norm(hessian_matrix(phi, Q) - hessian_matrix(phi, P))
    return float(num / ((dist / tq) ** gamma1 * phi.deriv2(tq)))
