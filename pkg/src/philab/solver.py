"""P1 finite elements + implicit Euler for the regularised phi-Laplace system

    u_t - div( phi_eps'(|Du|)/|Du| Du ) = f   in (0,1)^n x (0,T]

with Dirichlet data on the whole boundary.  Each time step is a damped
Newton solve whose Jacobian blocks are the Hessians D^2 phi_eps(|Du|).
Mass and source terms use nodal (lumped) quadrature; the flux is exact on
each element because Du is piecewise constant.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, NumericError, UsageError
from .orlicz import NFunction, ShiftedNFunction
from .tensorops import V_shifted, frob, hessian_matrix

log = logging.getLogger(__name__)

__all__ = [
    "Mesh",
    "SolveConfig",
    "SpaceTimeField",
    "SweepReport",
    "assemble_residual",
    "assemble_jacobian",
    "newton_step_solve",
    "solve",
    "energy_series",
    "epsilon_sweep",
    "manufactured_1d",
]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured mesh of the unit box: intervals (n=1) or right triangles
    (n=2, each cell split along its (0,0)-(1,1) diagonal)."""

    n: int
    M: int
    nodes: np.ndarray
    elements: np.ndarray
    grads: np.ndarray  # (E, n, n+1): gradients of the barycentric basis
    measures: np.ndarray
    boundary: np.ndarray
    lumped: np.ndarray

    @classmethod
    def structured(cls, n, M):
        if n not in (1, 2):
            raise UsageError(f"mesh dimension must be 1 or 2, got {n}")
        if int(M) != M or M < 1:
            raise UsageError(f"mesh resolution M must be a positive integer, got {M}")
        M = int(M)
        h = 1.0 / M
        if n == 1:
            nodes = (np.arange(M + 1) * h)[:, None]
            elements = np.stack([np.arange(M), np.arange(1, M + 1)], axis=1)
            boundary = np.zeros(M + 1, dtype=bool)
            boundary[[0, M]] = True
        else:
            i, j = np.meshgrid(np.arange(M + 1), np.arange(M + 1), indexing="xy")
            nodes = np.stack([i.ravel() * h, j.ravel() * h], axis=1)
            idx = lambda a, b: a + (M + 1) * b
            ci, cj = np.meshgrid(np.arange(M), np.arange(M), indexing="xy")
            ci, cj = ci.ravel(), cj.ravel()
            v00, v10 = idx(ci, cj), idx(ci + 1, cj)
            v01, v11 = idx(ci, cj + 1), idx(ci + 1, cj + 1)
            elements = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
            ii, jj = i.ravel(), j.ravel()
            boundary = (ii == 0) | (ii == M) | (jj == 0) | (jj == M)
        X = nodes[elements]  # (E, n+1, n)
        B = np.swapaxes(X[:, 1:, :] - X[:, :1, :], 1, 2)  # columns x_k - x_0
        det = np.linalg.det(B)
        Binv = np.linalg.inv(B)  # rows: gradients of lambda_1..lambda_n
        grads = np.concatenate([-Binv.sum(axis=1, keepdims=True), Binv], axis=1)
        grads = np.swapaxes(grads, 1, 2)  # (E, n, n+1)
        measures = np.abs(det) / math.factorial(n)
        lumped = np.zeros(len(nodes))
        np.add.at(lumped, elements.ravel(), np.repeat(measures / (n + 1), n + 1))
        return cls(n, M, nodes, elements, grads, measures, boundary, lumped)

    @property
    def h(self):
        return 1.0 / self.M

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def centroids(self):
        return self.nodes[self.elements].mean(axis=1)

    def gradient(self, U):
        """Per-element gradients (E, N, n) of nodal values U (nodes, N)."""
        return np.einsum("eka,eik->eai", U[self.elements], self.grads)

    def element_values(self, U):
        return U[self.elements].mean(axis=1)


@dataclass
class SolveConfig:
    phi: NFunction
    epsilon: float
    dt: float
    T_final: float
    newton_tol: float = 1e-10
    newton_max_iters: int = 30
    damping: float = 0.5
    max_halvings: int = 30
    source: Optional[Callable] = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise UsageError(f"dt must be > 0, got {self.dt}")
        if not (self.T_final > 0):
            raise UsageError(f"T_final must be > 0, got {self.T_final}")
        if not (self.newton_tol > 0):
            raise UsageError("newton_tol must be > 0")
        if not (0 < self.damping < 1):
            raise UsageError("damping must lie in (0, 1)")
        if not (self.epsilon >= 0):
            raise UsageError("epsilon must be >= 0")

    @property
    def phi_eps(self):
        return ShiftedNFunction(self.phi, self.epsilon)

    @property
    def num_steps(self):
        return max(1, int(round(self.T_final / self.dt)))


@dataclass
class SpaceTimeField:
    """Nodal values on every stored time slice: ``values[k, node, alpha]``."""

    mesh: Mesh
    times: np.ndarray
    values: np.ndarray
    newton_iterations: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    energy: Optional[tuple] = None

    @property
    def N(self):
        return self.values.shape[-1]

    @property
    def initial(self):
        return self.values[0]

    @property
    def boundary_trace(self):
        return self.values[:, self.mesh.boundary, :]

    def gradients(self):
        """Element gradients for every slice, shape (K+1, E, N, n)."""
        m = self.mesh
        return np.einsum("teka,eik->teai", self.values[:, m.elements], m.grads)

    def element_values(self):
        return self.values[:, self.mesh.elements].mean(axis=2)

    @property
    def time_weights(self):
        """Length of the interval (t_{k-1}, t_k] represented by slice k (0 for k=0)."""
        w = np.zeros(len(self.times))
        w[1:] = np.diff(self.times)
        return w


def _nodal(fn_or_array, mesh, N=None, t=None):
    if callable(fn_or_array):
        out = fn_or_array(mesh.nodes) if t is None else fn_or_array(mesh.nodes, t)
    else:
        out = fn_or_array
    out = np.asarray(out, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.shape[0] != mesh.num_nodes or (N is not None and out.shape[1] != N):
        raise UsageError(f"nodal data has shape {out.shape}, mesh has {mesh.num_nodes} nodes")
    return out


def assemble_residual(mesh, phi_eps, u_new, u_old, dt, source=None):
    """Nodal residual of one implicit Euler step, shape (nodes, N).

    R_k = m_k (u_new - u_old)_k / dt - m_k f_k + sum_e |e| A(Du_e) : D zeta_k

    ``source`` is nodal forcing at the new time level (nodes, N) or None.
    Rows at Dirichlet nodes are included; callers drop them.
    """
    u_new = np.asarray(u_new, dtype=float)
    u_old = np.asarray(u_old, dtype=float)
    if u_new.shape != u_old.shape or u_new.shape[0] != mesh.num_nodes:
        raise UsageError("nodal arrays do not match the mesh")
    R = mesh.lumped[:, None] * (u_new - u_old) / dt
    if source is not None:
        R -= mesh.lumped[:, None] * source
    Du = mesh.gradient(u_new)
    t = frob(Du)
    bad = ~np.isfinite(t)
    if np.any(bad):
        raise NumericError(f"non-finite flux on element {int(np.argmax(bad))}")
    c = phi_eps.diffusivity(t) if phi_eps.shift > 0 else np.where(
        t == 0, 0.0, phi_eps.diffusivity(np.where(t == 0, 1.0, t)))
    flux = np.asarray(c)[:, None, None] * Du  # (E, N, n)
    local = mesh.measures[:, None, None] * np.einsum("eai,eik->eka", flux, mesh.grads)
    bad = ~np.isfinite(local)
    if np.any(bad):
        e = int(np.argwhere(bad)[0, 0])
        raise NumericError(f"non-finite flux on element {e}")
    np.add.at(R, mesh.elements.ravel(), local.reshape(-1, u_new.shape[1]))
    return R


def assemble_jacobian(mesh, phi_eps, u_new, dt):
    """Sparse Jacobian d R / d u_new over all nodal dofs (dof = node*N + alpha)."""
    N = u_new.shape[1]
    n1 = mesh.n + 1
    Du = mesh.gradient(u_new)
    H = hessian_matrix(phi_eps, Du).reshape(-1, N, mesh.n, N, mesh.n)
    Ke = mesh.measures[:, None, None, None, None] * np.einsum(
        "eik,eaibj,ejl->ekalb", mesh.grads, H, mesh.grads)
    dofs = (mesh.elements[:, :, None] * N + np.arange(N)[None, None, :]).reshape(-1, n1 * N)
    rows = np.repeat(dofs, n1 * N, axis=1).ravel()
    cols = np.tile(dofs, (1, n1 * N)).ravel()
    ndof = mesh.num_nodes * N
    K = sp.coo_matrix((Ke.reshape(-1), (rows, cols)), shape=(ndof, ndof)).tocsr()
    K = K + sp.diags(np.repeat(mesh.lumped / dt, N))
    return K


def newton_step_solve(mesh, phi_eps, u_old, dt, config, t_new=None, boundary_values=None,
                      source=None):
    """Damped Newton for one implicit Euler step.

    Returns ``(u_new, iterations, final_residual_norm)``.  Each accepted
    step does not increase the residual norm; the step length is reduced by
    ``config.damping`` up to ``config.max_halvings`` times.
    """
    if phi_eps.shift <= 0:
        raise UsageError("Newton solves need epsilon > 0")
    u = np.array(u_old, dtype=float, copy=True)
    N = u.shape[1]
    bnd = mesh.boundary
    if boundary_values is not None:
        u[bnd] = boundary_values
    free = np.repeat(~bnd, N)

    def rnorm(v):
        r = assemble_residual(mesh, phi_eps, v, u_old, dt, source)
        return r, float(np.linalg.norm(r.reshape(-1)[free]))

    r, norm = rnorm(u)
    history = [norm]
    it = 0
    while norm > config.newton_tol:
        if it >= config.newton_max_iters:
            raise ConvergenceFailure(
                f"Newton did not converge in {it} iterations (residual {norm:.3e})", history)
        K = assemble_jacobian(mesh, phi_eps, u, dt)[free][:, free]
        try:
            du = spla.spsolve(K.tocsc(), -r.reshape(-1)[free])
        except RuntimeError as exc:  # singular factorisation
            raise NumericError(f"singular Jacobian: {exc}") from exc
        if not np.all(np.isfinite(du)):
            raise NumericError("singular Jacobian: non-finite Newton direction")
        step = 1.0
        for _ in range(config.max_halvings + 1):
            trial = u.copy()
            trial.reshape(-1)[free] += step * du
            r_t, n_t = rnorm(trial)
            if n_t <= norm:
                break
            step *= config.damping
        else:
            raise ConvergenceFailure(
                f"line search failed after {config.max_halvings} reductions "
                f"(residual {norm:.3e})", history)
        u, r, norm = trial, r_t, n_t
        history.append(norm)
        it += 1
    return u, it, norm


def solve(mesh, config, initial, boundary=None, store_every=1):
    """March the regularised system from ``initial`` to ``config.T_final``.

    ``initial`` is nodal data (nodes, N) or a callable of the node
    coordinates; ``boundary`` is a callable ``g(x, t)`` or None to hold the
    initial boundary values fixed.  The energy series is attached to the
    returned field.
    """
    phi_eps = config.phi_eps
    if phi_eps.shift <= 0:
        raise UsageError("solving needs epsilon > 0")
    u0 = _nodal(initial, mesh)
    N = u0.shape[1]
    bnd = mesh.boundary
    if boundary is not None:
        g0 = _nodal(boundary, mesh, N, 0.0)[bnd]
        scale = 1.0 + np.max(np.abs(u0))
        if np.max(np.abs(g0 - u0[bnd]), initial=0.0) > 1e-8 * scale:
            raise UsageError("initial and boundary data disagree on the parabolic boundary")
        u0[bnd] = g0
    K = config.num_steps
    dt = config.dt
    times = [0.0]
    values = [u0.copy()]
    iters, norms = [], []
    u = u0
    for k in range(1, K + 1):
        t_new = k * dt
        g = _nodal(boundary, mesh, N, t_new)[bnd] if boundary is not None else None
        f = _nodal(config.source, mesh, N, t_new) if config.source is not None else None
        try:
            u, it, res = newton_step_solve(mesh, phi_eps, u, dt, config, t_new, g, f)
        except ConvergenceFailure as exc:
            exc.time_index = k
            raise
        except NumericError as exc:
            raise NumericError(f"time step {k}: {exc}") from exc
        iters.append(it)
        norms.append(res)
        if k % store_every == 0 or k == K:
            times.append(t_new)
            values.append(u.copy())
    log.debug("solve: %d steps, max Newton iterations %d", K, max(iters))
    fld = SpaceTimeField(mesh, np.array(times), np.array(values), iters, norms)
    fld.energy = energy_series(fld, phi_eps)
    return fld


def energy_series(fld, phi_eps):
    """Per stored time: (sum_k m_k |u_k|^2, sum_e |e| phi_eps(|Du_e|)).

    The L2 term uses the same nodal quadrature as the scheme's mass term,
    so it is exactly the norm the implicit step dissipates.
    """
    m = fld.mesh
    l2 = np.einsum("k,tka,tka->t", m.lumped, fld.values, fld.values)
    t = frob(fld.gradients())
    en = np.asarray(phi_eps(t)) @ m.measures
    return l2, en


@dataclass
class SweepReport:
    eps: list
    v_distance_sq: list = field(default_factory=list)
    modular: list = field(default_factory=list)
    fields: list = field(default_factory=list)

    def rows(self):
        return [(self.eps[i], self.eps[i + 1], self.v_distance_sq[i], self.modular[i])
                for i in range(len(self.v_distance_sq))]


def epsilon_sweep(mesh, config_base, initial, boundary=None, eps_list=(), keep_fields=False):
    """Solve for each eps and measure consecutive distances.

    d(eps, eps') = sum_k dt_k sum_e |e| |V^eps(Du_eps) - V^eps'(Du_eps')|^2;
    the modular sum_k dt_k sum_e |e| phi(|Du_eps - Du_eps'|) is reported
    alongside.  A solve failure re-raises with ``partial_report`` attached.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        raise UsageError("epsilon sweep needs at least two values")
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise UsageError("eps_list must be positive and strictly decreasing")
    phi = config_base.phi
    report = SweepReport(eps_list)
    prev = None
    for eps in eps_list:
        cfg = SolveConfig(**{**config_base.__dict__, "epsilon": eps})
        try:
            fld = solve(mesh, cfg, initial, boundary)
        except (ConvergenceFailure, NumericError) as exc:
            exc.partial_report = report
            raise
        Du = fld.gradients()
        if prev is not None:
            eps_prev, Du_prev, w = prev
            dV = V_shifted(phi, eps_prev, Du_prev) - V_shifted(phi, eps, Du)
            per = np.sum(dV * dV, axis=(-2, -1)) @ mesh.measures
            report.v_distance_sq.append(float(per @ w))
            mod = np.asarray(phi(frob(Du - Du_prev))) @ mesh.measures
            report.modular.append(float(mod @ w))
        if keep_fields:
            report.fields.append(fld)
        prev = (eps, Du, fld.time_weights)
    return report


def manufactured_1d(phi_eps, amplitude=1.0):
    """Exact solution u*(x,t) = A e^{-t} sin(pi x) and its forcing for n = N = 1.

    In one dimension div A(u_x) = phi_eps''(|u_x|) u_xx, so the forcing is
    f = u*_t - phi_eps''(|u*_x|) u*_xx.
    """

    def exact(x, t):
        return amplitude * np.exp(-t) * np.sin(np.pi * x[:, :1])

    def source(x, t):
        xs = x[:, :1]
        ut = -amplitude * np.exp(-t) * np.sin(np.pi * xs)
        ux = amplitude * np.pi * np.exp(-t) * np.cos(np.pi * xs)
        uxx = -amplitude * np.pi**2 * np.exp(-t) * np.sin(np.pi * xs)
        return ut - np.asarray(phi_eps.deriv2(np.abs(ux))) * uxx

    return exact, source
