"""``philab`` command line: verify, solve, diagnose and sweep scenarios.

Exit codes: 0 success, 1 a check or assertion failed, 2 usage or config
error, 3 numeric or solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import regularity as rg
from .errors import NumericError, UsageError
from .solver import Mesh, SolveConfig, SpaceTimeField, epsilon_sweep, manufactured_1d, solve
from .suites import SUITE_HEADER, run_suite

log = logging.getLogger("philab")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _threads():
    raw = os.environ.get("PHILAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"PHILAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"PHILAB_THREADS must be a positive integer, got {raw!r}")
    return n


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _r(x):
    return repr(float(x))


# -- problem presets ---------------------------------------------------------


class Problem:
    """Initial/boundary data, optional exact solution and forcing for a preset."""

    def __init__(self, sc):
        self.sc = sc
        self.preset = sc["problem.preset"]
        self.N = sc["problem.N"]
        self.n = sc["mesh.n"]
        self.exact = None
        self.source = None
        self.boundary = None
        A = sc["problem.amplitude"]
        N, n = self.N, self.n
        phi = sc.phi
        if self.preset == "holder_synthetic":
            self.initial = None
            return
        if self.preset in ("sine", "linear_heat"):
            k = np.pi * np.arange(1, N + 1)

            def initial(x):
                return A * np.prod(np.sin(k[None, :, None] * x[:, None, :]), axis=2)

            self.initial = initial
            if self.preset == "linear_heat":
                if not (phi.family.value == "power" and phi.p == 2):
                    raise UsageError("the linear_heat preset needs phi = power(2)")

                def exact(x, t):
                    # u_t = 2 Laplace u
                    return initial(x) * np.exp(-2 * n * k**2 * t)[None, :]

                self.exact = exact
        elif self.preset == "manufactured":
            if n != 1 or N != 1:
                raise UsageError("the manufactured preset needs mesh.n = problem.N = 1")
            exact, source = manufactured_1d(phi.shifted(sc["problem.epsilon"]), A)
            self.initial = lambda x: exact(x, 0.0)
            self.boundary = exact
            self.exact, self.source = exact, source
        elif self.preset == "constant":
            c = sc["problem.value"]
            self.initial = lambda x: np.full((len(x), N), c)
            self.exact = lambda x, t: np.full((len(x), N), c)
        elif self.preset == "affine":
            c = sc["problem.value"]
            w = np.arange(1, n + 1, dtype=float)
            comp = np.arange(1, N + 1, dtype=float)
            self.initial = lambda x: c * (x @ w)[:, None] * comp[None, :]
            # constant gradients make the flux divergence-free
            self.exact = lambda x, t: self.initial(x)

    def config(self, dt=None):
        sc = self.sc
        return SolveConfig(sc.phi, sc["problem.epsilon"], dt or sc["problem.dt"],
                           sc["problem.T_final"], newton_tol=sc["problem.newton_tol"],
                           newton_max_iters=sc["problem.newton_max_iters"], source=self.source)

    def solve(self, M=None, dt=None):
        if self.initial is None:
            raise UsageError(f"preset {self.preset} defines a synthetic field, not a problem")
        mesh = Mesh.structured(self.n, M or self.sc["mesh.M"])
        return solve(mesh, self.config(dt), self.initial, self.boundary)

    def synthetic_field(self):
        """Time-independent field with |Du| ~ |x_1 - c_1|^alpha near the centre."""
        sc = self.sc
        mesh = Mesh.structured(self.n, sc["mesh.M"])
        c = _center(sc)[0]
        a = sc["problem.alpha"]
        d = mesh.nodes[:, 0] - c
        u = sc["problem.amplitude"] * np.sign(d) * np.abs(d) ** (1 + a) / (1 + a)
        vals = np.repeat(u[None, :, None], self.N, axis=2)
        return SpaceTimeField(mesh, np.array([0.0, sc["problem.T_final"]]), np.stack([vals[0]] * 2))

    def max_error(self, fld):
        if self.exact is None:
            return None
        err = 0.0
        for t, U in zip(fld.times, fld.values):
            err = max(err, float(np.max(np.abs(U - self.exact(fld.mesh.nodes, t)))))
        return err


def _center(sc):
    return np.array(sc["diagnose.center"] or [0.5] * sc["mesh.n"])


# -- snapshots ---------------------------------------------------------------


def snapshot_rows(fld, which):
    """Rows ``t, x[, y], component_index, value`` for the selected slices."""
    times = fld.times
    if "all" in which:
        idx = list(range(len(times)))
    else:
        idx = []
        for w in which:
            if w == "end":
                k = len(times) - 1
            else:
                try:
                    k = int(np.argmin(np.abs(times - float(w))))
                except ValueError:
                    raise UsageError(f"bad snapshot time {w!r}") from None
            if k not in idx:
                idx.append(k)
        idx.sort()
    rows = []
    nodes = fld.mesh.nodes
    for k in idx:
        for j in range(len(nodes)):
            for a in range(fld.N):
                rows.append([_r(times[k]), *(_r(x) for x in nodes[j]), str(a),
                             _r(fld.values[k, j, a])])
    return rows


def snapshot_header(n):
    return ("t", "x", "component_index", "value") if n == 1 else ("t", "x", "y", "component_index", "value")


def load_snapshots(path, n, M):
    """Rebuild a field on the structured (n, M) mesh from a snapshot CSV."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read field data {path}: {exc.strerror}") from None
    if not rows or tuple(rows[0]) != snapshot_header(n):
        raise UsageError(f"{path}: header does not match a {n}-d snapshot file")
    data = np.array(rows[1:], dtype=float)
    if data.size == 0:
        raise UsageError(f"{path}: no field data")
    mesh = Mesh.structured(n, M)
    times = np.unique(data[:, 0])
    N = int(data[:, -2].max()) + 1
    ij = np.rint(data[:, 1:1 + n] * M).astype(int)
    node = ij[:, 0] if n == 1 else ij[:, 0] + (M + 1) * ij[:, 1]
    vals = np.full((len(times), mesh.num_nodes, N), np.nan)
    vals[np.searchsorted(times, data[:, 0]), node, data[:, -2].astype(int)] = data[:, -1]
    if np.isnan(vals).any():
        raise UsageError(f"{path}: incomplete field data for an (n={n}, M={M}) mesh")
    return SpaceTimeField(mesh, times, vals)


# -- subcommands -------------------------------------------------------------


def run_verify(sc, out, quiet):
    checks = sc["verify.checks"] or None
    results = run_suite(sc.phi, sc["seed"], sc["verify.samples"], checks, _threads())
    _write_csv(out / "verify.csv", SUITE_HEADER, [r.row() for r in results])
    failed = [r for r in results if r.failed]
    if not quiet:
        print(f"verify {sc.phi.label()}: {len(results)} checks, {len(failed)} failed")
    for r in failed:
        print("FAILED " + ",".join(r.row()), file=sys.stderr)
    return EXIT_CHECK if failed else EXIT_OK


def run_solve(sc, out, quiet):
    prob = Problem(sc)
    M0, dt0 = sc["mesh.M"], sc["problem.dt"]
    levels = sc["solve.levels"]
    rows, errors, status = [], [], EXIT_OK
    fld0 = None
    for k in range(levels):
        M, dt = M0 * 2**k, dt0 / 4**k
        fld = prob.solve(M, dt)
        if fld0 is None:
            fld0 = fld
        err = prob.max_error(fld)
        errors.append(err)
        order = math.nan
        if k and err is not None and errors[k - 1]:
            order = math.log2(errors[k - 1] / err)
        rows.append([str(M), _r(1.0 / M), _r(dt), _r(err if err is not None else math.nan), _r(order)])
        if not quiet and err is not None:
            print(f"M={M} dt={dt:g}: max_error = {err!r}" + (f", order = {order:.3f}" if k else ""))
    _write_csv(out / "snapshots.csv", snapshot_header(sc["mesh.n"]),
               snapshot_rows(fld0, sc["solve.snapshot_times"]))
    l2, en = fld0.energy
    iters = [0] + list(fld0.newton_iterations)
    stored = iters if len(iters) == len(fld0.times) else [""] * len(fld0.times)
    _write_csv(out / "energy.csv", ("t", "l2_sq", "phi_energy", "newton_iterations"),
               [[_r(t), _r(a), _r(b), str(i)] for t, a, b, i in zip(fld0.times, l2, en, stored)])
    if errors[0] is not None:
        _write_csv(out / "convergence.csv", ("M", "h", "dt", "max_error", "order"), rows)
        if errors[0] > sc["solve.error_threshold"]:
            print(f"max error {errors[0]!r} exceeds {sc['solve.error_threshold']!r}", file=sys.stderr)
            status = EXIT_CHECK
        orders = [float(r[-1]) for r in rows[1:]]
        if orders and min(orders) < sc["solve.min_order"]:
            print(f"observed order {min(orders):.3f} below {sc['solve.min_order']}", file=sys.stderr)
            status = EXIT_CHECK
    return status


def _field_for_diagnostics(sc, prob):
    if sc["diagnose.field_csv"]:
        return load_snapshots(sc["diagnose.field_csv"], sc["mesh.n"], sc["mesh.M"])
    if prob.preset == "holder_synthetic":
        return prob.synthetic_field()
    return prob.solve()


def run_diagnose(sc, out, quiet, estimates=None):
    prob = Problem(sc)
    estimates = sc["diagnose.estimates"] if estimates is None else estimates
    status = EXIT_OK
    reports = []
    if estimates:
        fld = _field_for_diagnostics(sc, prob)
        phi = sc.phi
        x0 = _center(sc)
        t0 = fld.times[-1] if sc["diagnose.t0"] is None else sc["diagnose.t0"]
        eps = sc["problem.epsilon"]
        R = sc["diagnose.R"]
        osc_rows = []
        for est in estimates:
            if est == "SupU":
                reports += [rg.sup_u_check(fld, phi, r, (x0, t0)) for r in sc["diagnose.radii"]]
            elif est == "SupGrad":
                reports += [rg.grad_sup_check(fld, phi, r, (x0, t0), eps)
                            for r in sc["diagnose.radii"]]
            elif est == "OscDecay":
                fit = rg.holder_fit(fld, phi, (x0, t0), R, sc["diagnose.fit_radii"])
                reports.append(rg.EstimateReport(
                    rg.EstimateId.OscDecay, max(fit.osc), fit.lam, fit.alpha, lam=fit.lam,
                    r=min(fit.radii), R=R, eps=eps, h=fld.mesh.h, n=fld.mesh.n, N=fld.N,
                    p=float(phi.p), q=float(phi.q)))
                d2 = float(phi.deriv2(fit.lam))
                scale = max(math.sqrt(d2), 1 / math.sqrt(d2)) / R
                osc_rows += [[_r(r), _r(r * scale), _r(o), _r(fit.lam)]
                             for r, o in zip(fit.radii, fit.osc)]
            elif est == "Embedding":
                win = sc["diagnose.time_window"] or (0.5 * fld.times[-1], fld.times[-1])
                reports.append(rg.embedding_check(fld, phi, sc["diagnose.m"],
                                                  sc["diagnose.embed_r"], win, x0=x0))
            elif est == "Density":
                lam = rg.lambda_intrinsic(fld, phi, rg.plain_cylinder(x0, t0, 2 * R))
                cyl = rg.IntrinsicCylinder(x0, t0, R, lam, phi)
                sigma = sc["diagnose.sigma"]
                frac, nondeg, _ = rg.density_diagnostics(fld, cyl, sigma)
                eid = rg.EstimateId.DensityNondeg if nondeg else rg.EstimateId.DensityDeg
                reports.append(rg.EstimateReport(
                    eid, frac, sigma, frac / sigma, lam=lam, r=R, R=2 * R, eps=eps,
                    h=fld.mesh.h, n=fld.mesh.n, N=fld.N, p=float(phi.p), q=float(phi.q)))
        out.mkdir(parents=True, exist_ok=True)
        rg.reports_to_csv(reports, out / "estimates.csv")
        if osc_rows:
            _write_csv(out / "oscillation.csv", ("r", "scaled_r", "osc", "lambda"), osc_rows)
        if not quiet:
            for rep in reports:
                print(f"{rep.estimate_id.value}: lhs={rep.lhs!r} rhs={rep.rhs!r} constant={rep.constant!r}")
    if sc["sweep.eps_list"]:
        status = max(status, run_sweep(sc, out, quiet, prob))
    return status


def run_sweep(sc, out, quiet, prob=None):
    prob = prob or Problem(sc)
    eps = sc["sweep.eps_list"]
    if not eps:
        raise UsageError("sweep needs sweep.eps_list")
    if prob.initial is None:
        raise UsageError(f"preset {prob.preset} cannot be swept")
    mesh = Mesh.structured(sc["mesh.n"], sc["mesh.M"])
    rep = epsilon_sweep(mesh, prob.config(), prob.initial, prob.boundary, eps)
    rows = rep.rows()
    _write_csv(out / "sweep.csv", ("eps_hi", "eps_lo", "v_distance_sq"),
               [[_r(a), _r(b), _r(d)] for a, b, d, _ in rows])
    _write_csv(out / "sweep_modular.csv", ("eps_hi", "eps_lo", "modular"),
               [[_r(a), _r(b), _r(m)] for a, b, _, m in rows])
    d = rep.v_distance_sq
    bad = [i for i in range(1, len(d) - 1) if d[i + 1] > d[i]]
    if not quiet:
        for a, b, dist, _ in rows:
            print(f"d({a:g}, {b:g}) = {dist!r}")
    if bad:
        print(f"v-distances increase after pair(s) {bad}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {"verify": run_verify, "solve": run_solve, "diagnose": run_diagnose}


def build_parser():
    ap = argparse.ArgumentParser(prog="philab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=["verify", "solve", "diagnose", "sweep"])
    ap.add_argument("--config", type=Path, help="scenario file (key = value lines)")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("--out", type=Path, help="override the output directory")
    ap.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        values = cfgmod.load(args.config) if args.config else cfgmod.parse("")
        if args.seed is not None:
            values["seed"] = args.seed
        if args.out is not None:
            values["output_dir"] = str(args.out)
        sc = cfgmod.Scenario(values)
        out = Path(sc["output_dir"])
        if args.command == "sweep":
            return run_sweep(sc, out, args.quiet)
        return COMMANDS[args.command](sc, out, args.quiet)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
