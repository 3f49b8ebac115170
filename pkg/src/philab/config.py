"""Scenario files: flat ``key = value`` text with dotted section names.

::

    # comments start with '#'
    name = heat
    phi.family = power
    phi.p = 2
    mesh.M = 64
    problem.preset = linear_heat
    sweep.eps_list = 0.2, 0.1, 0.05

Every key has a typed default (see ``SCHEMA``); unknown keys and bad
values raise :class:`~philab.errors.UsageError` naming the line and key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

from .errors import UsageError
from .orlicz import NFunction

__all__ = ["SCHEMA", "Scenario", "parse", "serialize", "load", "PRESETS", "ESTIMATES"]

PRESETS = ("linear_heat", "sine", "manufactured", "constant", "holder_synthetic", "affine")
ESTIMATES = ("SupU", "SupGrad", "OscDecay", "Embedding", "Density")


def _fmt_float(v):
    return repr(float(v))


def _parse_float(s):
    v = float(s)
    return v


def _parse_opt_float(s):
    return None if s.strip().lower() in ("", "none") else float(s)


def _fmt_opt_float(v):
    return "none" if v is None else repr(float(v))


def _parse_bool(s):
    low = s.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _split(s):
    return [x.strip() for x in s.split(",") if x.strip()]


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    fmt: Callable[[Any], str]
    default: Any
    doc: str


def _float(default, doc):
    return Key(_parse_float, _fmt_float, default, doc)


def _int(default, doc):
    return Key(int, str, default, doc)


def _str(default, doc, choices=None):
    def parse(s):
        s = s.strip()
        if choices and s not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}")
        return s

    return Key(parse, str, default, doc)


def _floats(default, doc):
    return Key(lambda s: tuple(float(x) for x in _split(s)),
               lambda v: ", ".join(repr(float(x)) for x in v), tuple(default), doc)


def _strs(default, doc, choices=None):
    def parse(s):
        out = tuple(_split(s))
        bad = [x for x in out if choices and x not in choices]
        if bad:
            raise ValueError(f"unknown entries {bad}; expected from {', '.join(choices)}")
        return out

    return Key(parse, lambda v: ", ".join(v), tuple(default), doc)


SCHEMA = {
    "name": _str("scenario", "identifier used in log messages"),
    "seed": _int(0, "seed for every randomised suite"),
    "output_dir": _str("philab-out", "directory receiving the CSV outputs"),
    "phi.family": _str("power", "power | powerlog | maxpowers | minpowers",
                       ("power", "powerlog", "maxpowers", "minpowers")),
    "phi.p": _float(3.0, "lower growth exponent, > 1"),
    "phi.q": Key(_parse_opt_float, _fmt_opt_float, None, "upper exponent (none: family default)"),
    "phi.L": _float(1.0, "almost-monotonicity constant"),
    "phi.gamma1": Key(_parse_opt_float, _fmt_opt_float, None, "Hessian Hoelder exponent"),
    "phi.c_h": Key(_parse_opt_float, _fmt_opt_float, None, "Hessian Hoelder constant"),
    "mesh.n": _int(1, "space dimension, 1 or 2"),
    "mesh.M": _int(32, "cells per axis"),
    "problem.N": _int(1, "number of components"),
    "problem.preset": _str("sine", "initial/boundary data preset", PRESETS),
    "problem.value": _float(1.0, "constant for the constant preset, slope scale for affine"),
    "problem.amplitude": _float(1.0, "amplitude of sine-type presets"),
    "problem.alpha": _float(0.5, "Hoelder exponent of the holder_synthetic gradient"),
    "problem.T_final": _float(0.1, "final time"),
    "problem.dt": _float(1e-3, "time step"),
    "problem.epsilon": _float(0.05, "regularising shift"),
    "problem.newton_tol": _float(1e-10, "Newton residual tolerance"),
    "problem.newton_max_iters": _int(30, "Newton iteration cap per step"),
    "solve.levels": _int(1, "resolutions M*2^k (dt/4^k) for the convergence study"),
    "solve.error_threshold": _float(5e-3, "max error allowed when an exact solution exists"),
    "solve.min_order": _float(1.0, "least observed order allowed when levels > 1"),
    "solve.snapshot_times": _strs(("end",), "times to write, 'all', or 'end'"),
    "sweep.eps_list": _floats((), "strictly decreasing shifts for the epsilon sweep"),
    "verify.samples": _int(10_000, "random samples per check"),
    "verify.checks": _strs((), "subset of checks to run (empty: all)"),
    "diagnose.field_csv": _str("", "snapshot CSV holding every time slice (empty: solve)"),
    "diagnose.estimates": _strs(("SupU", "SupGrad"), "estimates to evaluate", ESTIMATES),
    "diagnose.center": _floats((), "x0 (empty: domain centre)"),
    "diagnose.t0": Key(_parse_opt_float, _fmt_opt_float, None, "t0 (none: final time)"),
    "diagnose.radii": _floats((0.05, 0.1), "radii r for SupU / SupGrad"),
    "diagnose.R": _float(0.2, "outer radius for OscDecay and Density"),
    "diagnose.fit_radii": _floats((0.2, 0.1, 0.05, 0.025), "decreasing radii for OscDecay"),
    "diagnose.sigma": _float(0.25, "density threshold, in (0, 1/2)"),
    "diagnose.m": _float(2.0, "integrability exponent for Embedding"),
    "diagnose.embed_r": _float(0.25, "ball radius for Embedding"),
    "diagnose.time_window": _floats((), "t_lo, t_hi for Embedding (empty: second half)"),
}


def parse(text, source="<config>"):
    """Parse scenario text into a dict holding every schema key."""
    values = {k: spec.default for k, spec in SCHEMA.items()}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in SCHEMA:
            raise UsageError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise UsageError(f"{source}:{lineno}: key {key!r} repeats line {seen[key]}")
        seen[key] = lineno
        try:
            values[key] = SCHEMA[key].parse(val)
        except ValueError as exc:
            raise UsageError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


def serialize(values):
    lines = [f"{k} = {SCHEMA[k].fmt(values[k])}" for k in SCHEMA]
    return "\n".join(lines) + "\n"


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    return parse(text, str(path))


class Scenario:
    """Validated view over a parsed config dict."""

    def __init__(self, values):
        self.values = dict(values)
        v = self.values
        if v["mesh.n"] not in (1, 2):
            raise UsageError("mesh.n must be 1 or 2")
        if v["mesh.M"] < 1:
            raise UsageError("mesh.M must be >= 1")
        if v["problem.N"] < 1:
            raise UsageError("problem.N must be >= 1")
        if v["verify.samples"] < 1:
            raise UsageError("verify.samples must be >= 1")
        if v["solve.levels"] < 1:
            raise UsageError("solve.levels must be >= 1")
        if v["diagnose.center"] and len(v["diagnose.center"]) != v["mesh.n"]:
            raise UsageError("diagnose.center needs mesh.n coordinates")
        if v["diagnose.time_window"] and len(v["diagnose.time_window"]) != 2:
            raise UsageError("diagnose.time_window needs two values")
        if not math.isfinite(v["problem.dt"]) or v["problem.dt"] <= 0:
            raise UsageError(f"problem.dt must be > 0, got {v['problem.dt']}")
        self.phi = self._phi()

    def __getitem__(self, key):
        return self.values[key]

    def _phi(self):
        rec = {"family": self["phi.family"], "p": self["phi.p"], "L": self["phi.L"]}
        for k in ("q", "gamma1", "c_h"):
            if self[f"phi.{k}"] is not None:
                rec[k] = self[f"phi.{k}"]
        return NFunction.from_record({k: str(x) for k, x in rec.items()})
