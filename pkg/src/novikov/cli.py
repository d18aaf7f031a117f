"""Command-line front end: run, trace, compare, perturb.

Configs are flat ``section.key = value`` text files (``#`` comments, blank
lines ignored, no section headers, no nesting).  All float output is
serialized with 17 significant digits, and identical configs produce
byte-identical outputs on a given backend (no timestamps, no RNG).

Exit codes: 0 on success, 1 when a monitor or tolerance verdict fails,
2 on usage or configuration errors.
"""

import argparse
import os
import sys

import numpy as np

from .lagrangian import InitialDatum, build_initial_state
from .integrator import (MonitorError, StepperConfig, apriori_bounds,
                         integrate)
from .eulerian import project
from .characteristics import evolve_beta_frame, trace_many
from .oracle import (PeakonSpec, peakon_value, quadrature_energies,
                     reference_solve)
from ._sweeps import get_backend
from ._util import fmt_float, write_csv, write_json


class ConfigError(Exception):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def parse_config(path):
    """Read a flat ``section.key = value`` file into a dict of token lists."""
    cfg = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc))
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("%s:%d: expected 'section.key = value', got %r"
                              % (path, lineno, raw.strip()))
        key, _, val = line.partition("=")
        key = key.strip()
        tokens = val.split()
        if "." not in key or not key.replace(".", "").replace("_", "").isalnum():
            raise ConfigError("%s:%d: malformed key %r (want section.key)"
                              % (path, lineno, key))
        if not tokens:
            raise ConfigError("%s:%d: key %r has no value" % (path, lineno,
                                                              key))
        if key in cfg:
            raise ConfigError("%s:%d: duplicate key %r" % (path, lineno, key))
        cfg[key] = tokens
    return cfg


class Config:
    """Typed access to a parsed config, tracking which keys are consumed."""

    def __init__(self, raw):
        self.raw = raw
        self.used = set()

    def has(self, key):
        return key in self.raw

    def _one(self, key):
        toks = self.raw[key]
        if len(toks) != 1:
            raise ConfigError("key %s expects one value, got %d"
                              % (key, len(toks)))
        return toks[0]

    def get_str(self, key, default=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError("missing required key %s" % key)
            return default
        self.used.add(key)
        return self._one(key)

    def get_float(self, key, default=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError("missing required key %s" % key)
            return default
        self.used.add(key)
        try:
            return float(self._one(key))
        except ValueError:
            raise ConfigError("key %s must be a float, got %r"
                              % (key, self._one(key)))

    def get_int(self, key, default=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError("missing required key %s" % key)
            return default
        self.used.add(key)
        try:
            return int(self._one(key))
        except ValueError:
            raise ConfigError("key %s must be an int, got %r"
                              % (key, self._one(key)))

    def get_floats(self, key, default=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError("missing required key %s" % key)
            return default
        self.used.add(key)
        try:
            return [float(t) for t in self.raw[key]]
        except ValueError:
            raise ConfigError("key %s must be a list of floats" % key)

    def check_all_used(self):
        unused = sorted(set(self.raw) - self.used)
        if unused:
            raise ConfigError("unknown config key(s): %s" % ", ".join(unused))


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

def _datum_from(cfg):
    kind = cfg.get_str("run.datum")
    if kind == "gaussian":
        return InitialDatum.gaussian(
            amplitude=cfg.get_float("run.amplitude", 1.0),
            width=cfg.get_float("run.width", 1.0),
            center=cfg.get_float("run.center", 0.0))
    if kind == "peakon":
        return InitialDatum.peakon(
            c=cfg.get_float("run.c", 1.0),
            sign=cfg.get_int("run.sign", 1),
            x0=cfg.get_float("run.x0", 0.0))
    if kind in ("antipeakon-pair", "antipeakon_pair"):
        return InitialDatum.antipeakon_pair(
            c=cfg.get_float("run.c", 1.0),
            separation=cfg.get_float("run.separation", 6.0),
            center=cfg.get_float("run.center", 0.0))
    if kind == "tabulated":
        path = cfg.get_str("run.tabulated_file")
        try:
            rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError("cannot read tabulated datum %s: %s"
                              % (path, exc))
        return InitialDatum.tabulated(rows[:, 0], rows[:, 1])
    raise ConfigError("run.datum must be gaussian, peakon, antipeakon-pair "
                      "or tabulated, got %r" % kind)


def _window_from(cfg):
    if cfg.has("run.window"):
        w = cfg.get_floats("run.window")
        if len(w) != 2:
            raise ConfigError("run.window expects two floats")
        return (w[0], w[1])
    return (-cfg.get_float("run.half_width"), cfg.get_float("run.half_width"))


def _stepper_from(cfg):
    return StepperConfig(
        dt=cfg.get_float("run.dt"),
        T_end=cfg.get_float("run.T_end"),
        snapshot_stride=cfg.get_int("run.snapshot_stride", 10),
        tol_E=cfg.get_float("run.tol_E", 1e-6),
        tol_F=cfg.get_float("run.tol_F", 1e-5),
        tol_bound=cfg.get_float("run.tol_bound", 1e-3),
        tol_consistency=(cfg.get_float("run.tol_consistency")
                         if cfg.has("run.tol_consistency") else None),
        breaking_tol=cfg.get_float("run.breaking_tol", 1e-8),
        relabel_every=(cfg.get_float("run.relabel_every")
                       if cfg.has("run.relabel_every") else None),
        relabel_xi=(cfg.get_float("run.relabel_xi")
                    if cfg.has("run.relabel_xi") else None),
        relabel_guard=cfg.get_float("run.relabel_guard", 0.05))


def _build_run(cfg):
    datum = _datum_from(cfg)
    window = _window_from(cfg)
    n = cfg.get_int("run.N")
    state = build_initial_state(
        datum, N=n, window=window,
        refine=cfg.get_int("run.refine", 16),
        edge_tol=cfg.get_float("run.edge_tol", 1e-8))
    e0q, f0q = quadrature_energies(datum, window=window)
    bounds = apriori_bounds(e0q, f0q)
    return datum, window, state, bounds, e0q, f0q


def _echo_config(raw):
    return {k: " ".join(v) for k, v in sorted(raw.items())}


def _write_run_outputs(out_dir, log, bounds, e0q, f0q, raw_cfg, verdict,
                       monitor_failure=None):
    times = np.asarray(log.times)
    write_csv(os.path.join(out_dir, "energies.csv"),
              ["T", "E", "F", "min_xi", "max_xi", "breaking_count"],
              [times, log.E, log.F, log.min_xi, log.max_xi,
               np.asarray(log.breaking_count, dtype=float)])
    for k, state in enumerate(log.snapshots):
        snap = project(state, breaking_tol=log.config.breaking_tol)
        write_csv(os.path.join(out_dir, "snapshot_%d.csv" % k),
                  ["x", "u", "ux", "mask"],
                  [snap.x, snap.u,
                   np.where(snap.ux_defined, snap.ux, 0.0),
                   snap.ux_defined.astype(float)])
    summary = {
        "backend": get_backend(),
        "E0_datum": e0q,
        "F0_datum": f0q,
        "E0_state": log.E[0],
        "F0_state": log.F[0],
        "K": bounds.K,
        "A0": bounds.A0,
        "p1_bound": bounds.p1_bound,
        "p2_bound": bounds.p2_bound,
        "drift_E": log.drift_E(),
        "drift_F": log.drift_F(),
        "min_xi": float(np.min(log.min_xi)),
        "max_xi": float(np.max(log.max_xi)),
        "sup_u2": float(np.max(log.sup_u2)),
        "sup_P1": float(np.max(log.sup_P1)),
        "sup_dxP1": float(np.max(log.sup_dxP1)),
        "sup_P2": float(np.max(log.sup_P2)),
        "sup_dxP2": float(np.max(log.sup_dxP2)),
        "max_abs_ux": float(np.max(log.step_max_abs_ux))
        if log.step_max_abs_ux else float(np.max(log.max_abs_ux)),
        "breaking_detected": bool(np.any(np.asarray(log.breaking_count) > 0)
                                  or (log.step_breaking
                                      and max(log.step_breaking) > 0)),
        "snapshots": len(log.times),
        "relabels": len(log.relabel_times),
        "relabel_skips": len(log.relabel_skips),
        "T_final": log.times[-1],
        "verdict": verdict,
        "config": _echo_config(raw_cfg),
    }
    if monitor_failure is not None:
        summary["monitor_failure"] = {
            "monitor": monitor_failure.monitor,
            "T": monitor_failure.T,
            "value": monitor_failure.value,
            "tolerance": monitor_failure.tolerance,
        }
    write_json(os.path.join(out_dir, "summary.json"), summary)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(cfg, out_dir):
    datum, window, state, bounds, e0q, f0q = _build_run(cfg)
    stepper = _stepper_from(cfg)
    cfg.check_all_used()
    try:
        log = integrate(state, stepper, bounds=bounds)
    except MonitorError as exc:
        # the partial log is not exposed; report the failure and exit 1
        summary = {
            "backend": get_backend(),
            "E0_datum": e0q,
            "F0_datum": f0q,
            "K": bounds.K,
            "A0": bounds.A0,
            "verdict": "monitor-failure",
            "monitor_failure": {
                "monitor": exc.monitor, "T": exc.T,
                "value": exc.value, "tolerance": exc.tolerance},
            "config": _echo_config(cfg.raw),
        }
        write_json(os.path.join(out_dir, "summary.json"), summary)
        print("monitor failure: %s" % exc, file=sys.stderr)
        return 1
    _write_run_outputs(out_dir, log, bounds, e0q, f0q, cfg.raw, "pass")
    return 0


def cmd_trace(cfg, out_dir):
    datum, window, state, bounds, e0q, f0q = _build_run(cfg)
    stepper = _stepper_from(cfg)
    y_bars = cfg.get_floats("trace.y_bars")
    tol = cfg.get_float("trace.tol", 0.0)
    cfg.check_all_used()
    if tol == 0.0:
        tol = 1e-4 * (1.0 + bounds.E0)
    log = integrate(state, stepper, bounds=bounds)
    paths = trace_many(log, y_bars)

    worst = 0.0
    for j, path in enumerate(paths):
        write_csv(os.path.join(out_dir, "trace_%d.csv" % j),
                  ["t", "beta", "x", "u", "ucar_residual"],
                  [path.t, path.beta, path.x, path.u, path.ucar_residual])
        worst = max(worst, float(np.max(np.abs(path.ucar_residual))))

    # non-crossing: betas ordered like their starting points, at all times
    order = np.argsort([p.beta[0] for p in paths])
    crossing = 0.0
    betas = np.stack([paths[j].beta for j in order])
    if len(paths) > 1:
        crossing = float(np.min(np.diff(betas, axis=0)))
    ok = worst <= tol and crossing >= -1e-12
    summary = {
        "backend": get_backend(),
        "E0_datum": bounds.E0,
        "trace_tol": tol,
        "max_ucar_residual": worst,
        "min_beta_gap": crossing,
        "paths": len(paths),
        "y_bars": y_bars,
        "verdict": "pass" if ok else "fail",
        "config": _echo_config(cfg.raw),
    }
    write_json(os.path.join(out_dir, "summary.json"), summary)
    if not ok:
        print("trace verdict failed: max residual %.3g (tol %.3g), "
              "min beta gap %.3g" % (worst, tol, crossing), file=sys.stderr)
        return 1
    return 0


def _profile_on(xq, snap_x, snap_u):
    return np.interp(xq, snap_x, snap_u)


def cmd_compare(cfg, out_dir):
    datum, window, state0, bounds, e0q, f0q = _build_run(cfg)
    dt = cfg.get_float("run.dt")
    t_end = cfg.get_float("compare.T_end", cfg.get_float("run.T_end"))
    resolutions = [int(r) for r in cfg.get_floats(
        "compare.resolutions", [cfg.get_int("run.N")])]
    m_ref = cfg.get_int("compare.M", max(resolutions))
    dt_ref = cfg.get_float("compare.dt_ref", dt)
    cross_tol = cfg.get_float("compare.cross_tol", 1e-3)
    refine = cfg.get_int("run.refine", 16)
    edge_tol = cfg.get_float("run.edge_tol", 1e-8)
    tol_e = cfg.get_float("run.tol_E", 1e-6)
    tol_f = cfg.get_float("run.tol_F", 1e-5)
    tol_bound = cfg.get_float("run.tol_bound", 1e-3)
    cfg.check_all_used()

    ladder = []
    finest = None
    for n in sorted(resolutions):
        st = build_initial_state(datum, N=n, window=window, refine=refine,
                                 edge_tol=edge_tol)
        sc = StepperConfig(dt=dt, T_end=t_end, snapshot_stride=10 ** 9,
                           tol_E=tol_e, tol_F=tol_f, tol_bound=tol_bound)
        log = integrate(st, sc, bounds=bounds)
        snap = project(log.snapshots[-1])
        beta_run = evolve_beta_frame(datum, T_end=t_end, dt=dt, n_nodes=n,
                                     window=window, snapshot_stride=10 ** 9,
                                     refine=refine)
        bx, bu = beta_run.final_profile()
        ladder.append((n, snap, (bx, bu)))
        finest = (snap, (bx, bu))

    ref = reference_solve(datum, T_end=t_end, dt=dt_ref, M=m_ref,
                          window=window)

    # common evaluation grid: interior of the window, away from edge effects
    pad = 0.05 * (window[1] - window[0])
    xq = np.linspace(window[0] + pad, window[1] - pad, 2001)

    def sup(a, b):
        return float(np.max(np.abs(a - b)))

    u_ref = _profile_on(xq, ref.x, ref.u)
    rows = []
    for n, snap, (bx, bu) in ladder:
        u_main = _profile_on(xq, snap.x, snap.u)
        u_beta = _profile_on(xq, bx, bu)
        rows.append({
            "N": n,
            "main_vs_reference": sup(u_main, u_ref),
            "main_vs_beta_frame": sup(u_main, u_beta),
            "beta_frame_vs_reference": sup(u_beta, u_ref),
        })
    result = {
        "backend": get_backend(),
        "T_end": t_end,
        "reference_M": m_ref,
        "cross_tol": cross_tol,
        "ladder": rows,
        "config": _echo_config(cfg.raw),
    }
    if datum.kind == "peakon":
        spec = PeakonSpec(c=datum.params["c"], sign=datum.params["sign"],
                          x0=datum.params["x0"])
        snap, _ = finest
        u_main = _profile_on(xq, snap.x, snap.u)
        result["main_vs_exact"] = sup(u_main, peakon_value(spec, t_end, xq))
    worst = max(max(r["main_vs_reference"], r["main_vs_beta_frame"],
                    r["beta_frame_vs_reference"]) for r in rows[-1:])
    result["verdict"] = "pass" if worst <= cross_tol else "fail"
    write_json(os.path.join(out_dir, "compare.json"), result)
    if worst > cross_tol:
        print("compare verdict failed: finest-pair sup difference %.3g "
              "exceeds %.3g" % (worst, cross_tol), file=sys.stderr)
        return 1
    return 0


def cmd_perturb(cfg, out_dir):
    datum, window, state0, bounds, e0q, f0q = _build_run(cfg)
    stepper = _stepper_from(cfg)
    deltas = cfg.get_floats("perturb.deltas", [1e-2, 1e-3, 1e-4])
    mwin = cfg.get_floats("perturb.window", [window[0] * 0.5, window[1] * 0.5])
    p_amp = cfg.get_float("perturb.amplitude", 1.0)
    p_width = cfg.get_float("perturb.width", 1.0)
    p_center = cfg.get_float("perturb.center", 1.0)
    refine = cfg.get_int("run.refine", 16)
    edge_tol = cfg.get_float("run.edge_tol", 1e-8)
    n = cfg.get_int("run.N")
    cfg.check_all_used()
    if sorted(deltas, reverse=True) != deltas:
        raise ConfigError("perturb.deltas must be strictly decreasing")

    base_log = integrate(state0, stepper, bounds=bounds)
    base = project(base_log.snapshots[-1])
    xq = np.linspace(mwin[0], mwin[1], 2001)
    u_base = _profile_on(xq, base.x, base.u)

    m = refine * (n - 1) + 1
    x_f = np.linspace(window[0], window[1], m)

    sup_diffs = []
    for d in deltas:
        bump = p_amp * np.exp(-((x_f - p_center) / p_width) ** 2)
        pert = InitialDatum.tabulated(x_f, datum.u0(x_f) + d * bump)
        st = build_initial_state(pert, N=n, window=window, refine=8,
                                 edge_tol=max(edge_tol, 10 * d))
        log = integrate(st, stepper)
        snap = project(log.snapshots[-1])
        sup_diffs.append(float(np.max(np.abs(
            _profile_on(xq, snap.x, snap.u) - u_base))))

    monotone = all(a > b for a, b in zip(sup_diffs, sup_diffs[1:]))
    summary = {
        "backend": get_backend(),
        "deltas": deltas,
        "sup_differences": sup_diffs,
        "measure_window": mwin,
        "monotone_decreasing": monotone,
        "verdict": "pass" if monotone else "fail",
        "config": _echo_config(cfg.raw),
    }
    write_json(os.path.join(out_dir, "summary.json"), summary)
    if not monotone:
        print("perturb verdict failed: sup differences %s not monotone"
              % (", ".join(fmt_float(s) for s in sup_diffs)), file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="novikov",
        description="Conservative solutions of a peakon-bearing cubic "
                    "shallow-water equation, in characteristic coordinates.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("trace", cmd_trace),
                     ("compare", cmd_compare), ("perturb", cmd_perturb)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="flat section.key = value config file")
        p.add_argument("--out", default=".",
                       help="output directory (created if missing)")
        p.set_defaults(func=fn)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; keep that contract
        return int(exc.code or 0)

    try:
        cfg = Config(parse_config(args.config))
        os.makedirs(args.out, exist_ok=True)
        return args.func(cfg, args.out)
    except (ConfigError, ValueError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except MonitorError as exc:
        print("monitor failure: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
