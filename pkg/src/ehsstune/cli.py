"""Command-line front end: ``ehsstune run|tune|compare``.

Experiments are described in INI-style files with one section per
component. Every field has a default, so an empty file runs the 0.2 m step
experiment with the tuned backstepping law. Example::

    [experiment]
    name = step02
    reference = step
    amplitude = 0.2
    controller = backstepping-tuned
    controllers = backstepping-tuned, smc, backstepping

    [plant]
    d_const = 0.1

    [tuned]
    lam = 13.5585
    gamma1 = 1e-10

    [abc]
    generations = 100
    horizon = 5

Exit codes: 0 success, 2 configuration error, 3 divergence.
"""

import argparse
import configparser
import csv
import dataclasses
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import abc as abc_mod
from .controller import ControllerConfig, SmcConfig
from .errors import ConfigError, DivergenceError, DomainError
from .plant import PlantParams, Reference
from .sim import (DIVERGED_OBJECTIVE, ObjectiveWeights, SimConfig, TuningObjective,
                  lyapunov_check, objective, simulate, total_variation, ultimate_bound)

log = logging.getLogger("ehsstune")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

CONTROLLERS = ("backstepping", "backstepping-tuned", "smc")

UNTUNED = {"lam": 10.0, "gamma1": 1e-8}
TUNED = {"lam": 13.5585, "gamma1": 1e-10}
ABC_DEFAULTS = {
    "colony_size": 50, "generations": 100, "limit": None, "positive_u": False,
    "lam_min": 9.0, "lam_max": 16.0, "log10_gamma_min": -10.0, "log10_gamma_max": -7.0,
    "horizon": 20.0, "seeds": 8, "jobs": 1,
}
EXPERIMENT_DEFAULTS = {
    "name": "step02", "reference": "step", "amplitude": None,
    "controller": "backstepping-tuned", "controllers": "backstepping-tuned, smc", "seed": 0,
}
_REF_AMP = {"step": 0.2, "sine": 0.05, "sum_of_sines": 0.05}


@dataclasses.dataclass
class ExperimentSpec:
    """Parsed experiment file with defaults applied."""

    name: str = "step02"
    reference: Reference = dataclasses.field(default_factory=Reference)
    controller: str = "backstepping-tuned"
    controllers: tuple = ("backstepping-tuned", "smc")
    seed: int = 0
    plant: PlantParams = dataclasses.field(default_factory=PlantParams)
    ctrl_overrides: dict = dataclasses.field(default_factory=dict)
    untuned: dict = dataclasses.field(default_factory=lambda: dict(UNTUNED))
    tuned: dict = dataclasses.field(default_factory=lambda: dict(TUNED))
    smc: SmcConfig = dataclasses.field(default_factory=SmcConfig)
    sim: SimConfig = dataclasses.field(default_factory=SimConfig)
    weights: ObjectiveWeights = dataclasses.field(default_factory=ObjectiveWeights)
    abc: dict = dataclasses.field(default_factory=lambda: dict(ABC_DEFAULTS))
    path: str = None

    def controller_config(self, which):
        """Build the configuration for a controller selection."""
        if which == "smc":
            return self.smc
        if which not in CONTROLLERS:
            raise ConfigError(f"unknown controller {which!r}; expected one of {CONTROLLERS}",
                              self.path)
        gains = self.tuned if which == "backstepping-tuned" else self.untuned
        cfg = ControllerConfig.from_plant(self.plant, **self.ctrl_overrides)
        return cfg.with_(lam=gains["lam"]).with_gamma1(gains["gamma1"])

    def abc_config(self, seed):
        a = self.abc
        bounds = ((a["lam_min"], a["lam_max"]), (a["log10_gamma_min"], a["log10_gamma_max"]))
        return abc_mod.AbcConfig(bounds=bounds, colony_size=a["colony_size"],
                                 generations=a["generations"], limit=a["limit"],
                                 seed=seed, positive_u=a["positive_u"])


def _field_types(cls):
    return {f.name: f.type for f in dataclasses.fields(cls)}


def _key_lines(path):
    """Map (section, key) to 1-based line numbers for diagnostics."""
    where = {}
    section = None
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            s = line.strip()
            if s.startswith("[") and s.endswith("]"):
                section = s[1:-1].strip()
                where[(section, None)] = n
            elif s and not s.startswith(("#", ";")) and ("=" in s or ":" in s):
                key = s.split("=", 1)[0].split(":", 1)[0].strip()
                where[(section, key)] = n
    return where


def _convert(raw, kind, default=None):
    raw = raw.strip()
    if kind in ("float", float):
        return float(raw)
    if kind in ("int", int):
        return int(raw)
    if kind in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in ("tuple", tuple):
        return tuple(float(v) for v in raw.replace("(", "").replace(")", "").split(",") if v.strip())
    if kind == "optfloat":
        return None if raw.lower() in ("", "none", "auto") else float(raw)
    return raw


_PLANT_KINDS = {n: ("tuple" if t in ("tuple", tuple) else "str" if t in ("str", str) else "float")
                for n, t in _field_types(PlantParams).items()}
_CTRL_KINDS = {n: ("tuple" if t in ("tuple", tuple) else "str" if t in ("str", str) else "float")
               for n, t in _field_types(ControllerConfig).items()}
_CTRL_KINDS.pop("lam")
_CTRL_KINDS.pop("gamma6")
_CTRL_KINDS.pop("gamma7")
_SMC_KINDS = {n: "float" for n in _field_types(SmcConfig)}
_SIM_KINDS = {"horizon": "float", "sample_dt": "float", "internal_dt": "optfloat",
              "control_hold": "bool", "xi0": "tuple"}
_ABC_KINDS = {"colony_size": "int", "generations": "int", "limit": "optfloat",
              "positive_u": "bool", "lam_min": "float", "lam_max": "float",
              "log10_gamma_min": "float", "log10_gamma_max": "float", "horizon": "float",
              "seeds": "int", "jobs": "int"}
_GAIN_KINDS = {"lam": "float", "gamma1": "float"}
_OBJ_KINDS = {"gamma_1_weight": "float", "gamma_2_weight": "float"}
_EXP_KINDS = {"name": "str", "reference": "str", "amplitude": "float", "controller": "str",
              "controllers": "str", "seed": "int"}
_SECTIONS = {"experiment": _EXP_KINDS, "plant": _PLANT_KINDS, "controller": _CTRL_KINDS,
             "untuned": _GAIN_KINDS, "tuned": _GAIN_KINDS, "smc": _SMC_KINDS,
             "sim": _SIM_KINDS, "objective": _OBJ_KINDS, "abc": _ABC_KINDS}


def load_spec(path=None):
    """Parse an experiment file; ``None`` gives the default experiment.

    Raises
    ------
    ConfigError
        With the offending line when available.
    """
    spec = ExperimentSpec(path=path)
    if path is None:
        return spec
    if not os.path.isfile(path):
        raise ConfigError(f"spec file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # plant constants are case-sensitive (B, V_t)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(str(exc).splitlines()[0], path, line) from None
    lines = _key_lines(path)
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]; expected one of "
                              f"{sorted(_SECTIONS)}", path, lines.get((section, None)))
        kinds = _SECTIONS[section]
        values[section] = {}
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in kinds:
                raise ConfigError(f"unknown key {key!r} in [{section}]", path, line)
            try:
                values[section][key] = _convert(raw, kinds[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", path, line) from None
    return _build(spec, values, lines)


def _build(spec, v, lines=None):
    lines = lines or {}
    at = ["experiment"]

    def section(name):
        at[0] = name
        return v.get(name, {})

    try:
        exp = {**EXPERIMENT_DEFAULTS, **section("experiment")}
        spec.name = exp["name"]
        kind = exp["reference"]
        amp = exp["amplitude"] if exp["amplitude"] is not None else _REF_AMP.get(kind, 0.2)
        spec.reference = Reference(kind, amp)
        spec.controller = exp["controller"]
        spec.controllers = tuple(c.strip() for c in exp["controllers"].split(",") if c.strip())
        spec.seed = exp["seed"]
        for c in (spec.controller, *spec.controllers):
            if c not in CONTROLLERS:
                raise DomainError(f"unknown controller {c!r}; expected one of {CONTROLLERS}")
        spec.plant = PlantParams(**section("plant"))
        spec.ctrl_overrides = dict(section("controller"))
        spec.untuned = {**UNTUNED, **section("untuned")}
        spec.tuned = {**TUNED, **section("tuned")}
        spec.smc = SmcConfig(**section("smc"))
        spec.sim = SimConfig(reference=spec.reference, seed=spec.seed, **section("sim"))
        spec.weights = ObjectiveWeights(**section("objective"))
        spec.abc = {**ABC_DEFAULTS, **section("abc")}
        spec.abc_config(spec.seed)
        # validate eagerly so errors surface as configuration errors
        at[0] = "controller"
        ControllerConfig.from_plant(spec.plant, **spec.ctrl_overrides)
        for name, which in (("untuned", "backstepping"), ("tuned", "backstepping-tuned")):
            at[0] = name
            spec.controller_config(which)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), spec.path, lines.get((at[0], None))) from None
    return spec


def _write_dat(path, header, cols):
    np.savetxt(path, np.column_stack(cols), fmt="%.17g", header=header)


def _summary_lines(items):
    return "".join(f"{k} = {v}\n" for k, v in items)


def _fmt(x):
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def steady_error(log):
    """Max ``|e1|`` over the last 25% of the horizon."""
    n = len(log)
    start = int(math.floor(0.75 * (n - 1)))
    return float(np.max(np.abs(log.e1[start:])))


def _maybe_plot(out, name, log_or_cols, kind):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not available; skipping plots")
        return
    fig, ax = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    for label, t, r, x, u in log_or_cols:
        ax[0].plot(t, x, label=label)
        ax[1].plot(t, u, label=label)
    t, r = log_or_cols[0][1], log_or_cols[0][2]
    ax[0].plot(t, r, "k--", label="reference")
    ax[0].set_ylabel("position [m]")
    ax[1].set_ylabel("u [A]")
    ax[1].set_xlabel("t [s]")
    ax[0].legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out, f"{name}_{kind}.png"), dpi=120)
    plt.close(fig)


def cmd_run(spec, out, plot=False):
    os.makedirs(out, exist_ok=True)
    cfg = spec.controller_config(spec.controller)
    code = EXIT_OK
    try:
        slog = simulate(spec.plant, cfg, spec.sim)
    except DivergenceError as exc:
        slog = exc.log
        code = EXIT_DIVERGED
        log.error("%s: %s", spec.name, exc)
    base = os.path.join(out, spec.name)
    slog.to_csv(base + "_log.csv")
    _write_dat(base + "_tracking.dat", "t r xi1", [slog.t, slog.r, slog["xi1"]])
    _write_dat(base + "_control.dat", "t u", [slog.t, slog.u])
    items = [("name", spec.name), ("controller", spec.controller),
             ("reference", f"{spec.reference.kind}({spec.reference.amplitude:g})"),
             ("seed", spec.seed), ("diverged", code == EXIT_DIVERGED)]
    if code == EXIT_OK:
        items.append(("objective", _fmt(objective(slog, spec.weights))))
        items.append(("max_abs_e1_last_25pct", _fmt(steady_error(slog))))
        items.append(("control_total_variation", _fmt(total_variation(slog.u))))
        if isinstance(cfg, ControllerConfig):
            bound, smin = ultimate_bound(cfg)
            frac, checked, tol = lyapunov_check(slog, cfg)
            items += [("ultimate_bound", _fmt(bound)), ("sigma_min", _fmt(smin)),
                      ("steady_error_within_10x_bound", steady_error(slog) <= 10 * bound),
                      ("lyapunov_violation_fraction", _fmt(float(frac))),
                      ("lyapunov_checked_samples", checked), ("lyapunov_tol", _fmt(tol))]
    else:
        items.append(("diverged_at", _fmt(float(slog.t[-1]))))
    with open(base + "_summary.txt", "w") as fh:
        fh.write(_summary_lines(items))
    if plot:
        _maybe_plot(out, spec.name, [(spec.controller, slog.t, slog.r, slog["xi1"], slog.u)], "run")
    print(_summary_lines(items), end="")
    return code


def tune_objective(spec):
    sim = spec.sim.with_(horizon=spec.abc["horizon"])
    base = ControllerConfig.from_plant(spec.plant, **spec.ctrl_overrides)
    return TuningObjective(spec.plant, base, sim, spec.weights)


def cmd_tune(spec, out, seeds=None, jobs=None):
    os.makedirs(out, exist_ok=True)
    n = spec.abc["seeds"] if seeds is None else seeds
    jobs = spec.abc["jobs"] if jobs is None else jobs
    obj = tune_objective(spec)
    seeds = [spec.seed + i for i in range(n)]
    histories = []
    executor = ThreadPoolExecutor(jobs) if jobs > 1 else None
    try:
        for s in seeds:
            h = abc_mod.run(obj, spec.abc_config(s), executor)
            h.to_csv(os.path.join(out, f"{spec.name}_abc_seed{s}.csv"))
            log.info("seed %d: best %.10g at %s", s, h.best, h.best_x)
            histories.append(h)
    finally:
        if executor is not None:
            executor.shutdown()
    base = os.path.join(out, spec.name)
    abc_mod.write_campaign(histories, base + "_campaign.csv", base + "_campaign_table.txt",
                           transform=lambda x: (10.0 ** x[1], x[0]), names=["gamma1", "lambda"])
    spread = abc_mod.campaign_spread(histories)
    with open(base + "_campaign_table.txt") as fh:
        print(fh.read(), end="")
    lams = [h.best_x[0] for h in histories]
    print(f"relative objective spread = {spread:.3e}")
    print(f"lambda window = {max(lams) - min(lams):.6g}")
    if all(h.best >= DIVERGED_OBJECTIVE for h in histories):
        log.error("every evaluation diverged")
        return EXIT_DIVERGED
    return EXIT_OK


def _unique_labels(names):
    seen = {}
    labels = []
    for n in names:
        seen[n] = seen.get(n, 0) + 1
        labels.append(n if seen[n] == 1 else f"{n}_{seen[n]}")
    return labels


def cmd_compare(spec, out, plot=False):
    os.makedirs(out, exist_ok=True)
    if len(spec.controllers) < 2:
        raise ConfigError("compare needs at least two controllers", spec.path)
    labels = _unique_labels(spec.controllers)
    n = spec.sim.n_samples + 1
    t = np.arange(n) * spec.sim.sample_dt
    r = None
    cols_x, cols_u, rows, curves = [], [], [], []
    for label, which in zip(labels, spec.controllers):
        cfg = spec.controller_config(which)
        diverged = False
        try:
            slog = simulate(spec.plant, cfg, spec.sim, diagnostics=False)
        except DivergenceError as exc:
            slog = exc.log
            diverged = True
            log.warning("%s diverged: %s", label, exc)
        x = np.full(n, np.nan)
        u = np.full(n, np.nan)
        x[:len(slog)] = slog["xi1"]
        u[:len(slog)] = slog.u
        if r is None or len(slog) == n:
            r = np.full(n, np.nan) if r is None else r
            r[:len(slog)] = slog.r
        cols_x.append(x)
        cols_u.append(u)
        curves.append((label, slog.t, slog.r, slog["xi1"], slog.u))
        if diverged:
            rows.append([label, "nan", "nan", "nan", "true"])
        else:
            rows.append([label, _fmt(objective(slog, spec.weights)), _fmt(steady_error(slog)),
                         _fmt(total_variation(slog.u)), "false"])
    base = os.path.join(out, spec.name)
    header = ["t", "r"] + [f"xi1_{lb}" for lb in labels] + [f"u_{lb}" for lb in labels]
    np.savetxt(base + "_compare.csv", np.column_stack([t, r] + cols_x + cols_u), fmt="%.17g",
               delimiter=",", header=",".join(header), comments="")
    with open(base + "_metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["controller", "objective", "max_abs_e1_last_25pct", "control_total_variation",
                    "diverged"])
        w.writerows(rows)
    if plot:
        _maybe_plot(out, spec.name, curves, "compare")
    width = max(len(lb) for lb in labels)
    print(f"{'controller'.ljust(width)}  {'objective':>12}  {'max|e1| end':>12}  {'TV(u)':>12}")
    for row in rows:
        vals = [float(v) for v in row[1:4]]
        print(f"{row[0].ljust(width)}  {vals[0]:12.6g}  {vals[1]:12.6g}  {vals[2]:12.6g}"
              + ("  diverged" if row[4] == "true" else ""))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ehsstune",
        description="Simulate, tune and compare servo controllers. An empty or omitted "
                    "spec runs the 0.2 m step with lam=13.5585, gamma1=1e-10, d=0.1, "
                    "F_max=10, a 20 s horizon sampled every 0.01 s.",
        epilog="Exit codes: 0 ok, 2 configuration error, 3 divergence. "
               "Set EHSSTUNE_LOG_LEVEL (e.g. INFO, DEBUG) for log verbosity.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--spec", default=None, help="experiment file (INI sections); "
                       "defaults reproduce the 0.2 m step experiment")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed override (default: [experiment] seed, 0)")

    p_run = sub.add_parser("run", help="simulate one controller and write log, summary and "
                           "plot data")
    common(p_run)
    p_run.add_argument("--plot", action="store_true", help="also render PNG plots")
    p_tune = sub.add_parser(
        "tune", help="run seeded ABC campaigns over (lam, log10 gamma1)",
        description="ABC defaults: colony 50, 100 generations, limit SN*D, "
                    "lam in [9, 16], log10 gamma1 in [-10, -7], 20 s horizon, 8 seeds.")
    common(p_tune)
    p_tune.add_argument("--seeds", type=int, default=None,
                        help="number of campaigns (default: [abc] seeds, 8)")
    p_tune.add_argument("--jobs", type=int, default=None,
                        help="threads for concurrent evaluations (default: [abc] jobs, 1)")
    p_cmp = sub.add_parser("compare", help="run several controllers on the same reference")
    common(p_cmp)
    p_cmp.add_argument("--plot", action="store_true", help="also render PNG plots")
    return parser


def main(argv=None):
    level = os.environ.get("EHSSTUNE_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec)
        if args.seed is not None:
            spec.seed = args.seed
            spec.sim = spec.sim.with_(seed=args.seed)
        if args.command == "run":
            return cmd_run(spec, args.out, args.plot)
        if args.command == "tune":
            if args.seeds is not None and args.seeds < 1:
                raise ConfigError("--seeds must be >= 1")
            return cmd_tune(spec, args.out, args.seeds, args.jobs)
        return cmd_compare(spec, args.out, args.plot)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
