"""Command-line driver.

Every command prints a JSON report on stdout (and writes it under ``--out``
when given).  Exit codes: 0 success, 1 a check out of tolerance, 2 usage
error or projection failure, 3 calibration bracket failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import flow as flowmod
from .bubble import (
    bubble_basis,
    bubble_identities,
    eval_bubble,
    make_perturbed_bubble,
    stationary_residual,
    two_bubble_scenario,
)
from .conformal import plane_to_sphere, sphere_to_plane
from .core import BubbleParams, Dimension, ModalField, ZonalSphereField
from .functionals import functional_report
from .grid import make_radial_grid, make_sphere_grid
from .io import (
    SCHEMA_VERSION,
    SchemaError,
    check_schema_version,
    dumps_report,
    field_from_dict,
    field_to_dict,
    load_field,
    read_diagnostics,
    save_field,
    write_diagnostics,
    write_report,
)
from .projection import ProjectionError, stability_check
from .rate import rate_fit
from .spectral import (
    band_two_field,
    random_trials,
    rayleigh_gap_check,
    sphere_eigenvalue,
    weighted_spectrum,
)

EXIT_CHECK = 1
EXIT_FIT = 2
EXIT_CALIBRATION = 3

IDENTITY_TOL = 1e-8
RESIDUAL_TOL = 1e-8

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["n"],
    "properties": {
        "schema_version": {"type": "string"},
        "n": {"type": "integer", "minimum": 3},
        "representation": {"enum": [flowmod.SPHERE, flowmod.PLANE]},
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps": _number,
                "degree": {"type": "integer", "minimum": 0},
                "amplitude": _positive,
            },
        },
        "ds0": _positive,
        "ds_max": _positive,
        "s_end": _positive,
        "ds_out": _positive,
        "tol": _positive,
        "fixed_step": {"type": "boolean"},
        "floor": {"oneOf": [{"type": "null"}, _positive]},
        "sphere_size": {"type": "integer", "minimum": 4},
        "basis_size": {"type": "integer", "minimum": 4},
        "vanish_fraction": _positive,
        "blowup_factor": _positive,
        "calibration": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"lo": _positive, "hi": _positive, "tol": _positive, "s_cap": _positive},
                },
            ]
        },
        "rate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "start_below": _positive,
                "noise": {"oneOf": [{"type": "null"}, _positive]},
                "growth": {"oneOf": [{"type": "null"}, _number]},
            },
        },
        "seed": {"type": "integer"},
        "svg": {"type": "boolean"},
    },
}

CALIBRATION_DEFAULTS = {"lo": 0.5, "hi": 2.0, "tol": 1e-10, "s_cap": 40.0}
_FLOW_KEYS = ("ds0", "ds_max", "s_end", "ds_out", "tol", "fixed_step", "floor", "sphere_size",
              "basis_size", "vanish_fraction", "blowup_factor")


class ConfigError(ValueError):
    pass


def validate_config(doc: dict) -> dict:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    if "schema_version" in doc:
        try:
            check_schema_version(doc["schema_version"])
        except SchemaError as exc:
            raise ConfigError(str(exc)) from None
    return doc


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return validate_config(doc)


def flow_config(doc: dict) -> flowmod.FlowConfig:
    dim = Dimension(doc["n"])
    kw = {k: doc[k] for k in _FLOW_KEYS if k in doc}
    if "representation" in doc:
        kw["representation"] = doc["representation"]
    init = flowmod.InitialData(**doc.get("initial", {}))
    return flowmod.FlowConfig(dim=dim, initial=init, **kw)


def calibration_options(doc: dict) -> dict | None:
    cal = doc.get("calibration")
    if cal is None:
        return None
    return {**CALIBRATION_DEFAULTS, **cal}


def rate_options(doc: dict) -> dict:
    dim = Dimension(doc["n"])
    opts = dict(doc.get("rate", {}))
    cal = calibration_options(doc)
    if opts.get("noise") is None:
        opts["noise"] = cal["tol"] if cal else 1e-8
    if opts.get("growth") is None:
        opts["growth"] = flowmod.unstable_rate(dim)
    opts.setdefault("start_below", 0.1)
    return opts


# ---------------------------------------------------------------- scenarios

def parse_grid(text: str | None):
    if not text:
        return make_radial_grid()
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be 'map_scale,panels,nodes_per_panel'")
    return make_radial_grid(float(parts[0]), int(parts[1]), int(parts[2]))


def parse_scenario(text: str) -> tuple[str, dict]:
    """'name:key=value,...'; a bare 'eps=...' means the perturbed bubble."""
    name, _, rest = text.partition(":")
    if "=" in name:
        name, rest = "perturbed", text
    opts = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"bad scenario option {item!r}")
        opts[key.strip()] = float(value)
    return name.strip(), opts


def build_scenario(dim: Dimension, text: str, grid=None):
    """Return (u, K) for a scenario descriptor; K is None for constant curvature."""
    name, opts = parse_scenario(text)
    grid = grid or make_radial_grid()
    if name == "bubble":
        params = BubbleParams(opts.get("kappa", 1.0), opts.get("z", 0.0), opts.get("lambda", 1.0),
                              opts.get("amplitude", 1.0))
        return eval_bubble(params, dim, grid), None
    if name == "perturbed":
        pb = make_perturbed_bubble(dim, opts.get("eps", 1e-3), grid=grid)
        return pb.u, pb.K
    if name == "two-bubble":
        mb = two_bubble_scenario(dim, opts.get("d", 20.0))
        return mb.u, mb.K
    raise ValueError(f"unknown scenario {name!r}")


def _input_field(args, dim=None):
    if getattr(args, "input", None):
        return load_field(args.input), None
    if not args.scenario:
        raise ValueError("give --input FILE or --scenario")
    return build_scenario(dim or Dimension(args.n), args.scenario, parse_grid(args.grid))


def _emit(report: dict, out: str | None, name: str):
    text = dumps_report(report)
    sys.stdout.write(text)
    if out:
        write_report(Path(out) / name if Path(out).suffix == "" else out, report)


# ---------------------------------------------------------------- commands

def cmd_bubble_check(args) -> int:
    dim = Dimension(args.n)
    grid = parse_grid(args.grid)
    base = bubble_identities(dim, 1.0, grid)
    S = base.sobolev ** dim.n
    rows, failure = [], None
    for kappa in args.kappa or [1.0, float(dim.c_flow), 2.0]:
        ident = bubble_identities(dim, kappa, grid)
        err_e = abs(ident.dirichlet / (S * kappa ** (-(dim.n - 2) / 2)) - 1)
        err_m = abs(ident.mass / (S * kappa ** (-dim.n / 2)) - 1)
        res = stationary_residual(dim, kappa, grid)
        rows.append({"kappa": kappa, "dirichlet": ident.dirichlet, "mass": ident.mass,
                     "ratio": ident.ratio, "dirichletError": err_e, "massError": err_m,
                     "residual": res})
        for label, value, tol in (("dirichlet identity", err_e, IDENTITY_TOL),
                                  ("mass identity", err_m, IDENTITY_TOL),
                                  ("stationary residual", res, RESIDUAL_TOL)):
            if failure is None and not value <= tol:
                failure = f"{label} at kappa={kappa}: {value:.3e} > {tol:.0e}"
    report = {"n": dim.n, "S": base.sobolev, "Sn": S, "exact": dim.sobolev_power,
              "rows": rows, "passed": failure is None, "failure": failure}
    _emit(report, args.out, "bubble_check.json")
    if failure:
        print(f"bubble-check failed: {failure}", file=sys.stderr)
        return EXIT_CHECK
    return 0


def cmd_deficit(args) -> int:
    u, K = _input_field(args)
    rep = functional_report(u, K)
    _emit({"scenario": args.scenario, **asdict(rep)}, args.out, "deficit.json")
    return 0


def cmd_project(args) -> int:
    u, _ = _input_field(args)
    if not isinstance(u, ModalField):
        raise ValueError("projection needs a planar field")
    try:
        rep = stability_check(u, normalize=not args.no_normalize)
    except ProjectionError as exc:
        diag = exc.best or {}
        _emit({"error": str(exc), "diagnostics": diag}, args.out, "project.json")
        print(f"projection failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    report = {
        "K0": rep.K0, "energy_ratio": rep.energy_ratio, "delta": rep.delta,
        "hypotheses": rep.hypotheses, "C_ratio": rep.C_ratio, "alpha_error": rep.alpha_error,
        "rho_prime": rep.rho_prime, "reason": rep.reason,
        "projection": rep.projection.summary() if rep.projection else None,
    }
    _emit(report, args.out, "project.json")
    return 0


def cmd_spectrum(args) -> int:
    dim = Dimension(args.n)
    grid = parse_grid(args.grid)
    spec = weighted_spectrum(dim, args.lmax, grid)
    report = {
        "n": dim.n, "perDegree": spec.perDegree, "distinct": spec.distinct,
        "multiplicity": spec.multiplicity, "Lambda": spec.Lambda, "gapOk": spec.gapOk,
        "expectedLambda": sphere_eigenvalue(dim, 2), "resolutionChange": spec.resolutionChange,
        "converged": spec.converged,
    }
    if args.trials:
        rng = np.random.default_rng(args.seed)
        trials = random_trials(dim, grid, args.trials, rng) + [band_two_field(dim, grid)]
        qmin = rayleigh_gap_check(trials, bubble_basis(dim, grid))
        report.update({"trials": args.trials, "seed": args.seed, "rayleighMin": qmin,
                       "rayleighOk": bool(qmin >= spec.Lambda - 1e-4)})
    _emit(report, args.out, "spectrum.json")
    return 0 if spec.gapOk and report.get("rayleighOk", True) else EXIT_CHECK


def cmd_transform(args) -> int:
    f = load_field(args.input)
    if isinstance(f, ModalField):
        g = plane_to_sphere(f, make_sphere_grid(f.dim.n, args.size))
    elif isinstance(f, ZonalSphereField):
        g = sphere_to_plane(f, parse_grid(args.grid))
    else:  # pragma: no cover
        raise TypeError("unsupported field")
    if not args.out:
        raise ValueError("transform needs --out FILE")
    save_field(args.out, g)
    return 0


def _trajectory_doc(result, doc, rate_opts) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": doc,
        "rate": rate_opts,
        "records": result.records,
        "states": [field_to_dict(st) for st in result.states],
    }


def _rate_from_trajectory(traj: dict) -> dict:
    records = traj["records"]
    states = [field_from_dict(d) for d in traj["states"]]
    s = np.array([r["s"] for r in records])
    opts = traj["rate"]
    return rate_fit(s, states, records, opts["start_below"], opts["noise"], opts["growth"]).as_dict()


def cmd_flow(args) -> int:
    doc = load_config(args.config)
    if args.seed is not None:
        doc = {**doc, "seed": args.seed}
    out = Path(args.out or ".")
    config = flow_config(doc)
    cal_opts = calibration_options(doc)
    rate_opts = rate_options(doc)
    t0 = time.perf_counter()
    cal = None
    if cal_opts:
        try:
            cal = flowmod.calibrate_amplitude(config, **cal_opts)
        except flowmod.CalibrationError as exc:
            _emit({"error": str(exc), "calibration": cal_opts}, str(out), "run.json")
            print(f"calibration failed: {exc}", file=sys.stderr)
            return EXIT_CALIBRATION
        config = replace(config, initial=replace(config.initial, amplitude=cal.amplitude))
    result = flowmod.run(config)
    traj = _trajectory_doc(result, doc, rate_opts)
    rate = _rate_from_trajectory(traj)
    write_diagnostics(out / "diagnostics.csv", result.records)
    write_report(out / "trajectory.json", traj)
    write_report(out / "rate.json", rate)
    summary = {
        "classification": result.classification, "s_final": result.s_final,
        "samples": len(result.records), "seed": doc.get("seed", 0),
        "calibration": None if cal is None else {
            "amplitude": cal.amplitude, "bracket": cal.bracket, "iterations": cal.iterations},
        "rate": rate,
    }
    write_report(out / "run.json", summary)
    if args.svg or doc.get("svg"):
        _render(out)
    sys.stdout.write(dumps_report({**summary, "elapsed": time.perf_counter() - t0}))
    return 0


def cmd_rate_fit(args) -> int:
    src = Path(args.input)
    path = src / "trajectory.json" if src.is_dir() else src
    with open(path, encoding="utf-8") as fh:
        traj = json.load(fh)
    check_schema_version(traj.get("schema_version"))
    rate = _rate_from_trajectory(traj)
    _emit(rate, args.out or str(path.parent), "rate.json")
    return 0


def _render(directory: Path) -> list:
    from .plotting import render_figures

    diag = read_diagnostics(directory / "diagnostics.csv")
    rate_path = directory / "rate.json"
    rate = json.loads(rate_path.read_text()) if rate_path.exists() else None
    return render_figures(diag, rate, directory)


def cmd_report(args) -> int:
    directory = Path(args.input)
    if not (directory / "diagnostics.csv").exists():
        raise FileNotFoundError(f"no diagnostics.csv in {directory}")
    paths = _render(directory)
    sys.stdout.write(dumps_report({"figures": [str(p) for p in paths]}))
    return 0


# ---------------------------------------------------------------- parser

def _dimension(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"dimension must be an integer, got {text!r}") from None
    if n < 3:
        raise argparse.ArgumentTypeError(f"dimension must be >= 3, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bubbleflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", help="output directory or file")
        return p

    p = add("bubble-check", cmd_bubble_check, "bubble identities and stationary residuals")
    p.add_argument("--n", type=_dimension, default=3)
    p.add_argument("--kappa", type=float, nargs="+")
    p.add_argument("--grid", help="map_scale,panels,nodes_per_panel")

    for name, func, help_ in (("deficit", cmd_deficit, "deficit and functionals of a field"),
                              ("project", cmd_project, "projection onto the bubble family")):
        p = add(name, func, help_)
        p.add_argument("--n", type=_dimension, default=3)
        p.add_argument("--grid")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--input", help="field file")
        src.add_argument("--scenario", help="bubble:..., eps=..., two-bubble:d=...")
        if name == "project":
            p.add_argument("--no-normalize", action="store_true", help="skip the K0 = 1 rescaling")

    p = add("spectrum", cmd_spectrum, "weighted eigenvalues around the bubble")
    p.add_argument("--n", type=_dimension, default=3)
    p.add_argument("--grid")
    p.add_argument("--lmax", type=int, default=2)
    p.add_argument("--trials", type=int, default=0, help="random Rayleigh trial fields")
    p.add_argument("--seed", type=int, default=0)

    p = add("transform", cmd_transform, "map a field between the plane and the sphere")
    p.add_argument("--input", required=True)
    p.add_argument("--grid", help="radial grid for sphere -> plane")
    p.add_argument("--size", type=int, default=48, help="sphere nodes for plane -> sphere")

    p = add("flow", cmd_flow, "run (and optionally calibrate) the rescaled flow")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--svg", action="store_true", help="also render SVG figures")

    p = add("rate-fit", cmd_rate_fit, "fit decay rates of a stored trajectory")
    p.add_argument("--input", required=True, help="flow output directory or trajectory.json")

    p = add("report", cmd_report, "render SVG figures next to diagnostics.csv")
    p.add_argument("--input", required=True, help="flow output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT if isinstance(exc, ConfigError) else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
