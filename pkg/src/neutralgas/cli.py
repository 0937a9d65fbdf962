"""Command-line front end: ``neutralgas {compute,verify,sweep} CONFIG``.

Reports are JSON (floats printed with 17 significant digits, non-finite values
as null); sweeps are CSV.  Exit codes: 0 ok/pass, 1 bound violated, 2 bad
configuration, 3 numerical failure, 4 work budget exceeded.
"""
import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigError, DegenerateSystem, NeutralGasError, NumericalError, WorkBudgetExceeded
from .gaussian import debye_huckel_limit, gaussian_bound
from .ideal import (
    correlation_length,
    eta_hat,
    ideal_partition_quadrature,
    ideal_partition_series,
    infinite_volume_correlation_length,
    suppressed_density,
)
from .model import (
    CONTINUUM,
    LATTICE,
    Ensemble,
    Geometry,
    KernelConfig,
    Species,
    System,
    build_system,
    check_charge_symmetry,
    regularized_energy,
)
from .oracle import DEFAULT_WORK_BUDGET, exact_partition, verify_bound

logger = logging.getLogger("neutralgas")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 1, 2, 3, 4
GRID_KEYS = ("activity_scale", "side", "beta")
SWEEP_COLUMNS = ["xi0_ideal", "eta1", "correlation_length", "density", "density_fraction", "xi2", "xi_exact"]


@dataclass
class RunConfig:
    system: System
    partition_tolerance: float = 1e-12
    mode_tolerance: float = 1e-12
    work_budget: int = DEFAULT_WORK_BUDGET
    debye_huckel: bool = False
    grid: Dict[str, List[float]] = field(default_factory=dict)
    output: Optional[str] = None


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


def parse_config(doc) -> RunConfig:
    """Turn a parsed JSON document into a :class:`RunConfig`; raises ConfigError."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("species", "geometry", "ensemble"):
        if key not in doc:
            raise ConfigError(f"missing top-level key {key!r}")

    species_doc = doc["species"]
    if not isinstance(species_doc, list) or not species_doc:
        raise ConfigError("species must be a nonempty list of {charge, activity}")
    species = []
    for i, entry in enumerate(species_doc):
        if not isinstance(entry, dict) or "charge" not in entry or "activity" not in entry:
            raise ConfigError(f"species[{i}] must be an object with charge and activity")
        species.append(Species(_number(entry["charge"], f"species[{i}].charge"),
                               _number(entry["activity"], f"species[{i}].activity")))

    g = doc["geometry"]
    if not isinstance(g, dict):
        raise ConfigError("geometry must be an object")
    kind = g.get("kind")
    dimension = g.get("dimension")
    if not isinstance(dimension, int) or isinstance(dimension, bool):
        raise ConfigError("geometry.dimension must be an integer")
    side = _number(g.get("side"), "geometry.side")
    if kind == LATTICE:
        geometry = Geometry.lattice(dimension, side, _number(g.get("spacing"), "geometry.spacing"))
    elif kind == CONTINUUM:
        geometry = Geometry.continuum(dimension, side)
    else:
        raise ConfigError(f"geometry.kind must be {LATTICE!r} or {CONTINUUM!r}")

    e = doc["ensemble"]
    if not isinstance(e, dict) or "beta" not in e:
        raise ConfigError("ensemble must be an object with beta")
    ensemble = Ensemble(_number(e["beta"], "ensemble.beta"),
                        _number(e.get("elementary_charge", 1.0), "ensemble.elementary_charge"))

    k = doc.get("kernel", {})
    if not isinstance(k, dict):
        raise ConfigError("kernel must be an object")
    u0 = k.get("u0", "zero")
    if not isinstance(u0, str):
        u0 = _number(u0, "kernel.u0")
    kernel = KernelConfig(_number(k.get("t", 0.0), "kernel.t"), u0)

    system = build_system(species, geometry, ensemble, kernel)

    tol = doc.get("tolerances", {})
    if isinstance(tol, (int, float)) and not isinstance(tol, bool):
        tol = {"partition": tol, "modes": tol}
    if not isinstance(tol, dict):
        raise ConfigError("tolerances must be a number or an object")
    part_tol = _number(tol.get("partition", 1e-12), "tolerances.partition")
    mode_tol = _number(tol.get("modes", 1e-12), "tolerances.modes")
    if not (part_tol > 0 and mode_tol > 0):
        raise ConfigError("tolerances must be positive")

    budget = doc.get("work_budget", DEFAULT_WORK_BUDGET)
    if not isinstance(budget, (int, float)) or isinstance(budget, bool) or budget <= 0:
        raise ConfigError("work_budget must be a positive number")

    grid = parse_grid_doc(doc.get("sweep", {}))
    return RunConfig(system, part_tol, mode_tol, int(budget), bool(doc.get("debye_huckel", False)),
                     grid, doc.get("output"))


def parse_grid_doc(doc):
    if not isinstance(doc, dict):
        raise ConfigError("sweep must be an object mapping grid names to value lists")
    grid = {}
    for key, values in doc.items():
        if key not in GRID_KEYS:
            raise ConfigError(f"unknown sweep variable {key!r}; choose from {GRID_KEYS}")
        if not isinstance(values, list):
            raise ConfigError(f"sweep.{key} must be a list")
        grid[key] = [_number(v, f"sweep.{key}") for v in values]
    if len(grid) > 2:
        raise ConfigError("sweep over at most two variables")
    return grid


def parse_grid_option(text):
    """``name=v1,v2,...`` or ``name=start:stop:count[:log]``."""
    if "=" not in text:
        raise ConfigError(f"grid option {text!r} must look like name=values")
    name, values_text = text.split("=", 1)
    name = name.strip()
    if name not in GRID_KEYS:
        raise ConfigError(f"unknown sweep variable {name!r}; choose from {GRID_KEYS}")
    values_text = values_text.strip()
    if not values_text:
        return name, []
    try:
        if ":" in values_text:
            parts = values_text.split(":")
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            log = len(parts) > 3 and parts[3] == "log"
            values = np.geomspace(start, stop, count) if log else np.linspace(start, stop, count)
            return name, [float(v) for v in values]
        return name, [float(v) for v in values_text.split(",")]
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"cannot parse grid {text!r}: {exc}") from None


# -- JSON emission -----------------------------------------------------------

def _fmt_float(x):
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    return text if any(ch in text for ch in ".en") else text + ".0"


def to_json(obj, indent=2, _level=0):
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{to_json(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# -- report builders ------------------------------------------------------------

def _partition_doc(result):
    return {"value": result.value, "log_value": result.log_value, "tail_bound": result.tail_bound,
            "work": dict(result.work)}


def _bound_doc(b):
    return {"xi2": b.xi2, "log_xi2": b.log_xi2, "correlation_length": b.xi0, "screening": b.screening,
            "momentum_sum": b.momentum_sum, "u0_term": b.u0_term, "tail_bound": b.tail_bound,
            "modes": b.n_modes}


def _system_doc(system):
    g = system.geometry
    geo = {"kind": g.kind, "dimension": g.dimension, "side": g.side}
    if g.is_lattice:
        geo["spacing"] = g.spacing
        geo["sites"] = g.n_sites
    k = system.kernel
    return {
        "species": [{"charge": s.charge_number, "activity": s.activity} for s in system.species],
        "geometry": geo,
        "ensemble": {"beta": system.ensemble.beta, "elementary_charge": system.ensemble.elementary_charge},
        "kernel": {"t": k.cutoff_t, "u0": k.u0},
    }


def compute_report(cfg: RunConfig):
    system = cfg.system
    tilted = system.tilt
    q_max = max(abs(q) for q in system.charges)
    eta = eta_hat(tilted, q_max)
    xi0 = ideal_partition_quadrature(tilted)
    xi0_series = ideal_partition_series(tilted)
    try:
        length = correlation_length(system, tilted, eta)
    except DegenerateSystem:
        length = math.inf
    try:
        length_inf = infinite_volume_correlation_length(system, tilted)
    except DegenerateSystem:
        length_inf = math.inf
    bound = gaussian_bound(system, tilted, eta, tolerance=cfg.mode_tolerance)
    doc = {
        "command": "compute",
        "status": "ok",
        "system": _system_doc(system),
        "tilt": {
            "c0": tilted.c0,
            "residual": tilted.residual,
            "tilted_masses": {str(q): m for q, m in sorted(tilted.masses.items())},
            "symmetry_residuals": {str(q): r for q, r in sorted(check_charge_symmetry(tilted).residuals.items())},
        },
        "u0": system.u0,
        "xi0_ideal": _partition_doc(xi0),
        "xi0_ideal_series": _partition_doc(xi0_series),
        "eta_hat": {str(q): v for q, v in sorted(eta.values.items())},
        "correlation_length": length,
        "correlation_length_infinite_volume": length_inf,
        "suppressed_density": suppressed_density(system, tilted, eta),
        "xi2": _bound_doc(bound),
    }
    if cfg.debye_huckel:
        energy = regularized_energy(system.geometry, system.kernel)
        doc["debye_huckel"] = _bound_doc(debye_huckel_limit(system, tilted, eta, cfg.mode_tolerance))
        doc["debye_huckel"]["regularized_energy"] = {"value": energy.value, "error": energy.error}
    return doc


def verify_report(cfg: RunConfig):
    rep = verify_bound(cfg.system, cfg.partition_tolerance, cfg.work_budget)
    doc = {
        "command": "verify",
        "status": "pass" if rep.passed else "fail",
        "pass": rep.passed,
        "system": _system_doc(cfg.system),
        "c0": cfg.system.tilt.c0,
        "u0": cfg.system.u0,
        "xi_exact": _partition_doc(rep.xi_exact),
        "xi0_ideal": _partition_doc(rep.xi0),
        "xi2": _bound_doc(rep.xi2),
        "slack": rep.slack,
        "relative_slack": rep.relative_slack,
        "below_ideal": rep.below_ideal,
    }
    return doc, (EXIT_OK if rep.passed else EXIT_FAIL)


def _grid_points(grid):
    names = list(grid)
    if not names:
        return names, []
    if any(len(grid[n]) == 0 for n in names):
        return names, []
    if len(names) == 1:
        return names, [(v,) for v in grid[names[0]]]
    return names, [(a, b) for a in grid[names[0]] for b in grid[names[1]]]


def _vary(system: System, name, value):
    if name == "beta":
        return system.with_beta(value)
    if name == "activity_scale":
        return system.with_species([Species(s.charge_number, s.activity * value) for s in system.species])
    g = system.geometry
    if g.is_lattice:
        # keep the number of sites and rescale the spacing
        geometry = Geometry.lattice(g.dimension, value, value / g.n_side)
    else:
        geometry = Geometry.continuum(g.dimension, value)
    return replace(system, geometry=geometry)


def sweep_rows(cfg: RunConfig):
    names, points = _grid_points(cfg.grid)
    rows = []
    for point in points:
        system = cfg.system
        for name, value in zip(names, point):
            system = _vary(system, name, value)
        system = build_system(system.species, system.geometry, system.ensemble, system.kernel)
        tilted = system.tilt
        eta = eta_hat(tilted, max(abs(q) for q in system.charges))
        try:
            length = correlation_length(system, tilted, eta)
        except DegenerateSystem:
            length = math.inf
        density = suppressed_density(system, tilted, eta)
        grand = math.fsum(math.exp(-s.charge_number * tilted.c0) * s.activity for s in system.species)
        exact = math.nan
        if system.geometry.is_lattice:
            try:
                exact = exact_partition(system, cfg.partition_tolerance, cfg.work_budget).value
            except WorkBudgetExceeded:
                pass
        row = dict(zip(names, point))
        row.update({
            "xi0_ideal": ideal_partition_quadrature(tilted).value,
            "eta1": eta.values.get(1, math.nan),
            "correlation_length": length,
            "density": density,
            "density_fraction": density / grand if grand > 0 else math.nan,
            "xi2": gaussian_bound(system, tilted, eta, tolerance=cfg.mode_tolerance).xi2,
            "xi_exact": exact,
        })
        rows.append(row)
    return names + SWEEP_COLUMNS, rows


def rows_to_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if not math.isfinite(row[h]) else _fmt_float(row[h]) for h in header])
    return buf.getvalue()


# -- entry point --------------------------------------------------------------

def _emit(text, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def build_parser():
    parser = argparse.ArgumentParser(prog="neutralgas", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("compute", "ideal-gas quantities, Xi_2 and optional Debye-Hueckel limit"),
                       ("verify", "exact Xi on a lattice torus against Xi_2"),
                       ("sweep", "CSV table over a grid of activity scale, side or beta")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="JSON config file ('-' for stdin)")
        p.add_argument("-o", "--output", help="write the report here instead of stdout")
        if name == "sweep":
            p.add_argument("--grid", action="append", default=[],
                           help="name=v1,v2,... or name=start:stop:count[:log]; repeat for a 2-D grid")
    return parser


def _load(path):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    output = args.output
    try:
        cfg = parse_config(_load(args.config))
        output = output or cfg.output
        if args.command == "compute":
            _emit(to_json(compute_report(cfg)), output)
            return EXIT_OK
        if args.command == "verify":
            doc, code = verify_report(cfg)
            _emit(to_json(doc), output)
            return code
        grid = dict(cfg.grid)
        for text in args.grid:
            name, values = parse_grid_option(text)
            grid[name] = values
        if len(grid) > 2:
            raise ConfigError("sweep over at most two variables")
        cfg.grid = grid
        header, rows = sweep_rows(cfg)
        _emit(rows_to_csv(header, rows), output)
        return EXIT_OK
    except NeutralGasError as exc:
        if isinstance(exc, ConfigError):
            code = EXIT_CONFIG
        elif isinstance(exc, NumericalError):
            code = EXIT_NUMERIC
        else:
            code = EXIT_BUDGET
        doc = {"command": args.command, "status": "error", "exit_code": code,
               "error": {"type": type(exc).__name__, "message": str(exc)}}
        if args.command == "sweep":
            sys.stderr.write(to_json(doc) + "\n")
        else:
            _emit(to_json(doc), output)
        logger.error("%s: %s", type(exc).__name__, exc)
        return code


if __name__ == "__main__":
    sys.exit(main())
