"""Command-line front end.

Every command takes ``key=value`` assignments or ``--key value`` flags
(the two are interchangeable), optionally on top of a ``--config`` file of
``key = value`` lines.  A CSV written by any command starts with a ``#``
metadata block in the same format, so it can be passed back through
``--config`` to reproduce the run byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import ConfigError, PhbecError
from .gpref import GpProblem, solve_gp
from .phem import SystemSpec, build_adiabatic_table, default_r_grid, default_r_max
from .radial import metastable_window, solve_bound_states
from .twobody import (
    GaussianPotential,
    born_scattering_length,
    find_poles,
    invert_v0,
    scattering_length,
)

OUTPUT_ENV = "PHBEC_OUTPUT_DIR"
METADATA_TAG = "# phbec-metadata"

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2


# ---------------------------------------------------------------- value parsing

def _float(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"not a finite number: {text!r}")
    return val


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"not an integer: {text!r}") from None


def _int_list(text: str) -> list[int]:
    """'3,5,10', '3..35' (step 1) or '3..35..4'."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            bits = [_int(b) for b in part.split("..")]
            if len(bits) == 2:
                bits.append(1)
            if len(bits) != 3 or bits[2] <= 0 or bits[1] < bits[0]:
                raise ConfigError(f"bad integer range: {part!r}")
            out.extend(range(bits[0], bits[1] + 1, bits[2]))
        elif part:
            out.append(_int(part))
    if not out:
        raise ConfigError("empty integer list")
    return out


def _float_list(text: str) -> list[float]:
    out = [_float(p) for p in text.split(",") if p.strip()]
    if not out:
        raise ConfigError("empty number list")
    return out


def _sweep(text: str):
    """'lo:hi:count' for an evenly spaced sweep."""
    bits = text.split(":")
    if len(bits) != 3:
        raise ConfigError(f"sweep must be lo:hi:count, got {text!r}")
    lo, hi, n = _float(bits[0]), _float(bits[1]), _int(bits[2])
    if n < 2:
        raise ConfigError("sweep needs at least 2 points")
    return (lo, hi, n)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        up = text.strip().upper() if options[0].isupper() else text.strip().lower()
        if up not in options:
            raise ConfigError(f"expected one of {options}, got {text!r}")
        return up
    return parse


def _fmt(value) -> str:
    """Canonical text form: repr for floats, so values round-trip exactly."""
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, tuple):
        return ":".join(_fmt(v) for v in value)
    if isinstance(value, list):
        return ",".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Param:
    name: str
    parse: Callable[[str], Any]
    default: Any
    help: str


def _optional(parse):
    def wrapped(text):
        return None if text.strip().lower() == "none" else parse(text)
    return wrapped


_SYSTEM = [
    Param("A", _int, None, "particle number (>= 3)"),
    Param("l", _int, 0, "orbital angular momentum"),
    Param("k_max", _int, 4, "potential-harmonics cutoff"),
    Param("v0", _optional(_float), None, "Gaussian strength (hbar omega)"),
    Param("r0", _float, 0.005, "Gaussian range (oscillator lengths)"),
    Param("a_sc", _optional(_float), None, "target scattering length; sets v0 on branch 0 if v0 is none"),
    Param("r_min", _float, 0.01, "first hyperradius of the grid"),
    Param("r_max", _optional(_float), None, "last hyperradius (none: grows with A)"),
    Param("grid_points", _int, 2000, "geometric grid points"),
    Param("quad_points", _optional(_int), None, "fixed quadrature size (none: adaptive)"),
    Param("reduced_mass", _float, 1.0, "two-body reduced mass in atom masses"),
]
_SOLVE = [
    Param("mode", _choice("UAA", "EAA"), "UAA", "adiabatic approximation"),
    Param("n_states", _int, 1, "number of hyperradial levels"),
    Param("points", _int, 6000, "Numerov points in ln r"),
]

SCHEMAS: dict[str, list[Param]] = {
    "scatlen": [
        Param("v0", _optional(_float), None, "Gaussian strength"),
        Param("r0", _float, 0.1, "Gaussian range"),
        Param("sweep_v0", _optional(_sweep), None, "lo:hi:count sweep over v0"),
        Param("step", _optional(_float), None, "Numerov step (none: r0/400)"),
        Param("reduced_mass", _float, 1.0, "two-body reduced mass in atom masses"),
    ],
    "invert-v0": [
        Param("a_sc", _float, None, "target scattering length"),
        Param("r0", _float, 0.005, "Gaussian range"),
        Param("branch", _int, 0, "number of two-body bound states"),
        Param("reduced_mass", _float, 1.0, "two-body reduced mass in atom masses"),
    ],
    "pole": [
        Param("r0", _float, 0.0855, "Gaussian range"),
        Param("count", _int, 1, "number of poles"),
        Param("reduced_mass", _float, 1.0, "two-body reduced mass in atom masses"),
    ],
    "effpot": _SYSTEM + [Param("workers", _int, 1, "processes for the grid")],
    "spectrum": _SYSTEM + _SOLVE + [
        Param("emit_wavefunction", _bool, False, "also write the ground wavefunction CSV"),
        Param("workers", _int, 1, "processes for the grid"),
    ],
    "sweep-a": [p for p in _SYSTEM if p.name not in ("A", "k_max")] + _SOLVE + [
        Param("A", _int_list, None, "particle numbers: 3,10,20 or 3..35"),
        Param("k_max", _int_list, [4], "basis cutoffs"),
        Param("jobs", _int, 1, "parallel (A, k_max) solves"),
    ],
    "gp": [
        Param("A", _int, None, "particle number"),
        Param("a_sc", _float, None, "scattering length"),
        Param("r_max", _float, 12.0, "radial box"),
        Param("grid_points", _int, 2000, "radial points"),
        Param("dt", _float, 1e-3, "initial imaginary-time step"),
        Param("emit_wavefunction", _bool, False, "also write phi(r)"),
    ],
    "compare": [
        Param("A", _int_list, [10, 20, 30], "particle numbers"),
        Param("Aa", _float_list, [0.05, 0.1, 0.2], "values of A * a_sc"),
        Param("r0", _float, 0.1, "Gaussian range used for the PHEM side"),
        Param("k_max", _int, 4, "potential-harmonics cutoff"),
        Param("mode", _choice("UAA", "EAA"), "UAA", "adiabatic approximation"),
        Param("reduced_mass", _float, 1.0, "two-body reduced mass in atom masses"),
        Param("jobs", _int, 1, "parallel PHEM solves"),
    ],
}

REQUIRED = {"invert-v0": ["a_sc"], "effpot": ["A"], "spectrum": ["A"], "sweep-a": ["A"],
            "gp": ["A", "a_sc"]}


# ---------------------------------------------------------------- configuration

def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; '#' prefixes are stripped so CSV metadata blocks work too."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for line in text.splitlines():
        body = line.lstrip("#").strip()
        if "=" not in body or line.strip().startswith(METADATA_TAG):
            continue
        key, _, value = body.partition("=")
        key = key.strip().replace("-", "_")
        if key:
            out[key] = value.strip()
    return out


def resolve(command: str, raw: dict[str, str]) -> dict[str, Any]:
    """Validate every key against the command schema and fill in defaults."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = {p.name: p for p in SCHEMAS[command]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) for {command}: {', '.join(unknown)}")
    params = {}
    for name, p in schema.items():
        params[name] = p.parse(raw[name]) if name in raw else p.default
    for name in REQUIRED.get(command, []):
        if params[name] is None:
            raise ConfigError(f"{command} needs {name}")
    return params


# ---------------------------------------------------------------- output

@dataclass
class Table:
    columns: list[str]
    rows: list[list]
    summary: str
    extra: dict  # file suffix -> Table for side outputs


def render_csv(command: str, params: dict, table: Table) -> str:
    buf = io.StringIO()
    buf.write(METADATA_TAG + "\n")
    buf.write(f"# command = {command}\n")
    buf.write(f"# version = {__version__}\n")
    for key in sorted(params):
        buf.write(f"# {key} = {_fmt(params[key])}\n")
    buf.write("# units = oscillator units (lengths sqrt(hbar/m omega), energies hbar omega)\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------- commands

def _potential_for(params, particle_count=None) -> GaussianPotential:
    v0 = params.get("v0")
    if v0 is None:
        a = params.get("a_sc")
        if a is None:
            raise ConfigError("give either v0 or a_sc")
        v0 = invert_v0(a, params["r0"], reduced_mass=params.get("reduced_mass", 1.0))
    return GaussianPotential(v0, params["r0"])


def _system(params, a, k_max) -> SystemSpec:
    r_max = params["r_max"] if params["r_max"] is not None else default_r_max(a)
    grid = default_r_grid(a, params["grid_points"], params["r_min"], r_max)
    quad = "adaptive" if params["quad_points"] is None else params["quad_points"]
    return SystemSpec(a, k_max, _potential_for(params), params["l"], grid, quad)


def cmd_scatlen(p):
    if p["sweep_v0"] is not None:
        lo, hi, n = p["sweep_v0"]
        values = np.linspace(lo, hi, n).tolist()
    elif p["v0"] is not None:
        values = [p["v0"]]
    else:
        raise ConfigError("scatlen needs v0 or sweep_v0")
    rows = []
    for v in values:
        pot = GaussianPotential(v, p["r0"])
        born = born_scattering_length(pot, p["reduced_mass"])
        try:
            res = scattering_length(pot, step=p["step"], reduced_mass=p["reduced_mass"])
            rows.append([v, res.a_sc, born, res.bound_state_count])
        except PhbecError:
            if len(values) == 1:
                raise
            rows.append([v, math.nan, born, -1])
    last = rows[-1]
    summary = f"scatlen r0={_fmt(p['r0'])}: a_sc({_fmt(last[0])}) = {last[1]:.8g}"
    if len(rows) > 1:
        summary += f" ({len(rows)} strengths)"
    return Table(["v0", "a_sc", "a_born", "bound_states"], rows, summary, {})


def cmd_invert(p):
    v = invert_v0(p["a_sc"], p["r0"], p["branch"], p["reduced_mass"])
    check = scattering_length(GaussianPotential(v, p["r0"]), reduced_mass=p["reduced_mass"]).a_sc
    return Table(["a_sc", "r0", "branch", "v0", "a_sc_check"],
                 [[p["a_sc"], p["r0"], p["branch"], v, check]],
                 f"invert-v0: v0 = {v:.10g} for a_sc = {_fmt(p['a_sc'])}, r0 = {_fmt(p['r0'])}", {})


def cmd_pole(p):
    poles = find_poles(p["r0"], p["count"], p["reduced_mass"])
    rows = [[i + 1, v, v * p["r0"] ** 2] for i, v in enumerate(poles)]
    return Table(["index", "v0", "v0_r0_squared"], rows,
                 f"pole r0={_fmt(p['r0'])}: first pole at v0 = {poles[0]:.8g}", {})


def cmd_effpot(p):
    spec = _system(p, p["A"], p["k_max"])
    tab = build_adiabatic_table(spec, workers=p["workers"])
    lam = spec.grand_orbital
    free = lam * (lam + 1) / tab.r_grid ** 2 + tab.r_grid ** 2 / 4
    rows = [[r, w, d, f] for r, w, d, f in zip(tab.r_grid, tab.omega0, tab.derivative_term, free)]
    win = metastable_window(tab)
    desc = "absent" if win is None else f"present (barrier r={win[0]:.4g}, well r={win[1]:.4g})"
    summary = (f"effpot A={p['A']} k_max={p['k_max']} v0={spec.potential.v0:.8g}: "
               f"min omega0 = {tab.omega0.min():.6f}; metastable window {desc}")
    return Table(["r", "omega0", "derivative_term", "omega0_free"], rows, summary, {})


def _spectrum_rows(p, a, k_max, workers=1):
    spec = _system(p, a, k_max)
    tab = build_adiabatic_table(spec, workers=workers)
    res = solve_bound_states(tab, p["n_states"], p["mode"], points=p["points"])
    return spec, res


def cmd_spectrum(p):
    spec, res = _spectrum_rows(p, p["A"], p["k_max"], p["workers"])
    e0 = res.energies_rel[0]
    rows = [[n, e, t, e - e0, res.node_counts[n]]
            for n, (e, t) in enumerate(zip(res.energies_rel, res.energies_total_per_particle))]
    extra = {}
    if p["emit_wavefunction"]:
        extra["wavefunction"] = Table(["r", "zeta0"], [[r, z] for r, z in zip(res.r_grid, res.zeta0)], "", {})
    summary = (f"spectrum A={p['A']} k_max={p['k_max']} mode={res.mode}: "
               f"E/A = {res.energies_total_per_particle[0]:.6f} (E_rel = {e0:.6f})")
    if res.shortage:
        summary += "; warning: fewer bound levels than requested"
    return Table(["n", "E_rel", "E_per_particle", "excitation", "nodes"], rows, summary, extra)


def _sweep_job(args):
    p, a, k = args
    _, res = _spectrum_rows(p, a, k)
    return res


def cmd_sweep(p):
    jobs = [(p, a, k) for a in p["A"] for k in p["k_max"]]
    if p["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=p["jobs"]) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    n = p["n_states"]
    cols = ["A", "k_max", "E_rel", "E_per_particle"] + [f"excitation_{i}" for i in range(1, n)]
    rows = []
    for (_, a, k), res in zip(jobs, results):
        e = res.energies_rel
        rows.append([a, k, e[0], res.energies_total_per_particle[0]] + [x - e[0] for x in e[1:]])
    summary = f"sweep-a: {len(rows)} solves, E/A from {min(r[3] for r in rows):.6f} to {max(r[3] for r in rows):.6f}"
    return Table(cols, rows, summary, {})


def cmd_gp(p):
    res = solve_gp(GpProblem(p["A"], p["a_sc"], r_max=p["r_max"], points=p["grid_points"], dt=p["dt"]))
    extra = {}
    if p["emit_wavefunction"]:
        extra["wavefunction"] = Table(["r", "phi"], [[r, f] for r, f in zip(res.r, res.phi)], "", {})
    row = [p["A"], p["a_sc"], res.energy_per_particle, res.interaction_shift, res.mu]
    return Table(["A", "a_sc", "E_per_particle", "E_per_particle_minus_1.5", "mu"], [row],
                 f"gp A={p['A']} a_sc={_fmt(p['a_sc'])}: E/A = {res.energy_per_particle:.6f}, mu = {res.mu:.6f}",
                 extra)


def _compare_job(args):
    a_count, a_sc, p = args
    v0 = invert_v0(a_sc, p["r0"], reduced_mass=p["reduced_mass"])
    spec = SystemSpec(a_count, p["k_max"], GaussianPotential(v0, p["r0"]))
    res = solve_bound_states(build_adiabatic_table(spec), 1, p["mode"])
    return v0, res.energies_total_per_particle[0]


def cmd_compare(p):
    jobs = [(a, aa / a, p) for aa in p["Aa"] for a in p["A"]]
    if p["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=p["jobs"]) as pool:
            phem = list(pool.map(_compare_job, jobs))
    else:
        phem = [_compare_job(j) for j in jobs]
    rows = []
    for (a, a_sc, _), (v0, e_ph) in zip(jobs, phem):
        e_gp = solve_gp(GpProblem(a, a_sc)).energy_per_particle
        rows.append([a * a_sc, a, a_sc, v0, e_ph, e_gp, e_gp - e_ph])
    summary = f"compare: {len(rows)} points, GP - PHEM from {min(r[6] for r in rows):.6f} to {max(r[6] for r in rows):.6f}"
    return Table(["A_a", "A", "a_sc", "v0", "E_phem_per_particle", "E_gp_per_particle", "gp_minus_phem"],
                 rows, summary, {})


COMMANDS = {
    "scatlen": cmd_scatlen,
    "invert-v0": cmd_invert,
    "pole": cmd_pole,
    "effpot": cmd_effpot,
    "spectrum": cmd_spectrum,
    "sweep-a": cmd_sweep,
    "gp": cmd_gp,
    "compare": cmd_compare,
}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phbec",
        description="Trapped-boson ground states by potential harmonics, with two-body and GP tools.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name, help=f"{name} ({', '.join(p.name for p in schema)})")
        sp.add_argument("assignments", nargs="*", metavar="key=value")
        sp.add_argument("--config", help="file of key = value lines (a previous CSV works)")
        sp.add_argument("--output", help=f"CSV path (default: ${OUTPUT_ENV}/{name}.csv)")
        for p in schema:
            flags = [f"--{p.name}"]
            dashed = f"--{p.name.replace('_', '-')}"
            if dashed != flags[0]:
                flags.append(dashed)
            sp.add_argument(*flags, dest=f"opt_{p.name}", default=None, help=p.help)
    return parser


def _collect(args, schema) -> dict[str, str]:
    raw = read_config_file(args.config) if args.config else {}
    raw.pop("command", None)
    raw.pop("version", None)
    raw.pop("units", None)
    for item in args.assignments:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, _, value = item.partition("=")
        raw[key.strip().replace("-", "_")] = value.strip()
    for p in schema:
        val = getattr(args, f"opt_{p.name}")
        if val is not None:
            raw[p.name] = val
    return raw


def _output_path(command, args) -> Path:
    if args.output:
        return Path(args.output)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / f"{command}.csv"


def _side_path(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message), "exit": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help and --version exit 0; usage errors are configuration errors
        return EXIT_OK if not exc.code else EXIT_CONFIG
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    command = args.command
    try:
        if args.config:
            meta = read_config_file(args.config)
            if meta.get("command", command) != command:
                raise ConfigError(f"config was written by {meta['command']!r}, not {command!r}")
        params = resolve(command, _collect(args, SCHEMAS[command]))
    except ConfigError as exc:
        return _fail("ConfigError", exc, EXIT_CONFIG)
    try:
        table = COMMANDS[command](params)
    except ConfigError as exc:
        return _fail("ConfigError", exc, EXIT_CONFIG)
    except (PhbecError, ArithmeticError, ValueError) as exc:
        return _fail(type(exc).__name__, exc, EXIT_SOLVER)

    path = _output_path(command, args)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_csv(command, params, table))
        for suffix, side in table.extra.items():
            _side_path(path, suffix).write_text(render_csv(command, params, side))
    except OSError as exc:
        return _fail("OSError", exc, EXIT_CONFIG)
    print(f"{table.summary} -> {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
