"""Command-line surface for the laboratory.

Modes
-----
check      admissibility of a drift at one level: smallness conditions,
           derived constants, form axioms, rate validation.
resolvent  solve the shifted systems for a grid of shifts.
semigroup  evaluate the semigroup on a time grid, with Markov checks.
simulate   sample trajectories and empirical laws.
converge   per-level gap reports against a reference level.

Exit codes: 0 success, 1 admissibility failure, 2 usage/config error.
All report files start with one timestamp header line; everything after it
is a deterministic function of the configuration and seed.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import convergence as cv
from . import drift as dr
from . import markov as mk
from . import spectral as sp
from . import tower as tw
from .pcf import StructureError, build_sierpinski_structure, load_structure
from .resistance import NetworkError, harmonic_extension, read_vertex_function


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Report files: one "# generated ..." header line, deterministic body.
# ---------------------------------------------------------------------------

def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def _header() -> str:
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return f"# generated {stamp}\n"


def write_json_report(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header())
        json.dump(jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        body = "".join(line for line in fh if not line.startswith("#"))
    return json.loads(body)


def write_csv_report(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header())
        for row in rows:
            fh.write(row + "\n")


def write_vertex_function_report(path: Path, values: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header())
        for k, v in enumerate(np.asarray(values, dtype=float)):
            fh.write(f"{k} {v:.17g}\n")


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def _parse_levels(text: str) -> list[int]:
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":")
        levels = list(range(int(lo), int(hi) + 1))
    else:
        levels = [int(x) for x in text.split(",") if x]
    if not levels or min(levels) < 1:
        raise ConfigError(f"levels must be >= 1, got {text!r}")
    return levels


def _parse_floats(text: str) -> list[float]:
    vals = [float(x) for x in text.split(",") if x]
    if not vals:
        raise ConfigError(f"empty numeric grid {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftform",
        description="drift-perturbed energy forms on self-similar graph hierarchies",
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--structure", default="sg",
                        help="builtin 'sg' or a structure config path")
    common.add_argument("--drift", default="default",
                        help="'default' (admissible half-threshold instance), "
                             "'none' (no drift) or a drift config path")
    common.add_argument("--level", type=int, default=3, help="working level")
    common.add_argument("--levels", default="1:5", help="level range 'a:b' or list 'a,b,c'")
    common.add_argument("--reference-level", type=int, default=None,
                        help="proxy/reference level (default: working level for "
                             "check, 6 for converge)")
    common.add_argument("--alpha", default=None,
                        help="comma-separated resolvent shifts (default: 2*lambda)")
    common.add_argument("--t", default="0.1", help="comma-separated times")
    common.add_argument("--f", default="x",
                        help="input function: 'one', 'x', 'y', 'indicator:<id>', "
                             "'harmonic:<v0,v1,...>' or a vertex-function file")
    common.add_argument("--paths", type=int, default=1000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--delta", type=float, default=None,
                        help="override the derived delta")
    common.add_argument("--draws", type=int, default=1000,
                        help="random draws for the form-axiom checks")
    common.add_argument("--assumption", choices=["A", "B"], default="A")
    common.add_argument("--out", default="runs")
    common.add_argument("--config", default=None,
                        help="JSON file whose keys override the flags")

    sub.add_parser("check", parents=[common], help="admissibility report")
    sub.add_parser("resolvent", parents=[common], help="resolvent solves")
    sub.add_parser("semigroup", parents=[common], help="semigroup evaluation")
    psim = sub.add_parser("simulate", parents=[common], help="trajectory sampling")
    psim.add_argument("--paired", action="store_true",
                      help="also run the drift-free chain on the same seeds and "
                           "emit a paired-difference summary")
    pconv = sub.add_parser("converge", parents=[common], help="per-level gap reports")
    pconv.add_argument("--path-law-max-level", type=int, default=4,
                       help="cap for the Monte-Carlo path-law levels")
    return parser


def apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    if not args.config:
        return args
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(args, dest, value)
    return args


# ---------------------------------------------------------------------------
# Shared setup
# ---------------------------------------------------------------------------

def _build_tower(args) -> tw.LevelTower:
    if args.structure == "sg":
        structure = build_sierpinski_structure()
    else:
        structure = load_structure(args.structure)
    return tw.LevelTower(structure)


def _drift_config(args, tower: tw.LevelTower, proxy_level: int) -> tw.DriftConfig:
    if args.drift == "none":
        return tw.zero_drift_config(tower.structure.boundary_size)
    if args.drift == "default":
        return tw.default_admissible_drift(tower, proxy_level=proxy_level)
    return tw.load_drift_config(args.drift)


def _input_function(args, tower: tw.LevelTower, level: int) -> np.ndarray:
    spec = args.f
    n = tower.vertex_count(level)
    if spec == "one":
        return np.ones(n)
    if spec in ("x", "y"):
        coords = tower.coordinates(level)
        if coords is None:
            raise ConfigError("coordinate input needs an embedded structure")
        col = 0 if spec == "x" else 1
        if coords.shape[1] <= col:
            raise ConfigError(f"structure has no {spec!r} coordinate")
        return coords[:, col].copy()
    if spec.startswith("indicator:"):
        vid = int(spec.split(":", 1)[1])
        f = np.zeros(n)
        f[vid] = 1.0
        return f
    if spec.startswith("harmonic:"):
        vals = [float(x) for x in spec.split(":", 1)[1].split(",")]
        if len(vals) != tower.structure.boundary_size:
            raise ConfigError("harmonic input needs one value per boundary point")
        return harmonic_extension(tower.network(level), dict(enumerate(vals)))
    data = read_vertex_function(spec)
    return np.array([data[k] for k in range(n)])


def _admissibility(args, tower, config, level, proxy_level):
    """Drift realization + smallness report + the assumption verdict."""
    spec, report = tw.constants_for(
        tower, config, level, proxy_level=proxy_level, delta=args.delta
    )
    cond3 = {
        "structurally_satisfied": True,
        "note": "finitely ramified: complement components are the level cells "
                "and their boundaries are level vertices",
        "cell_count": len(tower.complex(level).cells),
        "cell_boundary_size": tower.structure.boundary_size,
    }
    if args.assumption == "A":
        ok = report.condition_I.satisfied and report.condition_II.satisfied
        failed = []
        if not report.condition_I.satisfied:
            failed.append(("Condition (I)", report.condition_I.margin))
        if not report.condition_II.satisfied:
            failed.append(("Condition (II)", report.condition_II.margin))
    else:
        ok = report.condition_I.satisfied
        failed = (
            [] if ok else [("Condition (I)", report.condition_I.margin)]
        )
    if report.constants is None and not any(
        name == "Condition (I)" for name, _ in failed
    ):
        # (I) may hold while the comparison-slope interval is still empty
        # for the chosen delta
        ok = False
        lower = math.sqrt(report.drift_energy / 2.0) * (
            math.sqrt(report.diam_proxy) + (args.delta or 0.1 * math.sqrt(report.diam_proxy))
        )
        failed.append(("comparison-slope interval", 1.0 - lower))
    return spec, report, cond3, ok, failed


def _fail_admissibility(failed) -> int:
    for name, margin in failed:
        print(f"admissibility failure: {name} violated (margin {margin:.6g})",
              file=sys.stderr)
    return 1


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_check(args) -> int:
    tower = _build_tower(args)
    level = args.level
    proxy_level = args.reference_level if args.reference_level is not None else level
    config = _drift_config(args, tower, proxy_level)
    spec, report, cond3, ok, failed = _admissibility(
        args, tower, config, level, proxy_level
    )
    payload: dict = {
        "mode": "check",
        "structure": tower.structure.name,
        "level": level,
        "assumption": args.assumption,
        "seed": args.seed,
        "smallness": report.to_dict(),
        "condition_III": cond3,
        "trace_compatibility_gap": tower.trace_compatibility_gap(),
        "admissible": ok,
    }
    gen = tower.generator(level, spec)
    payload["rate_validation"] = mk.validate_rates(gen).to_dict()
    payload["detailed_balance_gap"] = mk.detailed_balance_gap(gen)
    if report.constants is not None:
        c = report.constants
        asm = tower.assembly(level, spec)
        payload["sandwich"] = dr.verify_sandwich(
            asm, c.s, c.lam, draws=args.draws, seed=args.seed
        ).to_dict()
        payload["drift_bound"] = dr.verify_drift_bound(
            asm, c.s, c.t, draws=args.draws, seed=args.seed
        ).__dict__
        payload["sd_axioms"] = dr.verify_SD_axioms(
            asm, c.s, c.lam, c.delta, report.diam_proxy,
            draws=args.draws, seed=args.seed,
        ).to_dict()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json_report(out / "check_report.json", payload)
    if not ok:
        return _fail_admissibility(failed)
    return 0


def _alphas(args, constants) -> list[float]:
    if args.alpha is not None:
        return _parse_floats(args.alpha)
    return [2.0 * constants.lam]


def cmd_resolvent(args) -> int:
    tower = _build_tower(args)
    level = args.level
    proxy_level = args.reference_level if args.reference_level is not None else level
    config = _drift_config(args, tower, proxy_level)
    spec, report, _, ok, failed = _admissibility(args, tower, config, level, proxy_level)
    if not ok:
        return _fail_admissibility(failed)
    gen = tower.generator(level, spec)
    f = _input_function(args, tower, level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    solves = []
    for alpha in _alphas(args, report.constants):
        if alpha <= report.constants.lam:
            raise ConfigError(
                f"alpha {alpha} must exceed lambda {report.constants.lam:.6g}"
            )
        solve = sp.resolvent_solve(gen, alpha, f)
        write_vertex_function_report(out / f"resolvent_alpha_{alpha:g}.txt", solve.output)
        solves.append({"alpha": alpha, "residual": solve.residual,
                       "sup_norm": float(np.max(np.abs(solve.output)))})
    write_json_report(out / "resolvent_report.json", {
        "mode": "resolvent", "level": level, "f": args.f,
        "lambda": report.constants.lam, "solves": solves,
    })
    return 0


def cmd_semigroup(args) -> int:
    tower = _build_tower(args)
    level = args.level
    proxy_level = args.reference_level if args.reference_level is not None else level
    config = _drift_config(args, tower, proxy_level)
    spec, report, _, ok, failed = _admissibility(args, tower, config, level, proxy_level)
    if not ok:
        return _fail_admissibility(failed)
    gen = tower.generator(level, spec)
    f = _input_function(args, tower, level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    applications = []
    for t in _parse_floats(args.t):
        solve = sp.semigroup_solve(gen, t, f)
        write_vertex_function_report(out / f"semigroup_t_{t:g}.txt", solve.output)
        check = sp.markov_check(gen, t, trials=20, seed=args.seed)
        applications.append({
            "t": t,
            "truncation_order": solve.truncation_order,
            "uniformization_rate": solve.uniformization_rate,
            "markov_check": check.__dict__,
        })
    write_json_report(out / "semigroup_report.json", {
        "mode": "semigroup", "level": level, "f": args.f,
        "applications": applications,
    })
    return 0


def cmd_simulate(args) -> int:
    tower = _build_tower(args)
    level = args.level
    proxy_level = args.reference_level if args.reference_level is not None else level
    config = _drift_config(args, tower, proxy_level)
    spec, report, _, ok, failed = _admissibility(args, tower, config, level, proxy_level)
    if not ok:
        return _fail_admissibility(failed)
    gen = tower.generator(level, spec)
    rate_report = mk.validate_rates(gen)
    if not rate_report.ok:
        print(f"rate validation failed on {len(rate_report.violations)} edges",
              file=sys.stderr)
        return 1
    times = _parse_floats(args.t)
    horizon = max(times)
    init = mk.point_mass(gen.n, 1 if gen.n > 1 else 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    trajectories = mk.simulate_batch(gen, init, horizon, args.paths, args.seed)
    mk.write_trajectories_jsonl(trajectories, out / "trajectories.jsonl")
    grid_rows = ["path,time,state"]
    for k, traj in enumerate(trajectories):
        grid_rows += [f"{k},{t!r},{traj.state_at(t)}" for t in times]
    write_csv_report(out / "trajectory_grid.csv", grid_rows)

    rows = ["time,state,frequency"]
    for t in times:
        if trajectories:
            law = mk.empirical_law(trajectories, t)
            rows += [f"{t!r},{s},{float(law[s])!r}" for s in range(gen.n)]
    write_csv_report(out / "law_summary.csv", rows)

    payload = {
        "mode": "simulate", "level": level, "paths": args.paths,
        "seed": args.seed, "times": times,
        "rate_validation": rate_report.to_dict(),
        "detailed_balance_gap": mk.detailed_balance_gap(gen),
    }
    if args.paired:
        gen0 = tower.generator(level, None)
        coords = tower.coordinates(level)
        test_fns = {"one": np.ones(gen.n)}
        if coords is not None:
            test_fns["x"] = coords[:, 0]
            if coords.shape[1] > 1:
                test_fns["y"] = coords[:, 1]
        prows = ["time,function,mean_drift,mean_plain,difference,se_difference"]
        for t in times:
            s1 = mk.ensemble_states(gen, init, [t], args.paths, args.seed)[0]
            s0 = mk.ensemble_states(gen0, init, [t], args.paths, args.seed)[0]
            for name, fn in test_fns.items():
                d = fn[s1] - fn[s0]
                se = float(np.std(d, ddof=1) / np.sqrt(len(d))) if len(d) > 1 else 0.0
                prows.append(
                    f"{t!r},{name},{float(np.mean(fn[s1]))!r},"
                    f"{float(np.mean(fn[s0]))!r},{float(np.mean(d))!r},{se!r}"
                )
        write_csv_report(out / "paired_summary.csv", prows)
        payload["paired"] = True
    write_json_report(out / "simulate_report.json", payload)
    return 0


def cmd_converge(args) -> int:
    tower = _build_tower(args)
    levels = _parse_levels(args.levels)
    reference = args.reference_level if args.reference_level is not None else 6
    if reference <= max(levels):
        raise ConfigError(
            f"reference level {reference} must exceed the requested levels"
        )
    config = _drift_config(args, tower, reference)

    # Admissibility at every requested level, constants from the reference
    # proxy so all levels share one shift.
    per_level = {}
    smallest_pass = None
    for n in levels + [reference]:
        spec, report, _, ok, failed = _admissibility(args, tower, config, n, reference)
        per_level[n] = {"report": report, "ok": ok, "failed": failed}
        if not ok:
            return _fail_admissibility(failed)
    constants = per_level[reference]["report"].constants

    sandwich_levels = {}
    for n in levels:
        asm = tower.assembly(n, tw.realize_drift(tower, config, n))
        sw = dr.verify_sandwich(asm, constants.s, constants.lam,
                                draws=args.draws, seed=args.seed)
        sandwich_levels[n] = sw.passed
        if sw.passed and smallest_pass is None:
            smallest_pass = n

    f = _input_function(args, tower, reference)
    alphas = _alphas(args, constants)
    times = _parse_floats(args.t)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    ks = cv.ks_norm_check(tower, f, levels, reference)
    write_csv_report(out / "ks_norm.csv", ks.csv_rows())
    resolvent_rep = cv.resolvent_convergence(
        tower, config, alphas[0], f, levels, reference
    )
    write_csv_report(out / "resolvent.csv", resolvent_rep.csv_rows())
    semigroup_rep = cv.semigroup_convergence(
        tower, config, times[0], f, levels, reference
    )
    write_csv_report(out / "semigroup.csv", semigroup_rep.csv_rows())

    pl_levels = [n for n in levels if n <= args.path_law_max_level]
    coords = tower.coordinates(reference)
    test_fns = [np.ones(tower.vertex_count(reference))]
    if coords is not None:
        test_fns = [coords[:, 0], coords[:, 1]] if coords.shape[1] > 1 else [coords[:, 0]]
    path_rep = cv.path_law_convergence(
        tower, config, times[0], test_fns, pl_levels, reference,
        paths=args.paths, seed=args.seed,
    )
    write_csv_report(out / "path_law.csv", path_rep.csv_rows())

    payload = {
        "mode": "converge",
        "levels": levels,
        "reference_level": reference,
        "alpha": alphas[0],
        "t": times[0],
        "constants": constants.to_dict(),
        "per_level_drift_energy": {
            n: per_level[n]["report"].drift_energy for n in levels
        },
        "sandwich_passed_by_level": sandwich_levels,
        "smallest_passing_level": smallest_pass,
        "reports": {
            "ks_norm": {"errors": ks.errors, "trend_from": ks.trend_nonincreasing_from},
            "resolvent_sup": {
                "errors": resolvent_rep.errors,
                "trend_from": resolvent_rep.trend_nonincreasing_from,
            },
            "semigroup_sup": {
                "errors": semigroup_rep.errors,
                "trend_from": semigroup_rep.trend_nonincreasing_from,
            },
            "path_law": {
                "errors": path_rep.errors,
                "banner": path_rep.banner,
                "mc": path_rep.details["mc"],
            },
        },
    }
    write_json_report(out / "converge_report.json", payload)
    return 0


COMMANDS = {
    "check": cmd_check,
    "resolvent": cmd_resolvent,
    "semigroup": cmd_semigroup,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = apply_config_file(args)
        return COMMANDS[args.mode](args)
    except (ConfigError, StructureError, dr.DriftError, NetworkError, OSError,
            json.JSONDecodeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except dr.InadmissibleDriftError as exc:
        print(f"admissibility failure: {exc}", file=sys.stderr)
        return 1
    except mk.RateValidationError as exc:
        print(f"rate validation failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
