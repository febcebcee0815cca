"""Batch driver: `mzi-phase <command> [flags]` writes CSV/JSON artifacts to an output directory."""
import argparse
import json
import logging
import math
import os
import re
import subprocess as sp
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd
from dataclasses_json import dataclass_json

from . import __version__
from .bayes_core import MIN_NODE_COUNT
from .errors import EXIT_OK, ConfigurationError, DomainError, MziPhaseError
from .monte_carlo import Correction, MCStrategy, TrialConfig, ensemble_stats, records_frame, run_ensemble, summary_frame
from .optimizer import Family, OptimizerConfig
from .scaling_laws import (
    collect_rho_samples,
    collect_step_samples,
    fit_scaling_constants,
    general_shot_plan,
    load_constants,
    shot_plan_rows,
)
from .strategies import STRATEGIES, find_regime_boundary, shots_to_target
from .types import FlatPrior, Record, ShotCountCase

logger = logging.getLogger(__name__)

OUTPUT_ENV = "MZI_PHASE_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

UNITS = {
    "delta": "delta [rad]",
    "center": "center [rad]",
    "delta_start": "delta_start [rad]",
    "delta_req": "delta_req [rad]",
    "delta_in": "delta_in [rad]",
    "delta_out": "delta_out [rad]",
    "boundary_delta": "boundary_delta [rad]",
    "delta_boundary": "delta_boundary [rad]",
    "phi_true": "phi_true [rad]",
    "final_estimator": "final_estimator [rad]",
    "final_width": "final_width [rad]",
    "median_estimator": "median_estimator [rad]",
    "mad": "mad [rad]",
    "mean_final_width": "mean_final_width [rad]",
    "bmse": "bmse [rad^2]",
    "exact_bmse": "exact_bmse [rad^2]",
    "flat_bmse": "flat_bmse [rad^2]",
    "recentred_bmse": "recentred_bmse [rad^2]",
    "mean_sq_error": "mean_sq_error [rad^2]",
    "corrected_variance": "corrected_variance [rad^2]",
    "mean_corrected_variance": "mean_corrected_variance [rad^2]",
    "corrected_stderr": "corrected_stderr [rad^2]",
    "variance_ratio": "variance_ratio [1]",
    "n_delta": "n_delta [1]",
    "success_rate": "success_rate [1]",
    "success_stderr": "success_stderr [1]",
    "mad_ratio": "mad_ratio [1]",
    "rho": "rho [1]",
}

_ANGLE = re.compile(r"^\s*([+-]?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_angle(value):
    """Radians from a number or a pi-expression such as `pi`, `-pi/2`, `3pi/10`, `0.5*pi`."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    text = str(value).strip().lower()
    match = _ANGLE.match(text)
    if match:
        sign, factor, divisor = match.groups()
        angle = (float(factor) if factor else 1.0) * math.pi / (float(divisor) if divisor else 1.0)
        return -angle if sign == "-" else angle
    try:
        return float(text)
    except ValueError:
        raise ConfigurationError(f"cannot read {value!r} as an angle")


def _items(value):
    return value if isinstance(value, list) else [v for v in str(value).split(",") if v.strip()]


def parse_angles(value):
    return [parse_angle(v) for v in _items(value)]


def parse_ints(value):
    """`5`, `2..13` (inclusive) or `4,6,8`."""
    if isinstance(value, int) and not isinstance(value, bool):
        return [value]
    if isinstance(value, list):
        return [int(v) for v in value]
    text = str(value).strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in _items(text)]


def parse_floats(value):
    return [float(v) for v in _items(value)]


def parse_bool(value):
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _choice(*values):
    def parse(value):
        if value not in values:
            raise ConfigurationError(f"expected one of {', '.join(values)}, got {value!r}")
        return value

    return parse


# parameter name -> (parser, default); a default of None marks a required parameter
COMMAND_PARAMETERS = {
    "optimize": {
        "n": (int, None),
        "nu": (int, 1),
        "delta": (parse_angle, None),
        "center": (parse_angle, 0.0),
        "mode": (_choice(*STRATEGIES), "single"),
        "family": (_choice(*(f.value for f in Family)), Family.FULL.value),
    },
    "scan": {
        "n": (parse_ints, None),
        "nu": (int, 1),
        "deltas": (parse_angles, None),
        "mode": (_choice(*STRATEGIES), "single"),
        "family": (_choice(*(f.value for f in Family)), Family.FULL.value),
    },
    "scaling": {
        "n": (parse_ints, "2..13"),
        "boundary_bisect": (parse_bool, False),
        "delta_start": (parse_angle, math.pi),
        "delta_req": (parse_angles, ""),
    },
    "table1": {
        "family": (_choice(*(f.value for f in Family)), Family.FULL.value),
        "max_shots": (int, 1000),
    },
    "mc": {
        "n": (int, None),
        "nu": (int, 10),
        "strategy": (_choice(*(s.value for s in MCStrategy)), MCStrategy.MCNA.value),
        "correction": (_choice(*(c.value for c in Correction)), Correction.NONE.value),
        "deltas": (parse_angles, "5pi/10,6pi/10,7pi/10,8pi/10,9pi/10,pi"),
        "phi_fractions": (parse_floats, "-0.5,-0.25,0,0.25,0.5"),
        "sampled": (parse_bool, False),
        "trials": (int, 30),
        "trial_multiplier": (int, 1),
        "corrected": (parse_bool, False),
    },
    "fit-constants": {
        "gaussian_n": (parse_ints, "5..10"),
        "gaussian_deltas": (parse_angles, "1.6,2.0,2.5,pi"),
        "noon_n": (parse_ints, "3..6"),
        "noon_ndeltas": (parse_floats, "0.25,0.5,0.75,1.0"),
        "rho_n": (parse_ints, "6..10"),
        "rho_deltas": (parse_angles, "3pi/5,4pi/5,pi"),
    },
}


_WIDTHS = {"delta", "deltas", "delta_start", "delta_req", "gaussian_deltas", "rho_deltas"}
_COUNTS = {"n", "nu", "trials", "trial_multiplier", "max_shots", "gaussian_n", "noon_n", "rho_n"}


def _check_ranges(resolved):
    for name, value in resolved.items():
        values = value if isinstance(value, list) else [value]
        if name in _WIDTHS and any(not (0 < v <= math.pi) for v in values):
            raise ConfigurationError(f"parameter {name!r}: widths must lie in (0, pi]", key=name)
        if name in _COUNTS and any(v < 1 for v in values):
            raise ConfigurationError(f"parameter {name!r}: must be >= 1", key=name)
        if name == "phi_fractions" and any(abs(v) > 0.5 for v in values):
            raise ConfigurationError("phi_fractions must lie in [-0.5, 0.5]", key=name)


@dataclass_json
@dataclass
class ExperimentManifest(Record):
    command: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    output_dir: str = ""
    node_count: int = 96
    restarts: int = 8
    threads: int = 1
    constants_path: Optional[str] = None
    constants: Dict[str, float] = field(default_factory=dict)

    def validate(self):
        for name in ("restarts", "threads"):
            if not (isinstance(getattr(self, name), int) and getattr(self, name) >= 1):
                raise ConfigurationError(f"{name} must be a positive integer", key=name)
        if not (isinstance(self.node_count, int) and self.node_count >= MIN_NODE_COUNT):
            raise ConfigurationError(f"node_count must be an integer >= {MIN_NODE_COUNT}", key="node_count")
        self.resolve()
        self.optimizer_config()
        self.scaling_constants()

    def resolve(self):
        """Typed parameters with defaults filled in."""
        if self.command not in COMMAND_PARAMETERS:
            raise ConfigurationError(f"unknown command {self.command!r}", key="command")
        spec = COMMAND_PARAMETERS[self.command]
        unknown = sorted(set(self.parameters) - set(spec))
        if unknown:
            raise ConfigurationError(f"unknown parameter {unknown[0]!r} for {self.command}", key=unknown[0])
        resolved = {}
        for name, (parse, default) in spec.items():
            value = self.parameters.get(name, default)
            if value is None:
                raise ConfigurationError(f"{self.command} needs parameter {name!r}", key=name)
            try:
                resolved[name] = parse(value)
            except (ConfigurationError, ValueError, TypeError) as e:
                raise ConfigurationError(f"parameter {name!r}: {e}", key=name)
        _check_ranges(resolved)
        return resolved

    def optimizer_config(self, family=Family.FULL, verbose=False):
        return OptimizerConfig(
            restarts=self.restarts,
            seed=self.seed,
            family=family,
            node_count=self.node_count,
            threads=self.threads,
            verbose=verbose,
        )

    def scaling_constants(self):
        unknown = sorted(set(self.constants) - {"c_G", "c_N", "c_rho", "boundary"})
        if unknown:
            raise ConfigurationError(f"unknown constant {unknown[0]!r}", key=unknown[0])
        try:
            return load_constants(self.constants_path, **self.constants)
        except (OSError, DomainError) as e:
            raise ConfigurationError(f"constants: {e}", key="constants")

    def resolved_output_dir(self):
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT_DIR)


@dataclass_json
@dataclass
class RunMetadata(Record):
    command: str
    seed: int
    version: str
    git_describe: str
    started: str
    wall_time_s: float
    files: list = field(default_factory=list)


def git_describe():
    try:
        out = sp.check_output(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=os.path.dirname(__file__),
            stderr=sp.DEVNULL,
        )
        return out.decode("utf-8").strip()
    except (OSError, sp.CalledProcessError):
        return "unknown"


def _line_of(text, key):
    """1-based line of the first `"key"` in a JSON document."""
    if text is None or key is None:
        return None
    for i, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return i
    return None


def write_csv(df, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.rename(columns=UNITS).to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def _result_row(result, center=0.0):
    return {
        "strategy": result.strategy,
        "family": result.family.value,
        "N": result.N,
        "nu": result.nu,
        "delta": result.delta,
        "center": center,
        "bmse": result.bmse,
        "exact_bmse": result.exact_bmse,
        "flat_bmse": result.flat_bmse,
        "recentred_bmse": result.recentred_bmse,
        "variance_ratio": result.variance_ratio,
        "converged": result.converged,
    }


def cmd_optimize(manifest, params, out, constants, verbose=False):
    cfg = manifest.optimizer_config(Family(params["family"]), verbose)
    prior = FlatPrior(center=params["center"], width=params["delta"])
    result = STRATEGIES[params["mode"]].optimize(params["n"], params["nu"], prior, cfg, constants)
    files = []
    result.save(out / "result.json")
    files.append(out / "result.json")
    for i, state in enumerate(result.states):
        state.save(out / "states" / f"shot_{i + 1}.json")
        files.append(out / "states" / f"shot_{i + 1}.json")
    for branch, state in zip(result.branches, result.branch_states):
        state.save(out / "states" / f"branch_{branch.outcome}.json")
        files.append(out / "states" / f"branch_{branch.outcome}.json")
    files.append(write_csv(pd.DataFrame([_result_row(result, prior.center)]), out / "variance_ratio.csv"))
    return files


def cmd_scan(manifest, params, out, constants, verbose=False):
    cfg = manifest.optimizer_config(Family(params["family"]), verbose)
    strategy = STRATEGIES[params["mode"]]
    rows = []
    for N in params["n"]:
        for delta in params["deltas"]:
            result = strategy.optimize(N, params["nu"], FlatPrior(center=0.0, width=delta), cfg, constants)
            rows.append(_result_row(result))
    return [write_csv(pd.DataFrame(rows), out / "scan.csv")]


def cmd_scaling(manifest, params, out, constants, verbose=False):
    files = []
    if params["delta_req"]:
        rows = []
        for N in params["n"]:
            for delta_req in params["delta_req"]:
                rows.extend(shot_plan_rows(N, [params["delta_start"]], delta_req, constants))
        files.append(write_csv(pd.DataFrame(rows), out / "shot_plans.csv"))
    if params["boundary_bisect"]:
        cfg = manifest.optimizer_config(Family.GAUSSIAN_RHO, verbose)
        rows = []
        for N in params["n"]:
            try:
                delta = find_regime_boundary(N, cfg, constants)
            except DomainError as e:
                logger.warning("N=%d: %s", N, e)
                delta = float("nan")
            rows.append({"N": N, "delta_boundary": delta, "n_delta": N * delta})
        files.append(write_csv(pd.DataFrame(rows), out / "boundary.csv"))
    if not files:
        logger.warning("scaling: nothing requested (set delta_req and/or boundary_bisect)")
    return files


def cmd_table1(manifest, params, out, constants, verbose=False):
    cfg = manifest.optimizer_config(Family(params["family"]), verbose)
    rows = []
    for case in ShotCountCase.load_table():
        opt = shots_to_target(case.N, case.delta_start, case.delta_req, cfg, constants, params["max_shots"])
        plan = general_shot_plan(case.N, case.delta_start, case.delta_req, constants)
        rows.append(
            {
                "id": case.id,
                "N": case.N,
                "delta_start": case.delta_start,
                "delta_req": case.delta_req,
                "opt": opt,
                "published_opt": case.published_opt,
                "formula": plan.total,
                "gaussian_shots": plan.gaussian_shots,
                "noon_shots": plan.noon_shots,
                "published_formula": "+".join(str(v) for v in case.published_formula),
            }
        )
        logger.info("%s: opt=%d (published %d), formula=%d", case.id, opt, case.published_opt, plan.total)
    return [write_csv(pd.DataFrame(rows), out / "table1.csv")]


def cmd_mc(manifest, params, out, constants, verbose=False):
    trials = params["trials"] * params["trial_multiplier"]
    records, next_trial = [], 0
    for delta in params["deltas"]:
        base = TrialConfig(
            N=params["n"],
            shots=params["nu"],
            delta_start=delta,
            strategy=MCStrategy(params["strategy"]),
            correction=Correction(params["correction"]),
            seed=manifest.seed,
            node_count=manifest.node_count,
        )
        phis = None if params["sampled"] else [f * delta for f in params["phi_fractions"]]
        batch = run_ensemble(base, trials, phis, manifest.threads, constants, first_trial=next_trial)
        next_trial += len(batch)
        records.extend(batch)
    stats = ensemble_stats(records, with_corrected=params["corrected"])
    return [
        write_csv(records_frame(records, with_corrected=params["corrected"]), out / "trials.csv"),
        write_csv(summary_frame(stats), out / "summary.csv"),
    ]


def cmd_fit_constants(manifest, params, out, constants, verbose=False):
    cfg = manifest.optimizer_config(Family.FULL, verbose)
    points = [(N, d) for N in params["gaussian_n"] for d in params["gaussian_deltas"]]
    points += [(N, nd / N) for N in params["noon_n"] for nd in params["noon_ndeltas"]]
    samples = collect_step_samples(points, cfg, constants, manifest.threads)
    rho_points = [(N, d) for N in params["rho_n"] for d in params["rho_deltas"]]
    rho_samples = collect_rho_samples(rho_points, cfg, constants, manifest.threads)
    fitted = fit_scaling_constants(samples, rho_samples, constants)
    fitted.save(out / "constants.json")
    logger.info("fitted c_G=%.4f c_N=%.4f c_rho=%.4f", fitted.c_G, fitted.c_N, fitted.c_rho)
    frame = pd.DataFrame([{"N": s.N, "delta_in": s.delta_in, "delta_out": s.delta_out} for s in samples])
    rho_frame = pd.DataFrame([{"N": s.N, "delta": s.delta, "rho": s.rho} for s in rho_samples])
    return [
        out / "constants.json",
        write_csv(frame, out / "step_samples.csv"),
        write_csv(rho_frame, out / "rho_samples.csv"),
    ]


COMMANDS = {
    "optimize": cmd_optimize,
    "scan": cmd_scan,
    "scaling": cmd_scaling,
    "table1": cmd_table1,
    "mc": cmd_mc,
    "fit-constants": cmd_fit_constants,
}

# command-line flag -> parameter name, per command
_FLAGS = {
    "optimize": ["n", "nu", "delta", "center", "mode", "family"],
    "scan": ["n", "nu", "deltas", "mode", "family"],
    "scaling": ["n", "boundary_bisect", "delta_start", "delta_req"],
    "table1": ["family", "max_shots"],
    "mc": [
        "n",
        "nu",
        "strategy",
        "correction",
        "deltas",
        "phi_fractions",
        "sampled",
        "trials",
        "trial_multiplier",
        "corrected",
    ],
    "fit-constants": ["gaussian_n", "gaussian_deltas", "noon_n", "noon_ndeltas", "rho_n", "rho_deltas"],
}
_SWITCHES = {"boundary_bisect", "sampled", "corrected"}
# extra spellings for flags that take a list
_ALIASES = {("scan", "n"): "--n-range", ("scaling", "n"): "--n-range"}
TOP_LEVEL = ("seed", "output_dir", "node_count", "restarts", "threads", "constants_path")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="JSON manifest; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT_DIR})")
    common.add_argument("--node-count", type=int)
    common.add_argument("--restarts", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--constants", dest="constants_path", help="ScalingConstants JSON")
    common.add_argument("--c-g", type=float)
    common.add_argument("--c-n", type=float)
    common.add_argument("--c-rho", type=float)
    common.add_argument("--boundary", type=float)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true")
    verbosity.add_argument("--quiet", "-q", action="store_true")

    parser = argparse.ArgumentParser(prog="mzi-phase", description="Bayesian phase estimation experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command, flags in _FLAGS.items():
        p = sub.add_parser(command, parents=[common])
        for name in flags:
            flag = "--" + name.replace("_", "-")
            if name in _SWITCHES:
                p.add_argument(flag, dest=name, action="store_const", const=True)
            else:
                alias = _ALIASES.get((command, name))
                p.add_argument(flag, *([alias] if alias else []), dest=name)
    return parser


def manifest_from_args(args):
    """Manifest file values (if any) overridden by explicit flags; returns (manifest, file text)."""
    text, data = None, {}
    if args.manifest:
        try:
            text = Path(args.manifest).read_text()
        except OSError as e:
            raise ConfigurationError(f"cannot read manifest: {e}")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid JSON: {e.msg}", line=e.lineno)
        if not isinstance(data, dict):
            raise ConfigurationError("manifest must be a JSON object", line=1)
        if data.get("command", args.command) != args.command:
            raise ConfigurationError(
                f"manifest is for {data['command']!r}, not {args.command!r}", line=_line_of(text, "command")
            )

    params = dict(data.get("parameters", {}))
    for name in _FLAGS[args.command]:
        value = getattr(args, name, None)
        if value is not None:
            params[name] = value
    constants = dict(data.get("constants", {}))
    for flag, name in (("c_g", "c_G"), ("c_n", "c_N"), ("c_rho", "c_rho"), ("boundary", "boundary")):
        if getattr(args, flag) is not None:
            constants[name] = getattr(args, flag)

    top = {k: data[k] for k in TOP_LEVEL if k in data}
    for name in TOP_LEVEL:
        if getattr(args, name) is not None:
            top[name] = getattr(args, name)
    try:
        manifest = ExperimentManifest(command=args.command, parameters=params, constants=constants, **top)
        manifest.validate()
    except ConfigurationError as e:
        if e.line is None:
            e.line = _line_of(text, e.key)
        raise
    except TypeError as e:
        raise ConfigurationError(f"invalid manifest: {e}")
    return manifest, text


def configure_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def run(manifest, verbose=False, source_text=None):
    """Run one command; `source_text` is the manifest file as given, echoed byte for byte."""
    params = manifest.resolve()
    constants = manifest.scaling_constants()
    out = manifest.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    if source_text is None:
        manifest.save(out / "manifest.json")
    else:
        (out / "manifest.json").write_text(source_text)
    manifest.save(out / "effective_manifest.json")

    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    logger.info("%s: start (seed=%d, output=%s)", manifest.command, manifest.seed, out)
    files = COMMANDS[manifest.command](manifest, params, out, constants, verbose)
    meta = RunMetadata(
        command=manifest.command,
        seed=manifest.seed,
        version=__version__,
        git_describe=git_describe(),
        started=started,
        wall_time_s=time.perf_counter() - t0,
        files=[str(Path(f).relative_to(out)) for f in files],
    )
    meta.save(out / "run.json")
    logger.info("%s: done in %.1fs", manifest.command, meta.wall_time_s)
    return files


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        manifest, text = manifest_from_args(args)
        run(manifest, verbose=args.verbose, source_text=text)
    except MziPhaseError as e:
        logger.error("%s", e)
        return e.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
