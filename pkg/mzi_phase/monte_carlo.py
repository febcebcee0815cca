"""Simulated measurement trajectories against a hidden phase.

MCNA re-flattens to the outcome-averaged width after every shot, MCA to the
width of the realized branch. Both move the estimate by the branch
estimator and pick each input with the analytic N00N/Gaussian rule.
"""
import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
import pandas as pd
from dataclasses_json import dataclass_json
from iterextras import par_for
from scipy.special import erf, erfinv

from .bayes_core import DEFAULT_NODE_COUNT, make_quadrature, sequence_posterior, single_shot_report
from .errors import ConfigurationError
from .fock_optics import beam_splitter_matrix, outcome_pmf, shift_state
from .scaling_laws import DEFAULT_CONSTANTS, Regime, classify_regime
from .state_families import analytic_state
from .types import WIDTH_FLOOR, FlatPrior, InputState, Record

logger = logging.getLogger(__name__)

MIN_CELL_TRIALS = 30
MAX_CORRECTED_NODES = 4096
FIRST_SHOTS = 5


class MCStrategy(enum.Enum):
    MCNA = "mcna"
    MCA = "mca"


class Correction(enum.Enum):
    NONE = "none"
    FIRST_5 = "first-5"
    WHILE_GAUSSIAN = "while-gaussian"
    ALL_SHOTS = "all-shots"


@dataclass_json
@dataclass(frozen=True)
class TrialConfig(Record):
    N: int
    shots: int
    delta_start: float
    # None draws phi_true uniformly from [-delta_start/2, delta_start/2]
    phi_true: Optional[float] = None
    strategy: MCStrategy = MCStrategy.MCNA
    correction: Correction = Correction.NONE
    seed: int = 0
    trial: int = 0
    node_count: int = DEFAULT_NODE_COUNT

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.N < 1:
            raise ConfigurationError(f"N must be >= 1, got {self.N}")
        if self.shots < 1:
            raise ConfigurationError(f"shots must be >= 1, got {self.shots}")
        if not (0 < self.delta_start <= math.pi):
            raise ConfigurationError(f"delta_start must lie in (0, pi], got {self.delta_start!r}")
        if self.phi_true is not None and abs(self.phi_true) > self.delta_start / 2 + 1e-12:
            raise ConfigurationError(f"|phi_true| = {abs(self.phi_true):.6g} exceeds delta_start/2")


@dataclass_json
@dataclass(frozen=True)
class TrialRecord(Record):
    seed: int
    trial: int
    N: int
    nu: int
    delta_start: float
    phi_true: float
    sampled: bool
    strategy: MCStrategy
    correction: Correction
    outcomes: List[int]
    states: List[InputState]
    estimator_path: List[float]
    width_path: List[float]
    final_estimator: float
    final_width: float
    success: bool


@dataclass_json
@dataclass(frozen=True)
class EnsembleStats(Record):
    N: int
    nu: int
    delta_start: float
    phi_true: Optional[float]
    strategy: MCStrategy
    correction: Correction
    trials: int
    median_estimator: float
    mad: float
    success_rate: float
    success_stderr: float
    mean_sq_error: float
    variance_ratio: float
    mean_final_width: float
    mad_ratio: float
    mean_corrected_variance: Optional[float] = None
    corrected_stderr: Optional[float] = None

    def validate(self):
        assert self.mad >= 0
        assert 0 <= self.success_rate <= 1


def gaussian_mad_ratio():
    """MAD / delta for normally distributed errors with variance delta^2/12."""
    return math.sqrt(2) * float(erfinv(0.5)) / math.sqrt(12)


def gaussian_success_probability():
    """P(|error| <= delta/2) for normally distributed errors with variance delta^2/12."""
    return float(erf(math.sqrt(1.5)))


def is_success(estimate, phi_true, width):
    return abs(estimate - phi_true) <= width / 2


def simulate_outcome(state, phi_true, rng, B=None):
    """Draw m from p(m|phi_true) by inverse-CDF sampling."""
    B = B if B is not None else beam_splitter_matrix(state.photon_count)
    cdf = np.cumsum(outcome_pmf(state, phi_true, B))
    m = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(m, state.photon_count)


def _corrected(correction, shot, N, width, constants):
    if correction is Correction.ALL_SHOTS:
        return True
    if correction is Correction.FIRST_5:
        return shot < FIRST_SHOTS
    if correction is Correction.WHILE_GAUSSIAN:
        return N > 1 and classify_regime(N, width, constants) is Regime.GAUSSIAN
    return False


def run_trial(cfg, constants=DEFAULT_CONSTANTS):
    phi_true = cfg.phi_true
    if phi_true is None:
        rng = np.random.default_rng([cfg.seed, cfg.trial, 1])
        phi_true = float(rng.uniform(-cfg.delta_start / 2, cfg.delta_start / 2))
    B = beam_splitter_matrix(cfg.N)

    estimate, width = 0.0, cfg.delta_start
    estimates, widths, outcomes, states = [estimate], [width], [], []
    for shot in range(cfg.shots):
        state = analytic_state(cfg.N, width, constants)
        frame = FlatPrior(center=0.0, width=width)
        report = single_shot_report(state, frame, make_quadrature(frame, cfg.node_count))
        lab_state = shift_state(state, estimate)
        m = simulate_outcome(lab_state, phi_true, np.random.default_rng([cfg.seed, cfg.trial, 0, shot]), B)

        if cfg.strategy is MCStrategy.MCNA:
            target = math.sqrt(12 * report.bmse)
        else:
            target = min(width, math.sqrt(12 * report.branch_variances[m]))
        if _corrected(cfg.correction, shot, cfg.N, width, constants):
            target = width - (width - target) / 2
        estimate += float(report.estimators[m])
        width = max(WIDTH_FLOOR, target)

        outcomes.append(m)
        states.append(lab_state)
        estimates.append(estimate)
        widths.append(width)

    return TrialRecord(
        seed=cfg.seed,
        trial=cfg.trial,
        N=cfg.N,
        nu=cfg.shots,
        delta_start=cfg.delta_start,
        phi_true=phi_true,
        sampled=cfg.phi_true is None,
        strategy=cfg.strategy,
        correction=cfg.correction,
        outcomes=outcomes,
        states=states,
        estimator_path=estimates,
        width_path=widths,
        final_estimator=estimate,
        final_width=width,
        success=is_success(estimate, phi_true, width),
    )


def corrected_variance(record, prior=None, node_count=DEFAULT_NODE_COUNT):
    """Posterior variance of the realized outcomes under the original flat prior."""
    prior = prior or FlatPrior(center=0.0, width=record.delta_start)
    # enough nodes to resolve a posterior as narrow as the final width
    nodes = min(MAX_CORRECTED_NODES, max(node_count, math.ceil(node_count * prior.width / record.final_width)))
    grid = make_quadrature(prior, nodes)
    _, _, var = sequence_posterior(record.states, record.outcomes, prior, grid)
    return var


def run_ensemble(base, trials, phi_values=None, threads=1, constants=DEFAULT_CONSTANTS, first_trial=0):
    """Trials of `base` at each phi value (or sampled phases), in trial order.

    Trials are numbered from `first_trial`; distinct numbers give independent streams.
    """
    phi_values = [base.phi_true] if phi_values is None else list(phi_values)
    cells = [phi for phi in phi_values for _ in range(trials)]
    configs = [replace(base, phi_true=phi, trial=first_trial + i) for i, phi in enumerate(cells)]
    records = par_for(lambda cfg: run_trial(cfg, constants), configs, workers=threads, progress=False)
    return sorted(records, key=lambda r: r.trial)


def records_frame(records, with_corrected=False):
    rows = []
    for r in records:
        row = {
            "seed": r.seed,
            "trial": r.trial,
            "N": r.N,
            "nu": r.nu,
            "delta_start": r.delta_start,
            "phi_true": r.phi_true,
            "sampled": r.sampled,
            "strategy": r.strategy.value,
            "correction": r.correction.value,
            "final_estimator": r.final_estimator,
            "final_width": r.final_width,
            "success": r.success,
        }
        if with_corrected:
            row["corrected_variance"] = corrected_variance(r)
        rows.append(row)
    return pd.DataFrame(rows)


CELL_KEYS = ["N", "nu", "delta_start", "phi_cell", "strategy", "correction"]


def ensemble_stats(records, min_trials=MIN_CELL_TRIALS, with_corrected=False):
    """One EnsembleStats per (N, nu, delta_start, phi_true, strategy, correction) cell."""
    if not records:
        logger.warning("no trial records; nothing to aggregate")
        return []
    df = records_frame(sorted(records, key=lambda r: r.trial), with_corrected)
    df["phi_cell"] = np.where(df["sampled"], np.nan, df["phi_true"])
    df["error"] = df["final_estimator"] - df["phi_true"]

    stats = []
    for key, cell in df.groupby(CELL_KEYS, dropna=False, sort=True):
        N, nu, delta_start, phi_cell, strategy, correction = key
        n = len(cell)
        if n < min_trials:
            logger.warning("cell %s has %d trials (< %d); statistics are noisy", key, n, min_trials)
        rate = float(cell["success"].mean())
        mad = float(np.median(np.abs(cell["error"])))
        mse = float(np.mean(cell["error"] ** 2))
        width = float(cell["final_width"].mean())
        corrected, corrected_stderr = None, None
        if with_corrected:
            corrected = float(cell["corrected_variance"].mean())
            if n > 1:
                corrected_stderr = float(cell["corrected_variance"].std(ddof=1) / math.sqrt(n))
        stats.append(
            EnsembleStats(
                N=int(N),
                nu=int(nu),
                delta_start=float(delta_start),
                phi_true=None if pd.isna(phi_cell) else float(phi_cell),
                strategy=MCStrategy(strategy),
                correction=Correction(correction),
                trials=n,
                median_estimator=float(cell["final_estimator"].median()),
                mad=mad,
                success_rate=rate,
                success_stderr=math.sqrt(rate * (1 - rate) / n),
                mean_sq_error=mse,
                variance_ratio=mse / (delta_start ** 2 / 12),
                mean_final_width=width,
                mad_ratio=mad / width,
                mean_corrected_variance=corrected,
                corrected_stderr=corrected_stderr,
            )
        )
    return stats


def summary_frame(stats):
    rows = [{**s.to_dict(), "strategy": s.strategy.value, "correction": s.correction.value} for s in stats]
    return pd.DataFrame(rows)


def mad_slope(stats):
    """Least-squares slope through the origin of MAD against the mean posterior width."""
    x = np.array([s.mean_final_width for s in stats])
    y = np.array([s.mad for s in stats])
    return float(x @ y / (x @ x))
