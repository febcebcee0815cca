"""Non-adaptive strategies: every input state is fixed before any outcome is seen."""
import logging
import math
from dataclasses import replace

import numpy as np

from ..bayes_core import enumeration_size, make_quadrature, multishot_report, posterior_moments, single_shot_report
from ..errors import ConfigurationError, DomainError
from ..fock_optics import PROB_FLOOR, beam_splitter_matrix, outcome_pmf_grid, shift_state
from ..optimizer import DEFAULT_CONFIG, Family, Strategy, StrategyResult, search_states
from ..scaling_laws import DEFAULT_CONSTANTS
from ..types import WIDTH_FLOOR, FlatPrior
from .single_shot import centered, lab_frame, optimize_single_shot, to_center, variance_ratio

logger = logging.getLogger(__name__)

DEFAULT_MAX_SHOTS = 1000


def _exact_bmse(states, prior, cfg):
    if (states[0].photon_count + 1) ** len(states) > cfg.enumeration_cap:
        return None
    grid = make_quadrature(prior, cfg.node_count)
    return multishot_report(states, prior, grid, cfg.enumeration_cap).bmse


def recentred_bmse(states, widths, prior, cfg=DEFAULT_CONFIG):
    """Exact BMSE under `prior` when shot n runs states[n] moved to the running estimate.

    After outcome m of shot n the estimate advances by the branch estimator of
    states[n] under a flat prior of width widths[n] centred at zero, which is how
    a simulated non-adaptive trial proceeds. None when the outcome tree exceeds
    the enumeration cap.
    """
    N = states[0].photon_count
    if (N + 1) ** len(states) > cfg.enumeration_cap:
        return None
    grid = make_quadrature(prior, cfg.node_count)
    B = beam_splitter_matrix(N)
    steps = []
    for state, width in zip(states, widths):
        frame = FlatPrior(center=0.0, width=width)
        steps.append(single_shot_report(state, frame, make_quadrature(frame, cfg.node_count)).estimators)
    leaves = []

    def walk(n, center, likelihood):
        P = outcome_pmf_grid(shift_state(states[n], center), grid.nodes, B)
        if n == len(states) - 1:
            probs, _, _, second = posterior_moments(likelihood[None, :] * P, grid)
            leaves.append(math.fsum(second[probs >= PROB_FLOOR]))
            return
        for m in range(N + 1):
            branch = likelihood * P[m]
            if branch @ grid.prior_weights >= PROB_FLOOR:
                walk(n + 1, center + float(steps[n][m]), branch)

    walk(0, prior.center, np.ones_like(grid.nodes))
    return math.fsum(leaves)


def optimize_local_nonadaptive(
    N, nu, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS, target_delta=None, max_shots=DEFAULT_MAX_SHOTS
):
    """Shot-by-shot optimization where each posterior width becomes the next flat prior.

    Runs `nu` shots, or with `target_delta` as many shots as needed to bring
    the width to or below it.
    """
    if target_delta is None and (nu is None or nu < 1):
        raise ConfigurationError("need nu >= 1 or a target width")
    if target_delta is not None and not (0 < target_delta < prior.width):
        raise DomainError(f"target width must lie in (0, {prior.width!r}), got {target_delta!r}")

    width = prior.width
    trajectory, states, trace = [width], [], []
    converged = True
    while len(states) < nu if target_delta is None else width > target_delta:
        if len(states) >= max_shots:
            raise DomainError(f"target width {target_delta!r} not reached within {max_shots} shots")
        step = optimize_single_shot(N, FlatPrior(center=0.0, width=width), cfg, constants)
        states.append(step.states[0])
        width = max(WIDTH_FLOOR, math.sqrt(12 * step.bmse))
        trajectory.append(width)
        trace.extend(step.trace)
        converged = converged and step.converged
        logger.info("shot %d: delta %.6g -> %.6g", len(states), trajectory[-2], width)

    frame = centered(prior)
    flat = width ** 2 / 12
    return StrategyResult(
        strategy="local",
        family=cfg.family,
        N=N,
        nu=len(states),
        delta=prior.width,
        states=to_center(states, prior),
        bmse=flat,
        variance_ratio=variance_ratio(flat, frame),
        converged=converged,
        delta_trajectory=trajectory,
        exact_bmse=_exact_bmse(states, frame, cfg),
        flat_bmse=flat,
        recentred_bmse=recentred_bmse(states, trajectory[:-1], frame, cfg),
        trace=trace,
    )


def shots_to_target(
    N, delta_start, delta_req, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS, max_shots=DEFAULT_MAX_SHOTS
):
    """Number of local non-adaptive shots taking the width from delta_start to delta_req or below."""
    result = optimize_local_nonadaptive(
        N, None, FlatPrior(center=0.0, width=delta_start), cfg, constants, target_delta=delta_req, max_shots=max_shots
    )
    return result.nu


def optimize_global_nonadaptive(N, nu, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
    """Joint minimization of the multi-shot BMSE over all `nu` states."""
    if nu < 1:
        raise ConfigurationError(f"nu must be >= 1, got {nu}")
    if nu == 1:
        return replace(optimize_single_shot(N, prior, cfg, constants), strategy="global")
    enumeration_size(N, nu, cfg.enumeration_cap)

    frame = centered(prior)
    grid = make_quadrature(frame, cfg.node_count)

    def objective(states):
        return multishot_report(states, frame, grid, cfg.enumeration_cap).bmse

    seeds = [optimize_local_nonadaptive(N, nu, frame, replace(cfg, family=Family.ANALYTIC), constants).states]
    if cfg.family is not Family.ANALYTIC:
        seeds.append(optimize_local_nonadaptive(N, nu, frame, cfg, constants).states)
    outcome = search_states(N, nu, objective, prior.width, cfg, constants, extra_seeds=seeds)
    logger.info("global non-adaptive N=%d nu=%d delta=%.6g: bmse=%.6e", N, nu, prior.width, outcome.bmse)
    return StrategyResult(
        strategy="global",
        family=cfg.family,
        N=N,
        nu=nu,
        delta=prior.width,
        states=lab_frame(outcome.states, prior, cfg),
        bmse=outcome.bmse,
        variance_ratio=variance_ratio(outcome.bmse, frame),
        converged=outcome.converged,
        exact_bmse=outcome.bmse,
        trace=outcome.trace,
    )


class _Local(Strategy):
    def optimize(self, N, nu, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
        return optimize_local_nonadaptive(N, nu, prior, cfg, constants)


class _Global(Strategy):
    def optimize(self, N, nu, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
        return optimize_global_nonadaptive(N, nu, prior, cfg, constants)


STRATEGIES = [
    _Global(id="global", name="Non-adaptive global"),
    _Local(id="local", name="Non-adaptive local"),
]
