"""Adaptive strategies: later input states depend on earlier outcomes."""
import logging
import math

import numpy as np

from ..bayes_core import (
    adaptive_report,
    enumeration_size,
    make_quadrature,
    posterior_moments,
    single_shot_report,
    weighted_report,
)
from ..errors import DomainError
from ..fock_optics import PROB_FLOOR, beam_splitter_matrix, outcome_pmf_grid, shift_state
from ..optimizer import DEFAULT_CONFIG, BranchSummary, Family, Strategy, StrategyResult, search_states
from ..scaling_laws import DEFAULT_CONSTANTS
from ..types import WIDTH_FLOOR, FlatPrior
from .nonadaptive import optimize_global_nonadaptive
from .single_shot import centered, optimize_single_shot, to_center, variance_ratio

logger = logging.getLogger(__name__)


def branch_width(variance, width):
    """Flat width with the branch variance, never wider than the current one."""
    return min(width, max(WIDTH_FLOOR, math.sqrt(12 * variance)))


def optimize_adaptive_global(N, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS, nu=2, base=None):
    """One first state and N+1 outcome-dependent second states minimizing the two-shot BMSE.

    Starts from the non-adaptive global optimum (or `base`) and alternates
    between the second states, each an independent problem under the weight
    p(m1|phi), and the first state, until a round gains less than
    cfg.convergence_tol.
    """
    if nu != 2:
        raise DomainError(f"adaptive global optimization covers two shots, got nu={nu}")
    frame = centered(prior)
    grid = make_quadrature(frame, cfg.node_count)
    B = beam_splitter_matrix(N)

    base = base or optimize_global_nonadaptive(N, 2, prior, cfg, constants)
    first, second = (shift_state(s, -prior.center) for s in base.states)
    seconds = [second] * (N + 1)
    warm = [None] * (N + 1)
    value = adaptive_report(first, seconds, frame, grid).bmse
    trace = list(base.trace)
    converged = base.converged

    if cfg.family is not Family.ANALYTIC:
        for round_ in range(cfg.max_rounds):
            P1 = outcome_pmf_grid(first, grid.nodes, B)
            p1, est1, var1, _ = posterior_moments(P1, grid)
            for m1 in range(N + 1):
                if p1[m1] < PROB_FLOOR:
                    continue
                seeds = [[seconds[m1]]] if warm[m1] is None else [np.asarray(warm[m1])]
                out = search_states(
                    N,
                    1,
                    lambda states, w=P1[m1]: weighted_report(states[0], w, grid).bmse,
                    branch_width(var1[m1], prior.width),
                    cfg,
                    constants,
                    extra_seeds=seeds,
                    shifted=True,
                    shift_guess=float(est1[m1]),
                )
                seconds[m1], warm[m1] = out.states[0], out.params
                converged = converged and out.converged
            out = search_states(
                N,
                1,
                lambda states: adaptive_report(states[0], seconds, frame, grid).bmse,
                prior.width,
                cfg,
                constants,
                extra_seeds=[[first]],
            )
            first = out.states[0]
            trace.extend(out.trace)
            converged = converged and out.converged
            logger.info("adaptive round %d: bmse %.6e -> %.6e", round_ + 1, value, out.bmse)
            gain = value - out.bmse
            value = min(value, out.bmse)
            if gain < cfg.convergence_tol:
                break
        else:
            logger.warning("adaptive search still improving after %d rounds", cfg.max_rounds)

    report = adaptive_report(first, seconds, frame, grid)
    branches = [
        BranchSummary(m1, float(p), float(prior.center + e), branch_width(v, prior.width))
        for m1, (p, e, v) in enumerate(
            zip(report.first_outcome_probs, report.first_estimators, report.first_branch_variances)
        )
    ]
    return StrategyResult(
        strategy="adaptive-global",
        family=cfg.family,
        N=N,
        nu=2,
        delta=prior.width,
        states=to_center([first], prior),
        branch_states=to_center(seconds, prior),
        branches=branches,
        bmse=report.bmse,
        variance_ratio=variance_ratio(report.bmse, frame),
        converged=converged,
        exact_bmse=report.bmse,
        trace=trace,
    )


def feedforward_protocol(N, nu, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
    """Outcome tree where each branch restarts from a flat prior at its estimate and width.

    `bmse` sums the exact posterior variances of every leaf under the original
    prior; `flat_bmse` is the protocol's own prediction from the re-flattened
    branch widths.
    """
    if nu < 1:
        raise DomainError(f"nu must be >= 1, got {nu}")
    enumeration_size(N, nu, cfg.enumeration_cap)
    grid = make_quadrature(prior, cfg.node_count)
    B = beam_splitter_matrix(N)
    steps = {}

    def step_for(width):
        if width not in steps:
            steps[width] = optimize_single_shot(N, FlatPrior(center=0.0, width=width), cfg, constants)
        return steps[width]

    leaves, branches, branch_states = [], [], []

    def walk(depth, center, width, likelihood):
        step = step_for(width)
        local = step.states[0]
        P = outcome_pmf_grid(shift_state(local, center), grid.nodes, B)
        if depth == nu - 1:
            probs, _, _, second = posterior_moments(likelihood[None, :] * P, grid)
            leaves.append(math.fsum(second[probs >= PROB_FLOOR]))
            return step.bmse
        frame = FlatPrior(center=0.0, width=width)
        report = single_shot_report(local, frame, make_quadrature(frame, cfg.node_count))
        flat = []
        for m in range(N + 1):
            p = float(report.outcome_probs[m])
            if p < PROB_FLOOR:
                continue
            child_center = center + float(report.estimators[m])
            child_width = branch_width(report.branch_variances[m], width)
            flat.append(p * walk(depth + 1, child_center, child_width, likelihood * P[m]))
            if depth == 0:
                branches.append(BranchSummary(m, p, child_center, child_width))
                branch_states.append(shift_state(step_for(child_width).states[0], child_center))
        return math.fsum(flat)

    flat_bmse = walk(0, prior.center, prior.width, np.ones_like(grid.nodes))
    bmse = math.fsum(leaves)
    logger.info("feedforward N=%d nu=%d delta=%.6g: bmse=%.6e (flat %.6e)", N, nu, prior.width, bmse, flat_bmse)
    first = step_for(prior.width)
    return StrategyResult(
        strategy="feedforward",
        family=cfg.family,
        N=N,
        nu=nu,
        delta=prior.width,
        states=to_center(first.states, prior),
        branch_states=branch_states,
        branches=branches,
        bmse=bmse,
        variance_ratio=variance_ratio(bmse, prior),
        converged=all(s.converged for s in steps.values()),
        exact_bmse=bmse,
        flat_bmse=flat_bmse,
        trace=first.trace,
    )


class _AdaptiveGlobal(Strategy):
    def optimize(self, N, nu, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
        return optimize_adaptive_global(N, prior, cfg, constants, nu=nu)


class _Feedforward(Strategy):
    def optimize(self, N, nu, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
        return feedforward_protocol(N, nu, prior, cfg, constants)


STRATEGIES = [
    _AdaptiveGlobal(id="adaptive-global", name="Adaptive global"),
    _Feedforward(id="feedforward", name="Adaptive local (feedforward)"),
]
