"""BMSE minimization engine shared by every strategy.

Input states are searched in one of four families. FULL runs over the
mode-interchange symmetric coefficients: the amplitudes are hyperspherical
angles, so every point is normalized, and the phases are free. GAUSSIAN_RHO
and QUASI_GAUSSIAN search the analytical profiles. ANALYTIC does no search:
it picks N00N or the best-fit Gaussian by regime.
"""
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from dataclasses_json import dataclass_json
from iterextras import par_for
from scipy.optimize import minimize, minimize_scalar

from .bayes_core import DEFAULT_ENUMERATION_CAP, DEFAULT_NODE_COUNT, MIN_NODE_COUNT
from .errors import ConfigurationError, DomainError
from .fock_optics import DEFAULT_GAMMA, shift_state
from .scaling_laws import DEFAULT_CONSTANTS
from .state_families import (
    GaussianParams,
    SymmetricParams,
    amplitude_count,
    analytic_state,
    best_fit_rho,
    expand_symmetric,
    make_gaussian,
    make_noon,
    make_quasi_gaussian,
    phase_count,
    project_symmetric,
    uniform_state,
)
from .types import InputState, Record

logger = logging.getLogger(__name__)

SEEDED_STARTS = ("noon", "gaussian", "uniform")
RHO_SCAN_POINTS = 41


class Family(enum.Enum):
    FULL = "full"
    GAUSSIAN_RHO = "gaussian-rho"
    QUASI_GAUSSIAN = "quasi-gaussian"
    ANALYTIC = "analytic"


@dataclass_json
@dataclass(frozen=True)
class OptimizerConfig(Record):
    restarts: int = 8
    max_iterations: int = 20000
    convergence_tol: float = 1e-10
    seed: int = 0
    family: Family = Family.FULL
    node_count: int = DEFAULT_NODE_COUNT
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    threads: int = 1
    sign: int = 1
    gamma: float = DEFAULT_GAMMA
    max_rounds: int = 8
    verbose: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.restarts < 1:
            raise ConfigurationError(f"restarts must be >= 1, got {self.restarts}")
        if not self.convergence_tol > 0:
            raise ConfigurationError(f"convergence_tol must be > 0, got {self.convergence_tol}")
        if self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.node_count < MIN_NODE_COUNT:
            raise ConfigurationError(f"node_count must be >= {MIN_NODE_COUNT}, got {self.node_count}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        if self.sign not in (1, -1):
            raise ConfigurationError(f"sign must be +1 or -1, got {self.sign}")


DEFAULT_CONFIG = OptimizerConfig()


@dataclass_json
@dataclass(frozen=True)
class TraceEntry:
    restart: int
    label: str
    bmse: float
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)


@dataclass_json
@dataclass(frozen=True)
class BranchSummary:
    outcome: int
    probability: float
    center: float
    width: float


@dataclass_json
@dataclass(frozen=True)
class StrategyResult(Record):
    strategy: str
    family: Family
    N: int
    nu: int
    delta: float
    states: List[InputState]
    bmse: float
    variance_ratio: float
    converged: bool = True
    branch_states: List[InputState] = field(default_factory=list)
    branches: List[BranchSummary] = field(default_factory=list)
    delta_trajectory: List[float] = field(default_factory=list)
    exact_bmse: Optional[float] = None
    flat_bmse: Optional[float] = None
    recentred_bmse: Optional[float] = None
    trace: List[TraceEntry] = field(default_factory=list)

    def validate(self):
        if not (0 < self.variance_ratio <= 1 + 1e-9):
            raise DomainError(f"variance ratio {self.variance_ratio!r} outside (0, 1]")
        if len(self.states) < 1:
            raise DomainError("a result needs at least one state")


@dataclass(frozen=True)
class SearchOutcome:
    states: List[InputState]
    bmse: float
    converged: bool
    trace: List[TraceEntry]
    params: Optional[List[float]] = None


class _Parameterization:
    """Maps flat real vectors to one input state."""

    dim = 0

    def __init__(self, N, delta, cfg, constants):
        self.N = N
        self.delta = delta
        self.cfg = cfg
        self.constants = constants

    def decode(self, x):
        raise NotImplementedError

    def encode(self, state):
        raise NotImplementedError

    def random(self, rng):
        raise NotImplementedError

    def seed_state(self, label):
        if label == "noon":
            return make_noon(self.N, self.cfg.sign)
        if label == "gaussian":
            rho = best_fit_rho(self.N, self.delta, self.constants.c_rho)
            return make_gaussian(self.N, GaussianParams(rho=rho, sign_s=self.cfg.sign))
        return uniform_state(self.N)

    def seed_vector(self, label):
        return self.encode(self.seed_state(label))


def _profile_fit(state, powers):
    """Least-squares coefficients of -log r_k on (k - N/2)^p over the populated k."""
    N = state.photon_count
    r = np.asarray(state.r)
    keep = r > 1e-12
    x = (np.arange(N + 1) - N / 2)[keep]
    if keep.sum() <= len(powers):
        return np.zeros(len(powers))
    A = np.stack([x ** p for p in powers], axis=1)
    coef, *_ = np.linalg.lstsq(A - A.mean(axis=0), -(np.log(r[keep]) - np.log(r[keep]).mean()), rcond=None)
    return coef


def hypersphere_point(angles):
    """Unit vector from len(angles) hyperspherical angles."""
    u = np.ones(len(angles) + 1)
    for i, a in enumerate(angles):
        u[i] *= math.cos(a)
        u[i + 1 :] *= math.sin(a)
    return u


def hypersphere_angles(u):
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    angles = []
    for i in range(len(u) - 1):
        if i == len(u) - 2:
            angles.append(math.atan2(u[i + 1], u[i]))
        else:
            angles.append(math.atan2(np.linalg.norm(u[i + 1 :]), u[i]))
    return np.array(angles)


class _FullParameterization(_Parameterization):
    def __init__(self, N, delta, cfg, constants):
        super().__init__(N, delta, cfg, constants)
        self.h = amplitude_count(N)
        self.p = phase_count(N)
        self.dim = self.h - 1 + self.p
        # paired coefficients appear twice in the norm
        self.scale = np.full(self.h, 1 / math.sqrt(2))
        if N % 2 == 0:
            self.scale[-1] = 1.0

    def decode(self, x):
        u = hypersphere_point(x[: self.h - 1])
        params = SymmetricParams(
            photon_count=self.N, half_amplitudes=list(np.abs(u) * self.scale), half_phases=list(x[self.h - 1 :])
        )
        return expand_symmetric(params)

    def encode(self, state):
        params = project_symmetric(state)
        u = np.asarray(params.half_amplitudes) / self.scale
        return np.concatenate([hypersphere_angles(u), params.half_phases])

    def random(self, rng):
        u = np.abs(rng.normal(size=self.h))
        return np.concatenate([hypersphere_angles(u), rng.uniform(-math.pi, math.pi, size=self.p)])


class _GaussianParameterization(_Parameterization):
    dim = 1

    def decode(self, x):
        return make_gaussian(self.N, GaussianParams(rho=abs(float(x[0])), sign_s=self.cfg.sign))

    def encode(self, state):
        return np.array([max(0.0, float(_profile_fit(state, (2,))[0]))])

    def seed_vector(self, label):
        rho = best_fit_rho(self.N, self.delta, self.constants.c_rho)
        return np.array([{"noon": 4 * rho + 0.5, "gaussian": rho}.get(label, 0.0)])

    def random(self, rng):
        return np.array([rng.uniform(0, 4 * best_fit_rho(self.N, self.delta, self.constants.c_rho) + 0.5)])


class _QuasiGaussianParameterization(_Parameterization):
    dim = 2

    def decode(self, x):
        return make_quasi_gaussian(self.N, GaussianParams(rho=float(x[0]), rho_prime=float(x[1]), sign_s=self.cfg.sign))

    def encode(self, state):
        return np.asarray(_profile_fit(state, (2, 4)), dtype=float)

    def seed_vector(self, label):
        rho = best_fit_rho(self.N, self.delta, self.constants.c_rho)
        # negative rho pushes the weight to the edges, toward N00N
        return np.array([{"noon": -1.0, "gaussian": rho}.get(label, 0.0), 0.0])

    def random(self, rng):
        return np.array([rng.uniform(-0.5, 1.0), rng.uniform(-0.05, 0.05)])


_PARAMETERIZATIONS = {
    Family.FULL: _FullParameterization,
    Family.GAUSSIAN_RHO: _GaussianParameterization,
    Family.QUASI_GAUSSIAN: _QuasiGaussianParameterization,
}


class _Joint:
    """`count` independent states stacked into one vector.

    With `shifted`, each state carries one more coordinate: a phase offset
    applied with shift_state, so searches can move a symmetric state away
    from the prior centre.
    """

    def __init__(self, single, count, shifted=False, shift_guess=0.0):
        self.single = single
        self.count = count
        self.shifted = shifted
        self.shift_guess = shift_guess
        self.width = single.dim + int(shifted)
        self.dim = self.width * count

    def _split(self, x):
        return [x[i * self.width : (i + 1) * self.width] for i in range(self.count)]

    def decode(self, x):
        states = []
        for part in self._split(x):
            if self.shifted:
                states.append(shift_state(self.single.decode(part[:-1]), float(part[-1])))
            else:
                states.append(self.single.decode(part))
        return states

    def encode(self, states):
        # states given here are taken as unshifted
        return np.concatenate([self._extend(self.single.encode(s), 0.0) for s in states])

    def seed(self, label):
        return np.concatenate([self._extend(self.single.seed_vector(label), self.shift_guess)] * self.count)

    def random(self, rng):
        return np.concatenate(
            [self._extend(self.single.random(rng), self.shift_guess) for _ in range(self.count)]
        )

    def _extend(self, x, shift):
        return np.append(x, shift) if self.shifted else np.asarray(x, dtype=float)


def _nelder_mead(fun, x0, cfg, history):
    def tracked(x):
        value = fun(x)
        if cfg.verbose:
            history.append(float(value))
        return value

    options = dict(
        maxiter=cfg.max_iterations,
        maxfev=cfg.max_iterations * 2,
        xatol=1e-9,
        fatol=cfg.convergence_tol,
        adaptive=len(x0) > 4,
    )
    res = minimize(tracked, x0, method="Nelder-Mead", options=options)
    # a second pass from the optimum rebuilds a fresh simplex and escapes collapsed ones
    again = minimize(tracked, res.x, method="Nelder-Mead", options=options)
    if again.fun <= res.fun:
        return again.x, float(again.fun), res.nit + again.nit, bool(again.success)
    return res.x, float(res.fun), res.nit + again.nit, bool(res.success)


def search_states(
    N: int,
    count: int,
    objective: Callable[[List[InputState]], float],
    delta: float,
    cfg: OptimizerConfig = DEFAULT_CONFIG,
    constants=DEFAULT_CONSTANTS,
    extra_seeds: Sequence = (),
    shifted: bool = False,
    shift_guess: float = 0.0,
) -> SearchOutcome:
    """Minimize objective(states) over `count` states of the configured family.

    Restart i starts from, in order, N00N, best-fit Gaussian and uniform
    states, then random points drawn from default_rng([seed, i]). Each extra
    seed (a list of states, or a parameter vector from an earlier
    SearchOutcome) adds one more start. The best result wins, ties going to
    the lower restart index.
    """
    if cfg.family is Family.ANALYTIC:
        state = analytic_state(N, delta, constants, cfg.sign)
        if shifted:
            state = shift_state(state, shift_guess)
        states = [state] * count
        value = float(objective(states))
        return SearchOutcome(states, value, True, [TraceEntry(0, "analytic", value, 0, True)])

    single = _PARAMETERIZATIONS[cfg.family](N, delta, cfg, constants)
    if cfg.family is Family.GAUSSIAN_RHO and count == 1 and not extra_seeds and not shifted:
        return _search_rho(single, objective, cfg)
    space = _Joint(single, count, shifted, shift_guess)

    def fun(x):
        return objective(space.decode(x))

    starts = []
    for i in range(cfg.restarts):
        if i < len(SEEDED_STARTS):
            starts.append((SEEDED_STARTS[i], space.seed(SEEDED_STARTS[i])))
        else:
            starts.append(("random", space.random(np.random.default_rng([cfg.seed, i]))))
    for seed in extra_seeds:
        x0 = np.asarray(seed, dtype=float) if isinstance(seed, np.ndarray) else space.encode(list(seed))
        starts.append(("seed", x0))

    def run(indexed):
        i, (label, x0) = indexed
        history = []
        x, value, nit, ok = _nelder_mead(fun, x0, cfg, history)
        logger.debug("restart %d (%s): bmse=%.6e after %d iterations", i, label, value, nit)
        return x, TraceEntry(i, label, value, int(nit), ok, history)

    results = par_for(run, list(enumerate(starts)), workers=cfg.threads, progress=False)
    best = min(range(len(results)), key=lambda i: (results[i][1].bmse, i))
    x, entry = results[best]
    if not entry.converged:
        logger.warning("best restart (%s) stopped at max_iterations; returning best-so-far", entry.label)
    return SearchOutcome(space.decode(x), entry.bmse, entry.converged, [r[1] for r in results], list(x))


def _search_rho(single, objective, cfg):
    """Gaussian family with one state: scan rho, then refine with a bounded scalar search."""
    rho_fit = best_fit_rho(single.N, single.delta, single.constants.c_rho)
    rho_max = max(2.0, 8 * rho_fit)
    grid = np.linspace(0.0, rho_max, RHO_SCAN_POINTS)

    def value(rho):
        return float(objective([single.decode([rho])]))

    scan = [value(r) for r in grid]
    i = int(np.argmin(scan))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(
        value, bounds=(lo, hi), method="bounded", options=dict(xatol=1e-10, maxiter=cfg.max_iterations)
    )
    rho, best = (float(res.x), float(res.fun)) if res.fun <= scan[i] else (float(grid[i]), scan[i])
    entry = TraceEntry(0, "rho-scan", best, int(res.nfev), bool(res.success), list(scan) if cfg.verbose else [])
    return SearchOutcome([single.decode([rho])], best, bool(res.success), [entry], [rho])


@dataclass_json
@dataclass(frozen=True)
class Strategy:
    """A registered BMSE-minimization strategy."""

    id: str
    name: str

    def optimize(self, N, nu, prior, cfg=DEFAULT_CONFIG, constants=DEFAULT_CONSTANTS):
        raise NotImplementedError
