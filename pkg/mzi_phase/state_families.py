"""Analytical input-state families and the mode-interchange symmetric parameterization."""
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from dataclasses_json import dataclass_json

from .errors import DomainError
from .types import InputState, Record, wrap_phase


@dataclass_json
@dataclass(frozen=True)
class GaussianParams(Record):
    rho: float
    rho_prime: float = 0.0
    sign_s: int = 1

    def __post_init__(self):
        if self.sign_s not in (1, -1):
            raise DomainError(f"sign must be +1 or -1, got {self.sign_s!r}")


@dataclass(frozen=True)
class SymmetricParams:
    """Half of a mode-interchange symmetric state.

    half_amplitudes holds r_k for k <= N/2, half_phases holds theta_k for k < N/2;
    the remaining coefficients follow from r_k = r_{N-k}, theta_k = -theta_{N-k}.
    """

    photon_count: int
    half_amplitudes: List[float] = field(default_factory=list)
    half_phases: List[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.half_amplitudes) != amplitude_count(self.photon_count):
            raise DomainError(
                f"N={self.photon_count} needs {amplitude_count(self.photon_count)} amplitudes, "
                f"got {len(self.half_amplitudes)}"
            )
        if len(self.half_phases) != phase_count(self.photon_count):
            raise DomainError(
                f"N={self.photon_count} needs {phase_count(self.photon_count)} phases, got {len(self.half_phases)}"
            )


def amplitude_count(N):
    return N // 2 + 1


def phase_count(N):
    return (N + 1) // 2


def _check_photons(N):
    if int(N) != N or N < 1:
        raise DomainError(f"photon count must be a positive integer, got {N!r}")


def _offsets(N):
    return np.arange(N + 1) - N / 2


def make_noon(N, sign=1):
    _check_photons(N)
    if sign not in (1, -1):
        raise DomainError(f"sign must be +1 or -1, got {sign!r}")
    c = np.zeros(N + 1, dtype=complex)
    c[0] = 1 / math.sqrt(2)
    c[N] = np.exp(sign * 1j * math.pi / 2) / math.sqrt(2)
    return InputState.from_coeffs(c)


def _stepped_profile(N, log_amplitudes, sign):
    k = np.arange(N + 1)
    # shift by the max so large |rho| does not underflow every entry
    log_amplitudes = log_amplitudes - np.max(log_amplitudes)
    return InputState.from_coeffs(np.exp(log_amplitudes) * np.exp(1j * wrap_phase(sign * k * math.pi / 2)))


def make_gaussian(N, params):
    _check_photons(N)
    if params.rho < 0:
        raise DomainError(f"Gaussian width rho must be >= 0, got {params.rho!r}")
    return _stepped_profile(N, -params.rho * _offsets(N) ** 2, params.sign_s)


def make_quasi_gaussian(N, params):
    _check_photons(N)
    x = _offsets(N)
    return _stepped_profile(N, -params.rho * x ** 2 - params.rho_prime * x ** 4, params.sign_s)


def best_fit_rho(N, delta, c_rho):
    return c_rho * delta / N


def best_fit_gaussian(N, delta, sign=1, constants=None):
    from .scaling_laws import DEFAULT_CONSTANTS

    if not (0 < delta <= math.pi):
        raise DomainError(f"prior width must lie in (0, pi], got {delta!r}")
    constants = constants or DEFAULT_CONSTANTS
    return make_gaussian(N, GaussianParams(rho=best_fit_rho(N, delta, constants.c_rho), sign_s=sign))


def analytic_state(N, delta, constants=None, sign=1):
    """N00N below the regime boundary, best-fit Gaussian at or above it.

    At N = 1 every Gaussian coincides with the N00N state, so N00N is returned.
    """
    from .scaling_laws import DEFAULT_CONSTANTS, Regime, classify_regime

    constants = constants or DEFAULT_CONSTANTS
    if N == 1 or classify_regime(N, delta, constants) is Regime.NOON:
        return make_noon(N, sign)
    return best_fit_gaussian(N, delta, sign, constants)


def uniform_state(N):
    return make_gaussian(N, GaussianParams(rho=0.0))


def fock_state(N, k):
    _check_photons(N)
    c = np.zeros(N + 1)
    c[k] = 1.0
    return InputState.from_coeffs(c)


def expand_symmetric(params):
    N = params.photon_count
    h = np.asarray(params.half_amplitudes, dtype=float)
    phases = np.asarray(params.half_phases, dtype=float)
    r = np.empty(N + 1)
    theta = np.zeros(N + 1)
    for k in range(N // 2 + 1):
        r[k] = r[N - k] = abs(h[k])
    for k in range(phase_count(N)):
        theta[k] = phases[k]
        theta[N - k] = -phases[k]
    if not np.any(r):
        raise DomainError("symmetric amplitudes are all zero")
    return InputState.from_coeffs(r * np.exp(1j * theta))


def _symmetric_gauge(c):
    """Fix the global phase so that c_k c_{N-k} is real and positive on average."""
    N = c.size - 1
    alpha = 0.5 * np.angle(np.sum(c * c[::-1]))
    c = c * np.exp(-1j * alpha)
    if N % 2 == 0 and c[N // 2].real < 0:
        c = -c
    return c


def project_symmetric(state):
    """Closest symmetric parameters; asymmetric parts are averaged out."""
    N = state.photon_count
    c = _symmetric_gauge(state.coeffs)
    sym = 0.5 * (c + np.conj(c[::-1]))
    if N % 2 == 0 and sym[N // 2].real < 0:
        sym = -sym
    if np.linalg.norm(sym) == 0:
        raise DomainError("state has no mode-interchange symmetric component")
    sym = sym / np.linalg.norm(sym)
    half = np.abs(sym[: amplitude_count(N)])
    phases = np.where(np.abs(sym[: phase_count(N)]) > 0, wrap_phase(np.angle(sym[: phase_count(N)])), 0.0)
    return SymmetricParams(photon_count=N, half_amplitudes=list(half), half_phases=list(phases))


def symmetry_orbit(state):
    """Coefficient vectors related to `state` by s -> -s and mode interchange."""
    c = state.coeffs
    return [c, np.conj(c), c[::-1], np.conj(c[::-1])]


def fidelity(a, b):
    """max |<a|b'>|^2 over the symmetry orbit of b, modulo global phase."""
    if a.photon_count != b.photon_count:
        raise DomainError("fidelity needs states with equal photon number")
    return max(float(abs(np.vdot(a.coeffs, c)) ** 2) for c in symmetry_orbit(b))


def random_symmetric_state(N, rng):
    h = np.abs(rng.normal(size=amplitude_count(N)))
    phases = rng.uniform(-math.pi, math.pi, size=phase_count(N))
    return expand_symmetric(SymmetricParams(photon_count=N, half_amplitudes=list(h), half_phases=list(phases)))


def canonical_sign(states):
    """Conjugate the states jointly if needed so the first one is the s = +1 representative.

    Conjugation maps p(m|phi) to p(m|-phi), so a BMSE under a prior centred at 0
    is unchanged.
    """
    c = states[0].coeffs
    chirality = float(np.sum(np.imag(np.conj(c[:-1]) * c[1:])))
    if chirality < 0:
        return [InputState.from_coeffs(np.conj(s.coeffs)) for s in states]
    return list(states)
