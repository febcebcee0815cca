"""Forward physics of the lossless Mach-Zehnder interferometer.

The input |psi> = sum_k c_k |N-k, k> picks up exp(i phi (N-k)) in arm 1 and is
then mixed by a beam splitter acting on the creation operators as

    a1+ -> cos(g) a1+ + sin(g) a2+
    a2+ -> -sin(g) a1+ + cos(g) a2+

The outcome label m is the photon count at detector D1 (mode 1), so the
detected pair is (m, N-m).
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb, gammaln

from .errors import DomainError
from .types import InputState

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = math.pi / 4
FACTORIAL_TABLE_MAX = 20
PROB_FLOOR = 1e-14

_LOG_FACTORIALS = np.array([math.log(math.factorial(n)) for n in range(FACTORIAL_TABLE_MAX + 1)])


def log_factorial(n):
    n = np.asarray(n)
    if np.all(n <= FACTORIAL_TABLE_MAX):
        return _LOG_FACTORIALS[n]
    return gammaln(n + 1.0)


@dataclass(frozen=True, eq=False)
class BeamSplitterMatrix:
    """B[m, k] = <m, N-m| U_BS |N-k, k> in the N-photon sector."""

    photon_count: int
    gamma: float
    entries: np.ndarray

    @property
    def N(self):
        return self.photon_count


@lru_cache(maxsize=256)
def _bs_entries(N, gamma):
    c, s = math.cos(gamma), math.sin(gamma)
    ks = np.arange(N + 1)
    lf = log_factorial(ks)
    B = np.zeros((N + 1, N + 1))
    for k in range(N + 1):
        for m in range(N + 1):
            # (c a1 + s a2)^(N-k) contributes j photons to mode 1, (-s a1 + c a2)^k contributes l
            total = 0.0
            for j in range(max(0, m - k), min(N - k, m) + 1):
                l = m - j
                total += (
                    comb(N - k, j, exact=True)
                    * comb(k, l, exact=True)
                    * c ** (j + k - l)
                    * s ** (N - k - j)
                    * (-s) ** l
                )
            B[m, k] = math.exp(0.5 * (lf[m] + lf[N - m] - lf[N - k] - lf[k])) * total
    B.setflags(write=False)
    return B


def beam_splitter_matrix(N, gamma=DEFAULT_GAMMA):
    if int(N) != N or N < 1:
        raise DomainError(f"photon count must be a positive integer, got {N!r}")
    return BeamSplitterMatrix(photon_count=int(N), gamma=float(gamma), entries=_bs_entries(int(N), float(gamma)))


def _check_dims(state, B):
    if B.photon_count != state.photon_count:
        raise DomainError(
            f"beam splitter built for N={B.photon_count} but state has N={state.photon_count}"
        )


def _phase_factors(state, phis):
    n1 = state.photon_count - np.arange(state.photon_count + 1)
    return np.exp(1j * np.outer(n1, np.atleast_1d(phis))), n1


def output_amplitudes(state, phis, B):
    """Amplitudes <m, N-m|psi'''(phi)> as an (N+1) x len(phis) array."""
    _check_dims(state, B)
    factors, _ = _phase_factors(state, phis)
    return B.entries @ (state.coeffs[:, None] * factors)


def outcome_pmf_grid(state, phis, B):
    amps = output_amplitudes(state, phis, B)
    return amps.real ** 2 + amps.imag ** 2


def outcome_pmf(state, phi, B):
    """p(m|phi) for m = 0..N."""
    return outcome_pmf_grid(state, phi, B)[:, 0]


def fisher_information(state, phi, B):
    """Classical Fisher information sum_m (dp/dphi)^2 / p of photon counting."""
    _check_dims(state, B)
    factors, n1 = _phase_factors(state, phi)
    weighted = state.coeffs[:, None] * factors
    amps = (B.entries @ weighted)[:, 0]
    damps = (B.entries @ (1j * n1[:, None] * weighted))[:, 0]
    probs = np.abs(amps) ** 2
    dprobs = 2 * np.real(np.conj(amps) * damps)
    keep = probs >= PROB_FLOOR
    return float(np.sum(dprobs[keep] ** 2 / probs[keep]))


def is_useful_entangled(state, phi, B=None):
    """F >= N: the state can beat shot noise at phi."""
    B = B if B is not None else beam_splitter_matrix(state.photon_count)
    return fisher_information(state, phi, B) >= state.photon_count


def shift_state(state, shift):
    """State whose statistics at phi equal those of `state` at phi - shift."""
    n1 = state.photon_count - np.arange(state.photon_count + 1)
    return InputState.from_coeffs(state.coeffs * np.exp(-1j * shift * n1))
