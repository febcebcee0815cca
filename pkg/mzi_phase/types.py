import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from glob import glob
from pathlib import Path
from typing import List, Tuple

import numpy as np
from dataclasses_json import config, dataclass_json

from .errors import DomainError

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
NORM_TOL = 1e-12
WIDTH_FLOOR = 1e-9


class Record:
    def validate(self):
        pass

    def save(self, path):
        self.validate()

        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)

        with p.open("w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, "r") as f:
            return cls.from_json(f.read())

    @classmethod
    def _load_all(cls, directory):
        paths = sorted(glob(os.path.join(directory, "**", "*.json"), recursive=True))
        return [cls.load(path) for path in paths]


def wrap_phase(theta):
    """Reduce angles to (-pi, pi]."""
    theta = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(theta <= -np.pi, theta + 2 * np.pi, theta)


@dataclass_json
@dataclass(frozen=True)
class InputState(Record):
    """N-photon input sum_k c_k |N-k, k>, with c_k = r_k exp(i theta_k)."""

    photon_count: int = field(metadata=config(field_name="N"))
    r: List[float]
    theta: List[float]

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.photon_count < 1:
            raise DomainError(f"photon count must be >= 1, got {self.photon_count}")
        if len(self.r) != self.photon_count + 1 or len(self.theta) != self.photon_count + 1:
            raise DomainError(
                f"expected {self.photon_count + 1} coefficients, got {len(self.r)} amplitudes "
                f"and {len(self.theta)} phases"
            )
        if any(r < 0 for r in self.r):
            raise DomainError("amplitudes must be nonnegative")
        norm = math.fsum(r * r for r in self.r)
        if abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"state is not normalized (sum r^2 = {norm!r})")

    @classmethod
    def from_coeffs(cls, coeffs):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != 1 or c.size < 2:
            raise DomainError("coefficient vector must have at least two entries")
        norm = np.linalg.norm(c)
        if norm == 0:
            raise DomainError("coefficient vector is zero")
        c = c / norm
        r = np.abs(c)
        theta = np.where(r > 0, wrap_phase(np.angle(c)), 0.0)
        # renormalize the moduli so sum r^2 = 1 holds to the last bit
        r = r / math.sqrt(math.fsum(r * r))
        return cls(photon_count=c.size - 1, r=[float(x) for x in r], theta=[float(x) for x in theta])

    @property
    def N(self):
        return self.photon_count

    @cached_property
    def coeffs(self):
        return np.asarray(self.r) * np.exp(1j * np.asarray(self.theta))


@dataclass_json
@dataclass(frozen=True)
class FlatPrior(Record):
    """Flat phase prior of the given width centred at `center`."""

    center: float
    width: float

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (0 < self.width <= math.pi):
            raise DomainError(f"prior width must lie in (0, pi], got {self.width!r}")

    @property
    def variance(self):
        return self.width ** 2 / 12

    @property
    def bounds(self):
        return self.center - self.width / 2, self.center + self.width / 2


@dataclass(frozen=True)
class OutcomeSequence:
    outcomes: Tuple[int, ...]

    @property
    def shots(self):
        return len(self.outcomes)

    def validate(self, photon_count):
        if any(m < 0 or m > photon_count for m in self.outcomes):
            raise DomainError(f"outcomes {self.outcomes} outside 0..{photon_count}")


@dataclass_json
@dataclass(frozen=True)
class ShotCountCase(Record):
    """One reference row of the shot-count table."""

    id: str
    regime: str
    N: int
    delta_start: float
    delta_req: float
    regime_start: str
    regime_req: str
    published_opt: int
    published_formula: List[int] = field(default_factory=list)

    @staticmethod
    def fdir():
        return os.path.join(DATA_DIR, "table1")

    @classmethod
    def load_table(cls):
        return cls._load_all(cls.fdir())
