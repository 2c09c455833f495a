"""Point-dipole model of nail-mounted disc magnets.

Distances are in meters, dipole fields in tesla.  ``total_field`` converts to
microtesla because that is what the magnetometer reports.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

MU0 = 4 * math.pi * 1e-7  # H/m
N40_REMANENCE = 1.26  # T
TESLA_TO_UT = 1e6


class SingularityError(ValueError):
    pass


class InvalidSpecError(ValueError):
    pass


class Polarity(str, enum.Enum):
    NORTH_UP = "north"
    SOUTH_UP = "south"

    @property
    def sign(self) -> int:
        return 1 if self is Polarity.NORTH_UP else -1

    def flipped(self) -> "Polarity":
        return Polarity.SOUTH_UP if self is Polarity.NORTH_UP else Polarity.NORTH_UP


@dataclass(frozen=True)
class MagnetSpec:
    """Axially magnetized disc magnet.  ``diameter`` and ``height`` in mm."""

    diameter: float
    height: float
    remanence: float = N40_REMANENCE
    polarity: Polarity = Polarity.NORTH_UP
    id: str = ""

    def __post_init__(self):
        if not (self.diameter > 0 and self.height > 0 and self.remanence > 0):
            raise InvalidSpecError(
                f"magnet dimensions and remanence must be positive: {self.diameter}x{self.height} mm, Br={self.remanence}"
            )
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        if not self.id:
            object.__setattr__(self, "id", self.polarity.value)

    @classmethod
    def parse(cls, text: str, **kwargs) -> "MagnetSpec":
        """Parse ``"7.9x0.8"`` (diameter x height, mm)."""
        try:
            d, h = (float(p) for p in text.lower().split("x"))
        except ValueError:
            raise InvalidSpecError(f"bad magnet spec {text!r}, expected DIAMETERxHEIGHT in mm") from None
        return cls(d, h, **kwargs)

    @property
    def label(self) -> str:
        return f"{self.diameter:g}x{self.height:g}"

    @property
    def volume(self) -> float:
        r = self.diameter / 2 * 1e-3
        return math.pi * r * r * self.height * 1e-3

    def with_polarity(self, polarity: Polarity, id: str = "") -> "MagnetSpec":
        return MagnetSpec(self.diameter, self.height, self.remanence, polarity, id)


def moment_from_spec(spec: MagnetSpec) -> float:
    """Dipole moment magnitude in A*m^2: Br * V / mu0."""
    if not (spec.diameter > 0 and spec.height > 0):
        raise InvalidSpecError("non-positive magnet dimension")
    return spec.remanence * spec.volume / MU0


def moment_vector(spec: MagnetSpec, axis=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Signed moment along ``axis`` (normalized); SouthUp points against it."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return spec.polarity.sign * moment_from_spec(spec) * axis


@dataclass(frozen=True)
class Dipole:
    moment: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "moment", np.asarray(self.moment, dtype=float))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


def _default_earth():
    return np.array([0.0, 50.0, 0.0])


@dataclass(frozen=True)
class EarthField:
    """Geomagnetic flux density in microtesla, device frame."""

    vector: np.ndarray = field(default_factory=_default_earth)

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float)
        mag = float(np.linalg.norm(v))
        if not 20.0 <= mag <= 70.0:
            raise ValueError(f"earth field magnitude {mag:.2f} uT outside the geomagnetic range [20, 70]")
        object.__setattr__(self, "vector", v)

    @classmethod
    def horizontal(cls, heading_deg: float, magnitude: float = 50.0) -> "EarthField":
        """Field in the screen plane; heading 0 points along +Y."""
        a = math.radians(heading_deg)
        return cls(np.array([magnitude * math.sin(a), magnitude * math.cos(a), 0.0]))


def dipole_field(d: Dipole, at) -> np.ndarray:
    """Flux density (T) of a point dipole evaluated at ``at``."""
    return dipole_fields(d.moment[None, :], d.position[None, :], at)[0]


def dipole_fields(moments: np.ndarray, positions: np.ndarray, at) -> np.ndarray:
    """Vectorized ``dipole_field`` over stacked (..., 3) moments and positions."""
    r = np.asarray(at, dtype=float) - positions
    dist = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(dist == 0.0):
        raise SingularityError("field evaluated at a dipole position")
    rhat = r / dist
    mdotr = np.sum(moments * rhat, axis=-1, keepdims=True)
    return MU0 / (4 * math.pi) * (3 * mdotr * rhat - moments) / dist**3


def total_field(dipoles, earth: EarthField, at) -> np.ndarray:
    """Earth field plus every dipole contribution at ``at``, in microtesla."""
    b = np.zeros(3)
    for d in dipoles:
        b = b + dipole_field(d, at)
    return earth.vector + TESLA_TO_UT * b

