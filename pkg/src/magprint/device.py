"""Device geometry and the magnetometer sampling process.

Device frame: origin at the bottom-left corner of the screen on the glass,
X to the right, Y toward the top edge, Z out of the screen face.  Pixel
coordinates follow the touchscreen convention (origin top-left, y down).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .magnetics import EarthField, TESLA_TO_UT, dipole_fields

INCH = 0.0254


class DeviceRangeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DeviceModel:
    name: str
    screen_width_px: int
    screen_height_px: int
    screen_width_m: float
    screen_height_m: float
    magnetometer_pos: np.ndarray
    sample_rate: float = 40.0
    noise_sigma: float = 1.0
    # ADC step in uT; 0 disables quantization.  A power of two keeps
    # sums and differences of readings exact.
    resolution: float = 0.0
    thickness_m: float = 0.0093

    def __post_init__(self):
        object.__setattr__(self, "magnetometer_pos", np.asarray(self.magnetometer_pos, dtype=float))
        if min(self.screen_width_px, self.screen_height_px) <= 0:
            raise ValueError("pixel dimensions must be positive")
        if min(self.screen_width_m, self.screen_height_m) <= 0:
            raise ValueError("physical dimensions must be positive")
        if self.sample_rate <= 0 or self.noise_sigma < 0 or self.resolution < 0:
            raise ValueError("sample_rate must be > 0, noise_sigma and resolution >= 0")
        x, y, z = self.magnetometer_pos
        if not (0 <= x <= self.screen_width_m and 0 <= y <= self.screen_height_m and -self.thickness_m <= z <= 0):
            raise ValueError(f"magnetometer position {self.magnetometer_pos} outside the device body")

    def __eq__(self, other):
        return isinstance(other, DeviceModel) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.name, self.screen_width_px, self.screen_height_px))

    @property
    def px_per_m(self):
        return (self.screen_width_px - 1) / self.screen_width_m, (self.screen_height_px - 1) / self.screen_height_m

    def with_(self, **changes) -> "DeviceModel":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "screen_width_px": self.screen_width_px,
            "screen_height_px": self.screen_height_px,
            "screen_width_m": self.screen_width_m,
            "screen_height_m": self.screen_height_m,
            "magnetometer_pos": [float(v) for v in self.magnetometer_pos],
            "sample_rate": self.sample_rate,
            "noise_sigma": self.noise_sigma,
            "resolution": self.resolution,
            "thickness_m": self.thickness_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceModel":
        return cls(**d)


def _corner_magnetometer(width_m, height_m, inset=0.005, depth=0.002):
    return np.array([width_m - inset, height_m - inset, -depth])


def make_device(name: str, width_px: int, height_px: int, width_in: float, height_in: float, **kwargs) -> DeviceModel:
    w, h = width_in * INCH, height_in * INCH
    kwargs.setdefault("magnetometer_pos", _corner_magnetometer(w, h))
    kwargs.setdefault("resolution", 2.0**-4)
    return DeviceModel(name, width_px, height_px, w, h, **kwargs)


def iphone4(**kwargs) -> DeviceModel:
    """Portrait iPhone 4; magnetometer in the upper right corner."""
    return make_device("iphone4", 640, 960, 1.94, 2.91, **kwargs)


def ipad4(**kwargs) -> DeviceModel:
    return make_device("ipad4", 2048, 1536, 9.50, 7.31, thickness_m=0.0094, **kwargs)


def ipadmini(**kwargs) -> DeviceModel:
    # 6.5 x 5 cells of the iPad 4 8x6 grid at the same pixel density
    return make_device("ipadmini", 1664, 1280, 9.50 * 1664 / 2048, 7.31 * 1280 / 1536, thickness_m=0.0072, **kwargs)


PRESETS = {"iphone4": iphone4, "ipad4": ipad4, "ipadmini": ipadmini}


def get_device(name: str, **kwargs) -> DeviceModel:
    try:
        return PRESETS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown device preset {name!r}; choose from {sorted(PRESETS)}") from None


def pixel_to_device(dev: DeviceModel, x: float, y: float) -> np.ndarray:
    """Pixel -> absolute device-frame position on the glass (m)."""
    if not (0 <= x <= dev.screen_width_px - 1 and 0 <= y <= dev.screen_height_px - 1):
        raise DeviceRangeError(f"pixel ({x}, {y}) outside {dev.screen_width_px}x{dev.screen_height_px} screen")
    sx, sy = dev.px_per_m
    return np.array([x / sx, dev.screen_height_m - y / sy, 0.0])


def screen_to_device(dev: DeviceModel, x: float, y: float) -> np.ndarray:
    """Pixel -> position relative to the magnetometer (m)."""
    return pixel_to_device(dev, x, y) - dev.magnetometer_pos


@dataclass(frozen=True)
class TouchEvent:
    timestamp: float
    x: float
    y: float
    true_label: Optional[str] = None
    contact_count: int = 1
    gesture_id: Optional[int] = None

    def __post_init__(self):
        if self.contact_count < 1:
            raise ValueError("contact_count must be >= 1")


@dataclass
class SensorTrace:
    """Magnetometer samples (uT) on a uniform clock plus touch events."""

    times: np.ndarray
    fields: np.ndarray
    touches: list = field(default_factory=list)
    device: Optional[DeviceModel] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = np.asarray(self.fields, dtype=float).reshape(-1, 3)
        if len(self.times) != len(self.fields):
            raise ValueError("times and fields differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample timestamps must be strictly increasing")
        if self.touches and len(self.times):
            lo, hi = self.times[0], self.times[-1]
            for t in self.touches:
                if not lo <= t.timestamp <= hi:
                    raise ValueError(f"touch at {t.timestamp} outside sampled span [{lo}, {hi}]")

    def __len__(self):
        return len(self.times)

    def index_at(self, t: float) -> int:
        """Index of the sample at-or-before ``t``; -1 if ``t`` precedes the trace."""
        return int(np.searchsorted(self.times, t + 1e-9, side="right")) - 1

    def with_offset(self, offset) -> "SensorTrace":
        return SensorTrace(self.times, self.fields + np.asarray(offset, dtype=float), list(self.touches), self.device, dict(self.meta))


def sample_times(dev: DeviceModel, duration: float, start_index: int = 0) -> np.ndarray:
    if duration <= 0:
        raise ValueError("duration must be positive")
    n = int(np.floor(duration * dev.sample_rate + 1e-9)) + 1
    return np.arange(start_index, start_index + n) / dev.sample_rate


def quantize(values: np.ndarray, resolution: float) -> np.ndarray:
    if resolution <= 0:
        return values
    return np.rint(values / resolution) * resolution


def sample_trace(
    scene: Sequence,
    dev: DeviceModel,
    duration: float,
    seed: int,
    earth: Optional[EarthField] = None,
    touches=(),
) -> SensorTrace:
    """Sample the magnetometer while the scene's dipoles move.

    ``scene`` is a sequence of dipole paths, each providing
    ``positions(t)`` and ``moments(t)`` for an array of times.
    """
    earth = earth or EarthField()
    times = sample_times(dev, duration)
    b = np.zeros((len(times), 3))
    for path in scene:
        b = b + dipole_fields(path.moments(times), path.positions(times), dev.magnetometer_pos)
    fields = earth.vector + TESLA_TO_UT * b
    if dev.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        fields = fields + rng.normal(0.0, dev.noise_sigma, size=fields.shape)
    fields = quantize(fields, dev.resolution)
    return SensorTrace(times, fields, list(touches), dev, {"seed": seed})
