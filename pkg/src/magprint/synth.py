"""Synthetic study sessions: finger kinematics, grid selection and pinch tasks.

Every session is one participant.  All phase durations are multiples of the
25 ms sample spacing so that touches land exactly on sample ticks.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .device import DeviceModel, SensorTrace, TouchEvent, pixel_to_device, sample_trace
from .magnetics import EarthField, MagnetSpec, moment_vector

Cell = Tuple[int, int]  # (row, col), row 0 at the top of the screen

MIN_APPROACH = 0.5  # s, one feature window


class ScenarioError(ValueError):
    pass


class WindowTooShortError(ValueError):
    pass


class RetractionPolicy(str, enum.Enum):
    RETRACTED = "retracted"
    HOVERING = "hovering"


# -- kinematics ---------------------------------------------------------------

def _linear(s):
    return s


def _cubic_in(s):
    return s**3


def _smooth(s):
    return s * s * (3 - 2 * s)


EASINGS = {"linear": _linear, "cubic-in": _cubic_in, "smooth": _smooth}


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    start: np.ndarray
    end: np.ndarray
    moment: np.ndarray
    ease: str = "linear"


class SegmentPath:
    """Piecewise dipole path; holds the first/last pose outside its span."""

    def __init__(self, segments: Sequence[Segment]):
        if not segments:
            raise ValueError("empty path")
        self.segments = sorted(segments, key=lambda s: s.t0)

    def _eval(self, t, pose):
        t = np.asarray(t, dtype=float)
        first, last = self.segments[0], self.segments[-1]
        out = np.empty(t.shape + (3,))
        out[...] = pose(first, np.zeros_like(t))
        for seg in self.segments:
            if seg.t1 > seg.t0:
                s = np.clip((t - seg.t0) / (seg.t1 - seg.t0), 0.0, 1.0)
            else:
                s = np.ones_like(t)
            mask = t >= seg.t0
            out[mask] = pose(seg, s)[mask]
        return out

    def positions(self, t):
        def pose(seg, s):
            e = EASINGS[seg.ease](s)[..., None]
            return seg.start + (seg.end - seg.start) * e

        return self._eval(t, pose)

    def moments(self, t):
        return self._eval(t, lambda seg, s: np.broadcast_to(seg.moment, s.shape + (3,)))


class FunctionPath:
    """Dipole path given as functions of time (arrays in, (N, 3) out)."""

    def __init__(self, position_fn: Callable, moment_fn: Callable):
        self.position_fn = position_fn
        self.moment_fn = moment_fn

    @classmethod
    def static(cls, position, moment) -> "FunctionPath":
        p, m = np.asarray(position, float), np.asarray(moment, float)
        return cls(lambda t: np.broadcast_to(p, np.shape(t) + (3,)), lambda t: np.broadcast_to(m, np.shape(t) + (3,)))

    def positions(self, t):
        return np.asarray(self.position_fn(np.asarray(t, float)), float)

    def moments(self, t):
        return np.asarray(self.moment_fn(np.asarray(t, float)), float)


# -- fingers and scenarios ------------------------------------------------------

@dataclass(frozen=True)
class FingerModel:
    """A finger, optionally carrying a nail magnet.  Lengths in meters.

    ``tilt`` (degrees from the screen normal) leans the magnet axis toward
    ``tilt_azimuth`` (degrees in the screen plane, 0 = +X, 270 = toward the
    bottom edge where the hand is).
    """

    name: str
    magnet: Optional[MagnetSpec] = None
    approach_height: float = 0.080
    touch_standoff: float = 0.010
    tilt: float = 0.0
    tilt_azimuth: float = 270.0

    def __post_init__(self):
        if not self.approach_height > self.touch_standoff > 0:
            raise ScenarioError(f"finger {self.name}: need approach_height > touch_standoff > 0")
        if not 0 <= self.tilt < 90:
            raise ScenarioError(f"finger {self.name}: tilt must be in [0, 90)")

    @property
    def label(self) -> str:
        return self.magnet.id if self.magnet else "plain"

    def axis(self) -> np.ndarray:
        t, a = math.radians(self.tilt), math.radians(self.tilt_azimuth)
        return np.array([math.sin(t) * math.cos(a), math.sin(t) * math.sin(a), math.cos(t)])

    def moment(self) -> np.ndarray:
        if self.magnet is None:
            return np.zeros(3)
        return moment_vector(self.magnet, self.axis())


def gesture_label(fingers: Sequence[FingerModel]) -> str:
    """Class label of a touch/gesture: the set of fingerprint ids present."""
    ids = sorted({f.magnet.id for f in fingers if f.magnet is not None})
    return "+".join(ids) if ids else "plain"


@dataclass(frozen=True)
class Grid:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ScenarioError("grid must have at least one cell")

    @property
    def cells(self) -> List[Cell]:
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def cell_size(self, dev: DeviceModel) -> Tuple[float, float]:
        return dev.screen_width_px / self.cols, dev.screen_height_px / self.rows

    def bounds(self, dev: DeviceModel, cell: Cell) -> Tuple[float, float, float, float]:
        """(x0, x1, y0, y1) pixel bounds; cells tile the screen exactly."""
        r, c = cell
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise ScenarioError(f"cell {cell} outside {self.rows}x{self.cols} grid")
        w, h = self.cell_size(dev)
        return c * w, (c + 1) * w, r * h, (r + 1) * h

    def center(self, dev: DeviceModel, cell: Cell) -> Tuple[float, float]:
        x0, x1, y0, y1 = self.bounds(dev, cell)
        return (x0 + x1) / 2, (y0 + y1) / 2

    def cell_of(self, dev: DeviceModel, x: float, y: float) -> Cell:
        w, h = self.cell_size(dev)
        return min(int(y // h), self.rows - 1), min(int(x // w), self.cols - 1)


@dataclass(frozen=True)
class Target:
    cells: Tuple[Cell, ...]
    fingers: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(tuple(c) for c in self.cells))
        object.__setattr__(self, "fingers", tuple(self.fingers))
        if len(self.cells) != len(self.fingers):
            raise ScenarioError("each target cell needs exactly one finger")


@dataclass(frozen=True)
class Timing:
    transit: float = 0.5
    approach: float = 1.0
    dwell: float = 0.25
    lift: float = 0.5
    lead_in: float = 0.5
    tail: float = 0.25

    @property
    def cycle(self) -> float:
        return self.transit + self.approach + self.dwell + self.lift


@dataclass(frozen=True)
class Jitter:
    """Per-touch variation.  ``position`` is a fraction of the cell size."""

    position: float = 0.15
    standoff: float = 0.002
    tilt: float = 20.0
    azimuth: float = 30.0
    earth_heading: bool = True

    @classmethod
    def none(cls) -> "Jitter":
        return cls(0.0, 0.0, 0.0, 0.0, False)


@dataclass(frozen=True)
class Scenario:
    device: DeviceModel
    grid: Grid
    fingers: Dict[str, FingerModel]
    targets: Tuple[Target, ...]
    kind: str = "grid"  # "grid" | "pinch"
    policy: RetractionPolicy = RetractionPolicy.RETRACTED
    timing: Timing = field(default_factory=Timing)
    jitter: Jitter = field(default_factory=Jitter)
    # distance from the magnetometer to a retracted magnet (m)
    retraction_distance: float = 0.50
    hover_height: float = 0.025
    # with the hovering policy: chance that an idle magnetic finger hovers
    # during a given target instead of staying retracted
    hover_rate: float = 1.0
    pinch_convergence: float = 0.20
    shuffle: str = "blocks"  # "blocks" (per finger) | "all" | "none"
    participants: int = 1
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "policy", RetractionPolicy(self.policy))
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.kind not in ("grid", "pinch"):
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        if self.timing.approach < MIN_APPROACH:
            raise WindowTooShortError(f"approach {self.timing.approach}s shorter than the {MIN_APPROACH}s feature window")
        for tgt in self.targets:
            for name in tgt.fingers:
                if name not in self.fingers:
                    raise ScenarioError(f"target uses unknown finger {name!r}")
            for cell in tgt.cells:
                self.grid.bounds(self.device, cell)
            if self.kind == "pinch":
                check_pinch_pair(tgt.cells)
            elif len(tgt.cells) != 1:
                raise ScenarioError("grid targets take exactly one cell")

    def target_label(self, tgt: Target) -> str:
        return gesture_label([self.fingers[n] for n in tgt.fingers])

    def retraction_point(self) -> np.ndarray:
        """Palm position: beyond the bottom edge, in line with the magnetometer
        and the bottom-edge center, at glass height."""
        dev = self.device
        m = dev.magnetometer_pos
        d = np.array([dev.screen_width_m / 2, 0.0, 0.0]) - np.array([m[0], m[1], 0.0])
        d /= np.linalg.norm(d)
        p = m + self.retraction_distance * d
        p[2] = 0.0
        return p


def check_pinch_pair(cells) -> None:
    """Pinch targets sit one cell apart: a single cell between them,
    horizontally, vertically or diagonally."""
    if len(cells) != 2:
        raise ScenarioError("a pinch needs exactly two cells")
    (r1, c1), (r2, c2) = cells
    dr, dc = abs(r1 - r2), abs(c1 - c2)
    if (dr, dc) not in ((0, 2), (2, 0), (2, 2)):
        raise ScenarioError(f"pinch cells {cells} are not one cell apart")


def pinch_pairs(grid: Grid, dev: DeviceModel) -> List[Tuple[Cell, Cell]]:
    """Pairs with one cell between them, along the screen's long axis or
    diagonal.

    On the phone's 4x3 grid (landscape in the task) this yields the six
    horizontal and four diagonal pinches of the pinch task.
    """
    straight = (2, 0) if dev.screen_height_px >= dev.screen_width_px else (0, 2)
    out = []
    for r, c in grid.cells:
        for dr, dc in (straight, (2, 2), (2, -2)):
            r2, c2 = r + dr, c + dc
            if 0 <= r2 < grid.rows and 0 <= c2 < grid.cols:
                out.append(((r, c), (r2, c2)))
    return out


# -- trajectories -----------------------------------------------------------------

def approach_trajectory(f: FingerModel, target, duration: float, start: float = 0.0) -> Optional[SegmentPath]:
    """Descent of the finger's magnet onto ``target`` (device-frame x, y in m).

    Returns None for a plain finger.  The magnet reaches ``touch_standoff``
    above the target at ``start + duration`` and dwells there.
    """
    if duration < MIN_APPROACH:
        raise WindowTooShortError(f"approach of {duration}s is shorter than the {MIN_APPROACH}s feature window")
    if f.magnet is None:
        return None
    x, y = float(target[0]), float(target[1])
    top = np.array([x, y, f.approach_height])
    bottom = np.array([x, y, f.touch_standoff])
    return SegmentPath([Segment(start, start + duration, top, bottom, f.moment(), "cubic-in")])


class _Timeline:
    """Accumulates segments for each finger plus the touch log."""

    def __init__(self, scenario: Scenario, rng: np.random.Generator):
        self.s = scenario
        self.rng = rng
        self.segments: Dict[str, List[Segment]] = {n: [] for n in scenario.fingers}
        self.pose: Dict[str, np.ndarray] = {}
        self.moments: Dict[str, np.ndarray] = {}
        self.touches: List[TouchEvent] = []
        rest = scenario.retraction_point()
        for name, f in scenario.fingers.items():
            self.pose[name] = rest.copy()
            self.moments[name] = f.moment()

    def move(self, name, t0, t1, end, ease="smooth", moment=None):
        if moment is not None:
            self.moments[name] = moment
        self.segments[name].append(Segment(t0, t1, self.pose[name], np.asarray(end, float), self.moments[name], ease))
        self.pose[name] = np.asarray(end, float)

    def jittered_finger(self, f: FingerModel) -> FingerModel:
        j = self.s.jitter
        standoff = f.touch_standoff + j.standoff * self.rng.uniform(-1, 1)
        tilt = f.tilt + j.tilt * self.rng.uniform(0, 1)
        az = f.tilt_azimuth + j.azimuth * self.rng.uniform(-1, 1)
        return replace(f, touch_standoff=standoff, tilt=min(tilt, 89.0), tilt_azimuth=az)

    def touch_pixel(self, cell: Cell) -> Tuple[int, int]:
        dev, grid = self.s.device, self.s.grid
        x0, x1, y0, y1 = grid.bounds(dev, cell)
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        w, h = x1 - x0, y1 - y0
        j = self.s.jitter.position
        dx = np.clip(self.rng.normal(0, j), -0.4, 0.4) * w if j > 0 else 0.0
        dy = np.clip(self.rng.normal(0, j), -0.4, 0.4) * h if j > 0 else 0.0
        px = int(np.clip(round(cx + dx), math.ceil(x0), math.ceil(x1) - 1))
        py = int(np.clip(round(cy + dy), math.ceil(y0), math.ceil(y1) - 1))
        return px, py

    def cycle(self, t: float, tgt: Target, gesture_id: int) -> float:
        s, tm = self.s, self.s.timing
        dev = s.device
        active = list(tgt.fingers)
        fingers = {n: self.jittered_finger(s.fingers[n]) for n in active}
        pixels = [self.touch_pixel(c) for c in tgt.cells]
        points = [pixel_to_device(dev, *p)[:2] for p in pixels]
        label = s.target_label(tgt)
        t_a = t + tm.transit
        t_touch = t_a + tm.approach
        t_lift = t_touch + tm.dwell
        t_end = t_lift + tm.lift

        hand_top, hand_bottom, hand_final = [], [], []
        for name, pt in zip(active, points):
            f = fingers[name]
            top = np.array([pt[0], pt[1], f.approach_height])
            bottom = np.array([pt[0], pt[1], f.touch_standoff])
            self.move(name, t, t_a, top, moment=f.moment())
            self.move(name, t_a, t_touch, bottom, "cubic-in")
            hand_top.append(top)
            hand_bottom.append(bottom)
        if len(active) == 2:
            # fingers converge toward each other while held on the glass
            a, b = hand_bottom
            k = s.pinch_convergence / 2
            ends = [a + k * (b - a), b + k * (a - b)]
        else:
            ends = list(hand_bottom)
        for name, end in zip(active, ends):
            self.move(name, t_touch, t_lift, end, "smooth")
            self.move(name, t_lift, t_end, np.array([end[0], end[1], fingers[name].approach_height]), "smooth")
            hand_final.append(self.pose[name])

        idle = [n for n in s.fingers if n not in active and s.fingers[n].magnet is not None]
        for name in idle:
            hovering = s.policy is RetractionPolicy.HOVERING and (s.hover_rate >= 1 or self.rng.uniform() < s.hover_rate)
            if not hovering:
                self.move(name, t, t_a, s.retraction_point(), moment=s.fingers[name].moment())
                self.move(name, t_a, t_end, s.retraction_point())
                continue
            # hovering: ride along with the active hand at hover height
            if len(active) == 1:
                offset = np.array([grid_cell_width_m(s), 0.0, 0.0])
            else:
                offset = np.zeros(3)
            lift = s.hover_height - np.mean([fingers[n].touch_standoff for n in active])
            offset = offset + np.array([0.0, 0.0, lift])
            mid = lambda poses: np.mean(poses, axis=0) + offset
            self.move(name, t, t_a, mid(hand_top), moment=self.jittered_finger(s.fingers[name]).moment())
            self.move(name, t_a, t_touch, mid(hand_bottom), "cubic-in")
            self.move(name, t_touch, t_lift, mid(ends), "smooth")
            self.move(name, t_lift, t_end, mid(hand_final), "smooth")

        n = len(active)
        for (px, py) in pixels:
            self.touches.append(TouchEvent(t_touch, px, py, label, n, gesture_id))
        return t_end


def grid_cell_width_m(s: Scenario) -> float:
    return s.device.screen_width_m / s.grid.cols


def _ordered_targets(s: Scenario, rng: np.random.Generator) -> List[Target]:
    targets = list(s.targets)
    if s.shuffle == "none":
        return targets
    if s.shuffle == "all":
        return [targets[i] for i in rng.permutation(len(targets))]
    # one block per finger assignment, blocks and their contents shuffled
    blocks: Dict[Tuple[str, ...], List[Target]] = {}
    for tgt in targets:
        blocks.setdefault(tgt.fingers, []).append(tgt)
    keys = list(blocks)
    out = []
    for bi in rng.permutation(len(keys)):
        blk = blocks[keys[bi]]
        out.extend(blk[i] for i in rng.permutation(len(blk)))
    return out


def synthesize_session(s: Scenario, seed: int) -> SensorTrace:
    """One participant performing every target of ``s`` once."""
    rng = np.random.default_rng(seed)
    order = _ordered_targets(s, rng)
    heading = rng.uniform(0, 360) if s.jitter.earth_heading else 0.0
    earth = EarthField.horizontal(heading)
    tl = _Timeline(s, rng)
    t = s.timing.lead_in
    for gid, tgt in enumerate(order):
        t = tl.cycle(t, tgt, gid)
    duration = t + s.timing.tail
    scene = [SegmentPath(segs) for name, segs in tl.segments.items() if s.fingers[name].magnet is not None and segs]
    noise_seed = int(rng.integers(2**63))
    trace = sample_trace(scene, s.device, duration, noise_seed, earth=earth, touches=tl.touches)
    trace.meta.update({"seed": seed, "scenario": s.name, "grid": [s.grid.rows, s.grid.cols], "kind": s.kind,
                       "earth": [float(v) for v in earth.vector]})
    return trace


def synthesize_grid_session(s: Scenario, seed: int) -> SensorTrace:
    if s.kind != "grid":
        raise ScenarioError("grid session needs a grid scenario")
    return synthesize_session(s, seed)


def synthesize_pinch_session(s: Scenario, seed: int) -> SensorTrace:
    if s.kind != "pinch":
        raise ScenarioError("pinch session needs a pinch scenario")
    return synthesize_session(s, seed)


def synthesize_chorded_pinch(s: Scenario, seed: int) -> SensorTrace:
    mags = [f.magnet for f in s.fingers.values() if f.magnet is not None]
    if len(mags) < 2 or len({m.polarity for m in mags}) < 2:
        raise ScenarioError("chorded pinches need two magnetic fingers of opposite polarity")
    return synthesize_pinch_session(s, seed)


def participant_seeds(seed: int, n: int) -> List[int]:
    return [int(ss.generate_state(1, np.uint64)[0]) for ss in np.random.SeedSequence(seed).spawn(n)]


# -- study protocols ----------------------------------------------------------------

def _grid_targets(grid: Grid, finger_names, per_cell: int) -> List[Target]:
    return [Target((cell,), (name,)) for name in finger_names for cell in grid.cells for _ in range(per_cell)]


def study1(magnet: MagnetSpec, fingerprints: int = 1, device: Optional[DeviceModel] = None, **kw) -> Scenario:
    """4x3 target selection, 24 targets per finger (two per cell).

    One fingerprint: magnetic middle finger plus plain index.  Two: index
    north-up, ring south-up and a plain middle finger.
    """
    from .device import iphone4

    dev = device or iphone4()
    grid = Grid(4, 3)
    if fingerprints == 1:
        fingers = {"index": FingerModel("index"), "middle": FingerModel("middle", magnet)}
    elif fingerprints == 2:
        fingers = {
            "index": FingerModel("index", magnet.with_polarity("north")),
            "middle": FingerModel("middle"),
            "ring": FingerModel("ring", magnet.with_polarity("south")),
        }
    else:
        raise ScenarioError("the selection task supports one or two fingerprints")
    kw.setdefault("participants", 10)
    return Scenario(dev, grid, fingers, tuple(_grid_targets(grid, list(fingers), 2)), "grid",
                    name=f"study1-{fingerprints}fp-{magnet.label}", **kw)


def thumb(magnet: Optional[MagnetSpec] = None) -> FingerModel:
    # the thumb nail faces sideways, toward -X for a right hand
    return FingerModel("thumb", magnet, tilt=60.0, tilt_azimuth=180.0)


def study2(magnet: MagnetSpec, device: Optional[DeviceModel] = None, **kw) -> Scenario:
    """Pinch task: ten pairs, 20 pinches per type; magnetic middle finger."""
    from .device import iphone4

    dev = device or iphone4()
    grid = Grid(4, 3)
    fingers = {"thumb": thumb(), "index": FingerModel("index"), "middle": FingerModel("middle", magnet)}
    pairs = pinch_pairs(grid, dev)
    targets = [Target(p, ("thumb", other)) for other in ("index", "middle") for p in pairs for _ in range(2)]
    kw.setdefault("participants", 8)
    kw.setdefault("shuffle", "all")
    return Scenario(dev, grid, fingers, tuple(targets), "pinch", timing=Timing(dwell=0.5), name=f"study2-{magnet.label}", **kw)


CENTER_PAIRS = (((0, 1), (2, 1)), ((1, 1), (3, 1)), ((1, 0), (1, 2)), ((2, 0), (2, 2)))


def study2_chorded(magnet: MagnetSpec, device: Optional[DeviceModel] = None, per_type: int = 20, **kw) -> Scenario:
    """Preliminary chording task: magnetic thumb (north) and index (south),
    plain middle; pinches on fixed pairs around the screen center."""
    from .device import iphone4

    dev = device or iphone4()
    grid = Grid(4, 3)
    fingers = {
        "thumb": thumb(magnet.with_polarity("north")),
        "index": FingerModel("index", magnet.with_polarity("south")),
        "middle": FingerModel("middle"),
    }
    targets = []
    for combo in (("thumb", "index"), ("thumb", "middle"), ("index", "middle")):
        for i in range(per_type):
            targets.append(Target(CENTER_PAIRS[i % len(CENTER_PAIRS)], combo))
    kw.setdefault("participants", 3)
    kw.setdefault("shuffle", "all")
    kw.setdefault("policy", RetractionPolicy.HOVERING)
    return Scenario(dev, grid, fingers, tuple(targets), "pinch", timing=Timing(dwell=0.5),
                    name=f"study2-chorded-{magnet.label}", **kw)


def study3(magnet: MagnetSpec, device: Optional[DeviceModel] = None, **kw) -> Scenario:
    """Tablet 8x6 selection, one target per cell per finger."""
    from .device import ipad4

    dev = device or ipad4()
    grid = Grid(6, 8)
    fingers = {"index": FingerModel("index"), "middle": FingerModel("middle", magnet)}
    kw.setdefault("participants", 8)
    # occasional failures to retract on the large screen
    kw.setdefault("policy", RetractionPolicy.HOVERING)
    kw.setdefault("hover_rate", 0.1)
    return Scenario(dev, grid, fingers, tuple(_grid_targets(grid, list(fingers), 1)), "grid",
                    name=f"study3-{magnet.label}", **kw)


def corner_subgrid(dev: DeviceModel, grid: Grid, cols: float, rows: float) -> Tuple[float, float, float, float]:
    """Pixel region (x0, x1, y0, y1) of a ``cols`` x ``rows`` cell block
    anchored at the magnetometer (top-right) corner; fractional sizes allowed."""
    w, h = grid.cell_size(dev)
    return dev.screen_width_px - cols * w, dev.screen_width_px, 0.0, rows * h
