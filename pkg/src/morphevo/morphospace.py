"""Morphology parameter spaces and the training/validation/testing grids.

A morphology is a point (x, y) in a 2-D box of body parameters (e.g. leg
length x leg width).  Each axis has a training interval plus two flanking
test intervals, and a fixed grid step.  All grid enumeration in the
framework is x-major (x varies fastest) and this single convention is
reused everywhere: schedule cycling, bandit arm indexing, heatmap cells.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

# Tolerance for float grid membership and interval checks.  Grid values are
# always computed as lo + j*step (never cumulative addition), so 1e-9 is
# generous.
GRID_TOL = 1e-9


@dataclass(frozen=True)
class Interval:
    """Closed real interval [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def span(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, v: float, tol: float = GRID_TOL) -> bool:
        return self.lo - tol <= v <= self.hi + tol


@dataclass(frozen=True)
class Morphology:
    """One point in a 2-D morphology parameter space."""

    x: float
    y: float

    def __post_init__(self):
        import math

        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite morphology ({self.x}, {self.y})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class MorphologySpace:
    """A 2-D box of morphology parameters with grid steps.

    Each axis has a training interval flanked below and above by test
    intervals, plus a positive step.  The training span must be an integer
    multiple of the step so the training grid lands exactly on the interval
    endpoints.
    """

    x_name: str
    y_name: str
    x_train: Interval
    y_train: Interval
    x_test_low: Interval
    x_test_high: Interval
    y_test_low: Interval
    y_test_high: Interval
    x_step: float
    y_step: float

    def __post_init__(self):
        if self.x_step <= 0 or self.y_step <= 0:
            raise ValueError("grid steps must be positive")
        for name, (test_low, train, test_high) in {
            "x": (self.x_test_low, self.x_train, self.x_test_high),
            "y": (self.y_test_low, self.y_train, self.y_test_high),
        }.items():
            if not (test_low.hi < train.lo and train.hi < test_high.lo):
                raise ValueError(f"{name} test intervals must flank the training interval")
        for name, (train, step) in {
            "x": (self.x_train, self.x_step),
            "y": (self.y_train, self.y_step),
        }.items():
            ratio = train.span / step
            if abs(ratio - round(ratio)) > GRID_TOL * max(1.0, abs(ratio)):
                raise ValueError(
                    f"{name} training span {train.span} is not an integer multiple of step {step}"
                )

    @property
    def center(self) -> Morphology:
        return Morphology(self.x_train.mid, self.y_train.mid)

    def in_train_box(self, m: Morphology, tol: float = GRID_TOL) -> bool:
        return self.x_train.contains(m.x, tol) and self.y_train.contains(m.y, tol)

    def in_full_box(self, m: Morphology, tol: float = GRID_TOL) -> bool:
        """Whether m lies in the hull spanning both test flanks."""
        return (
            self.x_test_low.lo - tol <= m.x <= self.x_test_high.hi + tol
            and self.y_test_low.lo - tol <= m.y <= self.y_test_high.hi + tol
        )


@dataclass(frozen=True)
class MorphologyGrid:
    """An x-major enumeration of morphologies over a value lattice.

    ``x_values``/``y_values`` describe the underlying lattice; ``points``
    is either the full lattice (training, validation, full grids) or a
    subset of it (the testing grid).  For full grids, enumeration index i
    maps to (x_index = i % cols, y_index = i // cols).
    """

    x_values: tuple[float, ...]
    y_values: tuple[float, ...]
    points: tuple[Morphology, ...] = field(default=())
    order: str = "x-major"

    def __post_init__(self):
        if len(set((p.x, p.y) for p in self.points)) != len(self.points):
            raise ValueError("grid points must be distinct")
        if self.order != "x-major":
            raise ValueError(f"unsupported enumeration order {self.order!r}")

    @property
    def cols(self) -> int:
        return len(self.x_values)

    @property
    def rows(self) -> int:
        return len(self.y_values)

    @property
    def is_full(self) -> bool:
        return len(self.points) == self.rows * self.cols

    def __len__(self) -> int:
        return len(self.points)

    def cell_of(self, m: Morphology, tol: float = GRID_TOL) -> tuple[int, int]:
        """Lattice cell (x_index, y_index) of a morphology, by tolerance."""
        xi = _index_of(self.x_values, m.x, tol)
        yi = _index_of(self.y_values, m.y, tol)
        if xi is None or yi is None:
            raise ValueError(f"morphology ({m.x}, {m.y}) is not on the lattice")
        return xi, yi


def _index_of(values: tuple[float, ...], v: float, tol: float) -> int | None:
    for i, w in enumerate(values):
        if abs(w - v) <= tol:
            return i
    return None


def _axis_values(train: Interval, step: float) -> list[float]:
    n = int(round(train.span / step))
    return [train.lo + j * step for j in range(n + 1)]


def _test_axis_values(test: Interval, step: float) -> list[float]:
    # Test values anchor at the test interval's lower bound and advance by
    # the axis step while still inside the interval.
    values = []
    j = 0
    while True:
        v = test.lo + j * step
        if v > test.hi + GRID_TOL:
            break
        values.append(v)
        j += 1
    return values


def _lattice(x_values: list[float], y_values: list[float]) -> list[Morphology]:
    return [Morphology(x, y) for y in y_values for x in x_values]


def build_training_grid(space: MorphologySpace) -> MorphologyGrid:
    """Full x-major grid over the training intervals at the axis steps."""
    xs = _axis_values(space.x_train, space.x_step)
    ys = _axis_values(space.y_train, space.y_step)
    return MorphologyGrid(tuple(xs), tuple(ys), tuple(_lattice(xs, ys)))


def build_validation_grid(space: MorphologySpace) -> MorphologyGrid:
    """Validation set; identical point set to the training grid."""
    return build_training_grid(space)


def _full_axis_values(space: MorphologySpace, axis: str) -> list[float]:
    if axis == "x":
        low, train, high, step = space.x_test_low, space.x_train, space.x_test_high, space.x_step
    else:
        low, train, high, step = space.y_test_low, space.y_train, space.y_test_high, space.y_step
    return _test_axis_values(low, step) + _axis_values(train, step) + _test_axis_values(high, step)


def build_full_grid(space: MorphologySpace) -> MorphologyGrid:
    """Grid over the union of test-low, training, and test-high values."""
    xs = _full_axis_values(space, "x")
    ys = _full_axis_values(space, "y")
    return MorphologyGrid(tuple(xs), tuple(ys), tuple(_lattice(xs, ys)))


def build_testing_grid(space: MorphologySpace) -> MorphologyGrid:
    """Full-grid points with at least one coordinate outside the training box."""
    full = build_full_grid(space)
    outside = tuple(
        p
        for p in full.points
        if not (space.x_train.contains(p.x) and space.y_train.contains(p.y))
    )
    return MorphologyGrid(full.x_values, full.y_values, outside)


def grid_to_csv(space: MorphologySpace, path) -> None:
    """Export the full grid as CSV rows (index, x, y, set in {train, test})."""
    full = build_full_grid(space)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "x", "y", "set"])
        for i, p in enumerate(full.points):
            kind = "train" if space.in_train_box(p) else "test"
            w.writerow([i, repr(p.x), repr(p.y), kind])


def space_to_dict(space: MorphologySpace) -> dict:
    """Declarative form of a space (JSON/TOML-compatible scalars only)."""
    return {
        "x_name": space.x_name,
        "y_name": space.y_name,
        "x_train": [space.x_train.lo, space.x_train.hi],
        "y_train": [space.y_train.lo, space.y_train.hi],
        "x_test_low": [space.x_test_low.lo, space.x_test_low.hi],
        "x_test_high": [space.x_test_high.lo, space.x_test_high.hi],
        "y_test_low": [space.y_test_low.lo, space.y_test_low.hi],
        "y_test_high": [space.y_test_high.lo, space.y_test_high.hi],
        "x_step": space.x_step,
        "y_step": space.y_step,
    }


def space_from_dict(data: dict) -> MorphologySpace:
    """Inverse of space_to_dict; runs all the space invariants."""
    def interval(key):
        lo, hi = data[key]
        return Interval(float(lo), float(hi))

    return MorphologySpace(
        x_name=str(data["x_name"]),
        y_name=str(data["y_name"]),
        x_train=interval("x_train"),
        y_train=interval("y_train"),
        x_test_low=interval("x_test_low"),
        x_test_high=interval("x_test_high"),
        y_test_low=interval("y_test_low"),
        y_test_high=interval("y_test_high"),
        x_step=float(data["x_step"]),
        y_step=float(data["y_step"]),
    )


def _paper_presets() -> list[tuple[str, MorphologySpace]]:
    bipedal = MorphologySpace(
        x_name="leg_length",
        y_name="leg_width",
        x_train=Interval(7.0, 17.0),
        y_train=Interval(24.0, 44.0),
        x_test_low=Interval(3.0, 6.0),
        x_test_high=Interval(18.0, 21.0),
        y_test_low=Interval(16.0, 23.0),
        y_test_high=Interval(45.0, 52.0),
        x_step=2.0,
        y_step=4.0,
    )
    walker2d = MorphologySpace(
        x_name="lower_leg_length",
        y_name="upper_leg_length",
        x_train=Interval(0.3, 0.425),
        y_train=Interval(0.4, 0.65),
        x_test_low=Interval(0.225, 0.25),
        x_test_high=Interval(0.45, 0.5),
        y_test_low=Interval(0.25, 0.35),
        y_test_high=Interval(0.7, 0.8),
        x_step=0.025,
        y_step=0.05,
    )
    ant = MorphologySpace(
        x_name="lower_leg_length",
        y_name="upper_leg_length",
        x_train=Interval(0.5, 1.5),
        y_train=Interval(0.7, 1.7),
        x_test_low=Interval(0.2, 0.4),
        x_test_high=Interval(1.6, 1.9),
        y_test_low=Interval(0.4, 0.6),
        y_test_high=Interval(1.8, 2.1),
        x_step=0.1,
        y_step=0.1,
    )
    return [("bipedal", bipedal), ("walker2d", walker2d), ("ant", ant)]


def builtin_presets() -> list[tuple[str, MorphologySpace]]:
    """All built-in morphology spaces: the three reference presets plus one
    per built-in environment (those reuse the environment's name)."""
    from . import envs

    presets = _paper_presets()
    presets.extend((c.name, c.morph_space) for c in envs.builtin_environments())
    return presets


def get_preset(name: str) -> MorphologySpace:
    for preset_name, space in builtin_presets():
        if preset_name == name:
            return space
    raise KeyError(f"unknown morphology preset {name!r}")
