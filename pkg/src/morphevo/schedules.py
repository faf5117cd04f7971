"""Training schedules: the policy choosing the morphology at each generation.

Six predefined kinds.  The two discrete kinds pick grid points; the four
continuous kinds sample the training box with different densities (uniform,
gaussian and cauchy centered on the box, beta pushed toward the edges).
The adaptive bandit schedule lives in ``morphevo.bandit``; the engine wires
it in by arm index over the same training grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .morphospace import Interval, Morphology, MorphologyGrid, MorphologySpace

DISCRETE_KINDS = ("discrete_random", "discrete_incremental")
CONTINUOUS_KINDS = ("uniform", "gaussian", "cauchy", "beta")
SCHEDULE_KINDS = DISCRETE_KINDS + CONTINUOUS_KINDS + ("bandit",)

# Defaults for the continuous kinds.  Sigma and scale are fractions of the
# axis half-range: sigma_frac = 1/3 puts +-3 sigma at the box edges.
DEFAULT_SIGMA_FRAC = 1.0 / 3.0
DEFAULT_SCALE_FRAC = 1.0 / 6.0
DEFAULT_BETA_A = 0.1
DEFAULT_BETA_B = 0.1

# Out-of-box rejection resampling cap, after which the draw is clamped.
REJECTION_CAP = 100


@dataclass
class Schedule:
    """A schedule kind, its parameters, and its owned random stream.

    A Schedule instance is owned by a single training loop; independent
    runs construct independent instances with seeds derived from
    (master_seed, run_index).
    """

    kind: str
    sigma_frac: float = DEFAULT_SIGMA_FRAC
    scale_frac: float = DEFAULT_SCALE_FRAC
    beta_a: float = DEFAULT_BETA_A
    beta_b: float = DEFAULT_BETA_B
    gamma: float = 0.1
    alpha0: float = 1.0
    beta0: float = 1.0
    window: int = 10
    seed: int | None = None
    rng: np.random.Generator = field(init=False, repr=False)
    clamp_count: int = field(init=False, default=0)

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "gaussian" and self.sigma_frac < 0:
            raise ValueError("sigma_frac must be >= 0")
        if self.kind == "cauchy" and self.scale_frac <= 0:
            raise ValueError("scale_frac must be positive")
        if self.kind == "beta" and (self.beta_a <= 0 or self.beta_b <= 0):
            raise ValueError("beta parameters must be positive")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")
        if self.alpha0 <= 0 or self.beta0 <= 0:
            raise ValueError("bandit priors must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        self.rng = np.random.default_rng(self.seed)


def affine_to_interval(u: float, interval: Interval) -> float:
    """Map u in [0, 1] affinely onto the interval (0 -> lo, 1 -> hi)."""
    return interval.lo + u * interval.span


def _clamp(v: float, interval: Interval) -> float:
    return min(max(v, interval.lo), interval.hi)


def _rejection_sample(draw, interval: Interval, schedule: Schedule) -> float:
    """Draw until the value lands inside the interval, capped then clamped."""
    for _ in range(REJECTION_CAP):
        v = draw()
        if interval.lo <= v <= interval.hi:
            return v
    schedule.clamp_count += 1
    return _clamp(v, interval)


def _sample_axis(schedule: Schedule, interval: Interval, half: float) -> float:
    rng = schedule.rng
    if schedule.kind == "uniform":
        return rng.uniform(interval.lo, interval.hi)
    if schedule.kind == "gaussian":
        sigma = schedule.sigma_frac * half
        return _rejection_sample(lambda: rng.normal(interval.mid, sigma), interval, schedule)
    if schedule.kind == "cauchy":
        scale = schedule.scale_frac * half
        return _rejection_sample(
            lambda: interval.mid + scale * rng.standard_cauchy(), interval, schedule
        )
    if schedule.kind == "beta":
        return affine_to_interval(rng.beta(schedule.beta_a, schedule.beta_b), interval)
    raise ValueError(f"kind {schedule.kind!r} is not a continuous schedule")


def next_morphology(
    schedule: Schedule,
    space: MorphologySpace,
    grid: MorphologyGrid,
    generation: int,
) -> Morphology:
    """Choose the training morphology for this generation.

    Discrete kinds index the grid (random uniform, or x-major cycling with
    period len(grid)); continuous kinds sample each axis independently
    inside the training box.
    """
    if generation < 0:
        raise ValueError("generation must be >= 0")
    if schedule.kind == "discrete_random":
        return grid.points[int(schedule.rng.integers(len(grid)))]
    if schedule.kind == "discrete_incremental":
        return grid.points[generation % len(grid)]
    if schedule.kind in CONTINUOUS_KINDS:
        x = _sample_axis(schedule, space.x_train, 0.5 * space.x_train.span)
        y = _sample_axis(schedule, space.y_train, 0.5 * space.y_train.span)
        return Morphology(x, y)
    raise ValueError(f"schedule kind {schedule.kind!r} is not drawn here")


@dataclass(frozen=True)
class AxisStats:
    mean: float
    variance: float
    edge_mass: float


@dataclass(frozen=True)
class DistributionCheck:
    """Empirical per-axis statistics over n schedule draws.

    edge_mass is the fraction of draws in the outer 10% of the axis
    (normalized coordinate u < 0.1 or u > 0.9).
    """

    n: int
    x: AxisStats
    y: AxisStats
    exact_cycle: bool = False


def _axis_stats(values: np.ndarray, interval: Interval) -> AxisStats:
    u = (values - interval.lo) / interval.span
    edge = float(np.mean((u < 0.1) | (u > 0.9)))
    return AxisStats(float(np.mean(values)), float(np.var(values)), edge)


def sample_distribution_check(
    schedule: Schedule,
    space: MorphologySpace,
    n: int,
    grid: MorphologyGrid | None = None,
) -> DistributionCheck:
    """Empirical mean/variance/edge-mass per axis over n draws.

    discrete_incremental is deterministic, so it reports the exact
    statistics of one full cycle instead of n random draws.
    """
    if n < 1000:
        raise ValueError("n must be >= 1000 for stable statistics")
    if schedule.kind in DISCRETE_KINDS and grid is None:
        from .morphospace import build_training_grid

        grid = build_training_grid(space)
    if schedule.kind == "discrete_incremental":
        xs = np.array([p.x for p in grid.points])
        ys = np.array([p.y for p in grid.points])
        return DistributionCheck(
            n=len(grid),
            x=_axis_stats(xs, space.x_train),
            y=_axis_stats(ys, space.y_train),
            exact_cycle=True,
        )
    draws = [next_morphology(schedule, space, grid, i) for i in range(n)]
    xs = np.array([m.x for m in draws])
    ys = np.array([m.y for m in draws])
    return DistributionCheck(
        n=n,
        x=_axis_stats(xs, space.x_train),
        y=_axis_stats(ys, space.y_train),
    )
