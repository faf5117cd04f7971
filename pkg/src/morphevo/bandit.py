"""Adaptive morphology selection as a multi-armed bandit.

One arm per training-grid morphology.  Each arm holds a Beta posterior over
its utility; arms are chosen by Thompson sampling and updated from a binary
reward: whether this generation's validation score improved on the moving
average of the preceding ones.  Every update first decays all posteriors
toward the prior (factor gamma), which injects uncertainty so the learner
can track arms whose usefulness changes over a run.

Sign convention: the engine minimizes episode cost, so "improvement" means
the current validation cost is strictly BELOW the moving average.  This is
the same improvement semantics as a maximized capability beating its
moving average, just with the comparison flipped.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .morphospace import Morphology, MorphologyGrid


@dataclass
class BanditState:
    """Posterior state for one bandit schedule learner.

    alpha/beta hold one Beta(alpha_k, beta_k) posterior per arm; history is
    the ring buffer of the last `window` validation scores; last_choice is
    the arm picked this generation (None until thompson_select runs).
    """

    arms: tuple[Morphology, ...]
    alpha0: float = 1.0
    beta0: float = 1.0
    gamma: float = 0.1
    window: int = 10
    seed: int | None = None
    alpha: np.ndarray = field(init=False)
    beta: np.ndarray = field(init=False)
    history: deque = field(init=False)
    last_choice: int | None = field(init=False, default=None)
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.arms) < 1:
            raise ValueError("bandit needs at least one arm")
        if self.alpha0 <= 0 or self.beta0 <= 0:
            raise ValueError("priors must be positive")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        self.alpha = np.full(len(self.arms), float(self.alpha0))
        self.beta = np.full(len(self.arms), float(self.beta0))
        self.history = deque(maxlen=self.window)
        self.rng = np.random.default_rng(self.seed)

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @classmethod
    def from_grid(cls, grid: MorphologyGrid, **kwargs) -> "BanditState":
        return cls(arms=tuple(grid.points), **kwargs)


def thompson_select(state: BanditState) -> int:
    """Draw theta_k ~ Beta(alpha_k, beta_k) per arm, return the argmax.

    Ties break toward the lowest arm index.  Records the choice as
    state.last_choice.
    """
    theta = state.rng.beta(state.alpha, state.beta)
    choice = int(np.argmax(theta))
    state.last_choice = choice
    return choice


def compute_reward(state: BanditState, f_t: float) -> int:
    """Binary reward: 1 iff f_t strictly improves on the history mean.

    Costs are minimized, so improvement means f_t < mean(history).  An
    empty history (the run's first generations) yields 0: there is no
    baseline to beat yet.  f_t is pushed into the history afterwards.
    """
    if not np.isfinite(f_t):
        raise ValueError(f"validation score must be finite, got {f_t}")
    reward = 1 if state.history and f_t < float(np.mean(state.history)) else 0
    state.history.append(float(f_t))
    return reward


def update_posteriors(state: BanditState, reward: int) -> BanditState:
    """Decay every posterior toward the prior, then credit the chosen arm.

    All arms: (a, b) <- ((1-gamma) a + gamma a0, (1-gamma) b + gamma b0).
    The chosen arm additionally gains (+reward, +(1-reward)).  Positivity
    is preserved for any gamma in [0, 1] because the priors are positive.
    """
    if state.last_choice is None:
        raise ValueError("update_posteriors requires a preceding thompson_select")
    if reward not in (0, 1):
        raise ValueError(f"reward must be 0 or 1, got {reward}")
    g = state.gamma
    state.alpha = (1.0 - g) * state.alpha + g * state.alpha0
    state.beta = (1.0 - g) * state.beta + g * state.beta0
    k = state.last_choice
    state.alpha[k] += reward
    state.beta[k] += 1 - reward
    state.last_choice = None
    return state


def selection_frequencies(record, grid: MorphologyGrid) -> np.ndarray:
    """Per-cell selection counts of one run, shaped (rows, cols).

    `record` is any object with a `schedule_kind` attribute and a
    `choices` sequence of Morphology; only discrete and bandit schedules
    have countable cells.
    """
    kind = record.schedule_kind
    if kind not in ("discrete_random", "discrete_incremental", "bandit"):
        raise ValueError(
            f"schedule kind {kind!r} has no grid cells; selection counts need a discrete or bandit run"
        )
    counts = np.zeros((grid.rows, grid.cols))
    for m in record.choices:
        xi, yi = grid.cell_of(m)
        counts[yi, xi] += 1
    return counts
