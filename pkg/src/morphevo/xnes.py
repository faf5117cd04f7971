"""Exponential natural evolution strategy over flat genome vectors.

The search distribution is N(mu, sigma^2 B B^T) with a scalar step size
sigma and a unit-determinant shape matrix B.  Each iteration samples
lambda standard-normal z vectors, maps them through the distribution,
ranks the evaluated costs (ascending; this whole framework minimizes),
and applies natural-gradient updates with fixed rank-based utility
weights.  The B update exponent is made trace-free so det(B) stays 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


def default_population(d: int) -> int:
    """Standard population size 4 + floor(3 ln d)."""
    return 4 + int(math.floor(3.0 * math.log(d)))


def default_eta_sigma(d: int) -> float:
    """Standard step-size/shape learning rate (9 + 3 ln d) / (5 d sqrt(d))."""
    return (9.0 + 3.0 * math.log(d)) / (5.0 * d * math.sqrt(d))


def utility_weights(lam: int) -> np.ndarray:
    """Rank-based utilities: log-shaped, normalized, baseline-subtracted.

    u_k = max(0, ln(lam/2 + 1) - ln k) / sum(...) - 1/lam for rank k
    (1-indexed, best rank first).  They sum to zero and are fixed for the
    whole run, so updates depend on cost ranks only.
    """
    raw = np.maximum(0.0, np.log(lam / 2.0 + 1.0) - np.log(np.arange(1, lam + 1)))
    return raw / np.sum(raw) - 1.0 / lam


@dataclass
class XnesSample:
    """One sampled genome with its standard-normal draw and episode cost."""

    z: np.ndarray
    genome: np.ndarray
    cost: float = math.nan


@dataclass
class XnesState:
    """Search distribution state plus learning rates and the run's rng."""

    dim: int
    population: int | None = None
    eta_mu: float = 1.0
    eta_sigma: float | None = None
    eta_b: float | None = None
    sigma0: float = 1.0
    mu0: np.ndarray | None = None
    seed: int | None = None
    mu: np.ndarray = field(init=False)
    sigma: float = field(init=False)
    b: np.ndarray = field(init=False)
    utilities: np.ndarray = field(init=False)
    rng: np.random.Generator = field(init=False, repr=False)
    iteration: int = field(init=False, default=0)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.population is None:
            self.population = default_population(self.dim)
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.eta_sigma is None:
            self.eta_sigma = default_eta_sigma(self.dim)
        if self.eta_b is None:
            self.eta_b = default_eta_sigma(self.dim)
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        self.mu = (
            np.zeros(self.dim) if self.mu0 is None else np.asarray(self.mu0, dtype=np.float64)
        )
        if self.mu.shape != (self.dim,):
            raise ValueError("mu0 shape does not match dim")
        self.sigma = float(self.sigma0)
        self.b = np.eye(self.dim)
        self.utilities = utility_weights(self.population)
        self.rng = np.random.default_rng(self.seed)


def ask(state: XnesState) -> list[XnesSample]:
    """Sample lambda genomes: z ~ N(0, I), genome = mu + sigma * B z."""
    z = state.rng.standard_normal((state.population, state.dim))
    genomes = state.mu + state.sigma * (z @ state.b.T)
    return [XnesSample(z=z[k], genome=genomes[k]) for k in range(state.population)]


def _cost_keys(samples: list[XnesSample]) -> np.ndarray:
    # Non-finite costs rank as worst rather than aborting the run.
    costs = np.array([s.cost for s in samples], dtype=np.float64)
    return np.where(np.isfinite(costs), costs, np.inf)


def tell(state: XnesState, samples: list[XnesSample]) -> XnesState:
    """Natural-gradient update of (mu, sigma, B) from evaluated samples.

    Samples are ranked by cost ascending (ties and non-finite costs keep
    submission order at the back).  If every cost is identical there is no
    ranking information and the state is left unchanged.
    """
    if len(samples) != state.population:
        raise ValueError(f"expected {state.population} samples, got {len(samples)}")
    state.iteration += 1
    keys = _cost_keys(samples)
    if np.all(keys == keys[0]):
        return state
    order = np.argsort(keys, kind="stable")
    zs = np.stack([samples[k].z for k in order])
    u = state.utilities

    g_delta = u @ zs
    g_m = np.einsum("k,ki,kj->ij", u, zs, zs) - np.sum(u) * np.eye(state.dim)
    g_sigma = np.trace(g_m) / state.dim
    g_b = g_m - g_sigma * np.eye(state.dim)

    state.mu = state.mu + state.eta_mu * state.sigma * (state.b @ g_delta)
    state.sigma = state.sigma * math.exp(0.5 * state.eta_sigma * g_sigma)
    state.b = state.b @ expm(0.5 * state.eta_b * g_b)
    return state


def best_of(samples: list[XnesSample]) -> XnesSample:
    """Minimum-cost sample; ties break to the lowest index."""
    if not samples:
        raise ValueError("best_of needs at least one sample")
    keys = _cost_keys(samples)
    if not np.any(np.isfinite(keys)):
        raise ValueError("all sample costs are non-finite")
    return samples[int(np.argmin(keys))]
