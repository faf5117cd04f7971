"""Post-training evaluation and statistics.

Robustness is the mean episode cost over the training-range grid
(in-distribution); generalization is the mean over the testing grid
(out-of-distribution).  Cross-batch comparisons use the Mann-Whitney U
test: exact two-sided p by enumerating group labelings for small samples,
a tie-corrected normal approximation with continuity correction above
that.  Heatmaps (selection frequency and per-morphology performance) are
emitted as SVG + CSV pairs carrying identical values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import heatmap
from .bandit import selection_frequencies
from .engine import ROLE_EVAL, derive_seed, episode_costs
from .morphospace import (
    MorphologyGrid,
    MorphologySpace,
    build_full_grid,
    build_testing_grid,
    build_training_grid,
)

# Largest pooled sample size for which the exact enumeration p is used.
EXACT_ENUMERATION_MAX = 20

METRICS = ("train_mean", "test_mean", "all_mean")

# Default base seed for post-training evaluation; fixed so every genome
# (across runs and batches) faces the same episode per grid cell, making
# comparisons paired at the episode level.
DEFAULT_EVAL_SEED = 0


@dataclass(frozen=True)
class GridEvaluation:
    """Per-cell costs of one (or averaged) controller over a grid.

    The matrix has the full lattice shape with NaN at cells the grid does
    not contain (the testing grid is a punctured lattice).
    """

    grid: MorphologyGrid
    per_cell_cost: np.ndarray
    mean_cost: float
    set_kind: str


@dataclass(frozen=True)
class ComparisonResult:
    group_a: tuple[float, ...]
    group_b: tuple[float, ...]
    u_statistic: float
    u_b: float
    p_value: float
    significant: bool
    median_a: float
    median_b: float
    method: str


def cell_seed(seed_base: int, x: float, y: float) -> int:
    """Episode seed for one physical grid cell, derived from the exact bit
    patterns of its coordinates.  The same morphology gets the same seed
    in every grid (train, test, full) and for every genome, so
    comparisons are paired at the episode level."""
    return derive_seed(
        seed_base,
        ROLE_EVAL,
        int(np.float64(x).view(np.uint64)),
        int(np.float64(y).view(np.uint64)),
    )


def evaluate_on_grid(
    env,
    spec,
    genome: np.ndarray,
    grid: MorphologyGrid,
    seed_base: int = DEFAULT_EVAL_SEED,
    set_kind: str = "all",
) -> GridEvaluation:
    """One seeded episode per grid cell; seeds depend only on the cell, so
    different genomes are compared on identical episodes."""
    cells = [grid.cell_of(p) for p in grid.points]
    seeds = np.array(
        [cell_seed(seed_base, p.x, p.y) for p in grid.points],
        dtype=np.uint64,
    )
    morphs = np.array([[p.x, p.y] for p in grid.points])
    costs = episode_costs(env, morphs, spec, genome, seeds)
    matrix = np.full((grid.rows, grid.cols), np.nan)
    for (xi, yi), cost in zip(cells, costs):
        matrix[yi, xi] = cost
    return GridEvaluation(
        grid=grid,
        per_cell_cost=matrix,
        mean_cost=float(np.mean(costs)),
        set_kind=set_kind,
    )


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled))
    sorted_vals = pooled[order]
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # midrank of a tie block spanning ranks i+1 .. j+1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(ranks: np.ndarray, n_a: int, dev_obs: float) -> float:
    """Permutation p-value: the fraction of group-a labelings whose U
    deviates from the null mean by at least the observed deviation.

    Ranks are midranks, so every U is an exact multiple of 0.5 and the
    comparisons below are exact in float64.
    """
    n = len(ranks)
    mean_u = n_a * (n - n_a) / 2.0
    offset = n_a * (n_a + 1) / 2.0
    extreme = 0
    total = 0
    for combo in itertools.combinations(range(n), n_a):
        u = ranks[list(combo)].sum() - offset
        if abs(u - mean_u) >= dev_obs:
            extreme += 1
        total += 1
    return extreme / total


def _normal_two_sided_p(pooled: np.ndarray, n_a: int, dev_obs: float) -> float:
    """Tie-corrected normal approximation with continuity correction."""
    n = len(pooled)
    n_b = n - n_a
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts.astype(np.float64) ** 3 - counts))
    variance = (n_a * n_b / 12.0) * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    if variance <= 0:
        return 1.0
    z = max(0.0, dev_obs - 0.5) / math.sqrt(variance)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def mann_whitney_u(a, b) -> ComparisonResult:
    """Two-sided Mann-Whitney U test with 0.5 credit for ties.

    U_a counts pairs where a exceeds b (plus half the ties); exact
    enumeration is used when the pooled size is at most 20, the normal
    approximation beyond that.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if not a or not b:
        raise ValueError("both groups must be nonempty")
    n_a, n_b = len(a), len(b)
    pooled = np.array(a + b)
    ranks = _midranks(pooled)
    u_a = float(np.sum(ranks[:n_a]) - n_a * (n_a + 1) / 2.0)
    u_b = n_a * n_b - u_a
    dev_obs = abs(u_a - n_a * n_b / 2.0)

    if n_a + n_b <= EXACT_ENUMERATION_MAX:
        p = _exact_two_sided_p(ranks, n_a, dev_obs)
        method = "exact"
    else:
        p = _normal_two_sided_p(pooled, n_a, dev_obs)
        method = "normal"

    return ComparisonResult(
        group_a=tuple(a),
        group_b=tuple(b),
        u_statistic=u_a,
        u_b=u_b,
        p_value=p,
        significant=p < 0.05,
        median_a=float(np.median(a)),
        median_b=float(np.median(b)),
        method=method,
    )


def significance_stars(p: float) -> str:
    """Reporting convention: '*' for p < 0.05, '**' for p < 0.01."""
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def frequency_heatmap(
    records,
    grid: MorphologyGrid,
    svg_path=None,
    csv_path=None,
    title: str = "morphology selection frequency",
) -> np.ndarray:
    """Per-cell mean selection count across runs; darker = selected more."""
    records = list(records)
    if not records:
        raise ValueError("frequency_heatmap needs at least one run record")
    counts = [selection_frequencies(record, grid) for record in records]
    matrix = np.mean(counts, axis=0)
    if svg_path is not None:
        Path(svg_path).write_text(
            heatmap.render_heatmap_svg(
                matrix,
                grid.x_values,
                grid.y_values,
                title=title,
                darker_high=True,
                label_fmt="{:.4g}",
            )
        )
    if csv_path is not None:
        heatmap.write_matrix_csv(csv_path, matrix, grid.x_values, grid.y_values)
    return matrix


def _train_border(space: MorphologySpace, full_grid: MorphologyGrid):
    train = build_training_grid(space)
    x_lo = full_grid.x_values.index(train.x_values[0])
    y_lo = full_grid.y_values.index(train.y_values[0])
    return (
        range(x_lo, x_lo + train.cols),
        range(y_lo, y_lo + train.rows),
    )


def performance_heatmap(
    env,
    spec,
    genomes,
    svg_path=None,
    csv_path=None,
    seed_base: int = DEFAULT_EVAL_SEED,
    title: str = "mean cost per morphology",
) -> np.ndarray:
    """Per-cell mean cost of the given genomes over the FULL grid.

    The training region is outlined in red; darker shades mean lower cost
    (better), matching the minimization convention.
    """
    genomes = list(genomes)
    if not genomes:
        raise ValueError("performance_heatmap needs at least one genome")
    space = env.space
    full_grid = build_full_grid(space)
    evaluations = [
        evaluate_on_grid(env, spec, g, full_grid, seed_base=seed_base, set_kind="all")
        for g in genomes
    ]
    matrix = np.mean([e.per_cell_cost for e in evaluations], axis=0)
    if svg_path is not None:
        Path(svg_path).write_text(
            heatmap.render_heatmap_svg(
                matrix,
                full_grid.x_values,
                full_grid.y_values,
                title=title,
                x_label=space.x_name,
                y_label=space.y_name,
                darker_high=False,
                train_border=_train_border(space, full_grid),
                label_fmt="{:.3g}",
            )
        )
    if csv_path is not None:
        heatmap.write_matrix_csv(csv_path, matrix, full_grid.x_values, full_grid.y_values)
    return matrix


def batch_scores(records, env, metric: str, seed_base: int = DEFAULT_EVAL_SEED) -> list[float]:
    """Per-run metric values: each run's final generalist evaluated on the
    metric's grid."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    space = env.space
    grid = {
        "train_mean": build_training_grid(space),
        "test_mean": build_testing_grid(space),
        "all_mean": build_full_grid(space),
    }[metric]
    kind = metric.split("_")[0]
    return [
        evaluate_on_grid(env, r.controller, r.final_entry.genome, grid, seed_base, kind).mean_cost
        for r in records
    ]


def compare_schedules(
    batch_a,
    batch_b,
    env,
    metric: str,
    label_a: str = "A",
    label_b: str = "B",
    seed_base: int = DEFAULT_EVAL_SEED,
) -> tuple[ComparisonResult, dict]:
    """Mann-Whitney comparison of two batches on one metric, plus the
    report row (medians, U, p, significance stars)."""
    scores_a = batch_scores(batch_a, env, metric, seed_base)
    scores_b = batch_scores(batch_b, env, metric, seed_base)
    result = mann_whitney_u(scores_a, scores_b)
    row = {
        "schedule_a": label_a,
        "schedule_b": label_b,
        "metric": metric,
        "median_a": result.median_a,
        "median_b": result.median_b,
        "u_statistic": result.u_statistic,
        "p_value": result.p_value,
        "stars": significance_stars(result.p_value),
    }
    return result, row
