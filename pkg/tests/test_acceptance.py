"""Acceptance suite: one test per criterion, one PASS line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.  The
two directional criteria (9 and 10) train four 10-run batches at full
episode length and dominate the runtime; they are seed-deterministic but
statistically flaky-tolerant (one retry with a shifted master seed).
"""

import itertools
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import beta as beta_fn
from scipy.stats import chi2 as chi2_dist

from morphevo import engine, envs, evalstats, heatmap, xnes
from morphevo.bandit import (
    BanditState,
    selection_frequencies,
    thompson_select,
    update_posteriors,
)
from morphevo.morphospace import (
    Morphology,
    build_testing_grid,
    build_training_grid,
    build_validation_grid,
    get_preset,
)
from morphevo.schedules import Schedule, sample_distribution_check


def report(criterion: int, message: str) -> None:
    print(f"[criterion {criterion:2d}] PASS - {message}")


def test_c01_set_size_fidelity():
    space = get_preset("bipedal")
    n_train = len(build_training_grid(space))
    n_test = len(build_testing_grid(space))
    n_val = len(build_validation_grid(space))
    assert n_train == 36
    assert n_test == 64
    assert n_val == 36
    report(1, f"bipedal grids train={n_train} test={n_test} validation={n_val}")


def test_c02_schedule_statistics():
    space = get_preset("bipedal")
    n = 100_000
    edge = {}
    for kind in ("beta", "cauchy", "gaussian"):
        stats = sample_distribution_check(Schedule(kind=kind, seed=202), space, n)
        edge[kind] = stats.x.edge_mass

    def pdf(u):
        return u ** (0.1 - 1.0) * (1.0 - u) ** (0.1 - 1.0) / beta_fn(0.1, 0.1)

    low, _ = quad(pdf, 0.0, 0.1, points=[0.0])
    high, _ = quad(pdf, 0.9, 1.0, points=[1.0])
    oracle = low + high
    assert edge["beta"] > edge["cauchy"] > edge["gaussian"]
    assert abs(edge["beta"] - oracle) <= 0.02
    report(
        2,
        f"edge mass beta={edge['beta']:.4f} (quadrature {oracle:.4f}) > "
        f"cauchy={edge['cauchy']:.4f} > gaussian={edge['gaussian']:.4f}",
    )


def test_c03_incremental_determinism():
    record = engine.train(
        engine.RunConfig(
            env_name="cartpole_vary",
            schedule_kind="discrete_incremental",
            max_generations=72,
            master_seed=3,
            episode_steps=5,
        )
    )
    grid = build_training_grid(envs.get_env("cartpole_vary").space)
    chosen = [(r.morph_x, r.morph_y) for r in record.rows]
    expected = [p.as_tuple() for p in grid.points] * 2
    assert chosen == expected
    counts = selection_frequencies(record, grid)
    assert np.all(counts == 2.0)
    report(3, "72-generation incremental run visited each of 36 cells exactly twice")


def test_c04_xnes_correctness():
    # sphere d=2
    sphere_hits = 0
    for seed in range(10):
        state = xnes.XnesState(dim=2, mu0=np.array([3.0, 3.0]), sigma0=1.0, seed=seed)
        best = math.inf
        for _ in range(150):
            samples = xnes.ask(state)
            for s in samples:
                s.cost = float(np.sum(s.genome**2))
            best = min(best, min(s.cost for s in samples))
            if best < 1e-8:
                break
            xnes.tell(state, samples)
        sphere_hits += best < 1e-8
    assert sphere_hits >= 9

    # rosenbrock d=4
    def rosenbrock(x):
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))

    rosen_hits = 0
    for seed in range(10):
        state = xnes.XnesState(dim=4, sigma0=1.0, seed=seed)
        best = math.inf
        for _ in range(3000):
            samples = xnes.ask(state)
            for s in samples:
                s.cost = rosenbrock(s.genome)
            best = min(best, min(s.cost for s in samples))
            if best < 1e-4:
                break
            xnes.tell(state, samples)
        rosen_hits += best < 1e-4
    assert rosen_hits >= 7

    # rotation invariance: paired trajectories with a shared z-stream
    from scipy.stats import ortho_group

    def ellipsoid(x):
        return float(np.sum(np.array([1.0, 4.0, 0.25]) * (x - np.array([1.0, -2.0, 0.5])) ** 2))

    rotation = ortho_group.rvs(3, random_state=np.random.default_rng(4))
    mu0 = np.array([2.0, 1.0, -1.0])
    plain = xnes.XnesState(dim=3, mu0=mu0, sigma0=0.7, seed=44)
    rotated = xnes.XnesState(dim=3, mu0=rotation @ mu0, sigma0=0.7, seed=44)
    rotated.b = rotation @ rotated.b
    for _ in range(100):
        sp = xnes.ask(plain)
        sr = xnes.ask(rotated)
        for a, b in zip(sp, sr):
            a.cost = ellipsoid(a.genome)
            b.cost = ellipsoid(rotation.T @ b.genome)
        np.testing.assert_allclose(
            [s.cost for s in sp], [s.cost for s in sr], rtol=1e-8
        )
        xnes.tell(plain, sp)
        xnes.tell(rotated, sr)

    # det(B) = 1 after 1e4 updates at the controller dimension
    state = xnes.XnesState(dim=96, seed=7)
    cost_rng = np.random.default_rng(123)
    for _ in range(10_000):
        samples = xnes.ask(state)
        for s in samples:
            s.cost = float(cost_rng.standard_normal())
        xnes.tell(state, samples)
    det_err = abs(np.linalg.det(state.b) - 1.0)
    assert det_err <= 1e-6
    report(
        4,
        f"sphere {sphere_hits}/10, rosenbrock {rosen_hits}/10, rotation-invariant "
        f"trajectories, |det(B)-1|={det_err:.2e} after 1e4 updates",
    )


def test_c05_bandit_unit_fidelity():
    arms = tuple(Morphology(float(i), 0.0) for i in range(2))

    # worked decay example at gamma=0.1
    state = BanditState(arms=arms, gamma=0.1, alpha0=1.0, beta0=1.0, seed=0)
    state.alpha[:] = [3.0, 3.0]
    state.beta[:] = [2.0, 2.0]
    state.last_choice = 0
    update_posteriors(state, 1)
    assert abs(state.alpha[0] - 3.8) <= 1e-12
    assert abs(state.beta[0] - 1.9) <= 1e-12

    # gamma = 1 resets to priors
    state = BanditState(arms=arms, gamma=1.0, alpha0=2.0, beta0=3.0, seed=0)
    state.alpha[:] = [50.0, 60.0]
    state.beta[:] = [70.0, 80.0]
    state.last_choice = 0
    update_posteriors(state, 0)
    assert state.alpha[1] == 2.0 and state.beta[1] == 3.0

    # gamma = 0 recovers exact conjugate counts
    state = BanditState(arms=arms, gamma=0.0, alpha0=1.0, beta0=1.0, seed=0)
    rng = np.random.default_rng(5)
    wins = plays = 0
    for _ in range(200):
        r = int(rng.integers(2))
        state.last_choice = 0
        update_posteriors(state, r)
        wins += r
        plays += 1
    assert state.alpha[0] == 1.0 + wins
    assert state.beta[0] == 1.0 + plays - wins
    report(5, "decay update matches direct substitution; gamma=1 resets; gamma=0 conjugate")


def test_c06_bandit_learning():
    arms4 = tuple(Morphology(float(i), 0.0) for i in range(4))

    # stationary: best arm found
    stationary_hits = 0
    for seed in range(10):
        state = BanditState(arms=arms4, gamma=0.01, seed=seed)
        env_rng = np.random.default_rng(seed + 10_000)
        probs = np.array([0.9, 0.1, 0.1, 0.1])
        choices = []
        for _ in range(1000):
            k = thompson_select(state)
            choices.append(k)
            update_posteriors(state, int(env_rng.random() < probs[k]))
        stationary_hits += np.mean(np.array(choices[-500:]) == 0) > 0.6
    assert stationary_hits >= 9

    # non-stationary swap: decay adapts, frozen posteriors do not
    def run_swap(gamma, seed):
        probs1 = np.array([0.9, 0.1, 0.1, 0.1])
        probs2 = np.array([0.1, 0.9, 0.1, 0.1])
        state = BanditState(arms=arms4, gamma=gamma, seed=seed)
        env_rng = np.random.default_rng(seed + 20_000)
        for t in range(1000):
            state.last_choice = t % 4
            update_posteriors(state, int(env_rng.random() < probs1[t % 4]))
        choices = []
        for _ in range(1000):
            k = thompson_select(state)
            choices.append(k)
            update_posteriors(state, int(env_rng.random() < probs2[k]))
        return np.mean(np.array(choices[-500:]) == 1)

    adapt = sum(run_swap(0.05, seed) > 0.5 for seed in range(10))
    frozen = sum(run_swap(0.0, seed) > 0.5 for seed in range(10))
    assert adapt >= 8
    assert frozen <= 2
    report(
        6,
        f"stationary best-arm {stationary_hits}/10; swap tracked {adapt}/10 with decay, "
        f"{frozen}/10 without",
    )


def test_c07_mann_whitney_oracle():
    result = evalstats.mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert result.u_statistic == 0.0
    assert result.p_value == 0.1

    def oracle(a, b):
        pooled = list(a) + list(b)
        n, n_a = len(pooled), len(a)

        def pair_u(group):
            complement = [pooled[i] for i in range(n) if i not in set(group)]
            u = 0.0
            for x in (pooled[i] for i in group):
                for y in complement:
                    u += 1.0 if x > y else 0.5 if x == y else 0.0
            return u

        mean_u = n_a * (n - n_a) / 2.0
        dev = abs(pair_u(tuple(range(n_a))) - mean_u)
        labelings = list(itertools.combinations(range(n), n_a))
        extreme = sum(1 for c in labelings if abs(pair_u(c) - mean_u) >= dev)
        return extreme / len(labelings)

    rng = np.random.default_rng(7)
    for _ in range(200):
        n_a = int(rng.integers(1, 9))
        n_b = int(rng.integers(1, 11 - n_a))
        a = list(rng.integers(-4, 5, size=n_a))
        b = list(rng.integers(-4, 5, size=n_b))
        r = evalstats.mann_whitney_u(a, b)
        assert r.method == "exact"
        assert r.p_value == oracle(a, b)  # bit-for-bit
    report(7, "exact p equals enumeration oracle on 200 random instances (bit-for-bit)")


def test_c08_engine_replay(tmp_path):
    cfg = dict(
        env_name="cartpole_vary",
        schedule_kind="discrete_random",
        max_generations=50,
        master_seed=88,
    )
    engine.train(engine.RunConfig(output_dir=str(tmp_path / "a"), **cfg))
    engine.train(engine.RunConfig(output_dir=str(tmp_path / "b"), **cfg))
    a = (tmp_path / "a" / "generations.csv").read_bytes()
    b = (tmp_path / "b" / "generations.csv").read_bytes()
    assert a == b

    batch_cfg = engine.RunConfig(
        env_name="cartpole_vary",
        schedule_kind="discrete_random",
        max_generations=10,
        master_seed=89,
    )
    engine.run_batch(batch_cfg, 2, tmp_path / "serial", parallelism=1)
    engine.run_batch(batch_cfg, 2, tmp_path / "parallel", parallelism=8)
    for i in range(2):
        sa = (tmp_path / "serial" / f"run_{i:03d}" / "generations.csv").read_bytes()
        pa = (tmp_path / "parallel" / f"run_{i:03d}" / "generations.csv").read_bytes()
        assert sa == pa
    report(8, "same-seed 50-generation reruns byte-identical; parallelism 1 == 8")


def _train_batch(kind, master_seed, n_runs, out_dir, generations=300, **extra):
    cfg = engine.RunConfig(
        env_name="cartpole_vary",
        schedule_kind=kind,
        max_generations=generations,
        master_seed=master_seed,
        **extra,
    )
    return engine.run_batch(cfg, n_runs, out_dir, parallelism=2)


def test_c09_directional_replication(tmp_path):
    env = envs.get_env("cartpole_vary")

    def attempt(master_seed, tag):
        beta_records = _train_batch("beta", master_seed, 10, tmp_path / f"beta_{tag}")
        center_records = _train_batch(
            "gaussian", master_seed, 10, tmp_path / f"center_{tag}", sigma_frac=0.0
        )
        beta_scores = evalstats.batch_scores(beta_records, env, "test_mean")
        center_scores = evalstats.batch_scores(center_records, env, "test_mean")
        result = evalstats.mann_whitney_u(beta_scores, center_scores)
        ok = result.median_a < result.median_b and result.p_value < 0.05
        return ok, result

    ok, result = attempt(900, "try1")
    if not ok:  # flaky-tolerant: one rerun with a shifted master seed
        ok, result = attempt(901, "try2")
    assert ok, (
        f"beta median {result.median_a} vs fixed-center {result.median_b}, "
        f"p={result.p_value}"
    )
    report(
        9,
        f"beta test median {result.median_a:.4g} < fixed-center {result.median_b:.4g}, "
        f"p={result.p_value:.4g}",
    )


def test_c10_mab_sanity(tmp_path):
    env = envs.get_env("cartpole_vary")
    grid = build_training_grid(env.space)

    def attempt(master_seed, tag):
        mab_records = _train_batch("bandit", master_seed, 10, tmp_path / f"mab_{tag}")
        rand_records = _train_batch(
            "discrete_random", master_seed, 10, tmp_path / f"rand_{tag}"
        )
        pooled = np.sum([selection_frequencies(r, grid) for r in mab_records], axis=0)
        total = pooled.sum()
        expected = total / pooled.size
        chi2_stat = float(np.sum((pooled - expected) ** 2 / expected))
        chi2_p = float(chi2_dist.sf(chi2_stat, pooled.size - 1))

        mab_scores = evalstats.batch_scores(mab_records, env, "test_mean")
        rand_scores = evalstats.batch_scores(rand_records, env, "test_mean")
        comparison = evalstats.mann_whitney_u(mab_scores, rand_scores)
        worse = comparison.median_a > comparison.median_b and comparison.p_value < 0.05
        return chi2_p < 0.05 and not worse, chi2_stat, chi2_p, comparison

    ok, chi2_stat, chi2_p, comparison = attempt(910, "try1")
    if not ok:
        ok, chi2_stat, chi2_p, comparison = attempt(911, "try2")
    assert ok, f"chi2 p={chi2_p}, MAB vs random p={comparison.p_value}"
    report(
        10,
        f"selection non-uniform (chi2={chi2_stat:.1f}, p={chi2_p:.3g}); MAB test median "
        f"{comparison.median_a:.4g} not significantly worse than random "
        f"{comparison.median_b:.4g} (p={comparison.p_value:.3g})",
    )


def test_c11_reporting_fidelity(tmp_path):
    assert evalstats.significance_stars(0.049) == "*"
    assert evalstats.significance_stars(0.009) == "**"
    assert evalstats.significance_stars(0.05) == ""
    assert evalstats.significance_stars(0.5) == ""

    rng = np.random.default_rng(11)
    matrix = rng.uniform(-3, 3, size=(5, 7))
    svg = heatmap.render_heatmap_svg(matrix, list(range(7)), list(range(5)))
    heatmap.write_matrix_csv(tmp_path / "m.csv", matrix, list(range(7)), list(range(5)))
    csv_matrix, _, _ = heatmap.read_matrix_csv(tmp_path / "m.csv")
    svg_matrix = np.array(heatmap.svg_cell_values(svg)).reshape(5, 7)
    np.testing.assert_array_equal(csv_matrix, matrix)
    np.testing.assert_array_equal(svg_matrix, matrix)
    report(11, "stars follow * p<0.05 / ** p<0.01; SVG and CSV heatmap values identical")
