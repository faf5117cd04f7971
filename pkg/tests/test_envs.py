"""Built-in environment dynamics, costs, and the batched rollout kernel."""

import numpy as np
import pytest

from morphevo import neuro
from morphevo.envs import (
    STEP_COST_CAP,
    builtin_environments,
    get_env,
    run_episode,
    run_episode_batch,
    wrap_angle,
)
from morphevo.morphospace import Morphology, build_testing_grid, build_training_grid

ALL_ENVS = ("cartpole_vary", "reacher_vary", "acrobot_vary")


def zero_controller(env):
    spec = neuro.ControllerSpec(env.obs_dim, env.act_dim)
    return spec, np.zeros(spec.genome_length)


def random_controller(env, seed, scale=0.3):
    spec = neuro.ControllerSpec(env.obs_dim, env.act_dim)
    rng = np.random.default_rng(seed)
    return spec, rng.standard_normal(spec.genome_length) * scale


class TestContracts:
    @pytest.mark.parametrize("name", ALL_ENVS)
    def test_train_grid_is_36_test_is_64(self, name):
        env = get_env(name)
        assert len(build_training_grid(env.space)) == 36
        assert len(build_testing_grid(env.space)) == 64

    def test_builtin_listing(self):
        contracts = builtin_environments()
        assert [c.name for c in contracts] == list(ALL_ENVS)
        for c in contracts:
            assert c.episode_steps == 1000
            assert c.dt == 0.02

    def test_unknown_env(self):
        with pytest.raises(KeyError):
            get_env("mujoco_ant")

    def test_episode_steps_override(self):
        env = get_env("cartpole_vary", episode_steps=50)
        assert env.episode_steps == 50


class TestCartpole:
    def test_equilibrium_zero_cost(self):
        env = get_env("cartpole_vary")
        spec, genome = zero_controller(env)
        result = run_episode(
            env, Morphology(0.8, 0.275), spec, genome, seed=0,
            initial_state={"x": 0.0, "xdot": 0.0, "th": 0.0, "thdot": 0.0},
        )
        assert result.cost == 0.0
        assert not result.terminated_early

    def test_tilted_pole_positive_cost(self):
        env = get_env("cartpole_vary")
        spec, genome = zero_controller(env)
        result = run_episode(
            env, Morphology(0.8, 0.275), spec, genome, seed=0,
            initial_state={"x": 0.0, "xdot": 0.0, "th": 0.05, "thdot": 0.0},
        )
        assert result.cost > 0.0

    def test_energy_conservation_zero_force(self):
        # gentle swing around hanging; semi-implicit Euler keeps the
        # mechanical energy of the 4/3-factor model within 1e-3 relative
        env = get_env("cartpole_vary")
        morphs = np.array([[0.8, 0.275]])
        state = {
            "x": np.array([0.0]),
            "xdot": np.array([0.0]),
            "th": np.array([np.pi - 0.15]),
            "thdot": np.array([0.0]),
        }
        e0 = env.mechanical_energy(state, morphs)[0]
        actions = np.zeros((1, 1))
        for t in range(1000):
            state, _ = env.step(state, actions, morphs, t)
            e = env.mechanical_energy(state, morphs)[0]
            assert abs(e - e0) <= 1e-3 * abs(e0)

    def test_force_map_exact_at_endpoints(self):
        env = get_env("cartpole_vary")
        assert env.scale_action(np.array([[1.0]]))[0] == 10.0
        assert env.scale_action(np.array([[-1.0]]))[0] == -10.0

    def test_divergent_morphology_pays_capped_cost(self):
        # zero pole length blows the dynamics up on the first step
        env = get_env("cartpole_vary", episode_steps=100)
        spec, genome = zero_controller(env)
        results = run_episode_batch(
            env, np.array([[0.0, 0.1]]), spec, [genome],
            np.array([3], dtype=np.uint64),
        )
        assert results[0].terminated_early
        assert results[0].cost == STEP_COST_CAP * 100
        assert results[0].steps_executed == 0


class TestReacher:
    def test_degenerate_lengths_give_closed_form_cost(self):
        # zero-length links pin the tip at the origin: the cost is the
        # integral of the squared target distance, computable exactly
        env = get_env("reacher_vary", episode_steps=1000)
        spec, genome = zero_controller(env)
        morphs = np.array([[0.0, 0.0]])
        seeds = np.array([11], dtype=np.uint64)
        state = env.initial_state(morphs, seeds)
        targets = state["targets"][0]
        expected = 0.0
        for t in range(1000):
            seg = min(t // 250, 3)
            expected += (targets[seg, 0] ** 2 + targets[seg, 1] ** 2) * env.dt
        result = run_episode_batch(env, morphs, spec, [genome], seeds)[0]
        np.testing.assert_allclose(result.cost, expected, rtol=1e-12)

    def test_targets_seeded_and_reachable_annulus(self):
        env = get_env("reacher_vary")
        morphs = np.array([[0.7, 0.6], [0.7, 0.6]])
        seeds = np.array([5, 5], dtype=np.uint64)
        state = env.initial_state(morphs, seeds)
        np.testing.assert_array_equal(state["targets"][0], state["targets"][1])
        radii = np.linalg.norm(state["targets"][0], axis=1)
        assert np.all(radii >= 0.3) and np.all(radii <= 0.5)


class TestAcrobot:
    def test_cost_zero_only_when_inverted(self):
        env = get_env("acrobot_vary")
        morphs = np.array([[0.8, 0.7]])
        hanging = {
            "q1": np.array([0.0]), "q2": np.array([0.0]),
            "dq1": np.array([0.0]), "dq2": np.array([0.0]),
        }
        assert env.tip_height(hanging, morphs)[0] == pytest.approx(-1.5)
        inverted = {
            "q1": np.array([np.pi]), "q2": np.array([0.0]),
            "dq1": np.array([0.0]), "dq2": np.array([0.0]),
        }
        assert env.tip_height(inverted, morphs)[0] == pytest.approx(1.5)

    def test_hanging_at_rest_accumulates_height_gap(self):
        env = get_env("acrobot_vary", episode_steps=50)
        spec, genome = zero_controller(env)
        result = run_episode(
            env, Morphology(0.8, 0.7), spec, genome, seed=0,
            initial_state={"q1": 0.0, "q2": 0.0, "dq1": 0.0, "dq2": 0.0},
        )
        # cost per step is ((l1+l2) - tip_height) * dt = 3.0 * 0.02 at rest
        np.testing.assert_allclose(result.cost, 50 * 3.0 * 0.02, rtol=1e-9)


class TestRolloutKernel:
    @pytest.mark.parametrize("name", ALL_ENVS)
    def test_repeat_determinism(self, name):
        env = get_env(name, episode_steps=200)
        spec, genome = random_controller(env, seed=1)
        m = build_training_grid(env.space).points[7]
        a = run_episode(env, m, spec, genome, seed=99)
        b = run_episode(env, m, spec, genome, seed=99)
        assert a == b

    @pytest.mark.parametrize("name", ALL_ENVS)
    def test_batch_matches_single(self, name):
        env = get_env(name, episode_steps=200)
        spec, _ = zero_controller(env)
        rng = np.random.default_rng(2)
        genomes = [rng.standard_normal(spec.genome_length) * 0.3 for _ in range(5)]
        grid = build_training_grid(env.space)
        morphs = np.array([[grid.points[i].x, grid.points[i].y] for i in range(5)])
        seeds = np.arange(100, 105, dtype=np.uint64)
        batch = run_episode_batch(env, morphs, spec, genomes, seeds)
        for i in range(5):
            single = run_episode(env, grid.points[i], spec, genomes[i], seed=int(seeds[i]))
            assert abs(batch[i].cost - single.cost) <= 1e-12 * max(1.0, abs(single.cost))

    @pytest.mark.parametrize("name", ALL_ENVS)
    def test_costs_nonnegative(self, name):
        env = get_env(name, episode_steps=150)
        spec, genome = random_controller(env, seed=3, scale=1.0)
        for i, m in enumerate(build_training_grid(env.space).points[::7]):
            result = run_episode(env, m, spec, genome, seed=i)
            assert result.cost >= 0.0

    @pytest.mark.parametrize("name", ALL_ENVS)
    def test_morphology_sensitivity(self, name):
        # two training morphologies whose zero-controller costs differ by
        # at least 10% (the morphology axis matters)
        env = get_env(name)
        spec, genome = zero_controller(env)
        grid = build_training_grid(env.space)
        lo = run_episode(env, grid.points[0], spec, genome, seed=5).cost
        hi = run_episode(env, grid.points[-1], spec, genome, seed=5).cost
        assert abs(lo - hi) >= 0.10 * max(abs(lo), abs(hi))

    def test_shared_seed_means_shared_initial_state(self):
        env = get_env("cartpole_vary")
        morphs = np.tile([[0.8, 0.275]], (3, 1))
        seeds = np.full(3, 42, dtype=np.uint64)
        state = env.initial_state(morphs, seeds)
        for key in ("x", "xdot", "th", "thdot"):
            assert len(set(state[key].tolist())) == 1

    def test_one_genome_broadcast_over_morphologies(self):
        env = get_env("cartpole_vary", episode_steps=100)
        spec, genome = random_controller(env, seed=4)
        grid = build_training_grid(env.space)
        morphs = np.array([[p.x, p.y] for p in grid.points[:6]])
        seeds = np.arange(6, dtype=np.uint64)
        batch = run_episode_batch(env, morphs, spec, genome, seeds)
        for i in range(6):
            single = run_episode(env, grid.points[i], spec, genome, seed=i)
            assert abs(batch[i].cost - single.cost) <= 1e-12 * max(1.0, abs(single.cost))

    def test_dimension_mismatch_errors(self):
        env = get_env("cartpole_vary")
        bad_spec = neuro.ControllerSpec(n_in=5, n_out=1)
        with pytest.raises(ValueError, match="match env"):
            run_episode(env, Morphology(0.8, 0.275), bad_spec,
                        np.zeros(bad_spec.genome_length), seed=0)

    def test_out_of_box_morphology_rejected(self):
        env = get_env("cartpole_vary")
        spec, genome = zero_controller(env)
        with pytest.raises(ValueError, match="box"):
            run_episode(env, Morphology(9.9, 0.275), spec, genome, seed=0)

    def test_wrap_angle(self):
        np.testing.assert_allclose(wrap_angle(np.array([0.0])), [0.0])
        np.testing.assert_allclose(wrap_angle(np.array([2 * np.pi])), [0.0], atol=1e-12)
        np.testing.assert_allclose(wrap_angle(np.array([np.pi + 0.1])), [-np.pi + 0.1])
        assert wrap_angle(np.array([np.pi]))[0] == pytest.approx(np.pi)
