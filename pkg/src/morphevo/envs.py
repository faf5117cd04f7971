"""Morphology-parameterized episodic control environments.

Three built-in desk-scale tasks (cart-pole balance, planar reaching,
acrobot swing-up) share one contract: a morphology point sets two body
parameters, an episode is a fixed-step deterministic rollout, and the
return value is a cost (lower is better, always >= 0 for built-ins).

The step kernels are written over lane-batched state arrays so that the
engine can evaluate a whole population (same morphology, many genomes) or
a whole validation grid (one genome, many morphologies) in a single
vectorized rollout.  Per-lane arithmetic is elementwise, so results do
not depend on the batch width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import neuro
from .morphospace import Interval, Morphology, MorphologySpace

# Per-step cost cap; early-terminated episodes pay the cap for every
# remaining step, so divergence is always worse than any stable behavior.
STEP_COST_CAP = 1e6

GRAVITY = 9.81


@dataclass(frozen=True)
class EnvironmentContract:
    """Uniform description of an episodic environment."""

    name: str
    obs_dim: int
    act_dim: int
    morph_space: MorphologySpace
    episode_steps: int
    dt: float

    def __post_init__(self):
        if self.obs_dim < 1 or self.act_dim < 1:
            raise ValueError("obs_dim and act_dim must be >= 1")
        if self.episode_steps < 1:
            raise ValueError("episode_steps must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class EpisodeResult:
    cost: float
    steps_executed: int
    terminated_early: bool


def wrap_angle(theta: np.ndarray) -> np.ndarray:
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - theta, 2.0 * np.pi)


class VectorEnv:
    """Base class for the built-in lane-batched environments."""

    name: str
    obs_dim: int
    act_dim: int
    episode_steps: int = 1000
    dt: float = 0.02
    space: MorphologySpace

    @property
    def contract(self) -> EnvironmentContract:
        return EnvironmentContract(
            name=self.name,
            obs_dim=self.obs_dim,
            act_dim=self.act_dim,
            morph_space=self.space,
            episode_steps=self.episode_steps,
            dt=self.dt,
        )

    def initial_state(self, morphs: np.ndarray, seeds: np.ndarray) -> dict:
        raise NotImplementedError

    def observe(self, state: dict, morphs: np.ndarray, t: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, state: dict, actions: np.ndarray, morphs: np.ndarray, t: int):
        raise NotImplementedError


class CartpoleVary(VectorEnv):
    """Cart-pole balance; morphology = (pole length [m], pole mass [kg]).

    Standard frictionless cart-pole dynamics (uniform pole, angle from the
    upright vertical) under semi-implicit Euler.  Per-step cost
    (theta^2 + 0.1 x^2 + 0.001 a^2) * dt is zero exactly at the upright
    equilibrium with no action.
    """

    name = "cartpole_vary"
    obs_dim = 4
    act_dim = 1
    cart_mass = 1.0
    force_max = 10.0
    # observation normalization keeps typical magnitudes near unit scale
    # so the tanh controller is not saturated at initialization
    obs_scale = (3.0, 3.0, 1.0, 8.0)
    space = MorphologySpace(
        x_name="pole_length",
        y_name="pole_mass",
        x_train=Interval(0.7, 1.2),
        y_train=Interval(0.05, 0.5),
        x_test_low=Interval(0.5, 0.65),
        x_test_high=Interval(1.3, 1.45),
        y_test_low=Interval(0.02, 0.04),
        y_test_high=Interval(0.59, 0.78),
        x_step=0.1,
        y_step=0.09,
    )

    def initial_state(self, morphs, seeds):
        k = len(seeds)
        init = np.empty((k, 4))
        for lane in range(k):
            init[lane] = np.random.default_rng(int(seeds[lane])).uniform(-0.05, 0.05, 4)
        return {
            "x": init[:, 0].copy(),
            "xdot": init[:, 1].copy(),
            "th": init[:, 2].copy(),
            "thdot": init[:, 3].copy(),
        }

    def scale_action(self, actions):
        return self.force_max * actions[:, 0]

    def observe(self, state, morphs, t):
        sx, sv, sth, sw = self.obs_scale
        return np.stack(
            [state["x"] / sx, state["xdot"] / sv, wrap_angle(state["th"]) / sth,
             state["thdot"] / sw],
            axis=1,
        )

    def step(self, state, actions, morphs, t):
        length = morphs[:, 0]
        m = morphs[:, 1]
        half = 0.5 * length
        force = self.scale_action(actions)
        th, thdot = state["th"], state["thdot"]
        x, xdot = state["x"], state["xdot"]

        sin, cos = np.sin(th), np.cos(th)
        total = self.cart_mass + m
        temp = (force + m * half * thdot * thdot * sin) / total
        thacc = (GRAVITY * sin - cos * temp) / (
            half * (4.0 / 3.0 - m * cos * cos / total)
        )
        xacc = temp - m * half * thacc * cos / total

        xdot = xdot + self.dt * xacc
        x = x + self.dt * xdot
        thdot = thdot + self.dt * thacc
        th = th + self.dt * thdot

        wrapped = wrap_angle(th)
        cost = (wrapped * wrapped + 0.1 * x * x + 0.001 * actions[:, 0] ** 2) * self.dt
        return {"x": x, "xdot": xdot, "th": th, "thdot": thdot}, cost

    def mechanical_energy(self, state, morphs):
        """Total energy of the 4/3-factor cart-pole model (test oracle aid)."""
        length = morphs[:, 0]
        m = morphs[:, 1]
        half = 0.5 * length
        th, thdot = state["th"], state["thdot"]
        x_cm_dot = state["xdot"] + half * thdot * np.cos(th)
        y_cm_dot = -half * thdot * np.sin(th)
        inertia_cm = m * half * half / 3.0
        kinetic = (
            0.5 * self.cart_mass * state["xdot"] ** 2
            + 0.5 * m * (x_cm_dot**2 + y_cm_dot**2)
            + 0.5 * inertia_cm * thdot**2
        )
        potential = m * GRAVITY * half * np.cos(th)
        return kinetic + potential


class ReacherVary(VectorEnv):
    """Two-link planar arm tracking a seeded target sequence.

    Morphology = (link1 length, link2 length); masses scale with length
    (uniform rods).  The plane is horizontal (no gravity) with viscous
    joint damping, so the pose is observable from joint angles alone:
    obs = (sin q1, cos q1, sin q2, cos q2, target - tip).  Targets are
    drawn per episode from the lane's seeded rng on a fixed annulus and
    switch every quarter of the nominal episode.
    """

    name = "reacher_vary"
    obs_dim = 6
    act_dim = 2
    torque_max = 1.0
    damping = 0.1
    target_segments = 4
    target_radius = (0.3, 0.5)
    velocity_cap = 8.0 * math.pi
    mass_matrix_reg = 1e-6
    space = MorphologySpace(
        x_name="link1_length",
        y_name="link2_length",
        x_train=Interval(0.5, 1.0),
        y_train=Interval(0.4, 0.9),
        x_test_low=Interval(0.3, 0.45),
        x_test_high=Interval(1.1, 1.25),
        y_test_low=Interval(0.2, 0.35),
        y_test_high=Interval(1.0, 1.15),
        x_step=0.1,
        y_step=0.1,
    )

    def initial_state(self, morphs, seeds):
        k = len(seeds)
        q = np.empty((k, 2))
        targets = np.empty((k, self.target_segments, 2))
        for lane in range(k):
            rng = np.random.default_rng(int(seeds[lane]))
            q[lane] = rng.uniform(-np.pi, np.pi, 2)
            for seg in range(self.target_segments):
                angle = rng.uniform(0.0, 2.0 * np.pi)
                radius = rng.uniform(*self.target_radius)
                targets[lane, seg] = (radius * np.cos(angle), radius * np.sin(angle))
        return {
            "q1": q[:, 0].copy(),
            "q2": q[:, 1].copy(),
            "dq1": np.zeros(k),
            "dq2": np.zeros(k),
            "targets": targets,
        }

    def scale_action(self, actions):
        return self.torque_max * actions

    def tip_position(self, state, morphs):
        l1, l2 = morphs[:, 0], morphs[:, 1]
        q1 = state["q1"]
        q12 = q1 + state["q2"]
        return (
            l1 * np.cos(q1) + l2 * np.cos(q12),
            l1 * np.sin(q1) + l2 * np.sin(q12),
        )

    def current_target(self, state, t):
        switch_every = max(1, self.episode_steps // self.target_segments)
        seg = min(t // switch_every, self.target_segments - 1)
        return state["targets"][:, seg, 0], state["targets"][:, seg, 1]

    def observe(self, state, morphs, t):
        tip_x, tip_y = self.tip_position(state, morphs)
        tgt_x, tgt_y = self.current_target(state, t)
        q1, q2 = state["q1"], state["q2"]
        return np.stack(
            [np.sin(q1), np.cos(q1), np.sin(q2), np.cos(q2), tgt_x - tip_x, tgt_y - tip_y],
            axis=1,
        )

    def step(self, state, actions, morphs, t):
        l1, l2 = morphs[:, 0], morphs[:, 1]
        m1, m2 = l1, l2
        r1, r2 = 0.5 * l1, 0.5 * l2
        inertia1 = m1 * l1 * l1 / 12.0
        inertia2 = m2 * l2 * l2 / 12.0
        q1, q2 = state["q1"], state["q2"]
        dq1, dq2 = state["dq1"], state["dq2"]
        torque = self.scale_action(actions)

        c2 = np.cos(q2)
        s2 = np.sin(q2)
        coupling = m2 * l1 * r2
        m22 = inertia2 + m2 * r2 * r2 + self.mass_matrix_reg
        m11 = inertia1 + inertia2 + m1 * r1 * r1 + m2 * (l1 * l1 + r2 * r2) + 2.0 * coupling * c2
        m11 = m11 + self.mass_matrix_reg
        m12 = inertia2 + m2 * r2 * r2 + coupling * c2

        cor1 = -coupling * s2 * (2.0 * dq1 * dq2 + dq2 * dq2)
        cor2 = coupling * s2 * dq1 * dq1
        rhs1 = torque[:, 0] - cor1 - self.damping * dq1
        rhs2 = torque[:, 1] - cor2 - self.damping * dq2

        det = m11 * m22 - m12 * m12
        ddq1 = (m22 * rhs1 - m12 * rhs2) / det
        ddq2 = (m11 * rhs2 - m12 * rhs1) / det

        dq1 = np.clip(dq1 + self.dt * ddq1, -self.velocity_cap, self.velocity_cap)
        dq2 = np.clip(dq2 + self.dt * ddq2, -self.velocity_cap, self.velocity_cap)
        q1 = q1 + self.dt * dq1
        q2 = q2 + self.dt * dq2

        new_state = {"q1": q1, "q2": q2, "dq1": dq1, "dq2": dq2, "targets": state["targets"]}
        tip_x, tip_y = self.tip_position(new_state, morphs)
        tgt_x, tgt_y = self.current_target(new_state, t)
        dist_sq = (tip_x - tgt_x) ** 2 + (tip_y - tgt_y) ** 2
        cost = dist_sq * self.dt + 0.001 * np.sum(actions * actions, axis=1)
        return new_state, cost


class AcrobotVary(VectorEnv):
    """Two-link underactuated swing-up; morphology = (l1, l2).

    Angles are measured from the hanging position; only the second joint
    is actuated.  Per-step cost ((l1 + l2) - tip_height) * dt is zero only
    with the arm fully inverted, so lower cost means better swing-up.
    """

    name = "acrobot_vary"
    obs_dim = 6
    act_dim = 1
    torque_max = 2.0
    velocity_cap_1 = 4.0 * math.pi
    velocity_cap_2 = 9.0 * math.pi
    space = MorphologySpace(
        x_name="link1_length",
        y_name="link2_length",
        x_train=Interval(0.6, 1.1),
        y_train=Interval(0.5, 1.0),
        x_test_low=Interval(0.4, 0.55),
        x_test_high=Interval(1.2, 1.35),
        y_test_low=Interval(0.3, 0.45),
        y_test_high=Interval(1.1, 1.25),
        x_step=0.1,
        y_step=0.1,
    )

    def initial_state(self, morphs, seeds):
        k = len(seeds)
        init = np.empty((k, 4))
        for lane in range(k):
            init[lane] = np.random.default_rng(int(seeds[lane])).uniform(-0.1, 0.1, 4)
        return {
            "q1": init[:, 0].copy(),
            "q2": init[:, 1].copy(),
            "dq1": init[:, 2].copy(),
            "dq2": init[:, 3].copy(),
        }

    def scale_action(self, actions):
        return self.torque_max * actions[:, 0]

    def tip_height(self, state, morphs):
        l1, l2 = morphs[:, 0], morphs[:, 1]
        return -l1 * np.cos(state["q1"]) - l2 * np.cos(state["q1"] + state["q2"])

    def observe(self, state, morphs, t):
        q1, q2 = state["q1"], state["q2"]
        return np.stack(
            [
                np.cos(q1),
                np.sin(q1),
                np.cos(q2),
                np.sin(q2),
                state["dq1"] / self.velocity_cap_1,
                state["dq2"] / self.velocity_cap_2,
            ],
            axis=1,
        )

    def step(self, state, actions, morphs, t):
        l1, l2 = morphs[:, 0], morphs[:, 1]
        m1, m2 = l1, l2
        lc1, lc2 = 0.5 * l1, 0.5 * l2
        inertia1 = m1 * l1 * l1 / 12.0
        inertia2 = m2 * l2 * l2 / 12.0
        q1, q2 = state["q1"], state["q2"]
        dq1, dq2 = state["dq1"], state["dq2"]
        torque = self.scale_action(actions)

        c2, s2 = np.cos(q2), np.sin(q2)
        d11 = m1 * lc1 * lc1 + inertia1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2) + inertia2
        d12 = m2 * (lc2 * lc2 + l1 * lc2 * c2) + inertia2
        d22 = m2 * lc2 * lc2 + inertia2

        cor1 = -m2 * l1 * lc2 * s2 * (2.0 * dq1 * dq2 + dq2 * dq2)
        cor2 = m2 * l1 * lc2 * s2 * dq1 * dq1
        grav2 = m2 * lc2 * GRAVITY * np.sin(q1 + q2)
        grav1 = (m1 * lc1 + m2 * l1) * GRAVITY * np.sin(q1) + grav2

        rhs1 = -cor1 - grav1
        rhs2 = torque - cor2 - grav2
        det = d11 * d22 - d12 * d12
        ddq1 = (d22 * rhs1 - d12 * rhs2) / det
        ddq2 = (d11 * rhs2 - d12 * rhs1) / det

        dq1 = np.clip(dq1 + self.dt * ddq1, -self.velocity_cap_1, self.velocity_cap_1)
        dq2 = np.clip(dq2 + self.dt * ddq2, -self.velocity_cap_2, self.velocity_cap_2)
        q1 = q1 + self.dt * dq1
        q2 = q2 + self.dt * dq2

        new_state = {"q1": q1, "q2": q2, "dq1": dq1, "dq2": dq2}
        cost = ((l1 + l2) - self.tip_height(new_state, morphs)) * self.dt
        return new_state, cost


_BUILTIN_CLASSES = (CartpoleVary, ReacherVary, AcrobotVary)


def builtin_environments() -> list[EnvironmentContract]:
    """Contracts of the built-in environments."""
    return [cls().contract for cls in _BUILTIN_CLASSES]


def get_env(name: str, episode_steps: int | None = None):
    """Instantiate a built-in environment, optionally overriding the
    episode length (smoke-run support)."""
    for cls in _BUILTIN_CLASSES:
        if cls.name == name:
            env = cls()
            if episode_steps is not None:
                env.episode_steps = int(episode_steps)
            return env
    raise KeyError(f"unknown environment {name!r}")


def stack_controllers(spec: neuro.ControllerSpec, genomes, lanes: int):
    """Decode genomes into lane-stacked weight tensors.

    `genomes` is either one genome broadcast to all lanes, or a sequence
    of exactly `lanes` genomes.
    """
    if isinstance(genomes, np.ndarray) and genomes.ndim == 1:
        w1, w2 = neuro.decode(spec, genomes)
        return (
            np.broadcast_to(w1, (lanes, *w1.shape)),
            np.broadcast_to(w2, (lanes, *w2.shape)),
        )
    if len(genomes) != lanes:
        raise ValueError(f"expected {lanes} genomes, got {len(genomes)}")
    pairs = [neuro.decode(spec, g) for g in genomes]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def _sanitize_lane(state: dict, lane: int) -> None:
    for value in state.values():
        value[lane] = 0.0


def run_episode_batch(
    env,
    morphs: np.ndarray,
    spec: neuro.ControllerSpec,
    genomes,
    seeds,
    steps: int | None = None,
    initial_state: dict | None = None,
) -> list[EpisodeResult]:
    """Deterministic lane-batched rollout; one EpisodeResult per lane.

    Lanes that produce a non-finite state or cost terminate early and pay
    the per-step cap for the divergent step and every remaining step.
    """
    if spec.n_in != env.obs_dim or spec.n_out != env.act_dim:
        raise ValueError(
            f"controller dims ({spec.n_in}, {spec.n_out}) do not match env "
            f"({env.obs_dim}, {env.act_dim})"
        )
    morphs = np.asarray(morphs, dtype=np.float64)
    if morphs.ndim != 2 or morphs.shape[1] != 2:
        raise ValueError("morphs must have shape (lanes, 2)")
    lanes = morphs.shape[0]
    seeds = np.asarray(seeds, dtype=np.uint64)
    if seeds.shape != (lanes,):
        raise ValueError("seeds must have one entry per lane")
    total_steps = env.episode_steps if steps is None else int(steps)

    w1s, w2s = stack_controllers(spec, genomes, lanes)
    state = env.initial_state(morphs, seeds) if initial_state is None else initial_state

    cost = np.zeros(lanes)
    active = np.ones(lanes, dtype=bool)
    steps_executed = np.full(lanes, total_steps, dtype=np.int64)

    for t in range(total_steps):
        # divergence shows up as inf/nan and is handled below, so numeric
        # warnings from the step math are expected noise
        with np.errstate(all="ignore"):
            obs = env.observe(state, morphs, t)
            hidden = np.tanh(np.einsum("ki,kij->kj", obs, w1s))
            hidden_ext = np.concatenate([hidden, np.ones((lanes, 1))], axis=1)
            actions = np.tanh(np.einsum("kj,kjo->ko", hidden_ext, w2s))
            state, step_cost = env.step(state, actions, morphs, t)

        finite = np.isfinite(step_cost)
        for value in state.values():
            good = np.isfinite(value)
            if good.ndim > 1:
                good = good.reshape(good.shape[0], -1).all(axis=1)
            finite &= good
        newly_dead = active & ~finite
        if np.any(newly_dead):
            for lane in np.flatnonzero(newly_dead):
                cost[lane] += STEP_COST_CAP * (total_steps - t)
                steps_executed[lane] = t
                _sanitize_lane(state, lane)
            active &= ~newly_dead
        cost[active] += np.minimum(step_cost[active], STEP_COST_CAP)

    return [
        EpisodeResult(
            cost=float(cost[lane]),
            steps_executed=int(steps_executed[lane]),
            terminated_early=not bool(active[lane]),
        )
        for lane in range(lanes)
    ]


def run_episode(
    env,
    morphology: Morphology,
    spec: neuro.ControllerSpec,
    genome: np.ndarray,
    seed: int,
    steps: int | None = None,
    initial_state: dict | None = None,
) -> EpisodeResult:
    """Run one episode; the single-lane view of run_episode_batch.

    The morphology must lie inside the environment's full (train + test)
    box; adapter-style environments implement their own episode exchange.
    """
    if hasattr(env, "run_single"):
        return env.run_single(morphology, spec, genome, seed, steps=steps)
    if not env.space.in_full_box(morphology):
        raise ValueError(
            f"morphology ({morphology.x}, {morphology.y}) is outside the "
            f"{env.name} morphology box"
        )
    if initial_state is not None:
        # Scalars become one-lane arrays; array values must already carry
        # the leading lane dimension.
        initial_state = {
            key: np.atleast_1d(np.asarray(value, dtype=np.float64))
            for key, value in initial_state.items()
        }
    return run_episode_batch(
        env,
        np.array([[morphology.x, morphology.y]]),
        spec,
        [genome],
        np.array([seed], dtype=np.uint64),
        steps=steps,
        initial_state=initial_state,
    )[0]
