"""The evolutionary training loop and run persistence.

Each generation: the schedule picks a training morphology, the optimizer
proposes a population of genomes, every genome runs one episode on that
morphology (sharing one generation seed so ranking noise comes from the
genomes, not the initial conditions), the best sample is scored on the
whole validation grid, and its mean cost decides whether it enters the
generalist archive.  With the bandit schedule, that validation mean also
produces the reward that updates the arm posteriors.

Everything about a run is derived from (master_seed, run_index), so runs
replay bit-identically and batches parallelize without changing results.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs, neuro, schedules, xnes
from .bandit import BanditState, compute_reward, thompson_select, update_posteriors
from .morphospace import Morphology, MorphologyGrid, build_training_grid, build_validation_grid

# Seed-derivation roles; every stream in a run keys off a distinct role.
ROLE_XNES = 1
ROLE_SCHEDULE = 2
ROLE_BANDIT = 3
ROLE_TRAIN = 4
ROLE_VALID = 5
ROLE_EVAL = 6


def derive_seed(*parts: int) -> int:
    """Deterministic, platform-independent seed from integer parts."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run needs; JSON-serializable."""

    env_name: str
    schedule_kind: str
    max_generations: int
    master_seed: int = 0
    run_index: int = 0
    validation_cadence: int = 1
    episode_steps: int | None = None
    output_dir: str | None = None
    # continuous-schedule parameters
    sigma_frac: float = schedules.DEFAULT_SIGMA_FRAC
    scale_frac: float = schedules.DEFAULT_SCALE_FRAC
    beta_a: float = schedules.DEFAULT_BETA_A
    beta_b: float = schedules.DEFAULT_BETA_B
    # bandit parameters
    gamma: float = 0.1
    alpha0: float = 1.0
    beta0: float = 1.0
    window: int = 10
    posterior_log_every: int = 1
    # optimizer parameters (None = dimension-based defaults)
    population: int | None = None
    eta_mu: float = 1.0
    eta_sigma: float | None = None
    eta_b: float | None = None
    sigma0: float = 1.0

    def __post_init__(self):
        if self.schedule_kind not in schedules.SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.schedule_kind!r}")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        if self.validation_cadence < 1:
            raise ValueError("validation_cadence must be >= 1")
        if self.schedule_kind == "bandit" and self.validation_cadence != 1:
            raise ValueError(
                "the bandit schedule needs a reward every generation; "
                "validation_cadence must be 1"
            )
        if self.posterior_log_every < 1:
            raise ValueError("posterior_log_every must be >= 1")


@dataclass
class GenerationRow:
    generation: int
    morph_x: float
    morph_y: float
    train_best_cost: float
    f_best: float | None
    reward: int | None
    sigma: float
    mu_norm: float


@dataclass
class ArchiveEntry:
    generation: int
    f_best: float
    genome: np.ndarray


@dataclass
class RunRecord:
    """Persisted trace of one run: rows, choices, archive, telemetry."""

    config: RunConfig
    controller: neuro.ControllerSpec
    rows: list[GenerationRow]
    archive: list[ArchiveEntry]
    telemetry: dict
    posteriors: list[tuple[int, np.ndarray, np.ndarray]] | None = None

    @property
    def schedule_kind(self) -> str:
        return self.config.schedule_kind

    @property
    def choices(self) -> list[Morphology]:
        return [Morphology(row.morph_x, row.morph_y) for row in self.rows]

    @property
    def final_entry(self) -> ArchiveEntry:
        return self.archive[-1]

    def save(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(dataclasses.asdict(self.config), indent=2))
        (out / "telemetry.json").write_text(json.dumps(self.telemetry, indent=2))

        with open(out / "generations.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                [
                    "generation",
                    "morph_x",
                    "morph_y",
                    "train_best_cost",
                    "f_best",
                    "reward",
                    "sigma",
                    "mu_norm",
                ]
            )
            for r in self.rows:
                w.writerow(
                    [
                        r.generation,
                        repr(r.morph_x),
                        repr(r.morph_y),
                        repr(r.train_best_cost),
                        "" if r.f_best is None else repr(r.f_best),
                        "" if r.reward is None else r.reward,
                        repr(r.sigma),
                        repr(r.mu_norm),
                    ]
                )

        with open(out / "choices.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["generation", "x", "y"])
            for r in self.rows:
                w.writerow([r.generation, repr(r.morph_x), repr(r.morph_y)])

        archive_dir = out / "archive"
        archive_dir.mkdir(exist_ok=True)
        with open(archive_dir / "index.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["generation", "f_best", "file"])
            for entry in self.archive:
                fname = f"gen_{entry.generation:06d}.mgen"
                neuro.save_genome(archive_dir / fname, self.controller, entry.genome)
                w.writerow([entry.generation, repr(entry.f_best), fname])

        if self.posteriors is not None:
            n_arms = len(self.posteriors[0][1]) if self.posteriors else 0
            with open(out / "bandit_posteriors.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(
                    ["generation"]
                    + [f"alpha_{k}" for k in range(n_arms)]
                    + [f"beta_{k}" for k in range(n_arms)]
                )
                for gen, alpha, beta in self.posteriors:
                    w.writerow(
                        [gen]
                        + [repr(float(v)) for v in alpha]
                        + [repr(float(v)) for v in beta]
                    )

    @classmethod
    def load(cls, directory) -> "RunRecord":
        src = Path(directory)
        if not (src / "config.json").exists():
            raise FileNotFoundError(f"{src} does not contain a run (config.json missing)")
        config = RunConfig(**json.loads((src / "config.json").read_text()))
        telemetry = json.loads((src / "telemetry.json").read_text())

        rows = []
        with open(src / "generations.csv", newline="") as f:
            for rec in csv.DictReader(f):
                rows.append(
                    GenerationRow(
                        generation=int(rec["generation"]),
                        morph_x=float(rec["morph_x"]),
                        morph_y=float(rec["morph_y"]),
                        train_best_cost=float(rec["train_best_cost"]),
                        f_best=float(rec["f_best"]) if rec["f_best"] else None,
                        reward=int(rec["reward"]) if rec["reward"] else None,
                        sigma=float(rec["sigma"]),
                        mu_norm=float(rec["mu_norm"]),
                    )
                )

        archive = []
        controller = None
        with open(src / "archive" / "index.csv", newline="") as f:
            for rec in csv.DictReader(f):
                spec, genome = neuro.load_genome(src / "archive" / rec["file"])
                controller = spec
                archive.append(
                    ArchiveEntry(
                        generation=int(rec["generation"]),
                        f_best=float(rec["f_best"]),
                        genome=genome,
                    )
                )

        posteriors = None
        posterior_path = src / "bandit_posteriors.csv"
        if posterior_path.exists():
            posteriors = []
            with open(posterior_path, newline="") as f:
                reader = csv.reader(f)
                header = next(reader)
                n_arms = sum(1 for h in header if h.startswith("alpha_"))
                for rec in reader:
                    values = [float(v) for v in rec[1:]]
                    posteriors.append(
                        (
                            int(rec[0]),
                            np.array(values[:n_arms]),
                            np.array(values[n_arms:]),
                        )
                    )

        return cls(
            config=config,
            controller=controller,
            rows=rows,
            archive=archive,
            telemetry=telemetry,
            posteriors=posteriors,
        )


def episode_costs(env, morphs: np.ndarray, spec, genomes, seeds) -> np.ndarray:
    """Costs of one episode per lane; batched for built-ins, sequential
    for adapter environments."""
    if hasattr(env, "run_single"):
        morph_points = [Morphology(float(m[0]), float(m[1])) for m in morphs]
        single = isinstance(genomes, np.ndarray) and genomes.ndim == 1
        return np.array(
            [
                env.run_single(p, spec, genomes if single else genomes[i], int(seeds[i])).cost
                for i, p in enumerate(morph_points)
            ]
        )
    results = envs.run_episode_batch(env, morphs, spec, genomes, seeds)
    return np.array([r.cost for r in results])


def validate(env, spec, genome: np.ndarray, grid: MorphologyGrid, seed_base: int) -> float:
    """Mean episode cost of one genome over all grid morphologies, with
    per-morphology seeds derived from seed_base."""
    if len(grid) < 1:
        raise ValueError("validation grid is empty")
    seeds = np.array([derive_seed(seed_base, j) for j in range(len(grid))], dtype=np.uint64)
    morphs = np.array([[p.x, p.y] for p in grid.points])
    return float(np.mean(episode_costs(env, morphs, spec, genome, seeds)))


def train(config: RunConfig, progress=None) -> RunRecord:
    """Run one evolutionary training process and return its full record.

    If config.output_dir is set the record is also saved there.
    """
    env = envs.get_env(config.env_name, episode_steps=config.episode_steps)
    space = env.space
    grid = build_training_grid(space)
    vgrid = build_validation_grid(space)
    spec = neuro.ControllerSpec(env.obs_dim, env.act_dim)

    ms, ri = config.master_seed, config.run_index
    state = xnes.XnesState(
        dim=spec.genome_length,
        population=config.population,
        eta_mu=config.eta_mu,
        eta_sigma=config.eta_sigma,
        eta_b=config.eta_b,
        sigma0=config.sigma0,
        seed=derive_seed(ms, ri, ROLE_XNES),
    )

    schedule = None
    bstate = None
    if config.schedule_kind == "bandit":
        bstate = BanditState.from_grid(
            grid,
            alpha0=config.alpha0,
            beta0=config.beta0,
            gamma=config.gamma,
            window=config.window,
            seed=derive_seed(ms, ri, ROLE_BANDIT),
        )
    else:
        schedule = schedules.Schedule(
            kind=config.schedule_kind,
            sigma_frac=config.sigma_frac,
            scale_frac=config.scale_frac,
            beta_a=config.beta_a,
            beta_b=config.beta_b,
            seed=derive_seed(ms, ri, ROLE_SCHEDULE),
        )

    valid_morphs = np.array([[p.x, p.y] for p in vgrid.points])
    valid_seeds = np.array(
        [derive_seed(ms, ri, ROLE_VALID, j) for j in range(len(vgrid))], dtype=np.uint64
    )

    rows: list[GenerationRow] = []
    archive: list[ArchiveEntry] = []
    posteriors: list[tuple[int, np.ndarray, np.ndarray]] | None = (
        [] if bstate is not None else None
    )
    best_f = math.inf
    train_episodes = 0
    valid_episodes = 0

    for gen in range(config.max_generations):
        if bstate is not None:
            arm = thompson_select(bstate)
            morph = grid.points[arm]
        else:
            morph = schedules.next_morphology(schedule, space, grid, gen)

        samples = xnes.ask(state)
        gen_seed = derive_seed(ms, ri, ROLE_TRAIN, gen)
        morphs = np.tile([[morph.x, morph.y]], (state.population, 1))
        seeds = np.full(state.population, gen_seed, dtype=np.uint64)
        costs = episode_costs(env, morphs, spec, [s.genome for s in samples], seeds)
        for s, c in zip(samples, costs):
            s.cost = float(c)
        train_episodes += state.population

        i_best = xnes.best_of(samples)
        xnes.tell(state, samples)

        f_best: float | None = None
        reward: int | None = None
        if gen % config.validation_cadence == 0:
            vcosts = episode_costs(env, valid_morphs, spec, i_best.genome, valid_seeds)
            f_best = float(np.mean(vcosts))
            valid_episodes += len(vgrid)
            if f_best < best_f:
                archive.append(ArchiveEntry(gen, f_best, np.array(i_best.genome)))
                best_f = f_best
            if bstate is not None:
                reward = compute_reward(bstate, f_best)
                update_posteriors(bstate, reward)

        if bstate is not None and gen % config.posterior_log_every == 0:
            posteriors.append((gen, bstate.alpha.copy(), bstate.beta.copy()))

        rows.append(
            GenerationRow(
                generation=gen,
                morph_x=morph.x,
                morph_y=morph.y,
                train_best_cost=i_best.cost,
                f_best=f_best,
                reward=reward,
                sigma=state.sigma,
                mu_norm=float(np.linalg.norm(state.mu)),
            )
        )
        if progress is not None:
            progress(rows[-1])

    telemetry = {
        "train_episodes": train_episodes,
        "validation_episodes": valid_episodes,
        "total_episodes": train_episodes + valid_episodes,
        "population": state.population,
        "genome_length": spec.genome_length,
    }
    if schedule is not None:
        telemetry["schedule_clamp_count"] = schedule.clamp_count

    record = RunRecord(
        config=config,
        controller=spec,
        rows=rows,
        archive=archive,
        telemetry=telemetry,
        posteriors=posteriors,
    )
    if config.output_dir is not None:
        record.save(config.output_dir)
    return record


def _train_and_save(config: RunConfig) -> str:
    train(config)
    return config.output_dir


def run_batch(
    config: RunConfig,
    n_runs: int,
    output_dir,
    parallelism: int = 1,
) -> list[RunRecord]:
    """n independent runs with seeds (master_seed, run_index).

    Results are identical for any parallelism degree.  Individual run
    failures are recorded in the batch manifest and skipped; the batch
    fails only if every run fails.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    run_configs = [
        dataclasses.replace(config, run_index=i, output_dir=str(out / f"run_{i:03d}"))
        for i in range(n_runs)
    ]

    failures: dict[int, str] = {}
    if parallelism <= 1:
        for i, cfg in enumerate(run_configs):
            try:
                _train_and_save(cfg)
            except Exception as exc:  # noqa: BLE001 - batch isolation
                failures[i] = f"{type(exc).__name__}: {exc}"
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = {i: pool.submit(_train_and_save, cfg) for i, cfg in enumerate(run_configs)}
            for i, fut in futures.items():
                try:
                    fut.result()
                except Exception as exc:  # noqa: BLE001 - batch isolation
                    failures[i] = f"{type(exc).__name__}: {exc}"

    manifest = {
        "env": config.env_name,
        "schedule_kind": config.schedule_kind,
        "n_runs": n_runs,
        "master_seed": config.master_seed,
        "runs": [cfg.output_dir for cfg in run_configs],
        "failures": {str(k): v for k, v in sorted(failures.items())},
    }
    (out / "batch.json").write_text(json.dumps(manifest, indent=2))

    records = [
        RunRecord.load(cfg.output_dir)
        for i, cfg in enumerate(run_configs)
        if i not in failures
    ]
    if not records:
        raise RuntimeError(f"all {n_runs} runs failed: {failures}")
    return records


def load_batch(directory) -> list[RunRecord]:
    """Load every successful run of a saved batch."""
    src = Path(directory)
    manifest_path = src / "batch.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        failed = set(manifest["failures"])
        run_dirs = [Path(d) for i, d in enumerate(manifest["runs"]) if str(i) not in failed]
    else:
        run_dirs = sorted(p for p in src.glob("run_*") if p.is_dir())
    if not run_dirs:
        raise FileNotFoundError(f"{src} contains no runs")
    return [RunRecord.load(d) for d in run_dirs]
