"""Wrap an external simulator process as an environment.

The child speaks a line protocol over its standard streams (UTF-8, one
message per line, floats printed with 17 significant digits):

    child -> HELLO obs=<n> act=<m> box=<x_lo,x_hi,y_lo,y_hi>
    us    -> EPISODE x=<f> y=<f> seed=<u64> steps=<n>
    child -> OBS v1 ... vn          (repeated)
    us    -> ACT a1 ... am          (reply to each OBS)
    child -> DONE cost=<f>          (ends the episode)

Protocol violations, timeouts, or a dead child mark the episode as
diverged with the fully capped cost; the surrounding run continues.
"""

from __future__ import annotations

import logging
import queue
import subprocess
import threading

import numpy as np

from . import neuro
from .envs import STEP_COST_CAP, EnvironmentContract, EpisodeResult
from .morphospace import Interval, Morphology, MorphologySpace

log = logging.getLogger(__name__)

DEFAULT_EPISODE_TIMEOUT = 30.0


class ProtocolError(Exception):
    """The child violated the adapter wire protocol."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _space_from_box(x_lo: float, x_hi: float, y_lo: float, y_hi: float) -> MorphologySpace:
    # The handshake announces only the training box; synthesize a space
    # with one-step-wide flanks on each side (two test values per flank),
    # mirroring the built-in presets' 10x10 full grid.
    x_step = (x_hi - x_lo) / 5.0
    y_step = (y_hi - y_lo) / 5.0
    return MorphologySpace(
        x_name="x",
        y_name="y",
        x_train=Interval(x_lo, x_hi),
        y_train=Interval(y_lo, y_hi),
        x_test_low=Interval(x_lo - 2.0 * x_step, x_lo - x_step),
        x_test_high=Interval(x_hi + x_step, x_hi + 2.0 * x_step),
        y_test_low=Interval(y_lo - 2.0 * y_step, y_lo - y_step),
        y_test_high=Interval(y_hi + y_step, y_hi + 2.0 * y_step),
        x_step=x_step,
        y_step=y_step,
    )


def _parse_hello(line: str) -> tuple[int, int, tuple[float, float, float, float]]:
    fields = line.split()
    if not fields or fields[0] != "HELLO":
        raise ProtocolError(f"expected HELLO, got {line!r}")
    kv = dict(f.split("=", 1) for f in fields[1:] if "=" in f)
    try:
        obs_dim = int(kv["obs"])
        act_dim = int(kv["act"])
        box = tuple(float(v) for v in kv["box"].split(","))
    except (KeyError, ValueError) as exc:
        raise ProtocolError(f"malformed HELLO line {line!r}") from exc
    if len(box) != 4:
        raise ProtocolError(f"HELLO box needs 4 numbers, got {kv['box']!r}")
    return obs_dim, act_dim, box


class ExternalAdapterEnv:
    """An environment backed by a child process speaking the line protocol.

    Access to the child is serialized; parallel evaluation should spawn
    independent adapter instances.
    """

    def __init__(
        self,
        command,
        episode_steps: int = 1000,
        dt: float = 0.02,
        episode_timeout: float = DEFAULT_EPISODE_TIMEOUT,
        name: str = "external",
    ):
        self.name = name
        self.episode_steps = int(episode_steps)
        self.dt = float(dt)
        self.episode_timeout = float(episode_timeout)
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        hello = self._read_line(self.episode_timeout)
        if hello is None:
            raise ProtocolError("child exited before the HELLO handshake")
        self.obs_dim, self.act_dim, box = _parse_hello(hello)
        self.space = _space_from_box(*box)

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

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line.rstrip("\n"))
        self._lines.put(None)  # EOF marker

    def _read_line(self, timeout: float) -> str | None:
        try:
            return self._lines.get(timeout=timeout)
        except queue.Empty:
            return None

    def _send(self, line: str) -> bool:
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            return True
        except (BrokenPipeError, OSError, ValueError):
            return False

    def run_single(
        self,
        morphology: Morphology,
        spec: neuro.ControllerSpec,
        genome: np.ndarray,
        seed: int,
        steps: int | None = None,
    ) -> EpisodeResult:
        """Run one episode through the wire protocol.

        Dimension mismatches between the handshake and the controller are
        configuration errors raised before anything is sent; everything
        that goes wrong mid-episode degrades to a diverged result.
        """
        if spec.n_in != self.obs_dim or spec.n_out != self.act_dim:
            raise ValueError(
                f"controller dims ({spec.n_in}, {spec.n_out}) do not match the "
                f"announced ({self.obs_dim}, {self.act_dim})"
            )
        total_steps = self.episode_steps if steps is None else int(steps)
        diverged = EpisodeResult(
            cost=STEP_COST_CAP * total_steps, steps_executed=0, terminated_early=True
        )
        with self._lock:
            header = (
                f"EPISODE x={_fmt(morphology.x)} y={_fmt(morphology.y)} "
                f"seed={int(seed)} steps={total_steps}"
            )
            if not self._send(header):
                log.warning("adapter %s: child rejected EPISODE header", self.name)
                return diverged
            exchanges = 0
            while True:
                line = self._read_line(self.episode_timeout)
                if line is None:
                    log.warning("adapter %s: timeout or child exit mid-episode", self.name)
                    return diverged
                fields = line.split()
                if fields and fields[0] == "DONE":
                    try:
                        kv = dict(f.split("=", 1) for f in fields[1:] if "=" in f)
                        cost = float(kv["cost"])
                    except (KeyError, ValueError):
                        log.warning("adapter %s: malformed DONE %r", self.name, line)
                        return diverged
                    if not np.isfinite(cost):
                        return diverged
                    return EpisodeResult(
                        cost=cost, steps_executed=exchanges, terminated_early=False
                    )
                if not fields or fields[0] != "OBS":
                    log.warning("adapter %s: unexpected line %r", self.name, line)
                    return diverged
                try:
                    obs = np.array([float(v) for v in fields[1:]])
                    action = neuro.forward(spec, genome, obs)
                except ValueError:
                    log.warning("adapter %s: bad observation %r", self.name, line)
                    return diverged
                if not self._send("ACT " + " ".join(_fmt(a) for a in action)):
                    return diverged
                exchanges += 1

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
