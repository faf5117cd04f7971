"""Fixed-topology feedforward controller: genome <-> weights, forward pass.

The hidden layer has 20 neurons of which one is a constant-one bias unit;
the 19 computational units and all outputs use tanh, so every action
component lies strictly inside (-1, 1).  A genome is the flat weight
vector: W1 (inputs x hidden) row-major, then W2 (hidden+bias x outputs)
row-major.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

GENOME_MAGIC = b"MEVO"
GENOME_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ControllerSpec:
    """Network dimensions; hidden count excludes the bias unit."""

    n_in: int
    n_out: int
    n_hidden_computational: int = 19

    def __post_init__(self):
        if self.n_in < 1 or self.n_out < 1 or self.n_hidden_computational < 1:
            raise ValueError("network dimensions must be >= 1")

    @property
    def genome_length(self) -> int:
        nh = self.n_hidden_computational
        return self.n_in * nh + (nh + 1) * self.n_out


def decode(spec: ControllerSpec, genome: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a flat genome into (W1, W2).

    W1 has shape (n_in, n_hidden); W2 has shape (n_hidden + 1, n_out) with
    the bias unit's outgoing weights in the last row.
    """
    genome = np.asarray(genome, dtype=np.float64)
    if genome.shape != (spec.genome_length,):
        raise ValueError(
            f"genome length {genome.shape} does not match spec length ({spec.genome_length},)"
        )
    nh = spec.n_hidden_computational
    w1 = genome[: spec.n_in * nh].reshape(spec.n_in, nh)
    w2 = genome[spec.n_in * nh :].reshape(nh + 1, spec.n_out)
    return w1, w2


def encode(spec: ControllerSpec, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """Flatten (W1, W2) back into a genome; inverse of decode."""
    nh = spec.n_hidden_computational
    if w1.shape != (spec.n_in, nh) or w2.shape != (nh + 1, spec.n_out):
        raise ValueError(f"weight shapes {w1.shape}, {w2.shape} do not match spec")
    return np.concatenate([np.ravel(w1), np.ravel(w2)]).astype(np.float64)


def forward(spec: ControllerSpec, genome: np.ndarray, observation: np.ndarray) -> np.ndarray:
    """Pure forward pass: observation -> action, all components in (-1, 1)."""
    obs = np.asarray(observation, dtype=np.float64)
    if obs.shape != (spec.n_in,):
        raise ValueError(f"observation shape {obs.shape} does not match n_in={spec.n_in}")
    if not np.all(np.isfinite(obs)):
        raise ValueError("observation contains non-finite values")
    w1, w2 = decode(spec, genome)
    hidden = np.tanh(obs @ w1)
    hidden_ext = np.concatenate([hidden, [1.0]])
    return np.tanh(hidden_ext @ w2)


def save_genome(path, spec: ControllerSpec, genome: np.ndarray) -> None:
    """Binary genome file: magic, version, dims (little-endian u32), then
    the little-endian float64 weight vector."""
    genome = np.asarray(genome, dtype=np.float64)
    if genome.shape != (spec.genome_length,):
        raise ValueError("genome length does not match spec")
    header = GENOME_MAGIC + struct.pack(
        "<4I", GENOME_FORMAT_VERSION, spec.n_in, spec.n_hidden_computational, spec.n_out
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(genome.astype("<f8").tobytes())


def load_genome(path) -> tuple[ControllerSpec, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != GENOME_MAGIC:
        raise ValueError(f"{path}: not a genome file")
    version, n_in, nh, n_out = struct.unpack("<4I", blob[4:20])
    if version != GENOME_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported genome format version {version}")
    spec = ControllerSpec(n_in=n_in, n_out=n_out, n_hidden_computational=nh)
    genome = np.frombuffer(blob[20:], dtype="<f8").astype(np.float64)
    if genome.shape != (spec.genome_length,):
        raise ValueError(f"{path}: genome payload length {genome.shape} does not match header dims")
    return spec, genome


def genome_to_csv(path, spec: ControllerSpec, genome: np.ndarray) -> None:
    """Inspection export: one (index, value) row per weight."""
    genome = np.asarray(genome, dtype=np.float64)
    if genome.shape != (spec.genome_length,):
        raise ValueError("genome length does not match spec")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "value"])
        for i, v in enumerate(genome):
            w.writerow([i, repr(float(v))])
