"""Deterministic Gaussian-blob datasets for desk-scale benchmark runs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import LabeledDataset
from .seeding import standard_normals, stream


@dataclass(frozen=True)
class SynthSpec:
    """Two spherical unit-variance Gaussians.

    Benign samples are centred at the origin, malicious ones at
    ``(separation, 0, ..., 0)``.
    """

    n_benign: int
    n_malicious: int
    dim: int
    separation: float
    seed: int = 0

    def __post_init__(self):
        if self.n_benign < 1 or self.n_malicious < 1:
            raise ValueError("each class needs at least one sample")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.separation >= 0:
            raise ValueError("separation must be >= 0")

    @property
    def bayes_error(self) -> float:
        # equal-prior error of the optimal linear rule
        return 0.5 * math.erfc(self.separation / 2 / math.sqrt(2))


def generate(spec: SynthSpec, name: str | None = None) -> LabeledDataset:
    """Benign rows first, then malicious rows; ids follow row order."""
    n = spec.n_benign + spec.n_malicious
    z = standard_normals(stream(spec.seed), n * spec.dim).reshape(n, spec.dim)
    z[spec.n_benign:, 0] += spec.separation
    y = np.r_[np.zeros(spec.n_benign, dtype=np.int64), np.ones(spec.n_malicious, dtype=np.int64)]
    label = name or f"synth-{spec.n_benign}-{spec.n_malicious}-d{spec.dim}-s{spec.separation:g}-seed{spec.seed}"
    return LabeledDataset(z, y, np.arange(n), label)
