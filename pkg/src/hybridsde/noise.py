"""
Reproducible Brownian increments.

Each path owns two independent streams (state noise ``W`` and measurement
noise ``V``). A stream is keyed by ``(seed, path_index, stream_tag)`` through
``numpy.random.SeedSequence``, whose hash-based mixing gives statistically
independent generators without any sequential hand-off, so paths can be
produced in any order or in parallel and still match bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError

__all__ = ["NoisePaths", "stream_generator", "generate_noise", "generate_batch", "coarsen"]

W_STREAM = 0
V_STREAM = 1


@dataclass(frozen=True)
class NoisePaths:
    """
    Increments of ``W`` and ``V`` on a uniform grid.

    ``dW`` and ``dV`` have shape ``(n_steps, n)`` for one path or
    ``(n_paths, n_steps, n)`` for a batch, in which case ``path_index`` is the
    index of the first path.
    """

    dW: np.ndarray
    dV: np.ndarray
    dt: float
    seed: int = 0
    path_index: int = 0

    def __post_init__(self):
        if self.dW.shape != self.dV.shape or self.dW.ndim not in (2, 3):
            raise DimensionError(f"bad increment shapes {self.dW.shape}, {self.dV.shape}")

    @property
    def n_steps(self) -> int:
        return self.dW.shape[-2]

    @property
    def dim(self) -> int:
        return self.dW.shape[-1]

    @property
    def batched(self) -> bool:
        return self.dW.ndim == 3

    def W(self) -> np.ndarray:
        """Brownian path on the grid, with a leading zero."""
        return _cumulative(self.dW)

    def V(self) -> np.ndarray:
        return _cumulative(self.dV)

    def scaled(self, factor: float) -> "NoisePaths":
        return NoisePaths(self.dW * factor, self.dV * factor, self.dt, self.seed, self.path_index)


def _cumulative(d: np.ndarray) -> np.ndarray:
    out = np.zeros(d.shape[:-2] + (d.shape[-2] + 1, d.shape[-1]))
    np.cumsum(d, axis=-2, out=out[..., 1:, :])
    return out


def stream_generator(seed: int, path_index: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def generate_noise(
    n_steps: int,
    dt: float,
    dim: int,
    seed: int = 0,
    path_index: int = 0,
    measurement_noise: bool = True,
) -> NoisePaths:
    """Increments for a single path; ``dV`` is zero when measurement noise is off."""
    sd = np.sqrt(dt)
    dW = stream_generator(seed, path_index, W_STREAM).standard_normal((n_steps, dim)) * sd
    if measurement_noise:
        dV = stream_generator(seed, path_index, V_STREAM).standard_normal((n_steps, dim)) * sd
    else:
        dV = np.zeros((n_steps, dim))
    return NoisePaths(dW, dV, dt, seed, path_index)


def generate_batch(
    n_steps: int,
    dt: float,
    dim: int,
    seed: int,
    path_indices: Sequence[int],
    measurement_noise: bool = True,
) -> NoisePaths:
    paths = [generate_noise(n_steps, dt, dim, seed, i, measurement_noise) for i in path_indices]
    first = int(path_indices[0]) if len(path_indices) else 0
    return NoisePaths(
        np.stack([p.dW for p in paths]),
        np.stack([p.dV for p in paths]),
        dt,
        seed,
        first,
    )


def coarsen(noise: NoisePaths, factor: int) -> NoisePaths:
    """Sum consecutive blocks of ``factor`` increments (same Brownian path, step ``factor*dt``)."""
    if factor < 1 or noise.n_steps % factor:
        raise DimensionError(f"cannot coarsen {noise.n_steps} steps by {factor}")

    def block_sum(d):
        shape = d.shape[:-2] + (noise.n_steps // factor, factor, d.shape[-1])
        return d.reshape(shape).sum(axis=-2)

    return NoisePaths(
        block_sum(noise.dW), block_sum(noise.dV), noise.dt * factor, noise.seed, noise.path_index
    )
