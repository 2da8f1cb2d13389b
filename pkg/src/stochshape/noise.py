"""Hierarchical cylindrical Brownian noise on the Haar basis of S_1, and noise operators.

Every Haar increment dB^{l,k,c}_step is drawn from a counter-based stream keyed
on (seed, trial, l, c); within a stream, steps and positions k fill a
``(steps, |A_l|)`` block in row-major order, so the value at (l, k, c, step)
never depends on ``max_level`` or on the total number of steps.  Level-n cell
increments are inverse Haar transforms of the coefficients with l < n, which
makes coarse and fine discretizations see the same Brownian motion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .dyadic import (DyadicFunction, coarsen, f_s_norm, haar_synthesis, level_of,
                     refine)

_HAAR_TAG = 0
_POINT_TAG = 1


def c_ns(n: int, s: float) -> float:
    """C_{n,s} = sum_{l >= n+1} 2**(l(1-s)) = 2**((n+1)(1-s)) / (1 - 2**(1-s))."""
    if s <= 1:
        raise ValueError("C_{n,s} requires s > 1")
    return 2.0 ** ((n + 1) * (1 - s)) / (1.0 - 2.0 ** (1 - s))


def finite_tail(n: int, N: int, s: float) -> float:
    """sum_{l=n+1}^{N-1} 2**(l(1-s)): the part of C_{n,s} carried by a level-N truncation."""
    return float(sum(2.0 ** (l * (1 - s)) for l in range(n + 1, N)))


class NoiseDriver:
    """Reproducible family of Brownian increments indexed by Haar position and coordinate.

    Args:
        seed: master seed (unsigned 64-bit).
        max_level: N; Haar levels -1 .. N-1 are available, i.e. cells up to level N.
        dim: number of independent coordinates d.
        steps: number of time steps.
        dt: step size; every increment is N(0, dt).
        trials: ``None`` for a single path, or the number of independent paths
            (trial ids 0 .. trials-1) stacked on a leading batch axis.  Trial 0
            of a batch reproduces the single-path driver with the same seed.
    """

    def __init__(self, seed: int, max_level: int = 10, dim: int = 1, steps: int = 1,
                 dt: float = 1.0, trials: int | None = None):
        if max_level < 0:
            raise ValueError("max_level must be >= 0")
        if steps < 1:
            raise ValueError("steps must be >= 1")
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.seed = int(seed)
        self.max_level = int(max_level)
        self.dim = int(dim)
        self.steps = int(steps)
        self.dt = float(dt)
        self.trials = trials
        self._trial_ids = [0] if trials is None else list(range(int(trials)))
        self._haar_cache: dict[int, np.ndarray] = {}
        self._point_cache: dict[int, np.ndarray] = {}

    def __repr__(self):
        return (f"NoiseDriver(seed={self.seed}, max_level={self.max_level}, dim={self.dim}, "
                f"steps={self.steps}, dt={self.dt}, trials={self.trials})")

    def _stream(self, trial: int, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(trial,) + key)
        return np.random.Generator(np.random.Philox(ss))

    def _batch(self, blocks: list[np.ndarray]) -> np.ndarray:
        out = np.stack(blocks)
        return out[0] if self.trials is None else out

    def haar_level_increments(self, l: int) -> np.ndarray:
        """Increments of B^{l,k,c}: shape (batch..., steps, |A_l|, d)."""
        if not -1 <= l < self.max_level:
            raise ValueError(f"Haar level {l} outside [-1, {self.max_level - 1}]")
        if l not in self._haar_cache:
            width = 1 if l < 0 else 2**l
            scale = np.sqrt(self.dt)
            blocks = []
            for t in self._trial_ids:
                per_coord = [self._stream(t, _HAAR_TAG, l + 1, c).standard_normal((self.steps, width))
                             for c in range(self.dim)]
                blocks.append(scale * np.stack(per_coord, axis=-1))
            arr = self._batch(blocks)
            arr.setflags(write=False)
            self._haar_cache[l] = arr
        return self._haar_cache[l]

    def haar_increment_path(self, n: int) -> np.ndarray:
        """Flat Haar table of the increments with l < n: shape (batch..., steps, 2**n, d)."""
        self._check_level(n)
        return np.concatenate([self.haar_level_increments(l) for l in range(-1, n)], axis=-2)

    def sample_increments(self, step: int) -> np.ndarray:
        """Full Haar-indexed increment table at one step: shape (batch..., 2**N, d)."""
        if not 0 <= step < self.steps:
            raise IndexError(f"step {step} outside [0, {self.steps})")
        return self.haar_increment_path(self.max_level)[..., step, :, :]

    def cell_increment_path(self, n: int) -> np.ndarray:
        """Cell values of dW^n for every step: shape (batch..., steps, 2**n, d).

        Each cell value equals 2**(n/2) dgamma^{n,k} with dgamma i.i.d. N(0, dt).
        """
        return haar_synthesis(self.haar_increment_path(n), axis=-2)

    def cell_increments(self, step: int, n: int) -> np.ndarray:
        if not 0 <= step < self.steps:
            raise IndexError(f"step {step} outside [0, {self.steps})")
        self._check_level(n)
        coeffs = np.concatenate([self.haar_level_increments(l)[..., step, :, :]
                                 for l in range(-1, n)], axis=-2)
        return haar_synthesis(coeffs, axis=-2)

    def standard_increments(self, npoints: int) -> np.ndarray:
        """Per-point i.i.d. N(0, dt) increments: shape (batch..., steps, npoints, d).

        For a dyadic count 2**n <= 2**N these are the normalized cell increments
        dgamma^{n,k} (so point and density discretizations share one noise);
        otherwise each point gets its own keyed stream.
        """
        try:
            n = level_of(npoints)
        except ValueError:
            n = None
        if n is not None and n <= self.max_level:
            return self.cell_increment_path(n) * 2.0 ** (-n / 2)
        if npoints not in self._point_cache:
            scale = np.sqrt(self.dt)
            blocks = []
            for t in self._trial_ids:
                cols = [[self._stream(t, _POINT_TAG, i, c).standard_normal(self.steps)
                         for c in range(self.dim)] for i in range(npoints)]
                blocks.append(scale * np.transpose(np.asarray(cols), (2, 0, 1)))
            arr = self._batch(blocks)
            arr.setflags(write=False)
            self._point_cache[npoints] = arr
        return self._point_cache[npoints]

    def _check_level(self, n: int):
        if not 0 <= n <= self.max_level:
            raise ValueError(f"level {n} outside [0, max_level={self.max_level}]")


class PermutedNoise:
    """View of a driver with per-point streams permuted: point i reads stream ``perm[i]``."""

    def __init__(self, driver, perm):
        self.driver = driver
        self.perm = np.asarray(perm)
        self.steps = driver.steps
        self.dt = driver.dt
        self.trials = driver.trials

    def standard_increments(self, npoints: int) -> np.ndarray:
        if len(self.perm) != npoints:
            raise ValueError("permutation length does not match the point count")
        return self.driver.standard_increments(npoints)[..., self.perm, :]


@dataclass(frozen=True)
class Scalar:
    """sigma = epsilon * Id."""

    epsilon: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class DyadicMultiplier:
    """sigma = multiplication by a scalar piecewise-constant function f, applied to all coordinates."""

    f: DyadicFunction

    def __post_init__(self):
        if self.f.dim != 1:
            raise ValueError("multiplier must be scalar")
        if not np.isfinite(f_s_norm(self.f, 1.5)):
            raise ValueError("multiplier must have finite F_s norm")


SigmaOperator = Union[Scalar, DyadicMultiplier]


def sigma_cells(sigma: SigmaOperator, npoints: int) -> np.ndarray:
    """Per-point multiplier values, shape (npoints,)."""
    if isinstance(sigma, Scalar):
        return np.full(npoints, float(sigma.epsilon))
    n = level_of(npoints)
    f = sigma.f
    f = refine(f, n) if f.level <= n else coarsen(f, n)
    return f.values[:, 0].copy()


def apply_sigma(sigma: SigmaOperator, dW: np.ndarray, level: int) -> np.ndarray:
    """Apply sigma to level-``level`` cell increments of shape (..., 2**level, d)."""
    if dW.shape[-2] != 2**level:
        raise ValueError("increment table does not match the level")
    return sigma_cells(sigma, 2**level)[:, None] * dW


def is_zero(sigma: SigmaOperator) -> bool:
    if isinstance(sigma, Scalar):
        return sigma.epsilon == 0
    return not np.any(sigma.f.values)


def truncation_error_path(driver: NoiseDriver, n: int, s: float) -> np.ndarray:
    """|W_t - W^n_t|_{H_{-s}} on the time grid t = 0, dt, ..., steps*dt.

    ``W`` is the level-N truncation carried by the driver; ``W^n`` keeps Haar
    levels l <= n (the index convention under which the tail constant is
    C_{n,s}).  Returns shape (batch..., steps + 1).
    """
    if n < -1:
        raise ValueError("n must be >= -1")
    batch = () if driver.trials is None else (driver.trials,)
    sq = np.zeros(batch + (driver.steps + 1,))
    for l in range(n + 1, driver.max_level):
        B = np.cumsum(driver.haar_level_increments(l), axis=-3)
        sq[..., 1:] += 2.0 ** (-l * s) * np.sum(B**2, axis=(-2, -1))
    return np.sqrt(sq)


def truncation_error(driver: NoiseDriver, n: int, t_index: int, s: float):
    """|W_t - W^n_t|_{H_{-s}} at t = t_index * dt (scalar, or one value per trial)."""
    if not 0 <= t_index <= driver.steps:
        raise IndexError(f"t_index {t_index} outside [0, {driver.steps}]")
    out = truncation_error_path(driver, n, s)[..., t_index]
    return float(out) if np.ndim(out) == 0 else out
