"""Experiments: multiresolution convergence, energy injection, smoothness, equivariance, reparameterization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dyadic import (DyadicFunction, coarsen, haar_analysis,
                     haar_weighted_norm, level_of, refine_values)
from .dynamics import (PhaseState, Trajectory, euler_maruyama, hamiltonian,
                       integrate_geodesic)
from .kernels import Kernel, pairwise_sqdist
from .noise import (DyadicMultiplier, NoiseDriver, PermutedNoise, Scalar,
                    SigmaOperator, sigma_cells)
from .shapes import resample_arclength  # noqa: F401  (part of the analysis surface)


def _fit_slope(x, y) -> float:
    return float(np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)[0])


def state_distance(dq: np.ndarray, dp: np.ndarray, s: float, axis: int = -2) -> np.ndarray:
    """H_{-s} product norm sqrt(|dp|^2 + |dq|^2) of cell-value differences."""
    nq = haar_weighted_norm(haar_analysis(dq, axis=axis), -s, axis=axis)
    npp = haar_weighted_norm(haar_analysis(dp, axis=axis), -s, axis=axis)
    return np.sqrt(nq**2 + npp**2)


def converge_study(q0: DyadicFunction, p0: DyadicFunction, k: Kernel, sigma: SigmaOperator,
                   s: float = 1.5, levels=(3, 4, 5, 6, 7), trials: int = 20, T: float = 1.0,
                   steps: int = 200, seed: int = 0) -> dict:
    """Coupled multilevel runs against the reference level N = q0.level.

    Every level is driven by the same :class:`NoiseDriver`, so level-n noise is
    the exact Haar truncation of the reference noise.  Initial data are L2
    projections of (q0, p0).  The distance of a trial at level n is the sup over
    recorded times of the H_{-s} distance to the reference, both embedded at
    level N.  Trials that abort at any level are excluded and counted.
    """
    N = q0.level
    if p0.level != N or p0.dim != q0.dim:
        raise ValueError("q0 and p0 must share level and dimension")
    levels = sorted(int(n) for n in levels)
    if any(n < 0 or n > N for n in levels):
        raise ValueError(f"levels must lie in [0, {N}]")
    driver = NoiseDriver(seed, max_level=N, dim=q0.dim, steps=steps, dt=T / steps, trials=trials)

    def run(n):
        x = PhaseState.density(coarsen(q0, n).values, coarsen(p0, n).values)
        return euler_maruyama(x, k, sigma, driver, T, steps, on_abort="mask")

    ref = run(N)
    aborted = ref.aborted.copy()
    dist = {}
    for n in levels:
        tr = ref if n == N else run(n)
        aborted |= tr.aborted
        dq = refine_values(tr.q, N - n) - ref.q
        dp = refine_values(tr.p, N - n) - ref.p
        with np.errstate(invalid="ignore"):
            dist[n] = state_distance(dq, dp, s).max(axis=0)
    keep = ~aborted
    means = [float(np.mean(dist[n][keep])) for n in levels]
    positive = [(n, m) for n, m in zip(levels, means) if m > 0]
    slope = float("nan")
    if len(positive) >= 2:
        slope = _fit_slope([n for n, _ in positive], np.log2([m for _, m in positive]))
    return {
        "reference_level": N, "s": s, "levels": levels, "mean_distance": means,
        "slope": slope, "trials": trials, "aborted": int(aborted.sum()),
        "per_trial": {n: dist[n][keep] for n in levels},
    }


def energy_study(x0: PhaseState, k: Kernel, sigma: Scalar, T: float = 1.0, steps: int = 500,
                 trials: int = 1000, seed: int = 0) -> dict:
    """Monte Carlo of H(T) - H(0) under scalar noise, density convention, Gaussian kernel.

    The Ito correction injects epsilon^2 d / 2 per unit time regardless of the
    level, since kappa(q, q) = 1 and the per-cell noise variance is n dt.
    """
    if not x0.is_density:
        raise ValueError("energy_study expects the density convention (w = 1/n)")
    if k.family != "gaussian":
        raise ValueError("energy_study expects a Gaussian kernel")
    if not isinstance(sigma, Scalar):
        raise ValueError("energy_study expects a scalar sigma")
    n, d = x0.n, x0.d
    driver = NoiseDriver(seed, max_level=level_of(n), dim=d, steps=steps, dt=T / steps, trials=trials)
    tr = euler_maruyama(x0, k, sigma, driver, T, steps, on_abort="mask")
    keep = ~tr.aborted
    dH = hamiltonian(tr.final, k)[keep] - hamiltonian(x0, k)
    eps = sigma.epsilon
    K2 = k.diagonal_bound()
    return {
        "H0": hamiltonian(x0, k), "mean_dH": float(np.mean(dH)),
        "se": float(np.std(dH, ddof=1) / np.sqrt(len(dH))) if len(dH) > 1 else float("nan"),
        "predicted": eps**2 * d * T / 2, "injection_bound": K2 * eps**2 * d * n * T,
        "trials": trials, "aborted": int(tr.aborted.sum()), "dH": dH,
    }


def quadratic_variation(traj: Trajectory):
    """Mean over landmarks of sum over steps of |q_{t+dt} - q_t|^2 (one value per batch member)."""
    if len(traj.times) < 2:
        raise ValueError("need at least two recorded states")
    inc = np.diff(traj.q, axis=0)
    qv = np.sum(inc**2, axis=(0, -1)).mean(axis=-1)
    return float(qv) if np.ndim(qv) == 0 else qv


def kunita_flow(points, k: Kernel, T: float = 1.0, steps: int = 200, seed: int = 0,
                trials: int | None = None, jitter: float = 1e-10) -> Trajectory:
    """Euler discretization of the first-order stochastic flow restricted to tracked points.

    Each step moves the points by sqrt(dt) L xi with L L^T the current Gram
    matrix (plus ``jitter``) and xi standard normal per point and coordinate.
    """
    pts = np.asarray(points, dtype=float)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n, d = pts.shape
    dt = T / steps
    ids = [0] if trials is None else range(trials)
    xi = np.stack([np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(t, 2))))
                   .standard_normal((steps, n, d)) for t in ids])
    q = np.broadcast_to(pts, (len(ids), n, d)).copy()
    qs = np.empty((steps + 1,) + q.shape)
    qs[0] = q
    eye = np.eye(n)
    for i in range(steps):
        G = k.profile(pairwise_sqdist(q))
        try:
            L = np.linalg.cholesky(G + jitter * eye)
        except np.linalg.LinAlgError:
            try:
                L = np.linalg.cholesky(G + 1e4 * jitter * eye)
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError(f"Gram factorization failed at step {i}") from exc
        q = q + np.sqrt(dt) * (L @ xi[:, i])
        qs[i + 1] = q
    if trials is None:
        qs = qs[:, 0]
    times = np.linspace(0.0, T, steps + 1)
    meta = {"integrator": "kunita_euler", "kernel": k, "T": T, "steps": steps, "dt": dt, "seed": seed}
    return Trajectory(times, qs, np.zeros_like(qs), np.ones(n), meta)


def _permute_sigma(sigma: SigmaOperator, perm, n: int) -> SigmaOperator:
    if isinstance(sigma, Scalar):
        return sigma
    return DyadicMultiplier(DyadicFunction(sigma_cells(sigma, n)[perm]))


def equivariance_check(x0: PhaseState, perm, k: Kernel, sigma: SigmaOperator, T: float = 1.0,
                       steps: int = 200, seed: int = 0) -> float:
    """Max deviation between the run on permuted data (and permuted noise streams) and the permuted run."""
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(x0.n)):
        raise ValueError("perm must be a permutation of the cells")
    try:
        lev = level_of(x0.n)
    except ValueError:
        lev = 0
    driver = NoiseDriver(seed, max_level=lev, dim=x0.d, steps=steps, dt=T / steps)
    base = euler_maruyama(x0, k, sigma, driver, T, steps)
    moved = euler_maruyama(x0.permuted(perm), k, _permute_sigma(sigma, perm, x0.n),
                           PermutedNoise(driver, perm), T, steps)
    return float(max(np.max(np.abs(base.q[..., perm, :] - moved.q)),
                     np.max(np.abs(base.p[..., perm, :] - moved.p))))


@dataclass(frozen=True)
class PiecewiseAffine:
    """Bijection of S_1 = [0, 1) that is affine with positive slope on each piece.

    Piece i maps [starts[i], starts[i+1]) onto [images[i], images[i] + slopes[i] * width_i).
    """

    starts: tuple
    images: tuple
    slopes: tuple

    def __post_init__(self):
        a = np.asarray(self.starts, dtype=float)
        c = np.asarray(self.images, dtype=float)
        J = np.asarray(self.slopes, dtype=float)
        if not (len(a) == len(c) == len(J)) or a[0] != 0 or np.any(np.diff(a) <= 0) or a[-1] >= 1:
            raise ValueError("piece starts must be increasing from 0 inside [0, 1)")
        if np.any(J <= 0):
            raise ValueError("the Jacobian must be strictly positive on every piece")
        width = np.diff(np.append(a, 1.0))
        order = np.argsort(c)
        ends = c + J * width
        if abs(c[order[0]]) > 1e-12 or np.any(np.abs(c[order[1:]] - ends[order[:-1]]) > 1e-12) \
                or abs(ends[order[-1]] - 1) > 1e-12:
            raise ValueError("piece images must tile [0, 1)")

    @classmethod
    def identity(cls) -> "PiecewiseAffine":
        return cls((0.0,), (0.0,), (1.0,))

    @classmethod
    def cell_permutation(cls, perm, level: int) -> "PiecewiseAffine":
        """Cell ``i`` of the level-``level`` partition is mapped onto cell ``perm[i]``."""
        n = 2**level
        return cls(tuple(np.arange(n) / n), tuple(np.asarray(perm) / n), (1.0,) * n)

    def _piece(self, x):
        return np.clip(np.searchsorted(np.asarray(self.starts), x, side="right") - 1, 0, len(self.starts) - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = self._piece(x)
        a = np.asarray(self.starts)[i]
        return np.asarray(self.images)[i] + np.asarray(self.slopes)[i] * (x - a)

    def jacobian(self, x):
        return np.asarray(self.slopes)[self._piece(np.asarray(x, dtype=float))]

    def check_level(self, level: int):
        scaled = np.asarray(self.starts) * 2**level
        if np.any(np.abs(scaled - np.round(scaled)) > 1e-9):
            raise ValueError(f"piece boundaries are not level-{level} dyadic points")

    def pullback_average(self, values: np.ndarray, level: int) -> np.ndarray:
        """Level-``level`` cell averages of g o phi, for g given by cell values of shape (..., m_cells, d)."""
        self.check_level(level)
        m = values.shape[-2]
        edges = np.arange(2**level) / 2**level
        x0, x1 = edges, edges + 1.0 / 2**level
        i = self._piece(x0)
        y0 = self(x0)
        y1 = np.asarray(self.images)[i] + np.asarray(self.slopes)[i] * (x1 - np.asarray(self.starts)[i])
        # G: antiderivative of g, exact piecewise-linear in y
        G = np.concatenate([np.zeros(values.shape[:-2] + (1, values.shape[-1])),
                            np.cumsum(values, axis=-2) / m], axis=-2)
        grid = np.arange(m + 1) / m
        G0 = _interp_axis(y0, grid, G)
        G1 = _interp_axis(y1, grid, G)
        return (G1 - G0) / (y1 - y0)[:, None]


def _interp_axis(x, grid, G):
    """Linear interpolation of G (..., len(grid), d) at points x along axis -2."""
    idx = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2)
    t = (x - grid[idx]) / (grid[idx + 1] - grid[idx])
    return G[..., idx, :] * (1 - t)[:, None] + G[..., idx + 1, :] * t[:, None]


def reparam_pullback_study(curve: Callable, phi: PiecewiseAffine, k: Kernel, levels=(4, 5, 6, 7, 8),
                           T: float = 1.0, steps: int = 100, s: float = 1.5,
                           momentum: Callable | None = None, samples_per_cell: int = 64) -> dict:
    """Compare q_t o phi with the run started from (J p_0 o phi, q_0 o phi), deterministically.

    ``curve`` and ``momentum`` map an array of parameters in [0, 1) to shape
    (len(x), d).  The default momentum is half the curve (outward for a circle).
    At each level both runs use the density convention; q_t o phi is resampled
    to the level by exact cell averaging.  Reports sup-time L2 and H_{-s}
    deviations per level.
    """
    if momentum is None:
        def momentum(x):
            return 0.5 * np.asarray(curve(x))
    l2, hs = [], []
    for n in levels:
        phi.check_level(n)
        q0 = DyadicFunction.from_callable(curve, n, samples_per_cell).values
        p0 = DyadicFunction.from_callable(momentum, n, samples_per_cell).values
        qt0 = DyadicFunction.from_callable(lambda x: curve(phi(x)), n, samples_per_cell).values
        pt0 = DyadicFunction.from_callable(
            lambda x: phi.jacobian(x)[:, None] * np.asarray(momentum(phi(x))), n, samples_per_cell).values
        a = integrate_geodesic(PhaseState.density(q0, p0), k, T, steps)
        b = integrate_geodesic(PhaseState.density(qt0, pt0), k, T, steps)
        diff = phi.pullback_average(a.q, n) - b.q
        l2.append(float(np.max(np.sqrt(np.mean(np.sum(diff**2, axis=-1), axis=-1)))))
        hs.append(float(np.max(haar_weighted_norm(haar_analysis(diff), -s))))
    return {"levels": list(levels), "l2_deviation": l2, "h_neg_s_deviation": hs}

