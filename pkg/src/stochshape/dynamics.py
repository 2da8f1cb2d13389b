"""Weighted landmark Hamiltonian system and its deterministic and stochastic integrators.

The state holds positions ``q`` and momenta ``p`` of shape ``(..., n, d)`` and
positive cell weights ``w`` of shape ``(n,)``.  With ``w = 1`` this is the
classical landmark system; with ``w = 1/n`` (n = 2**m) the momenta are cell
values of a momentum density on the dyadic partition of S_1 and the same
equations discretize the curve system.  Leading axes of ``q`` and ``p`` are
independent batch members (e.g. Monte Carlo trials).

    H = 1/2 sum_ij w_i w_j <p_i, p_j> kappa(q_i, q_j)
    dq_i/dt = (1/w_i) dH/dp_i = sum_j w_j kappa(q_i, q_j) p_j
    dp_i/dt = -(1/w_i) dH/dq_i = -sum_j w_j <p_i, p_j> grad_1 kappa(q_i, q_j)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import Kernel, pairwise_sqdist
from .noise import SigmaOperator, is_zero, sigma_cells


class IntegrationError(RuntimeError):
    """A trajectory reached a non-finite state."""

    def __init__(self, step: int, max_q: float, max_p: float, energy: float):
        self.step, self.max_q, self.max_p, self.energy = step, max_q, max_p, energy
        super().__init__(f"non-finite state at step {step}: max|q|={max_q:.3g}, "
                         f"max|p|={max_p:.3g}, H={energy:.3g}")


@dataclass(frozen=True)
class PhaseState:
    q: np.ndarray
    p: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if q.ndim < 2 or q.shape != p.shape:
            raise ValueError(f"q and p must share a shape (..., n, d); got {q.shape} and {p.shape}")
        if w.shape != (q.shape[-2],):
            raise ValueError(f"weights must have shape ({q.shape[-2]},), got {w.shape}")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and strictly positive")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "w", w)

    @classmethod
    def density(cls, q, p) -> "PhaseState":
        """Cell-value state with weights 1/n (the momentum is a density)."""
        q = np.asarray(q, dtype=float)
        n = q.shape[-2]
        return cls(q, p, np.full(n, 1.0 / n))

    @classmethod
    def points(cls, q, p) -> "PhaseState":
        """Classical landmark state with unit weights."""
        q = np.asarray(q, dtype=float)
        return cls(q, p, np.ones(q.shape[-2]))

    @property
    def n(self) -> int:
        return self.q.shape[-2]

    @property
    def d(self) -> int:
        return self.q.shape[-1]

    @property
    def is_density(self) -> bool:
        return bool(np.allclose(self.w, 1.0 / self.n, rtol=1e-12, atol=0))

    def is_finite(self) -> np.ndarray:
        return np.all(np.isfinite(self.q), axis=(-2, -1)) & np.all(np.isfinite(self.p), axis=(-2, -1))

    def permuted(self, perm) -> "PhaseState":
        perm = np.asarray(perm)
        return PhaseState(self.q[..., perm, :], self.p[..., perm, :], self.w[perm])


@dataclass
class Trajectory:
    """Recorded states; ``q`` and ``p`` have shape (len(times), ..., n, d)."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    w: np.ndarray
    meta: dict = field(default_factory=dict)
    aborted: np.ndarray | None = None

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> PhaseState:
        return PhaseState(self.q[i], self.p[i], self.w)

    @property
    def final(self) -> PhaseState:
        return self.state(-1)

    def energies(self, k: Kernel) -> np.ndarray:
        return np.array([hamiltonian(self.state(i), k) for i in range(len(self.times))])


def _pair(q: np.ndarray, k: Kernel):
    return k.profile_and_slope(pairwise_sqdist(q))


def _energy(q, p, w, kap):
    pw = p * w[:, None]
    return 0.5 * np.sum(pw * (kap @ pw), axis=(-2, -1))


def _field(q, p, w, k):
    """(dq/dt, dp/dt) for the weighted system."""
    kap, phi = _pair(q, k)
    dq = kap @ (p * w[:, None])
    A = (p @ np.swapaxes(p, -1, -2)) * phi
    A *= w
    gq = q * A.sum(axis=-1)[..., None] - A @ q
    return dq, -gq


def hamiltonian(x: PhaseState, k: Kernel):
    kap, _ = _pair(x.q, k)
    out = _energy(x.q, x.p, x.w, kap)
    return float(out) if np.ndim(out) == 0 else out


def grad_p(x: PhaseState, k: Kernel) -> np.ndarray:
    """Velocities sum_j w_j kappa(q_i, q_j) p_j."""
    kap = k.profile(pairwise_sqdist(x.q))
    return kap @ (x.p * x.w[:, None])


def grad_q(x: PhaseState, k: Kernel) -> np.ndarray:
    """sum_j w_j <p_i, p_j> grad_1 kappa(q_i, q_j); the momentum equation uses its negative."""
    return -_field(x.q, x.p, x.w, k)[1]


def velocity_field(x: PhaseState, k: Kernel, z) -> np.ndarray:
    """v(z) = sum_j w_j kappa(z, q_j) p_j for z of shape (d,) or (m, d)."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zz = np.atleast_2d(z)
    r2 = np.zeros(x.q.shape[:-2] + (zz.shape[0], x.n))
    for c in range(x.d):
        r2 += (zz[:, c][:, None] - x.q[..., None, :, c]) ** 2
    v = np.einsum("...mj,j,...jd->...md", k.profile(r2), x.w, x.p)
    return v[..., 0, :] if single else v


def total_momentum(x: PhaseState) -> np.ndarray:
    return np.einsum("i,...id->...d", x.w, x.p)


def _abort(step, q, p, w, k):
    with np.errstate(all="ignore"):
        kap, _ = _pair(q, k)
        energy = float(np.max(_energy(q, p, w, kap)))
    return IntegrationError(step, float(np.max(np.abs(q))), float(np.max(np.abs(p))), energy)


def integrate_geodesic(x0: PhaseState, k: Kernel, T: float = 1.0, steps: int = 200) -> Trajectory:
    """Classical RK4 on the deterministic system, recording every step."""
    if steps < 1 or not T > 0:
        raise ValueError("need steps >= 1 and T > 0")
    dt = T / steps
    w = x0.w
    qs = np.empty((steps + 1,) + x0.q.shape)
    ps = np.empty_like(qs)
    q, p = x0.q.copy(), x0.p.copy()
    qs[0], ps[0] = q, p
    with np.errstate(over="ignore", invalid="ignore"):  # non-finite states are checked per step
        for i in range(steps):
            k1q, k1p = _field(q, p, w, k)
            k2q, k2p = _field(q + 0.5 * dt * k1q, p + 0.5 * dt * k1p, w, k)
            k3q, k3p = _field(q + 0.5 * dt * k2q, p + 0.5 * dt * k2p, w, k)
            k4q, k4p = _field(q + dt * k3q, p + dt * k3p, w, k)
            q = q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
            p = p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
                raise _abort(i + 1, q, p, w, k)
            qs[i + 1], ps[i + 1] = q, p
    times = np.linspace(0.0, T, steps + 1)
    meta = {"integrator": "rk4", "kernel": k, "T": T, "steps": steps, "dt": dt}
    return Trajectory(times, qs, ps, w.copy(), meta)


def noise_scale(x: PhaseState) -> np.ndarray:
    """Per-point factor turning N(0, dt) increments into momentum increments.

    Equals sqrt(mu_i) / w_i with mu_i = 1/n the cell measure: sqrt(n) for the
    density convention (cell values of the projected cylindrical noise) and
    1/sqrt(n) for the point convention (noise normalized by the landmark count).
    """
    return np.sqrt(1.0 / x.n) / x.w


def euler_maruyama(x0: PhaseState, k: Kernel, sigma: SigmaOperator, driver, T: float = 1.0,
                   steps: int = 200, on_abort: str = "raise") -> Trajectory:
    """Euler-Maruyama for dp = -grad_q dt + sigma dW, dq = grad_p dt.

    ``driver`` is any object exposing ``steps``, ``dt`` and
    ``standard_increments(n)`` (a :class:`~stochshape.noise.NoiseDriver` or a
    permuted view of one).  ``on_abort="mask"`` keeps integrating the other
    batch members when one becomes non-finite and records it in
    ``Trajectory.aborted``; ``"raise"`` raises :class:`IntegrationError`.
    """
    if steps < 1 or not T > 0:
        raise ValueError("need steps >= 1 and T > 0")
    if on_abort not in ("raise", "mask"):
        raise ValueError("on_abort must be 'raise' or 'mask'")
    dt = T / steps
    n = x0.n
    if is_zero(sigma):
        dW = None
    else:
        if driver.steps != steps or not np.isclose(driver.dt, dt, rtol=1e-12, atol=0):
            raise ValueError(f"driver grid (steps={driver.steps}, dt={driver.dt}) "
                             f"does not match integration grid (steps={steps}, dt={dt})")
        max_level = getattr(driver, "max_level", None)
        if x0.is_density and max_level is not None and 2**max_level < n:
            raise ValueError(f"driver max_level {max_level} is too coarse for {n} cells")
        scale = (sigma_cells(sigma, n) * noise_scale(x0))[:, None]
        dW = driver.standard_increments(n)
        dW = np.moveaxis(dW, -3, 0)  # time first
        if dW.shape[-1] != x0.d:
            raise ValueError("driver dimension does not match the state dimension")
        dW = dW * scale
    if dW is None:
        trials = getattr(driver, "trials", None)
        noise_batch = () if trials is None else (int(trials),)
    else:
        noise_batch = dW.shape[1:-2]
    batch = np.broadcast_shapes(x0.q.shape[:-2], noise_batch)
    w = x0.w
    q = np.broadcast_to(x0.q, batch + x0.q.shape[-2:]).copy()
    p = np.broadcast_to(x0.p, batch + x0.p.shape[-2:]).copy()
    qs = np.empty((steps + 1,) + q.shape)
    ps = np.empty_like(qs)
    qs[0], ps[0] = q, p
    aborted = np.zeros(batch, dtype=bool)
    abort_step = np.full(batch, -1, dtype=int)
    with np.errstate(over="ignore", invalid="ignore"):  # non-finite states are checked per step
        for i in range(steps):
            dq, dp = _field(q, p, w, k)
            p = p + dp * dt
            if dW is not None:
                p = p + dW[i]
            q = q + dq * dt
            ok = np.all(np.isfinite(q), axis=(-2, -1)) & np.all(np.isfinite(p), axis=(-2, -1))
            if not np.all(ok | aborted):
                if on_abort == "raise":
                    raise _abort(i + 1, q, p, w, k)
                new = ~ok & ~aborted
                abort_step[new] = i + 1
                aborted |= new
                q[aborted] = np.nan
                p[aborted] = np.nan
            qs[i + 1], ps[i + 1] = q, p
    times = np.linspace(0.0, T, steps + 1)
    meta = {"integrator": "euler_maruyama", "kernel": k, "sigma": sigma, "T": T, "steps": steps,
            "dt": dt, "noise": repr(driver), "abort_steps": abort_step}
    return Trajectory(times, qs, ps, w.copy(), meta, aborted)


def with_momentum(x: PhaseState, p) -> PhaseState:
    return replace(x, p=np.asarray(p, dtype=float))
