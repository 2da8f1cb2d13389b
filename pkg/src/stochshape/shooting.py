"""Geodesic shooting: initial momentum whose time-1 flow carries q0 onto a target."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dynamics import PhaseState, integrate_geodesic
from .kernels import Kernel

logger = logging.getLogger(__name__)


def _weights(q0, w):
    return np.ones(len(q0)) if w is None else np.asarray(w, dtype=float)


def _endpoints(p0, q0, k, steps, w):
    """Time-1 positions for a single momentum (n, d) or a batch (b, n, d)."""
    p0 = np.asarray(p0, dtype=float)
    q = np.broadcast_to(q0, p0.shape)
    return integrate_geodesic(PhaseState(q, p0, w), k, 1.0, steps).q[-1]


def match_loss(p0, q0, target, k: Kernel, steps: int = 50, w=None):
    """sum_i w_i |q_i(1) - target_i|^2; ``p0`` may carry leading batch axes."""
    q0 = np.asarray(q0, dtype=float)
    target = np.asarray(target, dtype=float)
    if q0.shape != target.shape:
        raise ValueError(f"shape mismatch: {q0.shape} vs {target.shape}")
    w = _weights(q0, w)
    end = _endpoints(p0, q0, k, steps, w)
    out = np.einsum("i,...i->...", w, np.sum((end - target) ** 2, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def fd_gradient(p0, q0, target, k: Kernel, steps: int = 50, h: float = 1e-5, w=None,
                scheme: str = "central") -> np.ndarray:
    """Finite-difference gradient of :func:`match_loss` in every momentum coordinate.

    All perturbed momenta are integrated as one batch.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    p0 = np.asarray(p0, dtype=float)
    m = p0.size
    E = np.eye(m).reshape((m,) + p0.shape) * h
    if scheme == "central":
        losses = match_loss(np.concatenate([p0 + E, p0 - E]), q0, target, k, steps, w)
        g = (losses[:m] - losses[m:]) / (2 * h)
    elif scheme == "forward":
        losses = match_loss(np.concatenate([p0[None], p0 + E]), q0, target, k, steps, w)
        g = (losses[1:] - losses[0]) / h
    else:
        raise ValueError("scheme must be 'central' or 'forward'")
    return g.reshape(p0.shape)


@dataclass
class ShootOptions:
    max_iters: int = 500
    tol: float = 1e-6
    h: float = 1e-5
    step0: float = 1.0
    steps: int = 20
    armijo_c1: float = 1e-4
    max_halvings: int = 40
    metric: str = "kernel"
    metric_reg: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 0 or self.steps < 1:
            raise ValueError("need max_iters >= 0 and steps >= 1")
        if not (self.tol >= 0 and self.h > 0 and self.step0 > 0 and 0 < self.armijo_c1 < 1):
            raise ValueError("need tol >= 0, h > 0, step0 > 0 and 0 < armijo_c1 < 1")
        if self.metric not in ("kernel", "euclidean"):
            raise ValueError("metric must be 'kernel' or 'euclidean'")
        if not self.metric_reg > 0:
            raise ValueError("metric_reg must be positive")


@dataclass
class ShootResult:
    p0: np.ndarray
    history: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def loss(self) -> float:
        return self.history[-1]


def metric_solver(q0, k: Kernel, w=None, reg: float = 1e-4):
    """Return g -> M^{-1} g for the momentum energy metric M_ij = w_i w_j kappa(q0_i, q0_j).

    ``reg`` times the mean diagonal is added to keep M invertible; the Gram
    matrix of closely spaced landmarks is numerically singular.
    """
    q0 = np.asarray(q0, dtype=float)
    w = _weights(q0, w)
    M = k.gram(q0) * np.outer(w, w)
    M[np.diag_indices_from(M)] += reg * float(np.mean(np.diag(M)))
    c = cho_factor(M)
    return lambda g: cho_solve(c, g)


def shoot(q0, target, k: Kernel, opts: ShootOptions | None = None, w=None, p_init=None) -> ShootResult:
    """Steepest descent with Armijo backtracking on :func:`match_loss`.

    With ``opts.metric == "kernel"`` the descent direction is the gradient in
    the momentum energy metric at q0 (see :func:`metric_solver`); Euclidean
    descent on this problem stalls on the small Gram eigenvalues.  The
    finite-difference step is ``opts.h`` relative to max(1, max|p|).  After an
    accepted step the trial step length doubles, so the line search can grow
    back after shrinking.  Non-convergence is reported through
    ``ShootResult.converged``, not raised.
    """
    opts = opts or ShootOptions()
    q0 = np.asarray(q0, dtype=float)
    target = np.asarray(target, dtype=float)
    if q0.shape != target.shape:
        raise ValueError(f"shape mismatch: {q0.shape} vs {target.shape}")
    precond = metric_solver(q0, k, w, opts.metric_reg) if opts.metric == "kernel" else (lambda g: g)
    p = np.zeros_like(q0) if p_init is None else np.asarray(p_init, dtype=float).copy()
    loss = match_loss(p, q0, target, k, opts.steps, w)
    res = ShootResult(p, [loss])
    alpha = opts.step0
    for it in range(opts.max_iters):
        if loss <= opts.tol:
            res.converged = True
            break
        h = opts.h * max(1.0, float(np.max(np.abs(p))))
        g = fd_gradient(p, q0, target, k, opts.steps, h, w)
        direction = precond(g)
        slope = float(np.sum(g * direction))
        if not slope > 0:
            break
        for _ in range(opts.max_halvings):
            trial = p - alpha * direction
            new = match_loss(trial, q0, target, k, opts.steps, w)
            if new <= loss - opts.armijo_c1 * alpha * slope and new < loss:
                break
            alpha *= 0.5
        else:
            logger.info("line search failed at iteration %d (loss %.3e)", it, loss)
            break
        p, loss = trial, new
        res.history.append(loss)
        res.iterations = it + 1
        alpha *= 2.0
    else:
        res.converged = loss <= opts.tol
    res.p0 = p
    if not res.converged:
        logger.info("shooting stopped after %d iterations with loss %.3e", res.iterations, loss)
    return res
