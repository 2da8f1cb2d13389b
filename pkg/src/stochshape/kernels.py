"""Diagonal radial reproducing kernels k(x, y) = kappa(|x - y|) Id on R^d."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("gaussian", "cauchy")


@dataclass(frozen=True)
class Kernel:
    """Gaussian or Cauchy kernel of width ``width``.

    Gaussian: kappa = exp(-r^2 / (2 width^2)); Cauchy: kappa = 1 / (1 + r^2 / width^2).
    Both satisfy kappa(x, x) = 1.
    """

    family: str = "gaussian"
    width: float = 1.0

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not np.isfinite(self.width) or self.width <= 0:
            raise ValueError(f"kernel width must be positive, got {self.width}")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "width", float(self.width))

    def profile(self, r2):
        """kappa as a function of the squared distance."""
        r2 = np.asarray(r2, dtype=float)
        if self.family == "gaussian":
            out = np.asarray(r2 * (-0.5 / self.width**2))
            return np.exp(out, out=out)
        out = np.asarray(r2 * (1.0 / self.width**2))
        out += 1.0
        return np.reciprocal(out, out=out)

    def profile_and_slope(self, r2):
        """Return (kappa, phi) such that grad_x kappa(x, y) = phi * (x - y)."""
        kap = self.profile(r2)
        if self.family == "gaussian":
            return kap, kap * (-1.0 / self.width**2)
        return kap, np.square(kap) * (-2.0 / self.width**2)

    def eval(self, x, y) -> float:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return float(self.profile(np.sum((x - y) ** 2)))

    def grad1(self, x, y) -> np.ndarray:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        diff = x - y
        _, phi = self.profile_and_slope(np.sum(diff**2))
        return phi * diff

    def gram(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return self.profile(pairwise_sqdist(pts))

    def diagonal_bound(self) -> float:
        """K^2 = sup_x kappa(x, x); equal to 1 for both families."""
        return 1.0


def pairwise_sqdist(q: np.ndarray) -> np.ndarray:
    """Squared distances |q_i - q_j|^2 for q of shape (..., n, d), returning (..., n, n).

    Summed coordinate by coordinate so the result is exactly symmetric with a zero diagonal.
    """
    r2 = None
    for c in range(q.shape[-1]):
        x = q[..., c]
        diff = np.subtract(x[..., :, None], x[..., None, :])
        np.square(diff, out=diff)
        if r2 is None:
            r2 = diff
        else:
            r2 += diff
    if r2 is None:
        r2 = np.zeros(q.shape[:-1] + (q.shape[-2],))
    return r2
