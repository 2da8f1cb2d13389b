"""Piecewise-constant functions on the dyadic partition of the circle.

A level-``m`` function is stored as its ``2**m`` cell values (one row per cell,
one column per output coordinate).  Haar coefficients use the flat layout

    index 0            -> f_{-1,0}  (the mean)
    index 2**n + k     -> f_{n,k}   for 0 <= n < m, 0 <= k < 2**n

so a level-``m`` coefficient table has exactly ``2**m`` rows, the same as the
cell table.  The array-level helpers (``haar_analysis`` and friends) work on
any axis and any leading batch shape; the dataclasses wrap them for the
single-function case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np


def level_of(ncells: int) -> int:
    """Return ``m`` with ``2**m == ncells``; raise if ``ncells`` is not a power of two."""
    m = int(ncells).bit_length() - 1
    if ncells < 1 or 2**m != ncells:
        raise ValueError(f"cell count {ncells} is not a power of two")
    return m


def haar_levels(m: int) -> np.ndarray:
    """Haar level ``n`` of every row of a level-``m`` coefficient table (-1 for the mean)."""
    idx = np.arange(2**m)
    lev = np.full(2**m, -1, dtype=int)
    lev[1:] = np.floor(np.log2(idx[1:])).astype(int)
    return lev


def haar_analysis(values: np.ndarray, axis: int = -2) -> np.ndarray:
    """Finite Haar transform of cell values along ``axis``.

    Coefficients are L2(S_1) inner products against the orthonormal Haar
    functions, so the transform is an isometry between cell values with the
    cell-measure inner product and the coefficient l2 norm.
    """
    a = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    m = level_of(a.shape[0])
    out = np.empty_like(a)
    for n in range(m - 1, -1, -1):
        even, odd = a[0::2], a[1::2]
        out[2**n: 2**(n + 1)] = 2.0 ** (-n / 2 - 1) * (even - odd)
        a = 0.5 * (even + odd)
    out[0] = a[0]
    return np.moveaxis(out, 0, axis)


def haar_synthesis(coeffs: np.ndarray, axis: int = -2) -> np.ndarray:
    """Inverse of :func:`haar_analysis`."""
    c = np.moveaxis(np.asarray(coeffs, dtype=float), axis, 0)
    m = level_of(c.shape[0])
    a = c[0:1]
    for n in range(m):
        detail = 2.0 ** (n / 2) * c[2**n: 2**(n + 1)]
        nxt = np.empty((2 * a.shape[0],) + a.shape[1:])
        nxt[0::2] = a + detail
        nxt[1::2] = a - detail
        a = nxt
    return np.moveaxis(a, 0, axis)


def haar_weighted_norm(coeffs: np.ndarray, s: float, axis: int = -2) -> np.ndarray:
    """sqrt(sum 2**(n s) |f_{n,k}|**2) over the coefficient axis and the trailing coordinate axis.

    The coordinate axis is the last axis and is summed in quadrature; ``axis``
    must therefore not be the last one.
    """
    c = np.moveaxis(np.asarray(coeffs, dtype=float), axis, -2)
    lev = haar_levels(level_of(c.shape[-2]))
    weights = 2.0 ** (lev * s)
    return np.sqrt(np.einsum("...kc,k->...", c * c, weights))


def refine_values(values: np.ndarray, factor_levels: int, axis: int = -2) -> np.ndarray:
    """Duplicate each cell into ``2**factor_levels`` children along ``axis``."""
    return np.repeat(values, 2**factor_levels, axis=axis)


def coarsen_values(values: np.ndarray, factor_levels: int, axis: int = -2) -> np.ndarray:
    """Average groups of ``2**factor_levels`` consecutive cells along ``axis``.

    Averages pairs one level at a time, which is exact on refined (duplicated) cells.
    """
    a = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    for _ in range(factor_levels):
        a = 0.5 * (a[0::2] + a[1::2])
    return np.moveaxis(a, 0, axis)


def sobolev_constant(s: float) -> float:
    """C_s with C_s**2 = sum_{i>=0} 2**(-i(s-1)) = 2**(s-1)/(2**(s-1)-1), defined for s > 1."""
    if s <= 1:
        raise ValueError("C_s requires s > 1")
    return float(np.sqrt(2.0 ** (s - 1) / (2.0 ** (s - 1) - 1.0)))


@dataclass(frozen=True)
class DyadicFunction:
    """Piecewise-constant map S_1 -> R^d on the ``2**level`` dyadic cells."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError("values must have shape (2**m,) or (2**m, d)")
        level_of(v.shape[0])
        if not np.all(np.isfinite(v)):
            raise ValueError("cell values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def level(self) -> int:
        return level_of(self.values.shape[0])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def ncells(self) -> int:
        return self.values.shape[0]

    @classmethod
    def constant(cls, c, level: int) -> "DyadicFunction":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(np.tile(c, (2**level, 1)))

    @classmethod
    def haar(cls, n: int, k: int, level: int) -> "DyadicFunction":
        """The scalar Haar function psi_{n,k} sampled at ``level`` (n = -1 gives the constant 1)."""
        coeffs = np.zeros((2**level, 1))
        coeffs[0 if n < 0 else 2**n + k] = 1.0
        return cls(haar_synthesis(coeffs))

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], level: int,
                      samples_per_cell: int = 16) -> "DyadicFunction":
        """Cell averages of ``fn`` estimated by the midpoint rule inside each cell."""
        ncell = 2**level
        x = (np.arange(ncell * samples_per_cell) + 0.5) / (ncell * samples_per_cell)
        y = np.asarray(fn(x), dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        return cls(y.reshape(ncell, samples_per_cell, -1).mean(axis=1))

    def cell_edges(self) -> np.ndarray:
        return np.arange(self.ncells + 1) / self.ncells

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) / self.ncells))

    def __add__(self, other: "DyadicFunction") -> "DyadicFunction":
        a, b = _common_level(self, other)
        return DyadicFunction(a + b)

    def __sub__(self, other: "DyadicFunction") -> "DyadicFunction":
        a, b = _common_level(self, other)
        return DyadicFunction(a - b)

    def scale(self, c: float) -> "DyadicFunction":
        return DyadicFunction(c * self.values)


def _common_level(f: DyadicFunction, g: DyadicFunction):
    if f.dim != g.dim:
        raise ValueError("dimension mismatch")
    m = max(f.level, g.level)
    return refine(f, m).values, refine(g, m).values


@dataclass(frozen=True)
class HaarCoefficients:
    """Haar expansion of a :class:`DyadicFunction` in the flat layout described above."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        level_of(c.shape[0])
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def level(self) -> int:
        return level_of(self.coeffs.shape[0])

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def coeff(self, n: int, k: int = 0) -> np.ndarray:
        """The d-vector f_{n,k}."""
        if n < -1 or n >= self.level:
            raise IndexError(f"Haar level {n} outside [-1, {self.level - 1}]")
        if n == -1:
            if k != 0:
                raise IndexError("A_{-1} = {0}")
            return self.coeffs[0]
        if not 0 <= k < 2**n:
            raise IndexError(f"k={k} outside A_{n}")
        return self.coeffs[2**n + k]

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs**2)))


def haar_forward(f: DyadicFunction) -> HaarCoefficients:
    return HaarCoefficients(haar_analysis(f.values))


def haar_inverse(c: HaarCoefficients) -> DyadicFunction:
    return DyadicFunction(haar_synthesis(c.coeffs))


def _coeffs(c) -> np.ndarray:
    if isinstance(c, DyadicFunction):
        return haar_analysis(c.values)
    return c.coeffs


def h_s_norm(c: HaarCoefficients | DyadicFunction, s: float) -> float:
    """Weighted Haar norm with the literal weight 2**(n s) for every n >= -1."""
    return float(haar_weighted_norm(_coeffs(c), s))


def h_neg_s_norm(c: HaarCoefficients | DyadicFunction, s: float) -> float:
    """Dual norm sqrt(sum 2**(-n s) |f_{n,k}|**2)."""
    return float(haar_weighted_norm(_coeffs(c), -s))


def f_s_level_terms(f: DyadicFunction, s: float) -> np.ndarray:
    """Per-level difference terms of the F_s norm squared, for n = 0 .. level-1.

    Term ``n`` is 2**(n s - 1) * sum_k int_{I_{n,k}} |f(x + 2**-(n+1)) - f(x)|**2 dx
    with I_{n,k} the left half of the level-n cell k.  Terms with n >= level
    are identically zero: the shifted point stays inside the same level-m cell.
    """
    v = f.values
    m = f.level
    terms = np.zeros(m)
    for n in range(m):
        half = 2 ** (m - n - 1)  # cells in the left half of a level-n cell
        blocks = v.reshape(2**n, 2, half, f.dim)
        diff = blocks[:, 1] - blocks[:, 0]
        terms[n] = 2.0 ** (n * s - 1) * np.sum(diff**2) / 2**m
    return terms


def f_s_norm(f: DyadicFunction, s: float) -> float:
    return float(np.sqrt(f.l2_norm() ** 2 + np.sum(f_s_level_terms(f, s))))


def sup_norm(f: DyadicFunction) -> float:
    """Max over cells of the Euclidean norm of the cell value."""
    return float(np.max(np.linalg.norm(f.values, axis=1)))


def refine(f: DyadicFunction, target_level: int) -> DyadicFunction:
    if target_level < f.level:
        raise ValueError(f"cannot refine level {f.level} to lower level {target_level}")
    if target_level == f.level:
        return f
    return DyadicFunction(refine_values(f.values, target_level - f.level))


def coarsen(f: DyadicFunction, target_level: int) -> DyadicFunction:
    """L2 projection onto the level-``target_level`` piecewise constants."""
    if target_level > f.level:
        raise ValueError(f"cannot coarsen level {f.level} to higher level {target_level}")
    if target_level < 0:
        raise ValueError("target level must be >= 0")
    if target_level == f.level:
        return f
    return DyadicFunction(coarsen_values(f.values, f.level - target_level))


def pointwise_product(f: DyadicFunction, g: DyadicFunction) -> DyadicFunction:
    if f.level != g.level:
        raise ValueError(f"level mismatch: {f.level} vs {g.level}; refine first")
    if f.dim != 1 or g.dim != 1:
        raise ValueError("pointwise product is defined for scalar functions only")
    return DyadicFunction(f.values * g.values)


class ScalarMap(NamedTuple):
    """A real function with its first two derivatives, for composition bounds."""

    fn: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]


TANH = ScalarMap(
    np.tanh,
    lambda x: 1.0 / np.cosh(x) ** 2,
    lambda x: -2.0 * np.tanh(x) / np.cosh(x) ** 2,
)


def compose_scalar(G: ScalarMap | Callable, f: DyadicFunction) -> DyadicFunction:
    if f.dim != 1:
        raise ValueError("composition is defined for scalar functions only")
    fn = G.fn if isinstance(G, ScalarMap) else G
    return DyadicFunction(np.asarray(fn(f.values), dtype=float) * np.ones_like(f.values))


def sup_abs(fn: Callable[[np.ndarray], np.ndarray], lo: float = -50.0, hi: float = 50.0,
            num: int = 400_001) -> float:
    """Numerical sup of |fn| on a dense grid over [lo, hi]."""
    x = np.linspace(lo, hi, num)
    return float(np.max(np.abs(fn(x))))


def composition_lipschitz_bound(G: ScalarMap, s: float, r: float) -> float:
    """sqrt(2) (|G'|_inf + 3 C_s r |G''|_inf): Lipschitz constant of f -> G o f on the F_s ball of radius r."""
    return float(np.sqrt(2.0) * (sup_abs(G.d1) + 3.0 * sobolev_constant(s) * r * sup_abs(G.d2)))
