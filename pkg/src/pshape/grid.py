"""Uniform Cartesian grids, node masks, grid functions and discrete calculus.

Functions live on the nodes of a tensor lattice in one or two dimensions.
Gradients are cell quantities built from forward differences along the cell
edges. Integrals of node fields use lumped (trapezoidal-type) weights where a
cell only counts when all of its corners belong to the mask.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[float], float]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over an axis-aligned box.

    Attributes
    ----------
    extent : tuple of (a, b) pairs, one per axis
    n : tuple of node counts, one per axis
    """

    extent: tuple[tuple[float, float], ...]
    n: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.extent) != len(self.n) or len(self.n) not in (1, 2):
            raise ValueError(f"grid must be 1D or 2D, got extent={self.extent}, n={self.n}")
        for (a, b), k in zip(self.extent, self.n):
            if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
                raise ValueError(f"degenerate extent [{a}, {b}]")
            if k < 3:
                raise ValueError(f"need at least 3 nodes per axis, got {k}")

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.n)

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return tuple(k - 1 for k in self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (k - 1) for (a, b), k in zip(self.extent, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def diameter(self) -> float:
        return float(math.sqrt(sum((b - a) ** 2 for a, b in self.extent)))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            _frozen(a + np.arange(k) * h) for (a, _), k, h in zip(self.extent, self.n, self.h)
        )

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of ``shape`` per axis (``ij`` indexing)."""
        return tuple(_frozen(c) for c in np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates as an ``(size, dim)`` array in row-major order."""
        return _frozen(np.stack([c.ravel() for c in self.coords], axis=1))

    @cached_property
    def boundary(self) -> np.ndarray:
        """Nodes on the faces of the bounding box."""
        b = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            b[tuple(idx)] = True
            idx[ax] = -1
            b[tuple(idx)] = True
        return _frozen(b)


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Boolean selection of grid nodes (a discrete set such as D or Omega)."""

    grid: Grid
    inside: np.ndarray

    def __post_init__(self) -> None:
        inside = np.asarray(self.inside, dtype=bool)
        if inside.shape != self.grid.shape:
            raise ValueError(f"mask shape {inside.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "inside", _frozen(inside))

    @property
    def empty(self) -> bool:
        return not bool(self.inside.any())

    @property
    def count(self) -> int:
        return int(self.inside.sum())

    def _check(self, other: DomainMask) -> None:
        if other.grid != self.grid:
            raise ValueError("masks live on different grids")

    def __and__(self, other: DomainMask) -> DomainMask:
        self._check(other)
        return DomainMask(self.grid, self.inside & other.inside)

    def __or__(self, other: DomainMask) -> DomainMask:
        self._check(other)
        return DomainMask(self.grid, self.inside | other.inside)

    def __sub__(self, other: DomainMask) -> DomainMask:
        self._check(other)
        return DomainMask(self.grid, self.inside & ~other.inside)

    def __invert__(self) -> DomainMask:
        return DomainMask(self.grid, ~self.inside)

    def issubset(self, other: DomainMask) -> bool:
        self._check(other)
        return not bool((self.inside & ~other.inside).any())

    def cells(self) -> np.ndarray:
        """Cells whose corners all lie in the mask."""
        return cell_mask(self.inside)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values at the nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    def __mul__(self, c: float) -> GridFunction:
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def __sub__(self, other: GridFunction) -> GridFunction:
        return GridFunction(self.grid, self.values - other.values)

    def __add__(self, other: GridFunction) -> GridFunction:
        return GridFunction(self.grid, self.values + other.values)

    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True, eq=False)
class MeasureField:
    """Per-node capacitary density; ``np.inf`` marks the Dirichlet part."""

    grid: Grid
    beta: np.ndarray

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != self.grid.shape:
            raise ValueError(f"beta shape {beta.shape} does not match grid {self.grid.shape}")
        if np.isnan(beta).any() or (beta < 0).any():
            raise ValueError("beta must be nonnegative (np.inf allowed)")
        object.__setattr__(self, "beta", _frozen(beta))

    @property
    def inf_mask(self) -> DomainMask:
        return DomainMask(self.grid, np.isposinf(self.beta))

    @property
    def finite_part(self) -> np.ndarray:
        return np.where(np.isposinf(self.beta), 0.0, self.beta)

    @classmethod
    def zero(cls, grid: Grid) -> MeasureField:
        return cls(grid, np.zeros(grid.shape))


def build_grid(extent: Sequence, n: int | Sequence[int]) -> Grid:
    """Build a uniform grid.

    ``extent`` is ``(a, b)`` for 1D, or a sequence of pairs (or a flat
    ``a1, b1, a2, b2``) for 2D. ``n`` is one count for every axis or one per axis.
    """
    ext = np.asarray(extent, dtype=float)
    if ext.ndim == 1:
        if ext.size % 2:
            raise ValueError(f"extent needs (a, b) pairs, got {extent!r}")
        ext = ext.reshape(-1, 2)
    dim = ext.shape[0]
    counts = [int(n)] * dim if np.isscalar(n) else [int(k) for k in n]
    if len(counts) != dim:
        raise ValueError(f"{len(counts)} node counts for a {dim}D extent")
    return Grid(tuple((float(a), float(b)) for a, b in ext), tuple(counts))


def box_mask(grid: Grid) -> DomainMask:
    return DomainMask(grid, np.ones(grid.shape, dtype=bool))


def disc_mask(grid: Grid, center: ArrayLike, radius: float) -> DomainMask:
    """Nodes strictly inside the ball ``|x - center| < radius``."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    r2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords, c))
    mask = DomainMask(grid, r2 < radius**2)
    if mask.empty:
        logger.warning("disc mask centered at %s with radius %g contains no nodes", c, radius)
    return mask


def cell_mask(inside: np.ndarray) -> np.ndarray:
    """Cells whose 2**d corners are all True in ``inside``."""
    out = np.ones(tuple(k - 1 for k in inside.shape), dtype=bool)
    for corner in itertools.product((0, 1), repeat=inside.ndim):
        idx = tuple(slice(c, k - 1 + c) for c, k in zip(corner, inside.shape))
        out &= inside[idx]
    return out


def node_weights(mask: DomainMask) -> np.ndarray:
    """Lumped quadrature weights: each included cell hands vol/2**d to each corner."""
    grid = mask.grid
    cells = cell_mask(mask.inside).astype(float) * (grid.cell_volume / 2**grid.dim)
    w = np.zeros(grid.shape)
    for corner in itertools.product((0, 1), repeat=grid.dim):
        idx = tuple(slice(c, k - 1 + c) for c, k in zip(corner, grid.shape))
        w[idx] += cells
    return w


def _values(field) -> np.ndarray:
    return field.values if isinstance(field, GridFunction) else np.asarray(field, dtype=float)


def integrate(field, mask: DomainMask) -> float:
    """Integrate a node field (lumped weights) or a cell field over ``mask``."""
    vals = _values(field)
    grid = mask.grid
    if vals.shape == grid.shape:
        return float(np.sum(node_weights(mask) * vals))
    if vals.shape == grid.cell_shape:
        cells = mask.cells()
        return float(vals[cells].sum() * grid.cell_volume)
    raise ValueError(f"field shape {vals.shape} matches neither nodes nor cells of {grid.shape}")


def lp_norm(u, p: float, mask: DomainMask | None = None) -> float:
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    vals = _values(u)
    if mask is None:
        mask = box_mask(u.grid)
    return integrate(np.abs(vals) ** p, mask) ** (1.0 / p)


def edge_differences(values: np.ndarray, h: Sequence[float]) -> list[np.ndarray]:
    """Forward differences along each axis, divided by the spacing."""
    return [np.diff(values, axis=ax) / h[ax] for ax in range(values.ndim)]


def gradient(u: GridFunction) -> np.ndarray:
    """Cell-center gradient, shape ``cell_shape + (dim,)``.

    Each component is the mean of the forward differences on the cell edges
    parallel to that axis (the d-linear element gradient at the center).
    Exact for affine functions.
    """
    grid = u.grid
    comps = []
    for ax, diff in enumerate(edge_differences(u.values, grid.h)):
        acc = np.zeros(grid.cell_shape)
        others = [a for a in range(grid.dim) if a != ax]
        for shift in itertools.product((0, 1), repeat=len(others)):
            idx = [slice(None)] * grid.dim
            for a, s in zip(others, shift):
                idx[a] = slice(s, grid.n[a] - 1 + s)
            acc += diff[tuple(idx)]
        comps.append(acc / 2 ** len(others))
    return np.stack(comps, axis=-1)


def gradient_norm(u: GridFunction) -> np.ndarray:
    return np.linalg.norm(gradient(u), axis=-1)


def _difference_operator(grid: Grid, ax: int) -> sp.csr_matrix:
    """Sparse forward difference along ``ax``: node values -> edge values."""
    eye = [sp.identity(k, format="csr") for k in grid.n]
    k = grid.n[ax]
    d = sp.diags([-np.ones(k - 1), np.ones(k - 1)], [0, 1], shape=(k - 1, k), format="csr")
    factors = [d / grid.h[ax] if a == ax else eye[a] for a in range(grid.dim)]
    out = factors[0]
    for fac in factors[1:]:
        out = sp.kron(out, fac, format="csr")
    return out


def _edge_selector(grid: Grid, ax: int, corner: tuple[int, ...]) -> sp.csr_matrix:
    """Pick, for every cell, the ``ax``-parallel edge touching ``corner``."""
    edge_shape = list(grid.n)
    edge_shape[ax] -= 1
    ncell = int(np.prod(grid.cell_shape))
    cell_idx = np.indices(grid.cell_shape).reshape(grid.dim, -1)
    edge_idx = cell_idx.copy()
    for a in range(grid.dim):
        if a != ax:
            edge_idx[a] += corner[a]
    cols = np.ravel_multi_index(tuple(edge_idx), tuple(edge_shape))
    return sp.csr_matrix((np.ones(ncell), (np.arange(ncell), cols)), shape=(ncell, int(np.prod(edge_shape))))


def corner_gradient_operators(grid: Grid) -> list[sp.csr_matrix]:
    """Sparse maps from node values to corner gradients, one per axis.

    Row block ``c`` holds, for every cell, the gradient seen from corner ``c``:
    each component is the forward difference on the cell edge parallel to that
    axis which touches the corner. There are 2**d blocks of ``prod(cell_shape)``
    rows; averaging a quantity over the blocks averages it over cell corners.
    """
    ops = []
    for ax in range(grid.dim):
        diff = _difference_operator(grid, ax)
        blocks = [
            _edge_selector(grid, ax, corner) @ diff
            for corner in itertools.product((0, 1), repeat=grid.dim)
        ]
        ops.append(sp.vstack(blocks, format="csr"))
    return ops
