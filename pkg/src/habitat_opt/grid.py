"""Periodic rectangular cell, its finite-difference operators and set utilities.

Fields are plain ``numpy`` arrays of shape ``grid.shape``; axis ``i`` carries
nodes ``(k - n_i/2) * h_i`` for ``k = 0..n_i-1`` so that the origin is the node
with index ``n_i/2``. Flattening always uses C order (last axis fastest).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InvalidGrid, OddResolution


@dataclass(frozen=True)
class PeriodicGrid:
    """Node-centred discretization of the cell prod(-L_i/2, L_i/2)."""

    dims: int
    lengths: tuple
    points: tuple

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.lengths, self.points))

    @property
    def shape(self):
        return tuple(self.points)

    @property
    def size(self):
        return int(np.prod(self.points))

    @property
    def cell_volume(self):
        """Volume carried by a single node, prod(h_i)."""
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    @property
    def origin_index(self):
        return tuple(n // 2 for n in self.points)

    def axis(self, i):
        n, h = self.points[i], self.spacing[i]
        return (np.arange(n) - n // 2) * h

    def coords(self):
        return np.meshgrid(*[self.axis(i) for i in range(self.dims)], indexing="ij")

    def radius(self):
        return np.sqrt(sum(x**2 for x in self.coords()))

    def scaled(self, factor):
        """Same nodes, coordinates multiplied by ``factor``."""
        return PeriodicGrid(self.dims, tuple(L * factor for L in self.lengths), self.points)

    def header(self):
        return {"dims": self.dims, "lengths": list(self.lengths), "points_per_axis": list(self.points)}


def build_grid(dims, lengths, points_per_axis):
    if dims not in (1, 2, 3):
        raise InvalidGrid(f"dims must be 1, 2 or 3, got {dims}")
    lengths = tuple(float(L) for L in np.broadcast_to(np.asarray(lengths, dtype=float), (dims,)))
    points = tuple(int(n) for n in np.broadcast_to(np.asarray(points_per_axis), (dims,)))
    if any(not np.isfinite(L) or L <= 0 for L in lengths):
        raise InvalidGrid(f"lengths must be positive, got {lengths}")
    if any(n % 2 for n in points):
        raise OddResolution(f"points_per_axis must be even so the origin is a node, got {points}")
    if any(n < 8 for n in points):
        raise InvalidGrid(f"points_per_axis must be at least 8, got {points}")
    return PeriodicGrid(dims, lengths, points)


@dataclass(frozen=True)
class IndicatorSet:
    grid: PeriodicGrid
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != self.grid.shape:
            raise InvalidGrid(f"mask shape {mask.shape} does not match grid {self.grid.shape}")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def count(self):
        return int(self.mask.sum())

    @property
    def volume(self):
        return self.count * self.grid.cell_volume

    def key(self):
        return hash(np.packbits(self.mask).tobytes())

    def __eq__(self, other):
        return (isinstance(other, IndicatorSet) and self.grid == other.grid
                and np.array_equal(self.mask, other.mask))

    __hash__ = None


# ---------------------------------------------------------------- operators

def integrate(grid, f):
    return float(np.sum(f) * grid.cell_volume)


def inner(grid, f, g):
    return float(np.vdot(f, g) * grid.cell_volume)


def box_fraction(grid, half_widths):
    """Fraction of each node's control volume lying in the box prod(-a_i, a_i)."""
    out = np.ones(grid.shape)
    for i, (a, h) in enumerate(zip(half_widths, grid.spacing)):
        x = grid.axis(i)
        f = np.clip((np.minimum(x + h / 2, a) - np.maximum(x - h / 2, -a)) / h, 0.0, 1.0)
        out = out * f.reshape([-1 if j == i else 1 for j in range(grid.dims)])
    return out


def laplacian_apply(grid, f):
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    for i, h in enumerate(grid.spacing):
        out += (np.roll(f, -1, axis=i) - 2.0 * f + np.roll(f, 1, axis=i)) / h**2
    return out


def dirichlet_energy(grid, f):
    """Sum of squared forward differences times the node volume.

    Equal to <-Lap f, f> on the periodic grid.
    """
    f = np.asarray(f, dtype=float)
    total = 0.0
    for i, h in enumerate(grid.spacing):
        d = np.roll(f, -1, axis=i) - f
        total += np.sum(d * d) / h**2
    return float(total * grid.cell_volume)


def _second_difference(n, h, boundary):
    e = np.ones(n)
    D = sp.diags([e[:-1], -2.0 * e, e[:-1]], [-1, 0, 1], format="lil")
    if boundary == "periodic":
        D[0, n - 1] = 1.0
        D[n - 1, 0] = 1.0
    return (D / h**2).tocsr()


def laplacian_matrix(grid, boundary="periodic"):
    """Sparse 2N+1-point Laplacian in C ordering.

    ``boundary="dirichlet"`` treats the grid as the interior of a box with zero
    values on the ghost layer just outside it.
    """
    if boundary not in ("periodic", "dirichlet"):
        raise ValueError(f"unknown boundary {boundary!r}")
    L = None
    for i in range(grid.dims):
        parts = [sp.identity(n, format="csr") for n in grid.points]
        parts[i] = _second_difference(grid.points[i], grid.spacing[i], boundary)
        term = parts[0]
        for p in parts[1:]:
            term = sp.kron(term, p, format="csr")
        L = term if L is None else L + term
    return L.tocsr()


def laplacian_symbol(grid, boundary="periodic"):
    """Eigenvalues of -Lap laid out to match ``fftn`` (periodic) or ``dstn`` type 1 (dirichlet)."""
    sym = []
    for n, h in zip(grid.points, grid.spacing):
        if boundary == "periodic":
            theta = 2.0 * np.pi * np.fft.fftfreq(n)
        else:
            theta = np.pi * np.arange(1, n + 1) / (n + 1)
        sym.append((2.0 / h**2) * (1.0 - np.cos(theta)))
    return sum(np.meshgrid(*sym, indexing="ij", sparse=True))


# ---------------------------------------------------------------- symmetries

def reflect(f, axis):
    """Field composed with x_axis -> -x_axis (exact on the node set)."""
    return np.roll(np.flip(f, axis=axis), 1, axis=axis)


def symmetrize(f):
    """Average of f over all coordinate reflections.

    Done one axis at a time so the result is bit-exactly even in every axis.
    """
    f = np.asarray(f, dtype=float)
    for i in range(f.ndim):
        f = 0.5 * (f + reflect(f, i))
    return f


def is_reflection_symmetric(f):
    return all(np.array_equal(f, reflect(f, i)) for i in range(np.ndim(f)))


def _fill_rank(n):
    """Position of each index in the centred fill order 0, +1, -1, +2, -2, ..."""
    o = np.arange(n) - n // 2
    o[o == -(n // 2)] = n // 2
    return np.where(o > 0, 2 * o - 1, -2 * o)


def steiner_symmetrize(D):
    """Discrete Steiner symmetrization along every axis in turn.

    Each 1-D slice is replaced by the run of the same cardinality occupying the
    first positions of the fill order 0, +1, -1, +2, ...; slices with an odd
    count are therefore symmetric about the origin.
    """
    mask = D.mask
    for i in range(mask.ndim):
        counts = mask.sum(axis=i, keepdims=True)
        shape = [1] * mask.ndim
        shape[i] = mask.shape[i]
        rank = _fill_rank(mask.shape[i]).reshape(shape)
        mask = rank < counts
    return IndicatorSet(D.grid, mask)


def recenter(grid, f):
    """Circularly shift ``f`` so that its maximal node sits at the origin.

    Ties go to the lexicographically smallest index. Returns the shifted field
    and the applied integer shift per axis.
    """
    f = np.asarray(f)
    peak = np.unravel_index(int(np.argmax(f)), f.shape)
    # normalized to [-n/2, n/2)
    shift = [int((n // 2 - k + n // 2) % n - n // 2) for k, n in zip(peak, grid.points)]
    return np.roll(f, tuple(shift), axis=tuple(range(f.ndim))), tuple(shift)


def translate(f, shift):
    return np.roll(f, tuple(shift), axis=tuple(range(np.ndim(f))))


def is_connected(D):
    """Connectedness of the mask on the periodic nearest-neighbour graph."""
    idx = np.flatnonzero(D.mask.ravel())
    if idx.size <= 1:
        return True
    A = laplacian_matrix(D.grid)
    A = A[idx][:, idx]
    A.setdiag(0)
    A.eliminate_zeros()
    ncomp, _ = connected_components(A != 0, directed=False)
    return ncomp == 1


# ---------------------------------------------------------------- io

def save_field(path, grid, f):
    """Write ``<path>.csv`` (one value per line, C order) and ``<path>.json`` (grid header)."""
    path = Path(path)
    f = np.asarray(f)
    np.savetxt(path.with_suffix(".csv"), f.ravel().astype(float), fmt="%.17g")
    header = grid.header() | {"dtype": "bool" if f.dtype == bool else "float64"}
    path.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")


def load_field(path):
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    grid = build_grid(header["dims"], header["lengths"], header["points_per_axis"])
    values = np.loadtxt(path.with_suffix(".csv"), ndmin=1).reshape(grid.shape)
    if header.get("dtype") == "bool":
        values = values.astype(bool)
    return grid, values
