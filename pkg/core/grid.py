"""
Gridded ambient space: cells, volumes, cell masks, partial maps and exhaustions
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridDomain:
    """Axis-aligned box split into equal cells, indexed in C order."""

    extents: tuple[tuple[float, float], ...]
    cells_per_axis: tuple[int, ...]

    def __post_init__(self):
        extents = tuple((float(lo), float(hi)) for lo, hi in self.extents)
        cells = tuple(int(n) for n in self.cells_per_axis)
        if not extents:
            raise ValueError("grid needs at least one axis")
        if len(extents) != len(cells):
            raise ValueError("extents and cells_per_axis differ in length")
        for (lo, hi), n in zip(extents, cells):
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise ValueError(f"invalid axis interval [{lo}, {hi})")
            if n <= 0:
                raise ValueError("cells_per_axis must be positive")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "cells_per_axis", cells)

    @classmethod
    def interval(cls, lo: float, hi: float, n: int) -> "GridDomain":
        return cls(((lo, hi),), (n,))

    @property
    def dims(self) -> int:
        return len(self.extents)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def steps(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.extents, self.cells_per_axis))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.steps))

    @cached_property
    def volumes(self) -> np.ndarray:
        return _frozen(np.full(self.n_cells, self.cell_volume))

    @property
    def total_volume(self) -> float:
        return math.fsum(self.volumes)

    @cached_property
    def midpoints(self) -> np.ndarray:
        axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n
                for (lo, hi), n in zip(self.extents, self.cells_per_axis)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return _frozen(np.stack([m.ravel() for m in mesh], axis=1))

    def cell_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.cells_per_axis))

    def multi_index(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(int(index), self.cells_per_axis))

    def full_mask(self) -> "DomainMask":
        return DomainMask(self, np.ones(self.n_cells, dtype=bool))

    def empty_mask(self) -> "DomainMask":
        return DomainMask(self, np.zeros(self.n_cells, dtype=bool))

    def mask_from_indices(self, indices: Iterable[int]) -> "DomainMask":
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_cells):
            raise ValueError("out-of-range index")
        flags = np.zeros(self.n_cells, dtype=bool)
        flags[idx] = True
        return DomainMask(self, flags)

    def mask_where(self, predicate: Callable[[np.ndarray], np.ndarray]) -> "DomainMask":
        """Cells whose midpoint satisfies ``predicate`` (vectorised over an (n, dims) array)."""
        flags = np.asarray(predicate(self.midpoints), dtype=bool).reshape(-1)
        if flags.shape[0] != self.n_cells:
            raise ValueError("predicate must return one flag per cell")
        return DomainMask(self, flags)

    def box_mask(self, lo: Sequence[float], hi: Sequence[float]) -> "DomainMask":
        """Cells whose midpoint lies in the closed box [lo, hi]."""
        lo_a = np.asarray(lo, dtype=float)
        hi_a = np.asarray(hi, dtype=float)
        return self.mask_where(lambda x: np.all((x >= lo_a) & (x <= hi_a), axis=1))

    def refine(self, factors: Sequence[int]) -> "GridDomain":
        if len(factors) != self.dims or any(int(f) <= 0 for f in factors):
            raise ValueError("refinement factors must be positive, one per axis")
        return GridDomain(self.extents, tuple(n * int(f) for n, f in zip(self.cells_per_axis, factors)))

    def refines(self, coarse: "GridDomain") -> bool:
        return (self.extents == coarse.extents
                and all(f % c == 0 for f, c in zip(self.cells_per_axis, coarse.cells_per_axis)))

    def parent_indices(self, coarse: "GridDomain") -> np.ndarray:
        """For every cell of this grid, the index of the coarse cell containing it."""
        if not self.refines(coarse):
            raise ValueError("grid mismatch")
        multi = np.unravel_index(np.arange(self.n_cells), self.cells_per_axis)
        parent = tuple(m // (f // c) for m, f, c in zip(multi, self.cells_per_axis, coarse.cells_per_axis))
        return np.ravel_multi_index(parent, coarse.cells_per_axis)


def common_refinement(a: GridDomain, b: GridDomain) -> GridDomain:
    if a == b:
        return a
    if a.extents != b.extents:
        raise ValueError("grid mismatch")
    return GridDomain(a.extents, tuple(math.lcm(x, y) for x, y in zip(a.cells_per_axis, b.cells_per_axis)))


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Measurable subset of the grid as one membership flag per cell."""

    grid: GridDomain
    flags: np.ndarray

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool).reshape(-1)
        if flags.shape[0] != self.grid.n_cells:
            raise ValueError("mask length does not match grid")
        object.__setattr__(self, "flags", _frozen(flags))

    @property
    def members(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    @property
    def volume(self) -> float:
        return mask_volume(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DomainMask):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.flags, other.flags))

    def __hash__(self):
        return hash((self.grid, self.flags.tobytes()))

    def _check(self, other: "DomainMask") -> None:
        if self.grid != other.grid:
            raise ValueError("grid mismatch")

    def union(self, other: "DomainMask") -> "DomainMask":
        self._check(other)
        return DomainMask(self.grid, self.flags | other.flags)

    def intersection(self, other: "DomainMask") -> "DomainMask":
        self._check(other)
        return DomainMask(self.grid, self.flags & other.flags)

    def difference(self, other: "DomainMask") -> "DomainMask":
        self._check(other)
        return DomainMask(self.grid, self.flags & ~other.flags)

    def issubset(self, other: "DomainMask") -> bool:
        self._check(other)
        return not bool(np.any(self.flags & ~other.flags))

    def resample(self, fine: GridDomain) -> "DomainMask":
        if fine == self.grid:
            return self
        return DomainMask(fine, self.flags[fine.parent_indices(self.grid)])


def mask_volume(m: DomainMask) -> float:
    return math.fsum(m.grid.volumes[m.flags])


def mask_symdiff(a: DomainMask, b: DomainMask) -> DomainMask:
    a._check(b)
    return DomainMask(a.grid, a.flags ^ b.flags)


def _membership_flips(masks: Sequence[DomainMask], window: float) -> tuple[np.ndarray, np.ndarray]:
    if not masks:
        raise ValueError("empty mask list")
    grid = masks[0].grid
    for m in masks[1:]:
        if m.grid != grid:
            raise ValueError("grid mismatch")
    stack = np.stack([m.flags for m in masks])
    size = min(len(masks), max(3, math.ceil(window * len(masks))))
    tail = stack[len(masks) - size:]
    flips = np.count_nonzero(tail[1:] != tail[:-1], axis=0)
    return flips, stack[-1]


def mask_liminf(masks: Sequence[DomainMask], window: float = 0.25) -> DomainMask:
    """Cells settled inside the family over the tail window.

    A cell is settled when its membership changes at most once inside the
    window; it belongs to the lower limit iff it is in the last mask.
    """
    flips, last = _membership_flips(masks, window)
    return DomainMask(masks[0].grid, last & (flips < 2))


def mask_limsup(masks: Sequence[DomainMask], window: float = 0.25) -> DomainMask:
    """Settled members of the last mask plus every cell that keeps re-entering."""
    flips, last = _membership_flips(masks, window)
    return DomainMask(masks[0].grid, (last & (flips < 2)) | (flips >= 2))


@dataclass(frozen=True, eq=False)
class PartialMap:
    """A map defined on the cells of ``mask`` with values in a k-dimensional chart.

    ``values`` has shape (n_cells, k); entries outside the mask are NaN.
    """

    mask: DomainMask
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if vals.ndim != 2 or vals.shape[0] != self.mask.grid.n_cells:
            raise ValueError("values must have one row per grid cell")
        if vals.shape[1] < 1:
            raise ValueError("target dimension must be positive")
        vals[~self.mask.flags] = np.nan
        if not np.all(np.isfinite(vals[self.mask.flags])):
            raise ValueError("values must be finite on the domain")
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def from_function(cls, mask: DomainMask, fn: Callable[[np.ndarray], np.ndarray]) -> "PartialMap":
        """Evaluate ``fn`` at the midpoints of the domain cells."""
        grid = mask.grid
        out = np.asarray(fn(grid.midpoints[mask.flags]), dtype=float)
        if out.ndim == 1:
            out = out.reshape(-1, 1)
        vals = np.full((grid.n_cells, out.shape[1]), np.nan)
        vals[mask.flags] = out
        return cls(mask, vals)

    @classmethod
    def constant(cls, mask: DomainMask, value: Sequence[float] | float) -> "PartialMap":
        point = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(mask, np.tile(point, (mask.grid.n_cells, 1)))

    @property
    def grid(self) -> GridDomain:
        return self.mask.grid

    @property
    def target_dim(self) -> int:
        return int(self.values.shape[1])

    def domain_values(self) -> np.ndarray:
        return self.values[self.mask.flags]

    def restrict(self, mask: DomainMask) -> "PartialMap":
        return PartialMap(self.mask.intersection(mask), self.values)

    def resample(self, fine: GridDomain) -> "PartialMap":
        if fine == self.grid:
            return self
        parents = fine.parent_indices(self.grid)
        return PartialMap(self.mask.resample(fine), self.values[parents])


@dataclass(frozen=True, eq=False)
class Exhaustion:
    """Nested finite-volume sets S_1 ⊂ … ⊂ S_K on one grid.

    With ``whole_space`` the single level is the whole grid and distances use
    the finite-volume shortcut (plain integral over the grid, no tail).
    """

    masks: tuple[DomainMask, ...]
    whole_space: bool = False

    def __post_init__(self):
        masks = tuple(self.masks)
        if not masks:
            raise ValueError("empty exhaustion")
        grid = masks[0].grid
        for n, m in enumerate(masks):
            if m.grid != grid:
                raise ValueError("grid mismatch")
            if m.count == 0:
                raise ValueError(f"exhaustion level {n + 1} has zero volume")
            if n and not masks[n - 1].issubset(m):
                raise ValueError("exhaustion is not nested")
        if self.whole_space and (len(masks) != 1 or masks[0].count != grid.n_cells):
            raise ValueError("whole-space exhaustion must be the single full mask")
        object.__setattr__(self, "masks", masks)

    @classmethod
    def whole(cls, grid: GridDomain) -> "Exhaustion":
        return cls((grid.full_mask(),), whole_space=True)

    @classmethod
    def boxes(cls, grid: GridDomain, n_levels: int, center: Sequence[float] | None = None) -> "Exhaustion":
        """S_n = closed box around ``center`` with half-widths n/K of the grid's half-extents."""
        if n_levels <= 0:
            raise ValueError("n_levels must be positive")
        half = np.array([(hi - lo) / 2 for lo, hi in grid.extents])
        c = (np.array([(hi + lo) / 2 for lo, hi in grid.extents])
             if center is None else np.asarray(center, dtype=float))
        masks = []
        for n in range(1, n_levels + 1):
            h = half * n / n_levels
            masks.append(grid.box_mask(c - h, c + h))
        return cls(tuple(masks))

    @property
    def grid(self) -> GridDomain:
        return self.masks[0].grid

    @property
    def depth(self) -> int:
        return len(self.masks)

    @property
    def weights(self) -> np.ndarray:
        if self.whole_space:
            return np.ones(1)
        return np.array([2.0 ** -(n + 1) / m.volume for n, m in enumerate(self.masks)])

    @property
    def tail_bound(self) -> float:
        return 0.0 if self.whole_space else 2.0 ** -self.depth

    @cached_property
    def cell_measure(self) -> np.ndarray:
        """Per-cell mass of the exhaustion measure (plain volume for the whole-space shortcut)."""
        vol = self.grid.volumes
        mass = np.zeros(self.grid.n_cells)
        for w, m in zip(self.weights, self.masks):
            mass[m.flags] += w * vol[m.flags]
        return _frozen(mass)

    def resample(self, fine: GridDomain) -> "Exhaustion":
        if fine == self.grid:
            return self
        return Exhaustion(tuple(m.resample(fine) for m in self.masks), self.whole_space)
