"""
Generators for the worked example families and the Lp norms used to compare them
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from config.settings import SEED
from core.convergence import FamilySample
from core.grid import DomainMask, Exhaustion, GridDomain, PartialMap

logger = logging.getLogger(__name__)

KINDS = ("wave", "oscillation", "strip", "shrinking", "constant", "scaling", "contraction")


def _halving_times(n: int) -> List[float]:
    return [2.0 ** -j for j in range(1, n + 1)]


def wave_map(grid: GridDomain, m: int, k: int) -> PartialMap:
    """m times the indicator of the k-th of m equal subintervals, on the whole interval."""
    idx = np.arange(grid.n_cells)
    vals = np.where(idx * m // grid.n_cells == k, float(m), 0.0)
    return PartialMap(grid.full_mask(), vals)


def zero_map(grid: GridDomain, k: int = 1) -> PartialMap:
    return PartialMap.constant(grid.full_mask(), np.zeros(k))


def gen_wave(m_list: Sequence[int] = (2, 4, 8, 16), cells: int | None = None) -> FamilySample:
    """Travelling wave on (0, 1) sampled at t_n = 1/(n+1) in enumeration order."""
    m_list = [int(m) for m in m_list]
    if not m_list or any(m <= 0 for m in m_list):
        raise ValueError("wave needs positive m values")
    base = math.lcm(*m_list)
    if cells is None:
        cells = base * max(1, math.ceil(240 / base))
    if cells <= 0 or any(cells % m for m in m_list):
        raise ValueError("grid cells must be divisible by every m")
    grid = GridDomain.interval(0.0, 1.0, cells)
    maps = [wave_map(grid, m, k) for m in m_list for k in range(m)]
    times = [1.0 / (n + 1) for n in range(1, len(maps) + 1)]
    logger.debug(f"wave family: {len(maps)} maps on {cells} cells")
    return FamilySample(tuple(times), tuple(maps))


def extremal_times(depth: int) -> List[float]:
    """Times where sin(1/t) is +1 (2/((4n+1)π)) and -1 (2/((4n+3)π)) for n < depth."""
    out = []
    for n in range(depth):
        out.append(2.0 / ((4 * n + 1) * math.pi))
        out.append(2.0 / ((4 * n + 3) * math.pi))
    return out


def _merge_times(times: Sequence[float]) -> List[float]:
    return sorted({float(t) for t in times}, reverse=True)


def oscillation_grid(q: float, cells: int = 600) -> GridDomain:
    if not q > 0:
        raise ValueError("q must be positive")
    return GridDomain.interval(0.0, 3.0 * q, cells)


def gen_oscillation(q: float = 1.0, t_list: Sequence[float] | None = None, depth: int = 20,
                    cells: int = 600) -> FamilySample:
    """φ_t(x) = x/(9q) + sin(1/t)/3 on (0, 3q), with the extremal times always included."""
    grid = oscillation_grid(q, cells)
    times = _merge_times(list(t_list or []) + extremal_times(depth))
    if any(t <= 0 for t in times):
        raise ValueError("oscillation times must be positive")
    mask = grid.full_mask()
    maps = [PartialMap.from_function(mask, lambda x, t=t: x[:, 0] / (9 * q) + math.sin(1 / t) / 3)
            for t in times]
    return FamilySample(tuple(times), tuple(maps))


def gen_oscillation_perturbation(q: float, F: FamilySample) -> FamilySample:
    """The convergent same-domain family x/(9q) at the times of ``F``."""
    maps = tuple(PartialMap.from_function(phi.mask, lambda x: x[:, 0] / (9 * q)) for phi in F.maps)
    return FamilySample(F.times, maps, F.limit)


def gen_strip(t_list: Sequence[float] = (0.5,), n_levels: int = 30,
              cells_per_unit: int = 4) -> Tuple[FamilySample, Exhaustion]:
    """φ_t(x) = (x, t) on [-K, K] with the exhaustion S_n = [-n, n].

    A single time is padded with the limit-side sample t/2 so the family has
    two members.
    """
    times = _merge_times(t_list)
    if len(times) == 1:
        times.append(times[0] / 2)
    if any(t <= 0 for t in times):
        raise ValueError("strip times must be positive")
    grid = GridDomain.interval(-float(n_levels), float(n_levels), 2 * n_levels * cells_per_unit)
    mask = grid.full_mask()
    maps = [PartialMap.from_function(mask, lambda x, t=t: np.column_stack([x[:, 0], np.full(len(x), t)]))
            for t in times]
    return FamilySample(tuple(times), tuple(maps)), Exhaustion.boxes(grid, n_levels)


def strip_limit(grid: GridDomain) -> PartialMap:
    return PartialMap.from_function(grid.full_mask(), lambda x: np.column_stack([x[:, 0], np.zeros(len(x))]))


def gen_shrinking(power: float = 2.0, t_list: Sequence[float] | None = None, cells: int = 200) -> FamilySample:
    """x^power on B_t = (0, 1 - t)."""
    times = _merge_times(t_list or _halving_times(24))
    if any(not 0 < t < 1 for t in times):
        raise ValueError("shrinking times must lie in (0, 1)")
    grid = GridDomain.interval(0.0, 1.0, cells)
    maps = [PartialMap.from_function(grid.mask_where(lambda x, t=t: x[:, 0] < 1 - t),
                                     lambda x: x[:, 0] ** power)
            for t in times]
    return FamilySample(tuple(times), tuple(maps))


def shrinking_limit(power: float, grid: GridDomain) -> PartialMap:
    return PartialMap.from_function(grid.full_mask(), lambda x: x[:, 0] ** power)


def gen_constant(phi: PartialMap, t_list: Sequence[float] | None = None) -> FamilySample:
    times = _merge_times(t_list or _halving_times(8))
    return FamilySample(tuple(times), tuple(phi for _ in times))


def gen_scaling(t_list: Sequence[float] | None = None, cells: int = 200) -> FamilySample:
    """φ_t(x) = x(1 + t) on (0, 1); converges pointwise to x."""
    times = _merge_times(t_list or _halving_times(40))
    grid = GridDomain.interval(0.0, 1.0, cells)
    mask = grid.full_mask()
    maps = [PartialMap.from_function(mask, lambda x, t=t: x[:, 0] * (1 + t)) for t in times]
    return FamilySample(tuple(times), tuple(maps))


def gen_contraction(rng: np.random.Generator, n_samples: int = 40, cells: int = 200,
                    target_dim: int = 1) -> Tuple[FamilySample, PartialMap]:
    """Geometric contraction toward a random map with shrinking domain churn.

    φ_j = L + ρ^j·u_j on B ∪ C_j where the churn sets C_j are nested with
    volume at most 2^-j. Returns the family and L.
    """
    grid = GridDomain.interval(0.0, 1.0, cells)
    rho = rng.uniform(0.3, 0.6)
    lo = int(rng.integers(0, cells // 4))
    hi = int(rng.integers(cells // 2, 3 * cells // 4))
    base = np.zeros(cells, dtype=bool)
    base[lo:hi] = True
    limit_vals = rng.uniform(-2.0, 2.0, size=(cells, target_dim))
    limit = PartialMap(DomainMask(grid, base), limit_vals)

    times = _halving_times(n_samples)
    maps = []
    for j in range(1, n_samples + 1):
        churn = min(cells - hi, int(math.floor(2.0 ** -j / grid.cell_volume)))
        flags = base.copy()
        flags[hi:hi + churn] = True
        noise = rng.uniform(-1.0, 1.0, size=(cells, target_dim))
        maps.append(PartialMap(DomainMask(grid, flags), limit_vals + rho ** j * noise))
    return FamilySample(tuple(times), tuple(maps)), limit


def lp_norm(phi: PartialMap, p: float = 1.0) -> float:
    """(Σ |φ(c)|^p vol(c))^(1/p) over the domain; p = inf gives the largest |φ(c)|."""
    if not (p >= 1):
        raise ValueError("p must be at least 1")
    cells = phi.mask.flags
    if not cells.any():
        return 0.0
    size = np.linalg.norm(phi.values[cells], axis=1)
    if math.isinf(p):
        return float(size.max())
    total = math.fsum(size ** p * phi.grid.volumes[cells])
    return total ** (1.0 / p)


@dataclass
class ExampleBundle:
    family: FamilySample
    exhaustion: Exhaustion
    perturbation: FamilySample | None = None
    limit: PartialMap | None = None
    target: str = "euclidean:1"


@dataclass(frozen=True)
class ExampleSpec:
    """Parameters of one generated example family."""

    kind: str
    m_list: Tuple[int, ...] = (2, 4, 8, 16)
    q: float = 1.0
    t_list: Tuple[float, ...] | None = None
    depth: int = 20
    n_levels: int = 30
    power: float = 2.0
    cells: int | None = None
    seed: int = SEED

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown example kind: {self.kind}")
        if self.cells is not None and self.cells <= 0:
            raise ValueError("cells must be positive")
        if self.depth <= 0 or self.n_levels <= 0:
            raise ValueError("depth and n_levels must be positive")

    def build(self) -> ExampleBundle:
        if self.kind == "wave":
            F = gen_wave(self.m_list, self.cells)
            return ExampleBundle(F, Exhaustion.whole(F.grid), limit=zero_map(F.grid))
        if self.kind == "oscillation":
            F = gen_oscillation(self.q, self.t_list, self.depth, self.cells or 600)
            return ExampleBundle(F, Exhaustion.whole(F.grid), perturbation=gen_oscillation_perturbation(self.q, F))
        if self.kind == "strip":
            F, E = gen_strip(self.t_list or (0.5,), self.n_levels)
            return ExampleBundle(F, E, limit=strip_limit(F.grid), target="euclidean:2")
        if self.kind == "shrinking":
            F = gen_shrinking(self.power, self.t_list, self.cells or 200)
            return ExampleBundle(F, Exhaustion.whole(F.grid), limit=shrinking_limit(self.power, F.grid))
        if self.kind == "scaling":
            F = gen_scaling(self.t_list, self.cells or 200)
            return ExampleBundle(F, Exhaustion.whole(F.grid),
                                 limit=PartialMap.from_function(F.grid.full_mask(), lambda x: x[:, 0]))
        if self.kind == "contraction":
            F, L = gen_contraction(np.random.default_rng(self.seed), cells=self.cells or 200)
            return ExampleBundle(F, Exhaustion.whole(F.grid), limit=L)
        grid = GridDomain.interval(0.0, 1.0, self.cells or 200)
        phi = PartialMap.from_function(grid.box_mask([0.25], [0.75]), lambda x: np.sin(2 * math.pi * x[:, 0]))
        return ExampleBundle(gen_constant(phi, self.t_list), Exhaustion.whole(grid), limit=phi)


def family_suite(seed: int = SEED, n_contraction: int = 4) -> List[Tuple[str, FamilySample, PartialMap]]:
    """Named families with one-coordinate targets spanning every verdict.

    Each family comes with a reference map: its known limit, or for the
    oscillation families the convergent centre x/(9q) they never reach.
    """
    rng = np.random.default_rng(seed)
    grid = GridDomain.interval(0.0, 1.0, 200)
    wave = gen_wave((2, 4, 8, 16, 32, 64), 192)
    cosine = PartialMap.from_function(grid.full_mask(), lambda x: np.cos(x[:, 0]))
    suite = [
        ("wave", wave, zero_map(wave.grid)),
        ("shrinking", gen_shrinking(2.0), shrinking_limit(2.0, grid)),
        ("scaling", gen_scaling(), PartialMap.from_function(grid.full_mask(), lambda x: x[:, 0])),
        ("constant", gen_constant(cosine), cosine),
    ]
    for q in (1.0, 2.0):
        F = gen_oscillation(q, depth=12, cells=300)
        suite.append((f"oscillation_q{q:g}", F, gen_oscillation_perturbation(q, F).maps[0]))
    for i in range(n_contraction):
        F, L = gen_contraction(rng)
        suite.append((f"contraction_{i}", F, L))
    return suite
