"""
Family-level diagnostics and limit construction

Covers Cauchy detection, convergence to a candidate limit, set limits of
domains, almost-everywhere pointwise limits, the sentinel lift that turns
partial maps into total ones, and the constructive limit of a Cauchy family.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import pandas as pd

from config.settings import (
    ALPHA,
    CAUCHY_THRESHOLD,
    CELL_TOL,
    JOBS,
    LIMIT_SURROGATE,
    MIN_TAIL,
    STALL_RATIO,
    WINDOW,
)
from core.grid import DomainMask, Exhaustion, GridDomain, PartialMap, common_refinement, mask_liminf, mask_limsup
from core.target_metric import TargetMetric
from utils.worker_pool import run_ordered

logger = logging.getLogger(__name__)

POSITIVE = {"cauchy", "converges"}
SURROGATES = ("last", "median")

# deepest Cauchy level tried when choosing tails
_MAX_LEVEL = 60


@dataclass(frozen=True, eq=False)
class FamilySample:
    """Samples (t_j, φ_j) of a one-parameter family, t_j decreasing toward ``limit``."""

    times: tuple[float, ...]
    maps: tuple[PartialMap, ...]
    limit: float = 0.0

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        maps = tuple(self.maps)
        if len(times) != len(maps):
            raise ValueError("times and maps differ in length")
        if len(maps) < 2:
            raise ValueError("too few samples")
        if any(not math.isfinite(t) for t in times):
            raise ValueError("times must be finite")
        if any(b >= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly decreasing")
        if times[-1] <= self.limit:
            raise ValueError("times must stay above the limit parameter")
        grid = maps[0].grid
        k = maps[0].target_dim
        for phi in maps[1:]:
            if phi.grid != grid:
                raise ValueError("grid mismatch")
            if phi.target_dim != k:
                raise ValueError("dimension mismatch")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "limit", float(self.limit))

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def grid(self) -> GridDomain:
        return self.maps[0].grid

    @property
    def target_dim(self) -> int:
        return self.maps[0].target_dim

    @property
    def masks(self) -> List[DomainMask]:
        return [phi.mask for phi in self.maps]

    def resample(self, fine: GridDomain) -> "FamilySample":
        if fine == self.grid:
            return self
        return FamilySample(self.times, tuple(phi.resample(fine) for phi in self.maps), self.limit)

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        """(J, n_cells, k) values with zeros outside domains, and (J, n_cells) membership."""
        values = np.nan_to_num(np.stack([phi.values for phi in self.maps]), nan=0.0)
        masks = np.stack([phi.mask.flags for phi in self.maps])
        return values, masks


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    verdict: str
    tail_oscillation: np.ndarray
    details: pd.DataFrame
    window_start: int
    times: np.ndarray
    threshold: float
    matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def positive(self) -> bool:
        return self.verdict in POSITIVE

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "index": np.arange(len(self.times)),
            "t": self.times,
            "tail_oscillation": self.tail_oscillation,
        })


def _align_family(F: FamilySample, E: Exhaustion) -> Tuple[FamilySample, Exhaustion]:
    if F.grid == E.grid:
        return F, E
    fine = common_refinement(F.grid, E.grid)
    return F.resample(fine), E.resample(fine)


def _weights(E: Exhaustion) -> np.ndarray:
    return E.grid.volumes if E.whole_space else E.cell_measure


def _penalties(x: np.ndarray, x_in: np.ndarray, ys: np.ndarray, ys_in: np.ndarray,
               d: TargetMetric, alpha: float) -> np.ndarray:
    """Penalty of one map against a stack of maps, shape (m, n_cells)."""
    k = ys.shape[2]
    xs = np.broadcast_to(x, ys.shape).reshape(-1, k)
    dist = d.cellwise(xs, ys.reshape(-1, k)).reshape(ys_in.shape)
    both = x_in & ys_in
    sym = x_in ^ ys_in
    return np.where(both, np.minimum(alpha, dist), np.where(sym, alpha, 0.0))


def pairwise_matrix(values: np.ndarray, masks: np.ndarray, weights: np.ndarray,
                    d: TargetMetric, alpha: float = ALPHA, jobs: int = JOBS) -> np.ndarray:
    """Symmetric table of penalty integrals between all stacked maps."""
    J = values.shape[0]

    def row(j: int) -> np.ndarray:
        if j + 1 >= J:
            return np.zeros(0)
        pen = _penalties(values[j], masks[j], values[j + 1:], masks[j + 1:], d, alpha)
        return np.array([math.fsum(p) for p in pen * weights])

    rows = run_ordered(row, range(J), jobs)
    D = np.zeros((J, J))
    for j, r in enumerate(rows):
        D[j, j + 1:] = r
        D[j + 1:, j] = r
    logger.debug(f"Pairwise table over {J} samples ({J * (J - 1) // 2} pairs)")
    return D


def tail_curve(D: np.ndarray) -> np.ndarray:
    """osc[i] = max of D over pairs with both indices ≥ i; non-increasing, last entry 0."""
    J = D.shape[0]
    row_tail = np.array([D[j, j + 1:].max() if j + 1 < J else 0.0 for j in range(J)])
    return np.maximum.accumulate(row_tail[::-1])[::-1]


def window_start(n: int, window: float) -> int:
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    w = int(math.floor((1.0 - window) * n))
    return max(0, min(w, n - 2))


def _verdict(curve: np.ndarray, window: float, threshold: float, positive: str,
             stall_ratio: float = STALL_RATIO) -> Tuple[str, int]:
    """Positive iff the window value is at most ``threshold``; a window still near the head diverges."""
    w = window_start(len(curve), window)
    head, tail = float(curve[0]), float(curve[w])
    if tail <= threshold:
        return positive, w
    if tail >= stall_ratio * head:
        return "diverges", w
    return "inconclusive", w


def is_cauchy(F: FamilySample, E: Exhaustion, d: TargetMetric, alpha: float = ALPHA,
              threshold: float = CAUCHY_THRESHOLD, window: float = WINDOW, jobs: int = JOBS) -> ConvergenceReport:
    F, E = _align_family(F, E)
    if F.target_dim != d.dimension:
        raise ValueError("dimension mismatch")
    values, masks = F.stacked()
    D = pairwise_matrix(values, masks, _weights(E), d, alpha, jobs)
    osc = tail_curve(D)
    verdict, w = _verdict(osc, window, threshold, "cauchy")

    i, j = np.triu_indices(len(F), 1)
    times = np.asarray(F.times)
    details = pd.DataFrame({"i": i, "j": j, "t_i": times[i], "t_j": times[j], "distance": D[i, j]})
    logger.debug(f"is_cauchy: osc[0]={osc[0]:.6g} osc[{w}]={osc[w]:.6g} -> {verdict}")
    return ConvergenceReport(verdict, osc, details, w, times, threshold, D)


def distances_to(F: FamilySample, phi0: PartialMap, E: Exhaustion, d: TargetMetric,
                 alpha: float = ALPHA) -> np.ndarray:
    """dist_exhaustion values of every sample against ``phi0``."""
    F, E = _align_family(F, E)
    if phi0.grid != F.grid:
        fine = common_refinement(phi0.grid, F.grid)
        F, E, phi0 = F.resample(fine), E.resample(fine), phi0.resample(fine)
    if F.target_dim != d.dimension or phi0.target_dim != d.dimension:
        raise ValueError("dimension mismatch")
    values, masks = F.stacked()
    ref = np.nan_to_num(phi0.values, nan=0.0)
    pen = _penalties(ref, phi0.mask.flags, values, masks, d, alpha)
    weights = _weights(E)
    return np.array([math.fsum(p) for p in pen * weights])


def converges_to(F: FamilySample, phi0: PartialMap, E: Exhaustion, d: TargetMetric, alpha: float = ALPHA,
                 threshold: float = CAUCHY_THRESHOLD, window: float = WINDOW) -> ConvergenceReport:
    dist = distances_to(F, phi0, E, d, alpha)
    curve = np.maximum.accumulate(dist[::-1])[::-1]
    verdict, w = _verdict(curve, window, threshold, "converges")
    times = np.asarray(F.times)
    tail = alpha * E.tail_bound
    details = pd.DataFrame({
        "index": np.arange(len(F)),
        "t": times,
        "distance": dist,
        "tail_bound": np.full(len(F), tail),
        "tail_max": curve,
    })
    logger.debug(f"converges_to: head={curve[0]:.6g} window={curve[w]:.6g} -> {verdict}")
    return ConvergenceReport(verdict, curve, details, w, times, threshold)


def domains_converge(F: FamilySample, window: float = WINDOW) -> Tuple[bool, DomainMask, DomainMask]:
    lo = mask_liminf(F.masks, window)
    hi = mask_limsup(F.masks, window)
    return lo == hi, lo, hi


def mask_window(n: int, window: float) -> int:
    """Number of trailing samples inspected for set limits and cell settling."""
    return min(n, max(3, math.ceil(window * n)))


def ae_limit(F: FamilySample, d: TargetMetric, cell_tol: float = CELL_TOL,
             window: float = WINDOW) -> PartialMap | None:
    """Almost-everywhere pointwise limit over the sample tail, or None."""
    if len(F) < 3:
        logger.debug("ae_limit needs at least 3 samples")
        return None
    if F.target_dim != d.dimension:
        raise ValueError("dimension mismatch")
    lo = mask_liminf(F.masks, window)
    hi = mask_limsup(F.masks, window)

    size = mask_window(len(F), window)
    values, masks = F.stacked()
    tail_v, tail_m = values[-size:], masks[-size:]
    settled = lo.flags.copy()
    for a in range(size):
        for b in range(a + 1, size):
            both = settled & tail_m[a] & tail_m[b]
            if not both.any():
                continue
            gap = d.cellwise(tail_v[a][both], tail_v[b][both])
            idx = np.flatnonzero(both)
            settled[idx[gap > cell_tol]] = False

    recorded = DomainMask(F.grid, settled)
    leftover = hi.difference(recorded)
    if leftover.count:
        logger.debug(f"ae_limit: {leftover.count} cells fail to settle")
        return None
    return PartialMap(recorded, F.maps[-1].values)


def lift_sentinel(phi: PartialMap, S: DomainMask, alpha: float = ALPHA,
                  d: TargetMetric | None = None) -> PartialMap:
    """Total map on S into one extra dimension.

    In-domain cells map to (0, x); cells of S outside the domain map to the
    sentinel point (α, 0, …, 0).
    """
    if d is not None and not d.is_euclidean:
        raise ValueError("sentinel lift needs a euclidean target")
    if S.grid != phi.grid:
        raise ValueError("grid mismatch")
    n, k = phi.grid.n_cells, phi.target_dim
    lifted = np.zeros((n, k + 1))
    inside = phi.mask.flags
    lifted[inside, 1:] = phi.values[inside]
    lifted[~inside, 0] = alpha
    return PartialMap(S, lifted)


def _decode_rows(rows: np.ndarray, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    sentinel = np.zeros(rows.shape[1])
    sentinel[0] = alpha
    to_plane = np.abs(rows[:, 0])
    to_sentinel = np.linalg.norm(rows - sentinel, axis=1)
    return to_plane <= to_sentinel, rows[:, 1:]


def decode_sentinel(phi_hat: PartialMap, alpha: float = ALPHA) -> PartialMap:
    """Project lifted values onto {x_0 = 0} ∪ {sentinel}; sentinel cells leave the domain."""
    if phi_hat.target_dim < 2:
        raise ValueError("lifted map needs at least two coordinates")
    n = phi_hat.grid.n_cells
    flags = np.zeros(n, dtype=bool)
    values = np.full((n, phi_hat.target_dim - 1), np.nan)
    cells = phi_hat.mask.flags
    inside, coords = _decode_rows(phi_hat.values[cells], alpha)
    idx = np.flatnonzero(cells)
    flags[idx[inside]] = True
    values[idx[inside]] = coords[inside]
    return PartialMap(DomainMask(phi_hat.grid, flags), values)


def _select_levels(osc: np.ndarray, alpha: float, min_tail: int) -> Tuple[List[Tuple[int, int]], bool]:
    """Pairs (n, i_n) with i_n the first index whose tail oscillation is below α·2^-n."""
    J = len(osc)
    last_start = J - min_tail
    chosen: dict = {}
    for n in range(3, _MAX_LEVEL + 1):
        i = int(np.flatnonzero(osc < alpha * 2.0 ** -n)[0])
        if i > last_start:
            break
        chosen[i] = n
    if not chosen:
        return [(3, max(0, last_start))], True
    return sorted((n, i) for i, n in chosen.items()), False


def clamp_to_ball(tail: np.ndarray, centre: np.ndarray, radius: float) -> np.ndarray:
    """Radially project each lifted value into the ball of ``radius`` around the centre value."""
    diff = tail - centre
    norm = np.linalg.norm(diff, axis=-1)
    scale = np.where(norm > radius, radius / np.where(norm > 0, norm, 1.0), 1.0)
    return centre + diff * scale[..., None]


def _settled_part(tail: np.ndarray, min_tail: int) -> np.ndarray:
    """Last half of a tail, never fewer than min_tail samples."""
    start = max(0, min(len(tail) // 2, len(tail) - min_tail))
    return tail[start:]


def _tail_limit(tail: np.ndarray, surrogate: str, min_tail: int) -> np.ndarray:
    """Stand-in for the limit of a tail: its smallest-time sample, or the componentwise median."""
    if surrogate == "last":
        return tail[-1]
    return np.median(_settled_part(tail, min_tail), axis=0)


def _construct_on_level(lifted: np.ndarray, weights: np.ndarray, alpha: float, min_tail: int,
                        strict: bool, jobs: int, surrogate: str = "last") -> np.ndarray:
    J, n_cells, k1 = lifted.shape
    everywhere = np.ones((J, n_cells), dtype=bool)
    D = pairwise_matrix(lifted, everywhere, weights, TargetMetric.euclidean(k1), alpha, jobs)
    osc = tail_curve(D)
    levels, fallback = _select_levels(osc, alpha, min_tail)
    if fallback:
        logger.warning(f"No tail of length {min_tail} reaches oscillation {alpha / 8:.3g}; "
                       f"using the last {J - levels[0][1]} samples")

    glued = np.full((n_cells, k1), np.nan)
    covered = np.zeros(n_cells, dtype=bool)
    conflicts = 0
    for n, i in levels:
        centre = lifted[i]
        clamped = clamp_to_ball(lifted[i:], centre, alpha / 2)
        limit = _tail_limit(clamped, surrogate, min_tail)
        valid = np.linalg.norm(centre - limit, axis=1) < alpha / 4
        overlap = valid & covered
        if overlap.any():
            conflicts += int(np.count_nonzero(
                np.linalg.norm(glued[overlap] - limit[overlap], axis=1) > alpha / 4))
        glued[valid] = limit[valid]
        covered |= valid
        logger.debug(f"level n={n}: tail from {i}, {int(valid.sum())}/{n_cells} cells valid")

    if conflicts:
        if strict:
            raise RuntimeError(f"inconsistent glue on {conflicts} cells")
        logger.warning(f"Glue conflicts on {conflicts} cells; kept the deepest level")

    missing = ~covered
    if missing.any():
        deepest = levels[-1][1]
        glued[missing] = _tail_limit(lifted[deepest:], surrogate, min_tail)[missing]
        logger.warning(f"{int(missing.sum())} cells uncovered by every level; filled from the raw tail")
    return glued


def construct_limit(F: FamilySample, E: Exhaustion, d: TargetMetric, alpha: float = ALPHA,
                    threshold: float = CAUCHY_THRESHOLD, window: float = WINDOW, min_tail: int = MIN_TAIL,
                    strict: bool = False, jobs: int = JOBS, surrogate: str = LIMIT_SURROGATE) -> PartialMap:
    """Build the limit of a Cauchy family.

    Works level by level of the exhaustion on sentinel-lifted values: choose
    tails with oscillation below α·2^-n, clamp them to the α/2 ball around the
    tail's first sample, stand in for the tail's limit with its clamped
    smallest-time sample, keep the cells within α/4 of the centre and glue
    over n with the deepest level winning. The result is decoded and cut down
    to the upper set limit of the domains. Non-euclidean targets are handled
    in chart coordinates.

    ``surrogate="median"`` uses the componentwise median of the last half of
    each clamped tail instead. It recovers limits of families whose values
    travel, such as the wave, when no sampled tail reaches oscillation α/8.
    """
    if surrogate not in SURROGATES:
        raise ValueError(f"unknown limit surrogate: {surrogate}")
    report = is_cauchy(F, E, d, alpha=alpha, threshold=threshold, window=window, jobs=jobs)
    if report.verdict != "cauchy":
        raise ValueError("family is not cauchy")
    F, E = _align_family(F, E)
    if not d.is_euclidean:
        logger.info(f"Constructing limit for {d.spec()} in chart coordinates")

    grid = F.grid
    n_cells, k = grid.n_cells, F.target_dim
    limsup = mask_limsup(F.masks, window)
    inside = np.zeros(n_cells, dtype=bool)
    values = np.full((n_cells, k), np.nan)
    assigned = np.zeros(n_cells, dtype=bool)

    for S in E.masks:
        cells = S.flags & ~assigned
        if not cells.any():
            continue
        lifted = np.stack([lift_sentinel(phi, S, alpha).values[S.flags] for phi in F.maps])
        glued = _construct_on_level(lifted, grid.volumes[S.flags], alpha, min_tail, strict, jobs, surrogate)
        level_in, level_vals = _decode_rows(glued, alpha)

        idx = np.flatnonzero(S.flags)
        take = cells[idx]
        inside[idx[take]] = level_in[take]
        values[idx[take]] = level_vals[take]
        assigned |= S.flags

    inside &= limsup.flags
    values[~inside] = np.nan
    result = PartialMap(DomainMask(grid, inside), values)
    logger.info(f"Constructed limit on {result.mask.count}/{n_cells} cells")
    return result


def tail_nested(F: FamilySample, start: int = 0) -> bool:
    """True when B_{j+1} ⊂ B_j for every consecutive pair from ``start`` on."""
    masks = F.masks
    return all(masks[j + 1].issubset(masks[j]) for j in range(max(0, start), len(masks) - 1))


def freeze_tail(F: FamilySample, T: float, window: float = WINDOW) -> FamilySample:
    """Perturbed family frozen below T with a C¹ smoothstep reparametrisation.

    For t < T the sample takes the values of φ_{t'} on B_t ∩ B_{t'}, where t'
    is the smallest sampled time not below f(t) = (1-b)t + b(T+a)/2. Cells of
    B_t outside B_{t'} keep φ_t. Samples with t ≥ T are returned unchanged.
    """
    a = F.limit
    if not T > a:
        raise ValueError("freeze time must exceed the limit parameter")
    times = np.asarray(F.times)
    below = np.flatnonzero(times < T)
    if below.size and not tail_nested(F, int(below[0])):
        raise ValueError("domain-nesting violation below T")

    mid = (T + a) / 2.0
    out = list(F.maps)
    frozen = 0
    for j in below:
        t = times[j]
        s = min(1.0, max(0.0, (T - t) / (T - mid)))
        b = 3 * s ** 2 - 2 * s ** 3
        f = (1 - b) * t + b * mid
        ahead = np.flatnonzero(times >= f)
        src = int(ahead[-1]) if ahead.size else 0
        if t <= mid:
            frozen += 1
        if src == j:
            continue
        phi, donor = F.maps[j], F.maps[src]
        take = phi.mask.flags & donor.mask.flags
        vals = np.array(phi.values)
        vals[take] = donor.values[take]
        out[j] = PartialMap(phi.mask, vals)

    needed = mask_window(len(F), window)
    if frozen < needed:
        logger.warning(f"Frozen tail below T={T:.6g} holds {frozen} samples; window needs {needed}")
    return FamilySample(F.times, tuple(out), F.limit)
