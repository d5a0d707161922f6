"""
Penalty field and the distance functionals between partial maps
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from config.settings import ALPHA, EQUIVALENCE_TOL
from core.grid import DomainMask, Exhaustion, GridDomain, PartialMap, common_refinement
from core.target_metric import TargetMetric

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PenaltyField:
    grid: GridDomain
    values: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.shape[0] != self.grid.n_cells:
            raise ValueError("penalty length does not match grid")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def integrate(self, weights: np.ndarray) -> float:
        return math.fsum(self.values * weights)


def align(phi: PartialMap, psi: PartialMap) -> Tuple[PartialMap, PartialMap]:
    """Resample both maps to the common refinement of their grids."""
    if phi.grid == psi.grid:
        return phi, psi
    fine = common_refinement(phi.grid, psi.grid)
    logger.debug(f"Resampling {phi.grid.cells_per_axis} / {psi.grid.cells_per_axis} -> {fine.cells_per_axis}")
    return phi.resample(fine), psi.resample(fine)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not alpha > 0 or not math.isfinite(alpha):
        raise ValueError("alpha must be a positive real")
    return alpha


def penalty_field(phi: PartialMap, psi: PartialMap, d: TargetMetric, alpha: float = ALPHA) -> PenaltyField:
    alpha = _check_alpha(alpha)
    if phi.target_dim != d.dimension or psi.target_dim != d.dimension:
        raise ValueError("dimension mismatch")
    phi, psi = align(phi, psi)

    a = phi.mask.flags
    b = psi.mask.flags
    both = a & b
    out = np.zeros(phi.grid.n_cells)
    out[a ^ b] = alpha
    if both.any():
        out[both] = np.minimum(alpha, d.cellwise(phi.values[both], psi.values[both]))
    return PenaltyField(phi.grid, out, alpha)


def _aligned_with(S: DomainMask, phi: PartialMap, psi: PartialMap) -> Tuple[DomainMask, PartialMap, PartialMap]:
    phi, psi = align(phi, psi)
    if S.grid != phi.grid:
        fine = common_refinement(S.grid, phi.grid)
        S, phi, psi = S.resample(fine), phi.resample(fine), psi.resample(fine)
    return S, phi, psi


def dist_on(S: DomainMask, phi: PartialMap, psi: PartialMap, d: TargetMetric, alpha: float = ALPHA) -> float:
    """Integral of the penalty over S (midpoint rule, compensated sum)."""
    S, phi, psi = _aligned_with(S, phi, psi)
    field = penalty_field(phi, psi, d, alpha)
    vol = phi.grid.volumes
    return math.fsum(field.values[S.flags] * vol[S.flags])


def dist_split(S: DomainMask, phi: PartialMap, psi: PartialMap, d: TargetMetric,
               alpha: float = ALPHA) -> Tuple[float, float]:
    """Return (∫ over the common domain of min(α, d), volume of the symmetric difference) on S.

    The restricted distance equals ``first + alpha * second``.
    """
    alpha = _check_alpha(alpha)
    if phi.target_dim != d.dimension or psi.target_dim != d.dimension:
        raise ValueError("dimension mismatch")
    S, phi, psi = _aligned_with(S, phi, psi)
    vol = phi.grid.volumes
    both = phi.mask.flags & psi.mask.flags & S.flags
    sym = (phi.mask.flags ^ psi.mask.flags) & S.flags
    inner = 0.0
    if both.any():
        inner = math.fsum(np.minimum(alpha, d.cellwise(phi.values[both], psi.values[both])) * vol[both])
    return inner, math.fsum(vol[sym])


def dist_exhaustion(E: Exhaustion, phi: PartialMap, psi: PartialMap, d: TargetMetric,
                    alpha: float = ALPHA) -> Tuple[float, float]:
    """Exhaustion distance truncated at depth K, plus the bound on the omitted tail.

    The value is the integral of the penalty against the exhaustion measure
    (Σ 2^-n · dist_on(S_n) / vol(S_n)); the true series lies in
    [value, value + tail_bound]. The whole-space exhaustion returns
    (dist_on(M), 0).
    """
    phi, psi = align(phi, psi)
    if E.grid != phi.grid:
        fine = common_refinement(E.grid, phi.grid)
        E, phi, psi = E.resample(fine), phi.resample(fine), psi.resample(fine)
    field = penalty_field(phi, psi, d, alpha)
    if E.whole_space:
        return math.fsum(field.values * phi.grid.volumes), 0.0
    value = field.integrate(E.cell_measure)
    return value, _check_alpha(alpha) * E.tail_bound


def level_distances(E: Exhaustion, phi: PartialMap, psi: PartialMap, d: TargetMetric,
                    alpha: float = ALPHA) -> List[float]:
    """dist_on(S_n) for every level of the exhaustion."""
    return [dist_on(S, phi, psi, d, alpha) for S in E.masks]


def equivalent(phi: PartialMap, psi: PartialMap, d: TargetMetric, tol: float = EQUIVALENCE_TOL) -> bool:
    """Zero-distance test: identical cell domains and values within ``tol`` on them."""
    if phi.target_dim != d.dimension or psi.target_dim != d.dimension:
        raise ValueError("dimension mismatch")
    phi, psi = align(phi, psi)
    if not np.array_equal(phi.mask.flags, psi.mask.flags):
        return False
    both = phi.mask.flags
    if not both.any():
        return True
    return bool(np.max(d.cellwise(phi.values[both], psi.values[both])) <= tol)
