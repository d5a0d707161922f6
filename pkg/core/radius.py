"""
Two-sided bounds on the radius of convergence of a sampled family
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import pandas as pd

from config.settings import ALPHA, CAUCHY_THRESHOLD, CELL_TOL, JOBS, WINDOW
from core.convergence import (
    FamilySample,
    ae_limit,
    freeze_tail,
    is_cauchy,
    mask_window,
    pairwise_matrix,
    tail_nested,
    window_start,
    _align_family,
    _weights,
)
from core.grid import Exhaustion
from core.map_metric import dist_exhaustion
from core.target_metric import TargetMetric

logger = logging.getLogger(__name__)

EMBEDDING_NOTE = "limit exists (embedding not verified)"


@dataclass(frozen=True, eq=False)
class RadiusReport:
    lower: float
    upper: float
    lower_witness: Tuple[float, float] | None
    upper_witness: str | None
    verdict: str
    exhaustion: str
    metric: str
    note: str = EMBEDDING_NOTE
    certificates: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=["T", "upper"]), repr=False)

    @property
    def upper_finite(self) -> bool:
        return math.isfinite(self.upper)

    def as_frame(self) -> pd.DataFrame:
        t, s = self.lower_witness if self.lower_witness else (math.nan, math.nan)
        return pd.DataFrame([{
            "lower": self.lower,
            "upper": self.upper,
            "witness_t": t,
            "witness_s": s,
            "certificate": self.upper_witness or "none",
            "verdict": self.verdict,
            "exhaustion": self.exhaustion,
            "metric": self.metric,
            "note": self.note,
        }])


def _window_pair(F: FamilySample, E: Exhaustion, d: TargetMetric, window: float, alpha: float,
                 jobs: int) -> Tuple[float, Tuple[float, float] | None]:
    if not 0 < window <= 1:
        raise ValueError("empty window")
    F, E = _align_family(F, E)
    w = window_start(len(F), window)
    values, masks = F.stacked()
    D = pairwise_matrix(values[w:], masks[w:], _weights(E), d, alpha, jobs)
    if D.shape[0] < 2:
        raise ValueError("empty window")
    i, j = np.unravel_index(int(np.argmax(D)), D.shape)
    if D[i, j] <= 0:
        return 0.0, None
    return float(D[i, j]), (F.times[w + i], F.times[w + j])


def osc_lower_bound(F: FamilySample, E: Exhaustion, d: TargetMetric, window: float = WINDOW,
                    alpha: float = ALPHA, jobs: int = JOBS) -> float:
    """Half the largest distance between two samples in the tail window."""
    top, _ = _window_pair(F, E, d, window, alpha, jobs)
    return 0.5 * top


def perturb_upper_bound(F: FamilySample, G: FamilySample, E: Exhaustion, d: TargetMetric,
                        alpha: float = ALPHA, threshold: float = CAUCHY_THRESHOLD, window: float = WINDOW,
                        cell_tol: float = CELL_TOL, jobs: int = JOBS) -> float:
    """Largest distance between a family and a convergent same-domain perturbation of it."""
    if len(F) != len(G) or not np.array_equal(np.asarray(F.times), np.asarray(G.times)):
        raise ValueError("perturbation times differ from the family")
    if any(a != b for a, b in zip(F.masks, G.masks)):
        raise ValueError("mask mismatch")
    if is_cauchy(G, E, d, alpha=alpha, threshold=threshold, window=window, jobs=jobs).verdict != "cauchy":
        raise ValueError("perturbation family is not convergent")
    if ae_limit(G, d, cell_tol, window) is None:
        raise ValueError("perturbation family is not convergent")
    return max(dist_exhaustion(E, phi, psi, d, alpha)[0] for phi, psi in zip(F.maps, G.maps))


def _auto_certificates(F: FamilySample, E: Exhaustion, d: TargetMetric, alpha: float, threshold: float,
                       window: float, cell_tol: float, jobs: int) -> pd.DataFrame:
    rows = []
    times = np.asarray(F.times)
    needed = mask_window(len(F), window)
    for i in range(len(F) - 1):
        T = F.times[i]
        if np.count_nonzero(times <= (T + F.limit) / 2) < needed or not tail_nested(F, i + 1):
            continue
        try:
            G = freeze_tail(F, T, window)
            upper = perturb_upper_bound(F, G, E, d, alpha, threshold, window, cell_tol, jobs)
        except ValueError as e:
            logger.debug(f"No certificate at T={T:.6g}: {e}")
            continue
        rows.append({"T": T, "upper": upper})
    return pd.DataFrame(rows, columns=["T", "upper"])


def radius_report(F: FamilySample, E: Exhaustion, d: TargetMetric, G: FamilySample | None = None,
                  alpha: float = ALPHA, threshold: float = CAUCHY_THRESHOLD, window: float = WINDOW,
                  cell_tol: float = CELL_TOL, jobs: int = JOBS) -> RadiusReport:
    """Bracket the radius of convergence.

    The lower bound comes from the tail window. The upper bound comes from the
    supplied perturbation or, for a Cauchy family whose domains shrink in the
    tail, from the best tail-freeze certificate. Without a certificate the
    upper bound is infinite.
    """
    top, pair = _window_pair(F, E, d, window, alpha, jobs)
    lower = 0.5 * top
    cauchy = is_cauchy(F, E, d, alpha=alpha, threshold=threshold, window=window, jobs=jobs)

    upper = math.inf
    witness = None
    certificates = pd.DataFrame(columns=["T", "upper"])
    if G is not None:
        upper = perturb_upper_bound(F, G, E, d, alpha, threshold, window, cell_tol, jobs)
        witness = "supplied"
    elif cauchy.verdict == "cauchy":
        certificates = _auto_certificates(F, E, d, alpha, threshold, window, cell_tol, jobs)
        if not certificates.empty:
            best = int(certificates["upper"].idxmin())
            upper = float(certificates["upper"].iloc[best])
            witness = f"freeze_tail(T={certificates['T'].iloc[best]:.17g})"
        else:
            logger.warning("Cauchy family without a valid tail-freeze certificate")

    if lower > threshold and cauchy.verdict == "diverges":
        verdict = "not_removable"
    elif math.isfinite(upper) and (upper <= threshold or cauchy.verdict == "cauchy"):
        verdict = "removable"
    else:
        verdict = "undetermined"

    exhaustion = "full" if E.whole_space else f"levels:{E.depth}"
    logger.info(f"Radius bracket [{lower:.6g}, {upper:.6g}] -> {verdict}")
    return RadiusReport(lower, upper, pair, witness, verdict, exhaustion, d.spec(),
                        certificates=certificates)
