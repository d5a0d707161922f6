"""
Service layer for orchestrating distance, convergence and radius runs over files
"""
import logging
import math
import os
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

from config.settings import ALPHA, CAUCHY_THRESHOLD, CELL_TOL, JOBS, LIMIT_SURROGATE, MIN_TAIL, WINDOW
from core.convergence import (
    SURROGATES,
    ConvergenceReport,
    FamilySample,
    construct_limit,
    converges_to,
    is_cauchy,
)
from core.grid import Exhaustion, PartialMap
from core.map_metric import dist_exhaustion, dist_on
from core.radius import RadiusReport, radius_report
from core.target_metric import TargetMetric, parse_target
from utils.families import ExampleSpec
from utils.map_io import parse_exhaustion, read_manifest, read_map, read_mask, write_manifest, write_map
from utils.plotting import write_curves

logger = logging.getLogger(__name__)


class MapdistService:
    """Service layer for reading inputs, running kernels and shaping result tables"""

    def __init__(self):
        self.alpha = ALPHA
        self.threshold = CAUCHY_THRESHOLD
        self.window = WINDOW
        self.cell_tol = CELL_TOL
        self.min_tail = MIN_TAIL
        self.surrogate = LIMIT_SURROGATE
        self.jobs = JOBS

    def update_settings(self, *, alpha: float | None = None, threshold: float | None = None,
                        window: float | None = None, jobs: int | None = None,
                        surrogate: str | None = None) -> None:
        if alpha is not None:
            if not (alpha > 0 and math.isfinite(alpha)):
                raise ValueError("alpha must be a positive real")
            self.alpha = float(alpha)
        if threshold is not None:
            if not threshold >= 0:
                raise ValueError("cauchy threshold must be non-negative")
            self.threshold = float(threshold)
        if window is not None:
            if not 0 < window <= 1:
                raise ValueError("window must lie in (0, 1]")
            self.window = float(window)
        if jobs is not None:
            if jobs < 1:
                raise ValueError("jobs must be at least 1")
            self.jobs = int(jobs)
        if surrogate is not None:
            if surrogate not in SURROGATES:
                raise ValueError(f"unknown limit surrogate: {surrogate}")
            self.surrogate = surrogate

    def _family(self, path: str, target: str) -> Tuple[FamilySample, TargetMetric]:
        F = read_manifest(path)
        d = parse_target(target)
        if F.target_dim != d.dimension:
            raise ValueError(f"dimension mismatch: family has {F.target_dim} coordinates, target {d.spec()}")
        return F, d

    def distance(self, a_path: str, b_path: str, target: str, mask: str | None = None,
                 exhaustion: str | None = None) -> pd.DataFrame:
        if mask and exhaustion:
            raise ValueError("use either --mask or --exhaustion")
        phi, psi = read_map(a_path), read_map(b_path)
        d = parse_target(target)
        if mask:
            S = read_mask(mask, phi.grid)
            value, tail = dist_on(S, phi, psi, d, self.alpha), 0.0
        else:
            value, tail = dist_exhaustion(parse_exhaustion(exhaustion, phi.grid), phi, psi, d, self.alpha)
        logger.info(f"Distance {value:.6g} (tail {tail:.3g})")
        return pd.DataFrame([{"value": value, "tail_bound": tail}])

    def _construct(self, F: FamilySample, E: Exhaustion, d: TargetMetric) -> PartialMap:
        return construct_limit(F, E, d, alpha=self.alpha, threshold=self.threshold, window=self.window,
                               min_tail=self.min_tail, jobs=self.jobs, surrogate=self.surrogate)

    def converge(self, family: str, target: str, exhaustion: str | None = None, limit_out: str | None = None,
                 plot: str | None = None) -> Tuple[str, pd.DataFrame]:
        """Cauchy check, then limit construction and convergence to it when the check passes."""
        F, d = self._family(family, target)
        E = parse_exhaustion(exhaustion, F.grid)
        report = is_cauchy(F, E, d, alpha=self.alpha, threshold=self.threshold, window=self.window, jobs=self.jobs)
        table = report.curve_frame()
        table["distance_to_limit"] = np.nan
        verdict = report.verdict

        if report.verdict == "cauchy":
            L = self._construct(F, E, d)
            conv = converges_to(F, L, E, d, alpha=self.alpha, threshold=self.threshold, window=self.window)
            table["distance_to_limit"] = conv.details["distance"].to_numpy()
            verdict = conv.verdict
            if limit_out:
                write_map(L, limit_out)
                logger.info(f"Wrote constructed limit to {limit_out}")
        elif limit_out:
            logger.warning(f"No limit written: family verdict is {report.verdict}")

        table["verdict"] = verdict
        logger.info(f"Family {family}: {verdict}")
        if plot:
            self._plot_report(report, plot, "tail oscillation")
        return verdict, table

    def limit(self, family: str, target: str, exhaustion: str | None = None, limit_out: str | None = None,
              plot: str | None = None) -> Tuple[PartialMap, pd.DataFrame]:
        F, d = self._family(family, target)
        E = parse_exhaustion(exhaustion, F.grid)
        L = self._construct(F, E, d)
        conv = converges_to(F, L, E, d, alpha=self.alpha, threshold=self.threshold, window=self.window)
        if limit_out:
            write_map(L, limit_out)
        if plot:
            self._plot_report(conv, plot, "distance to constructed limit")
        last, tail = dist_exhaustion(E, F.maps[-1], L, d, self.alpha)
        summary = pd.DataFrame([{
            "cells": L.mask.count,
            "volume": L.mask.volume,
            "distance_last": last,
            "tail_bound": tail,
            "verdict": conv.verdict,
        }])
        return L, summary

    def radius(self, family: str, target: str, exhaustion: str | None = None, perturbation: str | None = None,
               plot: str | None = None) -> RadiusReport:
        F, d = self._family(family, target)
        E = parse_exhaustion(exhaustion, F.grid)
        G = read_manifest(perturbation) if perturbation else None
        report = radius_report(F, E, d, G, alpha=self.alpha, threshold=self.threshold, window=self.window,
                               cell_tol=self.cell_tol, jobs=self.jobs)
        if plot and not report.certificates.empty:
            curve = report.certificates.rename(columns={"T": "t", "upper": "value"})
            write_curves({"certificate upper bound": curve}, plot, title="tail-freeze certificates")
        elif plot:
            logger.warning("No certificate curve to plot")
        return report

    def example(self, kind: str, out_dir: str, params: Dict[str, Any] | None = None) -> pd.DataFrame:
        params = {k: v for k, v in (params or {}).items() if v is not None}
        bundle = ExampleSpec(kind, **params).build()
        manifest = write_manifest(bundle.family, out_dir)
        row: Dict[str, Any] = {
            "kind": kind,
            "manifest": manifest,
            "samples": len(bundle.family),
            "cells": bundle.family.grid.n_cells,
            "target": bundle.target,
            "exhaustion": "full" if bundle.exhaustion.whole_space else f"boxes:{bundle.exhaustion.depth}",
            "perturbation": "",
            "limit": "",
        }
        if bundle.perturbation is not None:
            row["perturbation"] = write_manifest(bundle.perturbation, os.path.join(out_dir, "perturbation"))
        if bundle.limit is not None:
            row["limit"] = os.path.join(out_dir, "limit.map")
            write_map(bundle.limit, row["limit"])
        return pd.DataFrame([row])

    def _plot_report(self, report: ConvergenceReport, path: str, label: str) -> None:
        curve = pd.DataFrame({"t": report.times, "value": report.tail_oscillation})
        write_curves({label: curve}, path, title=label)
