import unittest

import numpy as np

from config.settings import SEED
from core.convergence import (
    FamilySample,
    ae_limit,
    clamp_to_ball,
    construct_limit,
    converges_to,
    decode_sentinel,
    domains_converge,
    freeze_tail,
    is_cauchy,
    lift_sentinel,
    mask_window,
    tail_curve,
    tail_nested,
    window_start,
)
from core.grid import DomainMask, Exhaustion, GridDomain, PartialMap
from core.map_metric import dist_exhaustion, dist_on, equivalent
from core.target_metric import TargetMetric
from utils.families import (
    gen_constant,
    gen_contraction,
    gen_oscillation,
    gen_scaling,
    gen_shrinking,
    gen_wave,
    shrinking_limit,
    zero_map,
)

EUCLID = TargetMetric.euclidean(1)


def whole(F: FamilySample) -> Exhaustion:
    return Exhaustion.whole(F.grid)


def wave_resolution(m: int) -> float:
    """Threshold that accepts the tail of a wave sampled up to bump count m."""
    return 2.0 / m + 1e-9


def offset_family(offset: float = 0.2, n: int = 20, cells: int = 50) -> FamilySample:
    """Constant maps offset + t on (0, 1) for t = 1, 1/2, ..., 2^-(n-1)."""
    grid = GridDomain.interval(0.0, 1.0, cells)
    times = tuple(2.0 ** -j for j in range(n))
    return FamilySample(times, tuple(PartialMap.constant(grid.full_mask(), offset + t) for t in times))


def alternating_family(n: int = 20, cells: int = 50) -> FamilySample:
    """An empty-domain map followed by full maps alternating between 0 and 0.1."""
    grid = GridDomain.interval(0.0, 1.0, cells)
    maps = [PartialMap.constant(grid.empty_mask(), 0.0)]
    maps += [PartialMap.constant(grid.full_mask(), 0.1 * (j % 2)) for j in range(n - 1)]
    return FamilySample(tuple(2.0 ** -j for j in range(n)), tuple(maps))


class FamilySampleTests(unittest.TestCase):
    def setUp(self) -> None:
        self.phi = zero_map(GridDomain.interval(0.0, 1.0, 4))

    def test_validation(self) -> None:
        with self.assertRaises(ValueError):
            FamilySample((0.5,), (self.phi,))
        with self.assertRaises(ValueError):
            FamilySample((0.5, 0.5), (self.phi, self.phi))
        with self.assertRaises(ValueError):
            FamilySample((0.5, 0.25), (self.phi, self.phi), limit=0.25)
        other = zero_map(GridDomain.interval(0.0, 1.0, 8))
        with self.assertRaises(ValueError):
            FamilySample((0.5, 0.25), (self.phi, other))

    def test_window_helpers(self) -> None:
        self.assertEqual(window_start(126, 0.25), 94)
        self.assertEqual(window_start(2, 1.0), 0)
        self.assertEqual(window_start(10, 0.01), 8)
        self.assertEqual(mask_window(24, 0.25), 6)
        self.assertEqual(mask_window(8, 0.25), 3)
        self.assertEqual(mask_window(2, 0.25), 2)
        with self.assertRaises(ValueError):
            window_start(10, 0.0)

    def test_tail_curve(self) -> None:
        D = np.array([[0, 3, 1], [3, 0, 2], [1, 2, 0]], dtype=float)
        self.assertEqual(tail_curve(D).tolist(), [3.0, 2.0, 0.0])


class CauchyTests(unittest.TestCase):
    def test_constant_family(self) -> None:
        grid = GridDomain.interval(0.0, 1.0, 50)
        F = gen_constant(PartialMap.from_function(grid.full_mask(), lambda x: x[:, 0]))
        report = is_cauchy(F, whole(F), EUCLID)
        self.assertEqual(report.verdict, "cauchy")
        self.assertTrue(report.positive)
        self.assertEqual(report.tail_oscillation.max(), 0.0)
        self.assertEqual(len(report.details), len(F) * (len(F) - 1) // 2)

    def test_wave_is_cauchy(self) -> None:
        F = gen_wave((2, 4, 8, 16, 32, 64), cells=192)
        report = is_cauchy(F, whole(F), EUCLID, threshold=wave_resolution(64))
        self.assertEqual(report.verdict, "cauchy")
        osc = report.tail_oscillation
        self.assertTrue(np.all(np.diff(osc) <= 0))
        self.assertLessEqual(osc[report.window_start], 2 / 64 + 1e-12)
        self.assertEqual(osc[-1], 0.0)

    def test_wave_is_cauchy_on_default_grid(self) -> None:
        F = gen_wave()
        self.assertEqual(is_cauchy(F, whole(F), EUCLID, threshold=wave_resolution(16)).verdict, "cauchy")

    def test_wave_below_its_resolution(self) -> None:
        F = gen_wave()
        report = is_cauchy(F, whole(F), EUCLID, threshold=1e-6)
        self.assertEqual(report.verdict, "inconclusive")
        self.assertFalse(report.positive)

    def test_plateaued_oscillation_is_not_cauchy(self) -> None:
        F = alternating_family()
        report = is_cauchy(F, whole(F), EUCLID)
        self.assertAlmostEqual(report.tail_oscillation[0], 1.0, delta=1e-12)
        self.assertAlmostEqual(report.tail_oscillation[report.window_start], 0.1, delta=1e-12)
        self.assertEqual(report.verdict, "inconclusive")
        with self.assertRaises(ValueError):
            construct_limit(F, whole(F), EUCLID)
        zero = PartialMap.constant(F.grid.full_mask(), 0.0)
        self.assertFalse(converges_to(F, zero, whole(F), EUCLID).positive)

    def test_oscillation_diverges(self) -> None:
        F = gen_oscillation(1.0, depth=12, cells=300)
        report = is_cauchy(F, whole(F), EUCLID)
        self.assertEqual(report.verdict, "diverges")
        self.assertFalse(report.positive)
        self.assertGreaterEqual(report.tail_oscillation[report.window_start], 2.0 - 1e-6)

    def test_parallel_table_matches_serial(self) -> None:
        F = gen_wave((2, 4, 8), cells=48)
        serial = is_cauchy(F, whole(F), EUCLID, jobs=1)
        threaded = is_cauchy(F, whole(F), EUCLID, jobs=4)
        self.assertTrue(np.array_equal(serial.matrix, threaded.matrix))


class ConvergesToTests(unittest.TestCase):
    def test_wave_converges_to_zero(self) -> None:
        F = gen_wave()
        report = converges_to(F, zero_map(F.grid), whole(F), EUCLID, threshold=wave_resolution(16))
        self.assertEqual(report.verdict, "converges")
        m_of = [m for m in (2, 4, 8, 16) for _ in range(m)]
        for dist, m in zip(report.details["distance"], m_of):
            self.assertAlmostEqual(dist, 1.0 / m, delta=1e-12)

    def test_settled_offset_is_not_a_limit(self) -> None:
        F = offset_family(0.2)
        report = converges_to(F, zero_map(F.grid), whole(F), EUCLID)
        self.assertNotEqual(report.verdict, "converges")
        self.assertAlmostEqual(report.details["distance"].iloc[-1], 0.2 + 2.0 ** -19, delta=1e-12)
        loose = converges_to(F, zero_map(F.grid), whole(F), EUCLID, threshold=1e-4)
        self.assertNotEqual(loose.verdict, "converges")

    def test_offset_converges_at_its_resolution(self) -> None:
        F = offset_family(0.2)
        target = PartialMap.constant(F.grid.full_mask(), 0.2)
        self.assertEqual(converges_to(F, target, whole(F), EUCLID).verdict, "inconclusive")
        self.assertEqual(converges_to(F, target, whole(F), EUCLID, threshold=1e-4).verdict, "converges")

    def test_accepted_limits_are_equivalent(self) -> None:
        threshold = 1e-4
        F = offset_family(0.2)
        candidates = [PartialMap.constant(F.grid.full_mask(), v) for v in (0.0, 0.1, 0.2, 0.2 + 5e-5, 0.2 - 5e-5)]
        accepted = [L for L in candidates
                    if converges_to(F, L, whole(F), EUCLID, threshold=threshold).verdict == "converges"]
        self.assertEqual(len(accepted), 3)
        for a in accepted:
            for b in accepted:
                self.assertTrue(equivalent(a, b, EUCLID, tol=2 * threshold))

    def test_constructed_and_known_limits_agree(self) -> None:
        threshold = 1e-6
        rng = np.random.default_rng(SEED + 9)
        for _ in range(5):
            F, truth = gen_contraction(rng)
            L = construct_limit(F, whole(F), EUCLID, threshold=threshold)
            for candidate in (L, truth):
                self.assertEqual(converges_to(F, candidate, whole(F), EUCLID, threshold=threshold).verdict,
                                 "converges")
            self.assertTrue(equivalent(L, truth, EUCLID, tol=2 * threshold))

    def test_wave_does_not_converge_to_one(self) -> None:
        F = gen_wave()
        one = PartialMap.constant(F.grid.full_mask(), 1.0)
        report = converges_to(F, one, whole(F), EUCLID)
        self.assertEqual(report.verdict, "diverges")
        self.assertTrue(np.allclose(report.details["distance"], 1.0, atol=1e-12))

    def test_tail_bound_reported(self) -> None:
        F = gen_wave((2, 4), cells=40)
        E = Exhaustion.boxes(F.grid, 3)
        report = converges_to(F, zero_map(F.grid), E, EUCLID, alpha=0.5)
        self.assertTrue(np.all(report.details["tail_bound"] == 0.5 * 2.0 ** -3))


class DomainLimitTests(unittest.TestCase):
    def setUp(self) -> None:
        self.grid = GridDomain.interval(0.0, 1.0, 20)

    def family(self, masks) -> FamilySample:
        maps = tuple(PartialMap.constant(m, 0.0) for m in masks)
        return FamilySample(tuple(2.0 ** -j for j in range(1, len(maps) + 1)), maps)

    def test_nested_domains_converge(self) -> None:
        F = self.family([self.grid.mask_from_indices(range(20 - j)) for j in range(10)])
        ok, lo, hi = domains_converge(F)
        self.assertTrue(ok)
        self.assertEqual(lo, F.masks[-1])

    def test_alternating_domains(self) -> None:
        a = self.grid.mask_from_indices(range(0, 10))
        b = self.grid.mask_from_indices(range(5, 15))
        F = self.family([a, b] * 5)
        ok, lo, hi = domains_converge(F)
        self.assertFalse(ok)
        self.assertEqual(lo, a.intersection(b))
        self.assertEqual(hi, a.union(b))


class AeLimitTests(unittest.TestCase):
    def test_constant_family(self) -> None:
        grid = GridDomain.interval(0.0, 1.0, 40)
        phi = PartialMap.from_function(grid.box_mask([0.2], [0.6]), lambda x: np.sin(x[:, 0]))
        L = ae_limit(gen_constant(phi), EUCLID)
        self.assertIsNotNone(L)
        self.assertTrue(equivalent(L, phi, EUCLID, tol=0.0))

    def test_scaling_family(self) -> None:
        F = gen_scaling()
        L = ae_limit(F, EUCLID)
        identity = PartialMap.from_function(F.grid.full_mask(), lambda x: x[:, 0])
        self.assertTrue(equivalent(L, identity, EUCLID, tol=1e-9))

    def test_wave_has_no_pointwise_limit(self) -> None:
        F = gen_wave()
        self.assertIsNone(ae_limit(F, EUCLID))

    def test_too_few_samples(self) -> None:
        phi = zero_map(GridDomain.interval(0.0, 1.0, 4))
        self.assertIsNone(ae_limit(FamilySample((0.5, 0.25), (phi, phi)), EUCLID))

    def test_pointwise_limits_are_limits(self) -> None:
        families = []
        for power in (0.5, 1.0, 1.5, 2.0, 3.0):
            families.append(gen_shrinking(power))
            families.append(gen_shrinking(power, t_list=[2.0 ** -j for j in range(1, 13)], cells=120))
        for cells in (50, 100, 150, 200, 250, 300, 350, 400, 450, 500):
            families.append(gen_scaling(cells=cells))
        rng = np.random.default_rng(SEED)
        for cells in (20, 40, 60, 80, 100):
            grid = GridDomain.interval(0.0, 1.0, cells)
            mask = DomainMask(grid, rng.random(cells) < 0.6)
            families.append(gen_constant(PartialMap(mask, rng.normal(size=cells))))
        for _ in range(5):
            F, _ = gen_contraction(rng)
            families.append(F)
        self.assertEqual(len(families), 30)

        found = 0
        for F in families:
            L = ae_limit(F, EUCLID)
            if L is None:
                continue
            found += 1
            self.assertEqual(converges_to(F, L, whole(F), EUCLID).verdict, "converges")
        self.assertGreaterEqual(found, 25)


class SentinelTests(unittest.TestCase):
    def test_lift_values(self) -> None:
        grid = GridDomain.interval(0.0, 1.0, 4)
        phi = PartialMap(grid.mask_from_indices([0, 2]), [1.5, 0, -2.0, 0])
        lifted = lift_sentinel(phi, grid.mask_from_indices([0, 1, 2]), alpha=0.5)
        self.assertEqual(lifted.values[0].tolist(), [0.0, 1.5])
        self.assertEqual(lifted.values[1].tolist(), [0.5, 0.0])
        self.assertTrue(np.all(np.isnan(lifted.values[3])))
        back = decode_sentinel(lifted, alpha=0.5)
        self.assertEqual(back.mask.members.tolist(), [0, 2])
        self.assertEqual(back.values[2, 0], -2.0)

    def test_total_and_empty_maps(self) -> None:
        grid = GridDomain.interval(0.0, 1.0, 3)
        total = PartialMap(grid.full_mask(), [1.0, 2.0, 3.0])
        self.assertTrue(np.all(lift_sentinel(total, grid.full_mask()).values[:, 0] == 0.0))
        empty = PartialMap.constant(grid.empty_mask(), 0.0)
        self.assertTrue(np.all(lift_sentinel(empty, grid.full_mask(), alpha=2.0).values[:, 0] == 2.0))

    def test_needs_euclidean_target(self) -> None:
        grid = GridDomain.interval(0.0, 1.0, 3)
        with self.assertRaises(ValueError):
            lift_sentinel(zero_map(grid), grid.full_mask(), d=TargetMetric.circle_arc())

    def test_lift_is_an_isometry(self) -> None:
        rng = np.random.default_rng(SEED + 6)
        grid = GridDomain.interval(0.0, 1.0, 100)
        for _ in range(200):
            k = int(rng.integers(1, 4))
            alpha = float(rng.uniform(0.1, 5.0))
            d, d_hat = TargetMetric.euclidean(k), TargetMetric.euclidean(k + 1)
            phi = PartialMap(DomainMask(grid, rng.random(100) < 0.5), rng.normal(scale=alpha, size=(100, k)))
            psi = PartialMap(DomainMask(grid, rng.random(100) < 0.5), rng.normal(scale=alpha, size=(100, k)))
            S = DomainMask(grid, rng.random(100) < 0.8)
            lifted = dist_on(S, lift_sentinel(phi, S, alpha), lift_sentinel(psi, S, alpha), d_hat, alpha)
            self.assertAlmostEqual(lifted, dist_on(S, phi, psi, d, alpha), delta=1e-12)


class ConstructLimitTests(unittest.TestCase):
    def test_constant_family_is_reproduced(self) -> None:
        grid = GridDomain.interval(0.0, 1.0, 60)
        phi = PartialMap.from_function(grid.box_mask([0.1], [0.7]), lambda x: np.exp(x[:, 0]))
        F = gen_constant(phi)
        L = construct_limit(F, whole(F), EUCLID)
        self.assertTrue(equivalent(L, phi, EUCLID, tol=0.0))

    def test_wave_limit_is_zero(self) -> None:
        F = gen_wave((2, 4, 8, 16, 32, 64), cells=192)
        L = construct_limit(F, whole(F), EUCLID, threshold=wave_resolution(64), surrogate="median")
        self.assertTrue(equivalent(L, zero_map(F.grid), EUCLID, tol=1e-6))

    def test_default_wave_limit_is_zero(self) -> None:
        F = gen_wave()
        threshold = wave_resolution(16)
        L = construct_limit(F, whole(F), EUCLID, threshold=threshold, surrogate="median")
        self.assertTrue(equivalent(L, zero_map(F.grid), EUCLID, tol=1e-6))
        self.assertEqual(converges_to(F, L, whole(F), EUCLID, threshold=threshold).verdict, "converges")

    def test_last_sample_surrogate(self) -> None:
        F, _ = gen_contraction(np.random.default_rng(SEED + 10))
        L = construct_limit(F, whole(F), EUCLID, surrogate="last")
        self.assertEqual(L.mask, F.masks[-1])
        cells = L.mask.flags
        self.assertTrue(np.allclose(L.values[cells], F.maps[-1].values[cells], rtol=0.0, atol=1e-12))

    def test_unknown_surrogate(self) -> None:
        F = gen_wave((2,), cells=4)
        with self.assertRaises(ValueError):
            construct_limit(F, whole(F), EUCLID, surrogate="mean")

    def test_clamp_stays_in_ball(self) -> None:
        rng = np.random.default_rng(SEED + 11)
        for radius in (0.5, 0.25, 2.0):
            tail = rng.normal(scale=2.0, size=(12, 30, 3))
            centre = rng.normal(size=(30, 3))
            clamped = clamp_to_ball(tail, centre, radius)
            self.assertTrue(np.all(np.linalg.norm(clamped - centre, axis=-1) <= radius + 1e-12))
            inside = np.linalg.norm(tail - centre, axis=-1) <= radius
            self.assertTrue(np.allclose(clamped[inside], tail[inside], rtol=0.0, atol=1e-12))
            moved = np.linalg.norm(clamped - tail, axis=-1)
            overshoot = np.maximum(np.linalg.norm(tail - centre, axis=-1) - radius, 0.0)
            self.assertTrue(np.allclose(moved, overshoot, rtol=0.0, atol=1e-9))

    def test_shrinking_limit(self) -> None:
        F = gen_shrinking(2.0)
        L = construct_limit(F, whole(F), EUCLID)
        self.assertLessEqual(dist_exhaustion(whole(F), L, shrinking_limit(2.0, F.grid), EUCLID)[0], 1e-6)

    def test_contraction_limits(self) -> None:
        rng = np.random.default_rng(SEED)
        for _ in range(50):
            F, truth = gen_contraction(rng)
            E = whole(F)
            L = construct_limit(F, E, EUCLID)
            self.assertLessEqual(dist_exhaustion(E, F.maps[-1], L, EUCLID)[0], 1e-3)
            self.assertLessEqual(dist_exhaustion(E, truth, L, EUCLID)[0], 1e-3)
            self.assertEqual(converges_to(F, L, E, EUCLID).verdict, "converges")

    def test_contraction_on_boxes(self) -> None:
        F, truth = gen_contraction(np.random.default_rng(SEED + 7), target_dim=2)
        E = Exhaustion.boxes(F.grid, 4)
        L = construct_limit(F, E, TargetMetric.euclidean(2))
        self.assertLessEqual(dist_exhaustion(E, truth, L, TargetMetric.euclidean(2))[0], 1e-3)

    def test_rejects_divergent_family(self) -> None:
        F = gen_oscillation(1.0, depth=6, cells=60)
        with self.assertRaises(ValueError):
            construct_limit(F, whole(F), EUCLID)


class FreezeTailTests(unittest.TestCase):
    def test_frozen_samples_repeat_the_donor(self) -> None:
        F, _ = gen_contraction(np.random.default_rng(SEED))
        T = F.times[10]
        G = freeze_tail(F, T)
        self.assertEqual(G.times, F.times)
        for j in range(11):
            self.assertIs(G.maps[j], F.maps[j])
        self.assertEqual(G.masks, F.masks)
        mid = T / 2
        deep = [j for j, t in enumerate(G.times) if t <= mid]
        values = G.maps[deep[0]].values
        for j in deep[1:]:
            cells = G.masks[j].flags
            self.assertTrue(np.array_equal(G.maps[j].values[cells], values[cells]))

    def test_frozen_family_stays_close(self) -> None:
        F, _ = gen_contraction(np.random.default_rng(SEED + 8))
        G = freeze_tail(F, F.times[8])
        osc = is_cauchy(F, whole(F), EUCLID).tail_oscillation
        E = whole(F)
        worst = max(dist_exhaustion(E, a, b, EUCLID)[0] for a, b in zip(F.maps, G.maps))
        self.assertLessEqual(worst, osc[8] + 1e-12)

    def test_requires_nested_tail(self) -> None:
        grid = GridDomain.interval(0.0, 1.0, 10)
        a = PartialMap.constant(grid.mask_from_indices(range(5)), 0.0)
        b = PartialMap.constant(grid.mask_from_indices(range(3, 8)), 0.0)
        F = FamilySample((0.8, 0.4, 0.2, 0.1), (a, a, b, a))
        self.assertFalse(tail_nested(F, 1))
        with self.assertRaises(ValueError):
            freeze_tail(F, 0.8)

    def test_freeze_time_above_limit(self) -> None:
        F = gen_wave((2,), cells=4)
        with self.assertRaises(ValueError):
            freeze_tail(F, 0.0)


if __name__ == "__main__":
    unittest.main()
