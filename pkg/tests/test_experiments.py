"""Tests for the protocol drivers.

Acceptance anchors that integrate the full master equation carry the
``slow`` marker; run ``pytest -m "not slow"`` for the fast suite.
"""
import math

import numpy as np
import pytest

from app.core.device import HamiltonianKind, HamiltonianSpec, RegimeError, hamiltonian_components
from app.core.experiments import (
    CAT_D_QUOTED,
    QUOTED_CAT_FIDELITIES,
    QUOTED_HEATMAP_POINTS,
    DeficitRow,
    ExperimentSettings,
    ValidationReport,
    adiabatic_frame,
    cat_d_grid,
    cat_dimension,
    compare_pair,
    elimination_generator,
    excited_population_bound,
    gate_params,
    heatmap_points,
    map_points,
    pair_label,
    run_cat_points,
    run_gate_heatmap,
    run_gate_point,
    run_gate_sweep,
    sector_basis,
    validate_effective,
)
from app.core.operators import HilbertSpace

FULL_EFF3 = pair_label((HamiltonianKind.FULL, HamiltonianKind.EFFECTIVE3))
EFF3_EFF4 = pair_label((HamiltonianKind.EFFECTIVE3, HamiltonianKind.EFFECTIVE4))
EFF4_GROUND = pair_label((HamiltonianKind.EFFECTIVE4, HamiltonianKind.GROUND_EFFECTIVE))
GROUND_KERR = pair_label((HamiltonianKind.GROUND_EFFECTIVE, HamiltonianKind.CROSS_KERR))
FULL_GROUND = pair_label((HamiltonianKind.FULL, HamiltonianKind.GROUND_EFFECTIVE))


class TestGrids:
    def test_heatmap_points(self):
        points = heatmap_points()
        assert len(points) == 28
        assert points[:5] == [(g, e) for g, e, _ in QUOTED_HEATMAP_POINTS]
        assert len(set(points)) == len(points)

    def test_heatmap_points_custom_grid(self):
        assert heatmap_points([2.0], [3.0], include_quoted=False) == [(2.0, 3.0)]

    def test_cat_grid_contains_quoted_ratio(self):
        grid = cat_d_grid()
        assert CAT_D_QUOTED in grid
        assert grid[0] == 6.0 and grid[-1] == 10.0
        assert grid == sorted(grid)
        assert len(grid) == 18

    def test_cat_dimension(self):
        assert cat_dimension((4, 5, 6, 7), 10) == 10
        assert cat_dimension((10,), 10) == 13


class TestGatePoint:
    def test_solved_parameters(self, lossy_gate_params):
        params, t_gate = gate_params(lossy_gate_params, 0.7)
        assert params.mu == pytest.approx(342.0, rel=0.01)
        assert t_gate == pytest.approx(0.12)
        assert params.kappa_a == lossy_gate_params.kappa_a

    def test_excited_population_bound(self, gate_params):
        bound = excited_population_bound(gate_params)
        assert bound == pytest.approx(4 * (50 / 300) ** 2 + 4 * (gate_params.mu / 700) ** 2)

    def test_rejects_inverted_detuning(self, lossy_gate_params):
        with pytest.raises(RegimeError):
            run_gate_sweep(lossy_gate_params, [0.7, 0.25])

    @pytest.mark.parametrize(
        "kind", [HamiltonianKind.EFFECTIVE4, HamiltonianKind.GROUND_EFFECTIVE, HamiltonianKind.CROSS_KERR]
    )
    def test_effective_evolution_is_an_exact_controlled_phase(self, gate_params, kind):
        settings = ExperimentSettings(dim_a=3, dim_b=3, hamiltonian=kind)
        record = run_gate_point(gate_params.replace(g_ab=0.0).lossless(), 0.7, settings=settings)
        assert record.ok, record.status
        assert record.fidelity_lossless == pytest.approx(1.0, abs=1e-8)
        assert record.fidelity_lossy == pytest.approx(1.0, abs=1e-8)


class TestMapPoints:
    def test_serial_and_pool_keep_order(self):
        items = [-3, 1, -2, 5]
        assert map_points(abs, items) == [3, 1, 2, 5]
        assert map_points(abs, items, workers=2) == [3, 1, 2, 5]


class TestEntangledCoherentState:
    def test_lossless_ground_model_is_limited_by_truncation_only(self, cat_params):
        settings = ExperimentSettings(hamiltonian=HamiltonianKind.GROUND_EFFECTIVE)
        records = run_cat_points(cat_params, CAT_D_QUOTED, (4, 5, 6, 7, 10), lossy=False, settings=settings)
        fidelities = [record.fidelity_lossless for record in records]
        assert all(record.ok for record in records)
        assert all(later >= earlier - 1e-12 for earlier, later in zip(fidelities, fidelities[1:]))
        assert fidelities[-1] == pytest.approx(1.0, abs=1e-6)
        assert records[0].inputs["delta_b_ghz"] == pytest.approx(1.696)
        assert records[0].diagnostics["leakage"] <= 1e-6

    def test_ratio_below_detuning_is_rejected(self, cat_params):
        with pytest.raises(RegimeError):
            run_cat_points(cat_params, 4.0, (4,))


class TestValidateEffective:
    def test_decoupled_limit_has_no_deficit(self, gate_params):
        report = validate_effective(gate_params.replace(g=0.0, mu=0.0))
        assert len(report.rows) == 15
        assert all(row.final_deficit <= 1e-12 and row.peak_deficit <= 1e-12 for row in report.rows)
        assert report.kerr_reference_deviation == 0.0

    def test_diagonal_pairs_agree_on_the_ground_sector(self, gate_params):
        pairs = [
            (HamiltonianKind.EFFECTIVE4, HamiltonianKind.GROUND_EFFECTIVE),
            (HamiltonianKind.GROUND_EFFECTIVE, HamiltonianKind.CROSS_KERR),
        ]
        report = validate_effective(gate_params, scales=(1.0,), pairs=pairs)
        for row in report.rows:
            assert row.peak_deficit <= 1e-12
        assert report.kerr_reference_deviation <= 1e-9
        assert report.window_us == pytest.approx(0.12)

    def test_monotonicity_is_judged_on_final_deficit(self):
        rows = (
            DeficitRow(FULL_EFF3, 1.0, 0.008, 0.05),
            DeficitRow(FULL_EFF3, 2.0, 0.006, 0.06),
            DeficitRow(FULL_EFF3, 4.0, 0.001, 0.07),
            DeficitRow(FULL_GROUND, 1.0, 0.005, 0.09),
            DeficitRow(FULL_GROUND, 2.0, 0.007, 0.02),
            DeficitRow(FULL_GROUND, 4.0, 0.001, 0.01),
        )
        report = ValidationReport(rows, 0.12, 0.0)
        assert report.is_monotone(FULL_EFF3)
        assert not report.is_monotone(FULL_GROUND)
        assert report.shrink(FULL_EFF3) == pytest.approx(8.0)

    def test_shrink_of_vanishing_deficits(self):
        rows = tuple(DeficitRow(GROUND_KERR, scale, 0.0, 0.0) for scale in (1.0, 2.0, 4.0))
        assert ValidationReport(rows, 0.12, 0.0).shrink(GROUND_KERR) == 1.0


class TestAdiabaticFrame:
    def test_diagonal_steps_need_no_frame(self, gate_params):
        space = HilbertSpace(3, 3)
        assert adiabatic_frame(gate_params, (HamiltonianKind.EFFECTIVE4, HamiltonianKind.CROSS_KERR), space) is None

    def test_frame_is_unitary_and_trivial_without_coupling(self, gate_params):
        space = HilbertSpace(3, 3)
        pair = (HamiltonianKind.FULL, HamiltonianKind.GROUND_EFFECTIVE)
        unitary = adiabatic_frame(gate_params, pair, space)(0.037)
        assert np.allclose(unitary.conj().T @ unitary, np.eye(space.total_dim), atol=1e-12)
        assert not np.allclose(unitary, np.eye(space.total_dim))
        decoupled = adiabatic_frame(gate_params.replace(g=0.0, mu=0.0), pair, space)(0.037)
        assert np.allclose(decoupled, np.eye(space.total_dim), atol=1e-15)

    def test_generator_is_anti_hermitian(self, gate_params, space):
        rotating = hamiltonian_components(HamiltonianSpec(HamiltonianKind.FULL, gate_params, space)).rotating
        generator = elimination_generator(rotating, 0.01)
        assert np.allclose(generator, -generator.conj().T, atol=1e-15)

    @pytest.mark.parametrize(
        "pair",
        [
            (HamiltonianKind.EFFECTIVE3, HamiltonianKind.FULL),
            (HamiltonianKind.FULL, HamiltonianKind.FULL_CROSSTALK),
        ],
    )
    def test_rejects_pairs_outside_the_hierarchy_order(self, gate_params, space, pair):
        with pytest.raises(ValueError):
            adiabatic_frame(gate_params, pair, space)

    def test_dispersive_point_tracks_three_level_model(self, gate_params):
        scaled = gate_params.lossless().replace(delta_a=-1.2, delta_b=2.8).validate()
        space = HilbertSpace(3, 3)
        pair = (HamiltonianKind.FULL, HamiltonianKind.EFFECTIVE3)
        final, peak = compare_pair(scaled, pair, space, sector_basis(space, 1), 0.02)
        assert 0.0 <= final <= peak <= 1e-3


# ----------------------------------------------------------------------
# Acceptance anchors
# ----------------------------------------------------------------------
@pytest.mark.slow
class TestGateAnchors:
    def test_fidelity_at_quoted_detuning(self, lossy_gate_params):
        record = run_gate_point(lossy_gate_params, 0.7)
        assert record.ok, record.status
        assert record.fidelity_lossy == pytest.approx(0.994, abs=0.015)
        assert record.fidelity_lossless >= record.fidelity_lossy
        assert record.diagnostics["max_excited_pop"] <= excited_population_bound(record_params(record, lossy_gate_params))
        assert record.diagnostics["lossy_error_estimate"] <= 1e-6

    def test_halving_dt_is_converged(self, lossy_gate_params):
        coarse = run_gate_point(lossy_gate_params, 0.7, with_lossless=False)
        fine_settings = ExperimentSettings(dt_us=coarse.diagnostics["lossy_dt_us"] / 2)
        fine = run_gate_point(lossy_gate_params, 0.7, with_lossless=False, settings=fine_settings)
        assert abs(fine.fidelity_lossy - coarse.fidelity_lossy) <= 1e-7

    def test_doubling_dimensions_is_converged(self, lossy_gate_params):
        small = run_gate_point(lossy_gate_params, 0.7, lossy=False)
        large = run_gate_point(lossy_gate_params, 0.7, lossy=False, settings=ExperimentSettings(dim_a=8, dim_b=8))
        assert abs(small.fidelity_lossless - large.fidelity_lossless) <= 5e-4

    def test_sweep_is_identical_across_worker_counts(self, lossy_gate_params):
        values = [0.6, 0.9]
        serial = run_gate_sweep(lossy_gate_params, values)
        pooled = run_gate_sweep(lossy_gate_params, values, workers=2)
        for left, right in zip(serial, pooled):
            assert left.fidelity_lossy == pytest.approx(right.fidelity_lossy, abs=1e-12)
            assert left.fidelity_lossless == pytest.approx(right.fidelity_lossless, abs=1e-12)
            assert left.fidelity_lossless >= left.fidelity_lossy


def record_params(record, base):
    params, _ = gate_params(base, record.inputs["delta_b_ghz"])
    return params


@pytest.mark.slow
class TestHeatmapAnchors:
    def test_quoted_points(self, lossy_gate_params):
        points = [(g, e) for g, e, _ in QUOTED_HEATMAP_POINTS]
        records = run_gate_heatmap(lossy_gate_params, points, workers=5)
        fidelities = [record.fidelity_lossy for record in records]
        for record, (_, _, quoted) in zip(records, QUOTED_HEATMAP_POINTS):
            assert record.fidelity_lossy == pytest.approx(quoted, abs=0.02)
        assert fidelities == sorted(fidelities)


@pytest.mark.slow
class TestCatAnchors:
    def test_quoted_fidelities(self, cat_params):
        base = cat_params.with_decoherence(0.1, 5.0)
        records = run_cat_points(base, CAT_D_QUOTED, tuple(QUOTED_CAT_FIDELITIES))
        fidelities = [record.fidelity_lossy for record in records]
        for record in records:
            assert record.ok, record.status
            assert record.fidelity_lossy == pytest.approx(QUOTED_CAT_FIDELITIES[record.inputs["m"]], abs=0.02)
        assert all(later >= earlier - 1e-12 for earlier, later in zip(fidelities, fidelities[1:]))


@pytest.mark.slow
class TestEffectiveHierarchy:
    def test_gate_point_bounds_and_detuning_scaling(self, gate_params):
        report = validate_effective(gate_params)
        baseline = {row.pair: row for row in report.rows if row.scale == 1.0}
        # overlap ≥ 0.99 against the three-level model, deficit ≤ 0.01 against the ground model
        assert baseline[FULL_EFF3].final_deficit <= 0.01
        assert baseline[FULL_GROUND].final_deficit <= 0.01
        assert baseline[GROUND_KERR].peak_deficit <= 1e-12
        assert baseline[EFF4_GROUND].peak_deficit <= 1e-12
        for pair in (FULL_EFF3, EFF3_EFF4, FULL_GROUND):
            assert report.is_monotone(pair), report.for_pair(pair)
            assert report.shrink(pair) >= 4.0
        assert math.isfinite(report.window_us)
        assert np.isclose(report.window_us, 0.12)
