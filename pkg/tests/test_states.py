"""Tests for initial states and ideal targets."""
import cmath
import math

import numpy as np
import pytest

from app.core.operators import HilbertSpace, QState
from app.core.states import (
    CoherentSpec,
    cat_phase,
    cat_state,
    coherent_amplitudes,
    coherent_state,
    fock_state,
    gate_input_state,
    ideal_cat_output,
    ideal_gate_output,
    truncate_fock,
    truncation_leakage,
)

HALF = 1 / math.sqrt(2)


class TestCoherentStates:
    def test_amplitudes_match_poisson_form(self):
        alpha = 0.8 * cmath.exp(0.3j)
        amplitudes = coherent_amplitudes(alpha, 12)
        for n, value in enumerate(amplitudes):
            expected = math.exp(-abs(alpha) ** 2 / 2) * alpha**n / math.sqrt(math.factorial(n))
            assert value == pytest.approx(expected, abs=1e-14)

    def test_leakage_is_the_missing_tail(self):
        for alpha, dim in [(0.5, 10), (1.0, 10), (2.0, 6)]:
            tail = 1.0 - np.sum(np.abs(coherent_amplitudes(alpha, dim)) ** 2)
            assert truncation_leakage(alpha, dim) == pytest.approx(tail, abs=1e-14)

    def test_acceptance_truncation_is_tight(self):
        for alpha in (0.5, 1.0):
            state = coherent_state(CoherentSpec(alpha, 10))
            assert state.leakage <= 1e-6
            assert np.linalg.norm(state.amplitudes) == pytest.approx(1.0)

    def test_vacuum(self):
        np.testing.assert_allclose(coherent_state(CoherentSpec(0.0, 4)).amplitudes, fock_state(0, 4))

    def test_rejects_small_dim(self):
        with pytest.raises(ValueError):
            CoherentSpec(0.5, 1)


class TestCatStates:
    @pytest.mark.parametrize("parity, zero", [("even", 1), ("odd", 0)])
    def test_opposite_parity_is_exactly_zero(self, parity, zero):
        amplitudes = cat_state(1.2, parity, 12).amplitudes
        assert np.all(amplitudes[zero::2] == 0)
        assert np.linalg.norm(amplitudes) == pytest.approx(1.0)

    def test_odd_cat_at_origin_is_rejected(self):
        with pytest.raises(ValueError):
            cat_state(0.0, "odd", 6)
        np.testing.assert_allclose(cat_state(0.0, "even", 6).amplitudes, fock_state(0, 6))

    def test_unknown_parity(self):
        with pytest.raises(ValueError):
            cat_state(1.0, "both", 6)


class TestGateStates:
    def test_input_is_product(self, space):
        psi = gate_input_state(space, HALF, HALF, HALF, HALF)
        for n_a in (0, 1):
            for n_b in (0, 1):
                assert psi.data[space.index("g", n_a, n_b)] == pytest.approx(0.5)
        assert psi.norm() == pytest.approx(1.0)

    def test_unnormalized_amplitudes_rejected(self, space):
        with pytest.raises(ValueError):
            gate_input_state(space, 1.0, 1.0, HALF, HALF)
        with pytest.raises(ValueError):
            ideal_gate_output(HALF, HALF, 1.0, 0.5, space)

    def test_truth_table(self, space):
        target = ideal_gate_output(HALF, HALF, HALF, HALF, space)
        assert target.data[space.index("g", 1, 1)] == pytest.approx(-0.5)
        assert target.data[space.index("g", 0, 1)] == pytest.approx(0.5)
        # only the |11⟩ amplitude flips: ⟨in|out⟩ = 1/2
        psi = gate_input_state(space, HALF, HALF, HALF, HALF)
        assert abs(np.vdot(psi.data, target.data)) == pytest.approx(0.5)


class TestEntangledCoherentTarget:
    def test_phase(self):
        assert cat_phase(0.8, 150.0, -1.0) == pytest.approx(150.0**2 * math.pi / (0.8 * -1000.0))
        with pytest.raises(ValueError):
            cat_phase(0.0, 150.0, -1.0)

    def test_normalized_and_in_ground_level(self):
        space = HilbertSpace(10, 10)
        target = ideal_cat_output(0.5, 1.0, 0.8168, 150.0, -1.0, space)
        assert target.norm() == pytest.approx(1.0)
        block = space.dim_a * space.dim_b
        assert np.all(target.data[block:] == 0)

    def test_truncation_removes_high_photon_numbers(self):
        space = HilbertSpace(8, 8)
        m = 4
        target = ideal_cat_output(0.5, 1.0, 0.8168, 150.0, -1.0, space, m=m)
        grid = target.data.reshape(space.dims)
        assert np.all(grid[0, m:, :] == 0)
        assert np.all(grid[0, :, m:] == 0)
        assert target.norm() == pytest.approx(1.0)

    def test_is_a_kerr_rotated_product(self):
        """Applying e^{iπ n_a n_b} and the a-mode Stark phase to |α_a⟩|β_b⟩ yields the four-term target."""

        space = HilbertSpace(9, 9)
        alpha_a, beta_b, chi, g, delta_a = 0.5, 1.0, 0.8168, 150.0, -1.0
        phi = cat_phase(chi, g, delta_a)
        n = np.arange(9)
        mode_a = coherent_amplitudes(alpha_a, 9) * np.exp(1j * phi * n)
        mode_b = coherent_amplitudes(beta_b, 9)
        joint = np.outer(mode_a, mode_b) * np.exp(1j * math.pi * np.outer(n, n))
        vector = np.zeros(space.dims, dtype=complex)
        vector[0] = joint
        expected = QState.pure(space, vector.reshape(-1), normalize=True)
        target = ideal_cat_output(alpha_a, beta_b, chi, g, delta_a, space)
        assert abs(np.vdot(expected.data, target.data)) == pytest.approx(1.0, abs=1e-12)

    def test_truncate_fock_requires_pure(self, space):
        rho = QState.basis(space, "g", 0, 0).to_density()
        with pytest.raises(ValueError):
            truncate_fock(rho, 2)
