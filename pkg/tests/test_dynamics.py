"""Tests for the master-equation right-hand side, the integrators and fidelity."""
import math

import numpy as np
import pytest

from app.core.config import ConfigError
from app.core.device import HamiltonianKind, HamiltonianSpec, hamiltonian_components, mhz_to_angular
from app.core.dynamics import (
    PHASE_PER_STEP_LIMIT,
    IntegratorConfig,
    LindbladModel,
    ToleranceError,
    default_dt,
    evolve_unitary,
    fidelity,
    integrate,
    lindblad_rhs,
    propagate_columns,
    resolve_step,
    unitary_trajectory,
)
from app.core.operators import HilbertSpace, QState, expectation, mode_operators
from app.core.states import gate_input_state, ideal_gate_output

from .helpers import random_hermitian_density

HALF = 1 / math.sqrt(2)


def _dense_lindblad(model: LindbladModel, rho: np.ndarray, t: float) -> np.ndarray:
    h = hamiltonian_components(model.hamiltonian).at(t).to_dense()
    drho = -1j * (h @ rho - rho @ h)
    for channel in model.channels:
        op = channel.operator.to_dense()
        op_dag = op.conj().T
        drho += channel.rate * (op @ rho @ op_dag - 0.5 * (op_dag @ op @ rho + rho @ op_dag @ op))
    return drho


class TestLindbladRhs:
    @pytest.mark.parametrize("kind", [HamiltonianKind.FULL_CROSSTALK, HamiltonianKind.EFFECTIVE3])
    def test_matches_dense_master_equation(self, kind, lossy_gate_params, rng):
        space = HilbertSpace(3, 3)
        model = LindbladModel.from_spec(HamiltonianSpec(kind, lossy_gate_params, space))
        assert len(model.channels) == 7
        rho = random_hermitian_density(space.total_dim, rng)
        for t in (0.0, 0.0371):
            expected = _dense_lindblad(model, rho, t)
            np.testing.assert_allclose(lindblad_rhs(model, rho, t), expected, atol=1e-12 * np.abs(expected).max())

    def test_trace_free_and_hermitian(self, lossy_gate_params, space, rng):
        model = LindbladModel.from_spec(HamiltonianSpec(HamiltonianKind.FULL_CROSSTALK, lossy_gate_params, space))
        for _ in range(50):
            rho = random_hermitian_density(space.total_dim, rng)
            t = rng.uniform(0.0, 0.12)
            drho = model.rhs(t, rho)
            assert abs(np.trace(drho)) <= 1e-8
            assert np.max(np.abs(drho - drho.conj().T)) <= 1e-8

    def test_ground_vacuum_is_stationary(self, lossy_gate_params, space):
        model = LindbladModel.from_spec(HamiltonianSpec(HamiltonianKind.ROTATING_FRAME, lossy_gate_params, space))
        rho = QState.basis(space, "g", 0, 0).to_density().data
        assert np.max(np.abs(model.rhs(0.0, rho))) <= 1e-12

    def test_shape_checked(self, gate_params, space):
        model = LindbladModel.from_spec(HamiltonianSpec(HamiltonianKind.CROSS_KERR, gate_params, space))
        with pytest.raises(ValueError):
            lindblad_rhs(model, np.eye(3), 0.0)

    def test_lossless_model_has_no_channels(self, lossy_gate_params, space):
        spec = HamiltonianSpec(HamiltonianKind.CROSS_KERR, lossy_gate_params, space)
        assert LindbladModel.from_spec(spec, lossy=False).channels == ()


class TestStepResolution:
    def test_even_steps_land_on_t_final(self):
        dt, steps = resolve_step(1000.0, 0.12)
        assert steps % 2 == 0
        assert dt * steps == pytest.approx(0.12, rel=1e-15)
        assert dt <= default_dt(1000.0)
        assert dt * 1000.0 <= PHASE_PER_STEP_LIMIT

    def test_explicit_step_must_resolve_fastest_phase(self):
        with pytest.raises(ConfigError):
            resolve_step(1000.0, 0.12, dt=1e-3)
        dt, _ = resolve_step(1000.0, 0.12, dt=1e-5)
        assert dt <= 1e-5

    def test_zero_window(self):
        assert resolve_step(1000.0, 0.0) == (0.0, 0)

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            IntegratorConfig(t_final=-1.0)
        with pytest.raises(ConfigError):
            IntegratorConfig(t_final=1.0, dt=0.0)


class TestAnalyticOracles:
    def test_photon_decay(self, gate_params, space):
        params = gate_params.lossless().replace(kappa_a=1.0)
        model = LindbladModel.from_spec(HamiltonianSpec(HamiltonianKind.CROSS_KERR, params, space))
        run = integrate(model, QState.basis(space, "g", 1, 0), IntegratorConfig(t_final=1.0))
        assert run.ok
        n_a = expectation(mode_operators(space)["n_a"], run.final).real
        assert n_a == pytest.approx(math.exp(-1.0), abs=1e-6)

    def test_pure_dephasing(self, gate_params, space):
        params = gate_params.lossless().replace(gamma_phi_e=2.0)
        model = LindbladModel.from_spec(HamiltonianSpec(HamiltonianKind.CROSS_KERR, params, space))
        plus = QState.pure(space, (space.basis_vector("g", 0, 0) + space.basis_vector("e", 0, 0)) * HALF)
        t = 0.5
        run = integrate(model, plus, IntegratorConfig(t_final=t))
        coherence = run.final.data[space.index("g", 0, 0), space.index("e", 0, 0)]
        assert abs(coherence) == pytest.approx(0.5 * math.exp(-2.0 * t / 2), abs=1e-6)

    def test_detuned_rabi(self, gate_params, space):
        params = gate_params.replace(mu=0.0, g_ab=0.0)
        spec = HamiltonianSpec(HamiltonianKind.FULL, params, space)
        dt = 0.01 / hamiltonian_components(spec).max_frequency()
        t = 0.004
        psi = evolve_unitary(spec, QState.basis(space, "e", 0, 0), t, dt)
        omega = mhz_to_angular(params.g)
        detuning = mhz_to_angular(params.delta_a * 1e3)
        rabi = math.sqrt(omega**2 + detuning**2 / 4)
        expected = (omega / rabi) ** 2 * math.sin(rabi * t) ** 2
        assert abs(psi.data[space.index("g", 1, 0)]) ** 2 == pytest.approx(expected, abs=1e-6)

    def test_zero_dynamics_is_exact(self, gate_params, space, rng):
        params = gate_params.replace(g=0.0, mu=0.0)
        model = LindbladModel.from_spec(HamiltonianSpec(HamiltonianKind.FULL, params, space))
        rho0 = QState.density(space, random_hermitian_density(space.total_dim, rng))
        run = integrate(model, rho0, IntegratorConfig(t_final=0.01))
        np.testing.assert_array_equal(run.final.data, rho0.data)

    def test_cross_kerr_closed_form_matches_stepping(self, gate_params, space):
        spec = HamiltonianSpec(HamiltonianKind.CROSS_KERR, gate_params, space)
        components = hamiltonian_components(spec)
        columns = np.stack([space.basis_vector("g", 1, 1), space.basis_vector("g", 2, 3)], axis=1)
        t = 0.12
        dt = 2e-3 / components.max_frequency()
        _, exact, _, _ = propagate_columns(components, columns, t, dt=dt, closed_form=True)
        _, stepped, _, _ = propagate_columns(components, columns, t, dt=dt, closed_form=False)
        np.testing.assert_allclose(exact[-1], stepped[-1], atol=1e-10)
        chi = mhz_to_angular(4.1666666666666)
        assert exact[-1][space.index("g", 1, 1), 0] == pytest.approx(np.exp(1j * chi * t), abs=1e-6)


class TestPureEvolution:
    def test_norm_is_preserved(self, gate_params, space):
        spec = HamiltonianSpec(HamiltonianKind.EFFECTIVE3, gate_params, space)
        run = unitary_trajectory(spec, gate_input_state(space, HALF, HALF, HALF, HALF), 0.12)
        assert run.ok
        assert np.max(run.diagnostics["norm_deviation"]) <= 1e-8

    def test_rotating_frame_and_direct_paths_agree(self, gate_params, space):
        psi0 = gate_input_state(space, HALF, HALF, HALF, HALF)
        target = ideal_gate_output(HALF, HALF, HALF, HALF, space)
        direct = evolve_unitary(HamiltonianSpec(HamiltonianKind.FULL_CROSSTALK, gate_params, space), psi0, 0.12)
        framed = evolve_unitary(HamiltonianSpec(HamiltonianKind.ROTATING_FRAME, gate_params, space), psi0, 0.12)
        assert abs(np.vdot(direct.data, framed.data)) == pytest.approx(1.0, abs=1e-5)
        assert fidelity(target, direct) == pytest.approx(fidelity(target, framed), abs=1e-5)

    def test_requires_pure_input(self, gate_params, space):
        spec = HamiltonianSpec(HamiltonianKind.CROSS_KERR, gate_params, space)
        with pytest.raises(ValueError):
            unitary_trajectory(spec, QState.basis(space, "g", 0, 0).to_density(), 0.1)


class TestMonitors:
    def test_failed_run_is_reported_not_raised(self, lossy_gate_params, space):
        model = LindbladModel.from_spec(HamiltonianSpec(HamiltonianKind.CROSS_KERR, lossy_gate_params, space))
        config = IntegratorConfig(t_final=0.05, error_tol=0.0)
        run = integrate(model, QState.basis(space, "g", 1, 1), config)
        assert run.status == "failed:error_estimate"
        with pytest.raises(ToleranceError) as info:
            run.raise_for_status()
        assert "error_estimate" in info.value.diagnostics

    def test_lossy_run_stays_physical(self, lossy_gate_params, space):
        model = LindbladModel.from_spec(HamiltonianSpec(HamiltonianKind.EFFECTIVE4, lossy_gate_params, space))
        run = integrate(model, gate_input_state(space, HALF, HALF, HALF, HALF), IntegratorConfig(t_final=0.12))
        assert run.ok
        assert abs(np.trace(run.final.data) - 1.0) <= 1e-8
        assert run.min_eigenvalue >= -1e-6
        assert run.error_estimate <= 1e-6


class TestFidelity:
    def test_pure_and_density_agree(self, space):
        target = QState.pure(space, (space.basis_vector("g", 0, 0) + space.basis_vector("g", 1, 1)) * HALF)
        state = QState.basis(space, "g", 0, 0)
        assert fidelity(target, state) == pytest.approx(HALF)
        assert fidelity(target, state.to_density()) == pytest.approx(HALF)
        assert fidelity(target, target) == pytest.approx(1.0)

    def test_orthogonal_states(self, space):
        target = QState.basis(space, "g", 0, 0)
        other = QState.basis(space, "g", 1, 1)
        assert fidelity(target, other) == 0.0
        assert fidelity(target, other.to_density()) == 0.0

    def test_equal_mixture(self, space):
        mixed = 0.5 * (
            QState.basis(space, "g", 0, 0).to_density().data + QState.basis(space, "g", 1, 1).to_density().data
        )
        rho = QState.density(space, mixed)
        assert fidelity(QState.basis(space, "g", 0, 0), rho) == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_target_must_be_pure(self, space):
        rho = QState.basis(space, "g", 0, 0).to_density()
        with pytest.raises(ValueError):
            fidelity(rho, rho)
