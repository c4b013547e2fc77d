"""Time evolution: pure-state propagation, the Lindblad master equation and fidelity.

All right-hand sides act on states through the structured operators of
:mod:`app.core.operators`; no Liouvillian is ever formed. Time is in μs and
frequencies in rad/μs, as produced by :mod:`app.core.device`.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh

from .config import ConfigError
from .device import (
    HamiltonianComponents,
    HamiltonianKind,
    HamiltonianSpec,
    build_rotating_frame,
    hamiltonian_components,
)
from .operators import HilbertSpace, QOperator, QState, SpaceMismatchError, mode_operators

logger = logging.getLogger("qutrit_kerr.dynamics")

TRACE_TOL = 1e-8
HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = -1e-6
NORM_TOL = 1e-8
GLOBAL_ERROR_TOL = 1e-6

# dt·ω_max must stay below this; the default step sits just under it
PHASE_PER_STEP_LIMIT = 0.1
DEFAULT_STEPS_PER_PERIOD = 64

# (rate attribute on DeviceParams, operator name in mode_operators)
STANDARD_CHANNELS: Tuple[Tuple[str, str], ...] = (
    ("kappa_a", "a"),
    ("kappa_b", "b"),
    ("gamma_eg", "sigma_eg_minus"),
    ("gamma_fe", "sigma_fe_minus"),
    ("gamma_fg", "sigma_fg_minus"),
    ("gamma_phi_e", "sigma_ee"),
    ("gamma_phi_f", "sigma_ff"),
)


class ToleranceError(RuntimeError):
    """A numerical monitor was violated; ``diagnostics`` carries the measured values."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, float]] = None) -> None:
        super().__init__(message)
        self.diagnostics: Dict[str, float] = dict(diagnostics or {})


@dataclass(frozen=True, eq=False)
class Channel:
    """Lindblad channel rate·(ΛρΛ† − ½{Λ†Λ, ρ}); dephasing uses Λ = |j⟩⟨j|."""

    name: str
    operator: QOperator
    rate: float

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise ValueError(f"Channel {self.name} has negative rate {self.rate}")


def _frame_undo_for(spec: HamiltonianSpec) -> Optional[Callable[[float], QOperator]]:
    """V(t) for rotating-frame runs, None when the run is already in the interaction frame."""

    if spec.kind is not HamiltonianKind.ROTATING_FRAME:
        return None
    _, undo = build_rotating_frame(replace(spec, kind=HamiltonianKind.FULL_CROSSTALK))
    return undo


@dataclass(frozen=True, eq=False)
class LindbladModel:
    hamiltonian: HamiltonianSpec
    channels: Tuple[Channel, ...] = ()

    def __post_init__(self) -> None:
        for channel in self.channels:
            if channel.operator.space != self.space:
                raise SpaceMismatchError(f"Channel {channel.name} lives on {channel.operator.space}, not {self.space}")

    @classmethod
    def from_spec(cls, spec: HamiltonianSpec, *, lossy: bool = True) -> "LindbladModel":
        """Model with the standard photon-loss, relaxation and dephasing channels of ``spec.params``."""

        if not lossy:
            return cls(spec)
        operators = mode_operators(spec.space)
        rates = spec.params.rates
        channels = tuple(
            Channel(rate_name, operators[op_name], rates[rate_name])
            for rate_name, op_name in STANDARD_CHANNELS
            if rates[rate_name] > 0
        )
        return cls(spec, channels)

    @property
    def space(self) -> HilbertSpace:
        return self.hamiltonian.space

    @cached_property
    def components(self) -> HamiltonianComponents:
        return hamiltonian_components(self.hamiltonian)

    @cached_property
    def drift(self) -> QOperator:
        """Static part of H − (i/2)·Σ rate·Λ†Λ."""

        operator = QOperator(self.space, self.components.static.terms)
        for channel in self.channels:
            operator = operator + (channel.operator.dag() @ channel.operator) * (-0.5j * channel.rate)
        return operator

    @cached_property
    def frame_undo(self) -> Optional[Callable[[float], QOperator]]:
        return _frame_undo_for(self.hamiltonian)

    def max_rate(self) -> float:
        """Largest total decay rate out of any basis state (1/μs)."""

        damping = np.zeros(self.space.total_dim)
        for channel in self.channels:
            damping += channel.rate * np.abs((channel.operator.dag() @ channel.operator).diagonal())
        return float(damping.max(initial=0.0))

    def rhs(self, t: float, rho: np.ndarray) -> np.ndarray:
        """dρ/dt for Hermitian ρ.

        With Y = (H − (i/2)D)ρ and D = Σ rate·Λ†Λ the coherent and damping parts
        are −i(Y − Y†); the jump terms are added by :meth:`QOperator.sandwich`.
        """

        y = self.drift.apply(rho)
        for rot in self.components.rotating:
            phase = np.exp(1j * rot.frequency * t)
            rot.operator.apply(rho, scale=phase, out=y)
            rot.adjoint.apply(rho, scale=np.conj(phase), out=y)
        drho = -1j * (y - y.conj().T)
        for channel in self.channels:
            channel.operator.sandwich(rho, scale=channel.rate, out=drho)
        return drho


def lindblad_rhs(model: LindbladModel, rho: np.ndarray, t: float) -> np.ndarray:
    n = model.space.total_dim
    if rho.shape != (n, n):
        raise SpaceMismatchError(f"Density matrix of shape {rho.shape} on dimension {n}")
    return model.rhs(t, rho)


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings; times in μs."""

    t_final: float
    dt: Optional[float] = None
    monitor_every: int = 200
    step_doubling: bool = True
    trace_tol: float = TRACE_TOL
    hermiticity_tol: float = HERMITICITY_TOL
    positivity_tol: float = POSITIVITY_TOL
    error_tol: float = GLOBAL_ERROR_TOL

    def __post_init__(self) -> None:
        if not math.isfinite(self.t_final) or self.t_final < 0:
            raise ConfigError(f"t_final must be finite and >= 0, got {self.t_final}")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.monitor_every < 1:
            raise ConfigError("monitor_every must be >= 1")


def default_dt(max_angular_frequency: float) -> float:
    """1/(64·f_max) with f_max = ω_max/2π."""

    if max_angular_frequency <= 0:
        return math.inf
    return 2.0 * math.pi / (DEFAULT_STEPS_PER_PERIOD * max_angular_frequency)


def resolve_step(max_angular_frequency: float, t_final: float, dt: Optional[float] = None) -> Tuple[float, int]:
    """Step and an even step count that land exactly on ``t_final``."""

    if dt is None:
        dt = default_dt(max_angular_frequency)
    elif dt * max_angular_frequency > PHASE_PER_STEP_LIMIT:
        raise ConfigError(
            f"dt = {dt * 1e3:.4g} ns under-resolves the fastest phase "
            f"(dt·ω_max = {dt * max_angular_frequency:.3g} > {PHASE_PER_STEP_LIMIT})"
        )
    if t_final == 0:
        return 0.0, 0
    steps = max(2, math.ceil(t_final / dt - 1e-9)) if math.isfinite(dt) else 2
    steps += steps % 2
    return t_final / steps, steps


def _rk4_step(rhs: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _excited_population(space: HilbertSpace, diagonal: np.ndarray) -> float:
    block = space.dim_a * space.dim_b
    return float(np.real(diagonal[block:]).sum())


def _level_photon_summary(space: HilbertSpace, populations: np.ndarray) -> Dict[str, float]:
    grid = np.real(populations).reshape(space.dims)
    return {
        "pop_e": float(grid[1].sum()),
        "pop_f": float(grid[2].sum()),
        "n_a": float((grid.sum(axis=(0, 2)) * np.arange(space.dim_a)).sum()),
        "n_b": float((grid.sum(axis=(0, 1)) * np.arange(space.dim_b)).sum()),
    }


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled diagnostics plus the final state of one evolution."""

    times: np.ndarray
    diagnostics: Dict[str, np.ndarray]
    final: QState
    dt: float
    steps: int
    max_excited_population: float
    error_estimate: Optional[float] = None
    min_eigenvalue: Optional[float] = None
    wall_seconds: float = 0.0
    failure: Optional[str] = None
    summary_extra: Dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.failure is None

    @property
    def status(self) -> str:
        return "ok" if self.failure is None else f"failed:{self.failure}"

    def summary(self) -> Dict[str, float]:
        summary: Dict[str, float] = {
            "dt_us": self.dt,
            "steps": float(self.steps),
            "max_excited_population": self.max_excited_population,
            "wall_seconds": self.wall_seconds,
        }
        for name in ("trace_deviation", "hermiticity", "norm_deviation"):
            if name in self.diagnostics and self.diagnostics[name].size:
                summary[f"max_{name}"] = float(np.max(self.diagnostics[name]))
        if self.error_estimate is not None:
            summary["error_estimate"] = self.error_estimate
        if self.min_eigenvalue is not None:
            summary["min_eigenvalue"] = self.min_eigenvalue
        summary.update(self.summary_extra)
        return summary

    def raise_for_status(self) -> "Trajectory":
        if self.failure is not None:
            raise ToleranceError(f"Evolution failed the {self.failure} monitor", diagnostics=self.summary())
        return self


class _Sampler:
    def __init__(self, space: HilbertSpace) -> None:
        self.space = space
        self.times: List[float] = []
        self.values: Dict[str, List[float]] = {}

    def record(self, t: float, **values: float) -> None:
        self.times.append(t)
        for key, value in values.items():
            self.values.setdefault(key, []).append(value)

    def arrays(self) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        return np.asarray(self.times), {key: np.asarray(vals) for key, vals in self.values.items()}


def _density_checks(rho: np.ndarray) -> Tuple[float, float]:
    trace_deviation = float(abs(np.trace(rho) - 1.0))
    hermiticity = float(np.max(np.abs(rho - rho.conj().T)))
    return trace_deviation, hermiticity


def integrate(model: LindbladModel, rho0: QState, config: IntegratorConfig) -> Trajectory:
    """Integrate the master equation from ``rho0`` to ``config.t_final``.

    Monitor violations do not raise; they end the run and are reported on
    the returned :class:`Trajectory` (see :meth:`Trajectory.raise_for_status`).
    """

    if rho0.space != model.space:
        raise SpaceMismatchError(f"Initial state on {rho0.space}, model on {model.space}")
    space = model.space
    started = time.perf_counter()
    rho = np.array(rho0.to_density().data, dtype=complex)
    trace_deviation, hermiticity = _density_checks(rho)
    if trace_deviation > config.trace_tol or hermiticity > config.hermiticity_tol:
        raise ValueError("Initial density matrix is not physical")

    scale = max(model.components.max_frequency(), model.max_rate())
    dt, steps = resolve_step(scale, config.t_final, config.dt)
    coarse = rho.copy() if config.step_doubling and steps else None
    sampler = _Sampler(space)
    sampler.record(0.0, trace_deviation=trace_deviation, hermiticity=hermiticity,
                   **_level_photon_summary(space, np.diagonal(rho)))
    max_excited = _excited_population(space, np.diagonal(rho))
    failure: Optional[str] = None

    for step in range(steps):
        t = step * dt
        rho = _rk4_step(model.rhs, t, rho, dt)
        if coarse is not None and step % 2 == 1:
            coarse = _rk4_step(model.rhs, t - dt, coarse, 2.0 * dt)
        max_excited = max(max_excited, _excited_population(space, np.diagonal(rho)))
        done = step + 1
        if done % config.monitor_every == 0 or done == steps:
            trace_deviation, hermiticity = _density_checks(rho)
            sampler.record(done * dt, trace_deviation=trace_deviation, hermiticity=hermiticity,
                           **_level_photon_summary(space, np.diagonal(rho)))
            if not np.isfinite(trace_deviation) or trace_deviation > config.trace_tol:
                failure = "trace"
            elif hermiticity > config.hermiticity_tol:
                failure = "hermiticity"
            if failure is not None:
                logger.warning("Integration stopped at t=%.6g us: %s monitor violated", done * dt, failure)
                break

    error_estimate = None
    if coarse is not None and failure is None:
        error_estimate = float(np.linalg.norm(rho - coarse) / 15.0)
        if error_estimate > config.error_tol:
            failure = "error_estimate"

    min_eigenvalue = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if failure is None and min_eigenvalue < config.positivity_tol:
        failure = "positivity"

    if model.frame_undo is not None and steps:
        rho = model.frame_undo(config.t_final).sandwich(rho)

    times, diagnostics = sampler.arrays()
    wall = time.perf_counter() - started
    logger.debug("Lindblad run: %d steps of %.4g ns in %.2f s (%s)", steps, dt * 1e3, wall, failure or "ok")
    return Trajectory(
        times=times,
        diagnostics=diagnostics,
        final=QState(space, rho, "density"),
        dt=dt,
        steps=steps,
        max_excited_population=max_excited,
        error_estimate=error_estimate,
        min_eigenvalue=min_eigenvalue,
        wall_seconds=wall,
        failure=failure,
    )


# ----------------------------------------------------------------------
# Pure-state evolution
# ----------------------------------------------------------------------
def propagate_columns(
    components: HamiltonianComponents,
    columns: np.ndarray,
    t_final: float,
    *,
    dt: Optional[float] = None,
    sample_every: int = 0,
    closed_form: bool = True,
    on_step: Optional[Callable[[np.ndarray], None]] = None,
) -> Tuple[np.ndarray, List[np.ndarray], float, int]:
    """Propagate one state (N,) or a stack of states (N, M) under i dψ/dt = H(t)ψ.

    Returns (sample times, sampled states, dt, steps). The final state is
    always the last sample; ``sample_every`` > 0 adds intermediate samples.
    Time-independent Hamiltonians are propagated exactly (exp(−i·diag·t) when
    diagonal, eigendecomposition otherwise) unless ``closed_form`` is off.
    """

    dt, steps = resolve_step(components.max_frequency(), t_final, dt)
    psi = np.array(columns, dtype=complex)
    times: List[float] = [0.0]
    samples: List[np.ndarray] = [psi.copy()]
    if steps == 0:
        return np.asarray(times), samples, dt, steps

    if closed_form and not components.rotating:
        # time-independent: exact phases in the eigenbasis (the product basis when diagonal)
        if components.is_diagonal:
            energies, basis = np.real(components.diagonal()), None
        else:
            energies, basis = eigh(components.static.to_dense())
        coeffs = psi if basis is None else basis.conj().T @ psi
        grid = range(sample_every, steps, sample_every) if sample_every else ()
        for step in (*grid, steps):
            t = step * dt
            phases = np.exp(-1j * energies * t)
            evolved = (phases[:, None] if psi.ndim == 2 else phases) * coeffs
            times.append(t)
            samples.append(evolved if basis is None else basis @ evolved)
        return np.asarray(times), samples, dt, steps

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return -1j * components.apply(t, y)

    for step in range(steps):
        psi = _rk4_step(rhs, step * dt, psi, dt)
        if on_step is not None:
            on_step(psi)
        done = step + 1
        if done == steps or (sample_every and done % sample_every == 0):
            times.append(done * dt)
            samples.append(psi.copy())
    return np.asarray(times), samples, dt, steps


def unitary_trajectory(
    spec: HamiltonianSpec,
    psi0: QState,
    t_final: float,
    dt: Optional[float] = None,
    *,
    closed_form: bool = True,
    monitor_every: int = 200,
) -> Trajectory:
    if not psi0.is_pure:
        raise ValueError("Unitary evolution needs a pure initial state")
    if psi0.space != spec.space:
        raise SpaceMismatchError(f"Initial state on {psi0.space}, Hamiltonian on {spec.space}")
    space = spec.space
    started = time.perf_counter()
    components = hamiltonian_components(spec)
    peak = [_excited_population(space, np.abs(psi0.data) ** 2)]

    def track(psi: np.ndarray) -> None:
        peak[0] = max(peak[0], _excited_population(space, np.abs(psi) ** 2))

    times, samples, step_dt, steps = propagate_columns(
        components, psi0.data, t_final, dt=dt, sample_every=monitor_every, closed_form=closed_form, on_step=track
    )
    for sample in samples:
        track(sample)
    psi = samples[-1]
    undo = _frame_undo_for(spec)
    if undo is not None and steps:
        psi = undo(t_final).apply(psi)

    norm_deviation = np.asarray([abs(np.linalg.norm(sample) - 1.0) for sample in samples])
    failure = "norm" if not np.all(norm_deviation <= NORM_TOL) else None
    populations = [_level_photon_summary(space, np.abs(sample) ** 2) for sample in samples]
    diagnostics = {"norm_deviation": norm_deviation}
    for key in ("pop_e", "pop_f", "n_a", "n_b"):
        diagnostics[key] = np.asarray([row[key] for row in populations])
    return Trajectory(
        times=times,
        diagnostics=diagnostics,
        final=QState(space, psi, "pure"),
        dt=step_dt,
        steps=steps,
        max_excited_population=peak[0],
        wall_seconds=time.perf_counter() - started,
        failure=failure,
    )


def evolve_unitary(
    spec: HamiltonianSpec,
    psi0: QState,
    t_final: float,
    dt: Optional[float] = None,
    *,
    closed_form: bool = True,
) -> QState:
    """ψ(t_final); raises :class:`ToleranceError` when the norm drifts by more than 1e-8."""

    return unitary_trajectory(spec, psi0, t_final, dt, closed_form=closed_form).raise_for_status().final


def fidelity(psi_id: QState, rho: QState) -> float:
    """F = √⟨ψ_id|ρ|ψ_id⟩ clamped to [0, 1]; a pure ``rho`` gives |⟨ψ_id|ψ⟩|."""

    if not psi_id.is_pure:
        raise ValueError("The ideal target must be a pure state")
    if psi_id.space != rho.space:
        raise SpaceMismatchError(f"Target on {psi_id.space}, state on {rho.space}")
    if rho.is_pure:
        value = abs(np.vdot(psi_id.data, rho.data)) ** 2
    else:
        value = float(np.real(np.vdot(psi_id.data, rho.data @ psi_id.data)))
    return float(math.sqrt(min(1.0, max(0.0, value))))
