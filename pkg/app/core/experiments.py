"""Protocol drivers: controlled-phase gate, decoherence heatmap, entangled coherent state, effective-model checks."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import Pool
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy.linalg import expm

from .device import (
    MHZ_PER_GHZ,
    DeviceParams,
    HamiltonianKind,
    HamiltonianSpec,
    RegimeError,
    Rotating,
    derive,
    hamiltonian_components,
    mhz_to_angular,
    solve_gate_parameters,
)
from .dynamics import (
    IntegratorConfig,
    LindbladModel,
    ToleranceError,
    Trajectory,
    default_dt,
    fidelity,
    integrate,
    propagate_columns,
    unitary_trajectory,
)
from .logging_util import log_event
from .operators import HilbertSpace
from .states import CoherentSpec, coherent_state, gate_input_state, ideal_cat_output, ideal_gate_output, product_state

logger = logging.getLogger("qutrit_kerr.experiments")

T = TypeVar("T")
R = TypeVar("R")

GATE_AMPLITUDES = (1 / math.sqrt(2),) * 4
GATE_DELTA_B_GHZ = 0.7
GATE_DELTA_B_GRID_GHZ = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2)

# (γ μs, η μs, quoted fidelity)
QUOTED_HEATMAP_POINTS: Tuple[Tuple[float, float, float], ...] = (
    (0.1, 1.0, 0.949),
    (0.3, 2.0, 0.972),
    (0.5, 3.0, 0.983),
    (0.7, 4.0, 0.987),
    (1.0, 5.0, 0.991),
)
HEATMAP_GAMMA_GRID_US = tuple(float(x) for x in np.linspace(0.1, 1.0, 5))
HEATMAP_ETA_GRID_US = (1.0, 2.0, 3.0, 4.0, 5.0)

CAT_D_QUOTED = 8.48
CAT_M_VALUES = (4, 5, 6, 7)
# D = 8.48 and m = 4..7
QUOTED_CAT_FIDELITIES: Dict[int, float] = {4: 0.9675, 5: 0.9703, 6: 0.9708, 7: 0.9709}
CAT_EXTRA_LEVELS = 3

VALIDATION_SAMPLE_EVERY = 8

# numerical breakdowns recorded as failed rows; configuration and regime errors abort the run
POINT_FAILURES = (ArithmeticError, ToleranceError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class ExperimentSettings:
    """Numerical settings shared by every point of a sweep."""

    dim_a: int = 4
    dim_b: int = 4
    dim_cat: int = 10
    dt_us: Optional[float] = None
    monitor_every: int = 200
    step_doubling: bool = True
    hamiltonian: HamiltonianKind = HamiltonianKind.FULL_CROSSTALK

    def integrator(self, t_final: float) -> IntegratorConfig:
        return IntegratorConfig(
            t_final=t_final,
            dt=self.dt_us,
            monitor_every=self.monitor_every,
            step_doubling=self.step_doubling,
        )


@dataclass(frozen=True)
class SweepRecord:
    """One parameter point: swept inputs, derived snapshot, fidelities and diagnostics."""

    experiment: str
    inputs: Dict[str, float]
    derived: Dict[str, float]
    fidelity_lossless: Optional[float] = None
    fidelity_lossy: Optional[float] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)
    wall_seconds: float = 0.0
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def fidelity(self) -> Optional[float]:
        return self.fidelity_lossy if self.fidelity_lossy is not None else self.fidelity_lossless


def _merge_status(trajectories: Iterable[Optional[Trajectory]]) -> str:
    failures = sorted({t.failure for t in trajectories if t is not None and t.failure is not None})
    return "ok" if not failures else "failed:" + "+".join(failures)


def map_points(func: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """Evaluate ``func`` over ``items`` keeping input order; ``workers`` > 1 uses a process pool."""

    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with Pool(processes=min(workers, len(items))) as pool:
        return pool.map(func, items)


# ----------------------------------------------------------------------
# Controlled-phase gate
# ----------------------------------------------------------------------
def gate_params(base: DeviceParams, delta_b: float) -> Tuple[DeviceParams, float]:
    """``base`` moved to ``delta_b`` with μ and the gate time solved from the phase relations."""

    solution = solve_gate_parameters(base.g, base.delta_a, delta_b, base.k)
    params = base.replace(delta_b=delta_b, mu=solution.mu_mhz).validate()
    return params, solution.t_gate_us


def excited_population_bound(params: DeviceParams) -> float:
    """4(g/δ_a)² + 4(μ/δ_b)²."""

    da = params.delta_a * MHZ_PER_GHZ
    db = params.delta_b * MHZ_PER_GHZ
    return 4.0 * (params.g / da) ** 2 + 4.0 * (params.mu / db) ** 2


def run_gate_point(
    base: DeviceParams,
    delta_b: float,
    *,
    lossy: bool = True,
    with_lossless: bool = True,
    settings: ExperimentSettings = ExperimentSettings(),
) -> SweepRecord:
    """Controlled-phase gate at one δ_b: lossless (pure) and lossy (master equation) branches."""

    started = time.perf_counter()
    params, t_gate = gate_params(base, delta_b)
    derived = derive(params)
    space = HilbertSpace(settings.dim_a, settings.dim_b)
    psi0 = gate_input_state(space, *GATE_AMPLITUDES)
    target = ideal_gate_output(*GATE_AMPLITUDES, space)

    lossless_run: Optional[Trajectory] = None
    lossy_run: Optional[Trajectory] = None
    diagnostics: Dict[str, float] = {"excited_bound": excited_population_bound(params)}
    if with_lossless:
        lossless_spec = HamiltonianSpec(settings.hamiltonian, params.lossless(), space)
        lossless_run = unitary_trajectory(
            lossless_spec, psi0, t_gate, settings.dt_us, monitor_every=settings.monitor_every
        )
        diagnostics.update({f"lossless_{k}": v for k, v in lossless_run.summary().items()})
    if lossy:
        model = LindbladModel.from_spec(HamiltonianSpec(settings.hamiltonian, params, space))
        lossy_run = integrate(model, psi0, settings.integrator(t_gate))
        diagnostics.update({f"lossy_{k}": v for k, v in lossy_run.summary().items()})

    runs = [run for run in (lossy_run, lossless_run) if run is not None]
    diagnostics["max_excited_pop"] = max((run.max_excited_population for run in runs), default=0.0)
    return SweepRecord(
        experiment="gate",
        inputs={"delta_b_ghz": delta_b},
        derived={
            **derived.as_dict(),
            "mu_mhz": params.mu,
            "t_gate_us": t_gate,
        },
        fidelity_lossless=fidelity(target, lossless_run.final) if lossless_run is not None else None,
        fidelity_lossy=fidelity(target, lossy_run.final) if lossy_run is not None else None,
        diagnostics=diagnostics,
        wall_seconds=time.perf_counter() - started,
        status=_merge_status(runs),
    )


def _failed_record(experiment: str, inputs: Dict[str, float], exc: Exception) -> SweepRecord:
    return SweepRecord(experiment=experiment, inputs=inputs, derived={}, status=f"failed:{type(exc).__name__}")


def _gate_task(delta_b: float, base: DeviceParams, settings: ExperimentSettings, with_lossless: bool) -> SweepRecord:
    try:
        return run_gate_point(base, delta_b, with_lossless=with_lossless, settings=settings)
    except POINT_FAILURES as exc:
        logger.exception("Gate point delta_b=%.4g GHz failed", delta_b)
        return _failed_record("gate", {"delta_b_ghz": delta_b}, exc)


def run_gate_sweep(
    base: DeviceParams,
    delta_b_values: Sequence[float] = GATE_DELTA_B_GRID_GHZ,
    *,
    settings: ExperimentSettings = ExperimentSettings(),
    workers: int = 1,
) -> List[SweepRecord]:
    for delta_b in delta_b_values:
        gate_params(base, delta_b)
    task = partial(_gate_task, base=base, settings=settings, with_lossless=True)
    return map_points(task, delta_b_values, workers)


def heatmap_points(
    gamma_values: Optional[Sequence[float]] = None,
    eta_values: Optional[Sequence[float]] = None,
    *,
    include_quoted: bool = True,
) -> List[Tuple[float, float]]:
    """The quoted (γ, η) tuples first, then the fill-in grid, without duplicates."""

    gammas = tuple(gamma_values) if gamma_values else HEATMAP_GAMMA_GRID_US
    etas = tuple(eta_values) if eta_values else HEATMAP_ETA_GRID_US
    points: List[Tuple[float, float]] = []
    seen = set()
    quoted = [(g, e) for g, e, _ in QUOTED_HEATMAP_POINTS] if include_quoted else []
    for gamma, eta in [*quoted, *((g, e) for g in gammas for e in etas)]:
        key = (round(gamma, 9), round(eta, 9))
        if key not in seen:
            seen.add(key)
            points.append((float(gamma), float(eta)))
    return points


def _heatmap_task(
    point: Tuple[float, float], base: DeviceParams, delta_b: float, settings: ExperimentSettings
) -> SweepRecord:
    gamma, eta = point
    inputs = {"gamma_us": gamma, "eta_us": eta}
    try:
        record = run_gate_point(base.with_decoherence(gamma, eta), delta_b, with_lossless=False, settings=settings)
    except POINT_FAILURES as exc:
        logger.exception("Heatmap point gamma=%.4g us eta=%.4g us failed", gamma, eta)
        return _failed_record("heatmap", inputs, exc)
    return SweepRecord(
        experiment="heatmap",
        inputs={**inputs, "delta_b_ghz": delta_b},
        derived=record.derived,
        fidelity_lossy=record.fidelity_lossy,
        diagnostics=record.diagnostics,
        wall_seconds=record.wall_seconds,
        status=record.status,
    )


def run_gate_heatmap(
    base: DeviceParams,
    points: Optional[Sequence[Tuple[float, float]]] = None,
    *,
    delta_b: float = GATE_DELTA_B_GHZ,
    settings: ExperimentSettings = ExperimentSettings(),
    workers: int = 1,
) -> List[SweepRecord]:
    """Lossy gate fidelity over (γ, η) pairs at fixed δ_b."""

    gate_params(base, delta_b)
    task = partial(_heatmap_task, base=base, delta_b=delta_b, settings=settings)
    return map_points(task, points if points is not None else heatmap_points(), workers)


# ----------------------------------------------------------------------
# Entangled coherent state
# ----------------------------------------------------------------------
def cat_dimension(ms: Sequence[int], dim_cat: int) -> int:
    return max(max(ms) + CAT_EXTRA_LEVELS, dim_cat)


def run_cat_points(
    base: DeviceParams,
    d_ratio: float,
    ms: Sequence[int] = CAT_M_VALUES,
    *,
    alpha_a: complex = 0.5,
    beta_b: complex = 1.0,
    lossy: bool = True,
    settings: ExperimentSettings = ExperimentSettings(),
) -> List[SweepRecord]:
    """One evolution at δ_b = D·μ, scored against the target truncated at each m."""

    started = time.perf_counter()
    delta_b = d_ratio * base.mu / MHZ_PER_GHZ
    if not d_ratio * base.mu > abs(base.delta_a) * MHZ_PER_GHZ:
        raise RegimeError(f"D·mu = {d_ratio * base.mu:.4g} MHz must exceed |delta_a| = {abs(base.delta_a) * 1e3:.4g} MHz")
    params = base.replace(delta_b=delta_b).validate()
    if not lossy:
        params = params.lossless()
    derived = derive(params)
    if not math.isfinite(derived.t_cat_us):
        raise RegimeError("chi = 0: the entangled coherent state is never reached")

    dim = cat_dimension(ms, settings.dim_cat)
    space = HilbertSpace(dim, dim)
    mode_a = coherent_state(CoherentSpec(alpha_a, dim))
    mode_b = coherent_state(CoherentSpec(beta_b, dim))
    psi0 = product_state(space, "g", mode_a.amplitudes, mode_b.amplitudes)
    spec = HamiltonianSpec(settings.hamiltonian, params, space)
    if lossy:
        run = integrate(LindbladModel.from_spec(spec), psi0, settings.integrator(derived.t_cat_us))
    else:
        run = unitary_trajectory(spec, psi0, derived.t_cat_us, settings.dt_us, monitor_every=settings.monitor_every)
    wall = time.perf_counter() - started

    leakage = max(mode_a.leakage, mode_b.leakage)
    records = []
    for m in ms:
        target = ideal_cat_output(alpha_a, beta_b, derived.chi_mhz, params.g, params.delta_a, space, m=m)
        value = fidelity(target, run.final)
        records.append(
            SweepRecord(
                experiment="cat",
                inputs={"d_ratio": d_ratio, "delta_b_ghz": delta_b, "m": m},
                derived=derived.as_dict(),
                fidelity_lossless=None if lossy else value,
                fidelity_lossy=value if lossy else None,
                diagnostics={"leakage": leakage, "dim": float(dim), **run.summary()},
                wall_seconds=wall,
                status=run.status,
            )
        )
    return records


def run_cat_point(base: DeviceParams, d_ratio: float, m: int, **kwargs) -> SweepRecord:
    return run_cat_points(base, d_ratio, (m,), **kwargs)[0]


def cat_d_grid(start: float = 6.0, stop: float = 10.0, step: float = 0.25) -> List[float]:
    """D from ``start`` to ``stop`` with the quoted 8.48 always included."""

    count = int(round((stop - start) / step))
    grid = {round(start + i * step, 10) for i in range(count + 1)}
    grid.add(CAT_D_QUOTED)
    return sorted(grid)


def _cat_task(
    d_ratio: float,
    base: DeviceParams,
    ms: Tuple[int, ...],
    alpha_a: float,
    beta_b: float,
    settings: ExperimentSettings,
) -> List[SweepRecord]:
    try:
        return run_cat_points(base, d_ratio, ms, alpha_a=alpha_a, beta_b=beta_b, settings=settings)
    except POINT_FAILURES as exc:
        logger.exception("Cat point D=%.4g failed", d_ratio)
        return [_failed_record("cat", {"d_ratio": d_ratio, "m": m}, exc) for m in ms]


def run_cat_sweep(
    base: DeviceParams,
    d_values: Optional[Sequence[float]] = None,
    ms: Sequence[int] = CAT_M_VALUES,
    *,
    alpha_a: float = 0.5,
    beta_b: float = 1.0,
    settings: ExperimentSettings = ExperimentSettings(),
    workers: int = 1,
) -> List[SweepRecord]:
    d_values = list(d_values) if d_values else cat_d_grid()
    task = partial(_cat_task, base=base, ms=tuple(ms), alpha_a=alpha_a, beta_b=beta_b, settings=settings)
    return [record for batch in map_points(task, d_values, workers) for record in batch]


# ----------------------------------------------------------------------
# Effective-Hamiltonian hierarchy
# ----------------------------------------------------------------------
EFFECTIVE_HIERARCHY: Tuple[HamiltonianKind, ...] = (
    HamiltonianKind.FULL,
    HamiltonianKind.EFFECTIVE3,
    HamiltonianKind.EFFECTIVE4,
    HamiltonianKind.GROUND_EFFECTIVE,
    HamiltonianKind.CROSS_KERR,
)

VALIDATION_PAIRS: Tuple[Tuple[HamiltonianKind, HamiltonianKind], ...] = (
    (HamiltonianKind.FULL, HamiltonianKind.EFFECTIVE3),
    (HamiltonianKind.EFFECTIVE3, HamiltonianKind.EFFECTIVE4),
    (HamiltonianKind.EFFECTIVE4, HamiltonianKind.GROUND_EFFECTIVE),
    (HamiltonianKind.GROUND_EFFECTIVE, HamiltonianKind.CROSS_KERR),
    (HamiltonianKind.FULL, HamiltonianKind.GROUND_EFFECTIVE),
)


def pair_label(pair: Tuple[HamiltonianKind, HamiltonianKind]) -> str:
    return f"{pair[0].value}/{pair[1].value}"


@dataclass(frozen=True)
class DeficitRow:
    pair: str
    scale: float
    final_deficit: float
    peak_deficit: float
    status: str = "ok"


@dataclass(frozen=True)
class ValidationReport:
    rows: Tuple[DeficitRow, ...]
    window_us: float
    kerr_reference_deviation: float

    def for_pair(self, pair: str) -> List[DeficitRow]:
        return sorted((row for row in self.rows if row.pair == pair), key=lambda row: row.scale)

    def is_monotone(self, pair: str, atol: float = 1e-12) -> bool:
        """Final deficit non-increasing as the detunings grow."""

        finals = [row.final_deficit for row in self.for_pair(pair)]
        return all(later <= earlier + atol for earlier, later in zip(finals, finals[1:]))

    def shrink(self, pair: str) -> float:
        """Baseline final deficit over the final deficit at the largest scale."""

        rows = self.for_pair(pair)
        first, last = rows[0].final_deficit, rows[-1].final_deficit
        if last <= 0.0:
            return math.inf if first > 0.0 else 1.0
        return first / last


def sector_basis(space: HilbertSpace, sector: int) -> np.ndarray:
    """Columns |g, n_a, n_b⟩ with n_a, n_b ≤ sector."""

    return np.stack(
        [space.basis_vector("g", n_a, n_b) for n_a in range(sector + 1) for n_b in range(sector + 1)], axis=1
    )


def _deficits(left: Sequence[np.ndarray], right: Sequence[np.ndarray]) -> np.ndarray:
    """max over columns of 1 − |⟨ψ_left|ψ_right⟩| at each sample."""

    return np.asarray([np.max(1.0 - np.abs(np.sum(l.conj() * r, axis=0))) for l, r in zip(left, right)])


def elimination_generator(rotating: Sequence[Rotating], t: float) -> np.ndarray:
    """W(t) = −Σ (X e^{iωt} − X† e^{−iωt})/ω, the anti-Hermitian first-order dressing.

    ψ = e^{W(t)}φ removes the oscillating terms from i dψ/dt = H(t)ψ to first
    order; φ then follows the time-averaged Hamiltonian one level down.
    """

    generator = np.zeros_like(rotating[0].operator.to_dense())
    for rot in rotating:
        if rot.frequency == 0.0:
            raise RegimeError("A resonant term cannot be adiabatically eliminated")
        phase = np.exp(1j * rot.frequency * t)
        generator -= (phase * rot.operator.to_dense() - np.conj(phase) * rot.adjoint.to_dense()) / rot.frequency
    return generator


def adiabatic_frame(
    params: DeviceParams, pair: Tuple[HamiltonianKind, HamiltonianKind], space: HilbertSpace
) -> Optional[Callable[[float], np.ndarray]]:
    """Unitary U(t) taking the upstream model's state into the downstream model's frame.

    Each hierarchy step between the two models contributes e^{−W(t)} built from
    the oscillating terms it eliminates. ``None`` when no step eliminates any.
    """

    left, right = pair
    if left not in EFFECTIVE_HIERARCHY or right not in EFFECTIVE_HIERARCHY:
        raise ValueError(f"{pair_label(pair)} is not a pair of the effective hierarchy")
    start, stop = EFFECTIVE_HIERARCHY.index(left), EFFECTIVE_HIERARCHY.index(right)
    if stop <= start:
        raise ValueError(f"{pair_label(pair)} must run from the detailed model to the reduced one")

    steps = []
    for kind in EFFECTIVE_HIERARCHY[start:stop]:
        rotating = hamiltonian_components(HamiltonianSpec(kind, params, space)).rotating
        if rotating:
            steps.append(rotating)
    if not steps:
        return None

    def frame(t: float) -> np.ndarray:
        unitary = np.eye(space.total_dim, dtype=complex)
        for rotating in steps:
            unitary = expm(-elimination_generator(rotating, t)) @ unitary
        return unitary

    return frame


def validation_window(params: DeviceParams) -> float:
    """One gate time; one detuning period when the couplings vanish."""

    t_gate = derive(params).t_gate_us
    if math.isfinite(t_gate):
        return t_gate
    return 1.0 / abs(params.delta_a * MHZ_PER_GHZ)


def compare_pair(
    params: DeviceParams,
    pair: Tuple[HamiltonianKind, HamiltonianKind],
    space: HilbertSpace,
    basis: np.ndarray,
    window_us: float,
    dt_us: Optional[float] = None,
) -> Tuple[float, float]:
    """(final deficit, peak deficit) of two Hamiltonians on a common time grid.

    The upstream model starts in the dressed basis and its samples are
    compared after undressing with :func:`adiabatic_frame`, so the deficit
    measures accumulated error rather than the virtual-excitation ripple.
    """

    left = hamiltonian_components(HamiltonianSpec(pair[0], params, space))
    right = hamiltonian_components(HamiltonianSpec(pair[1], params, space))
    if dt_us is None:
        dt_us = min(default_dt(left.max_frequency()), default_dt(right.max_frequency()))
        if not math.isfinite(dt_us):
            dt_us = window_us / 2
    frame = adiabatic_frame(params, pair, space)
    start = basis if frame is None else frame(0.0).conj().T @ basis
    times, left_samples, _, _ = propagate_columns(
        left, start, window_us, dt=dt_us, sample_every=VALIDATION_SAMPLE_EVERY
    )
    if frame is not None:
        left_samples = [frame(t) @ sample for t, sample in zip(times, left_samples)]
    _, right_samples, _, _ = propagate_columns(
        right, basis, window_us, dt=dt_us, sample_every=VALIDATION_SAMPLE_EVERY
    )
    if pair == (HamiltonianKind.GROUND_EFFECTIVE, HamiltonianKind.CROSS_KERR):
        # the pure Kerr model drops the resonator-a Stark shift, a commuting diagonal phase
        stark = left.diagonal() - right.diagonal()
        right_samples = [np.exp(-1j * stark * t)[:, None] * sample for t, sample in zip(times, right_samples)]
    deficits = _deficits(left_samples, right_samples)
    return float(deficits[-1]), float(deficits.max())


def kerr_reference_deviation(params: DeviceParams, space: HilbertSpace) -> float:
    """max |H_cross-kerr − (−χ n_a n_b)| over the |g⟩ block (rad/μs)."""

    chi = mhz_to_angular(derive(params).chi_mhz)
    diag = hamiltonian_components(HamiltonianSpec(HamiltonianKind.CROSS_KERR, params, space)).diagonal()
    block = diag[: space.dim_a * space.dim_b].reshape(space.dim_a, space.dim_b)
    reference = -chi * np.outer(np.arange(space.dim_a), np.arange(space.dim_b))
    return float(np.max(np.abs(block - reference)))


def validate_effective(
    params: DeviceParams,
    *,
    sector: int = 1,
    scales: Sequence[float] = (1.0, 2.0, 4.0),
    settings: ExperimentSettings = ExperimentSettings(),
    pairs: Sequence[Tuple[HamiltonianKind, HamiltonianKind]] = VALIDATION_PAIRS,
) -> ValidationReport:
    """Propagate the low-photon |g⟩ sector under adjacent models of the effective hierarchy.

    The window is fixed to the unscaled gate time; detunings are multiplied
    by each scale while g and μ stay fixed, so every coupling-to-detuning
    ratio shrinks by the scale. Final deficits are taken in the downstream
    model's frame (see :func:`compare_pair`).
    """

    params = params.lossless()
    space = HilbertSpace(max(settings.dim_a, sector + 2), max(settings.dim_b, sector + 2))
    basis = sector_basis(space, sector)
    window = validation_window(params)
    rows: List[DeficitRow] = []
    for scale in scales:
        scaled = params.replace(delta_a=params.delta_a * scale, delta_b=params.delta_b * scale).validate()
        for pair in pairs:
            final, peak = compare_pair(scaled, pair, space, basis, window, settings.dt_us)
            rows.append(DeficitRow(pair_label(pair), float(scale), final, peak))
            log_event(
                logger,
                "sweep_point_completed",
                experiment="validate",
                pair=pair_label(pair),
                scale=float(scale),
                final_deficit=final,
                peak_deficit=peak,
            )
    return ValidationReport(tuple(rows), window, kerr_reference_deviation(params, space))
