"""Initial states and ideal targets: Fock, coherent, cat, gate truth table, entangled coherent state."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gammainc, gammaln

from .device import MHZ_PER_GHZ
from .operators import HilbertSpace, Level, QState, kron

NORMALIZATION_ATOL = 1e-10


@dataclass(frozen=True)
class CoherentSpec:
    alpha: complex
    dim: int

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError(f"Fock truncation must be >= 2, got {self.dim}")


class ModeState(NamedTuple):
    """Single-resonator amplitudes (unit norm) plus the weight lost to truncation."""

    amplitudes: np.ndarray
    leakage: float


def fock_state(n: int, dim: int) -> np.ndarray:
    if not 0 <= n < dim:
        raise ValueError(f"Fock state |{n}> outside truncation {dim}")
    vector = np.zeros(dim, dtype=complex)
    vector[n] = 1.0
    return vector


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """e^{−|α|²/2} α^n / √n! for n < dim, not renormalized."""

    n = np.arange(dim)
    alpha = complex(alpha)
    if alpha == 0:
        return fock_state(0, dim)
    log_mag = -0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * cmath.phase(alpha))


def truncation_leakage(alpha: complex, dim: int) -> float:
    """1 − Σ_{n<dim} e^{−|α|²}|α|^{2n}/n!, the regularized lower incomplete gamma P(dim, |α|²)."""

    return float(gammainc(dim, abs(complex(alpha)) ** 2))


def coherent_state(spec: CoherentSpec) -> ModeState:
    amplitudes = coherent_amplitudes(spec.alpha, spec.dim)
    return ModeState(amplitudes / np.linalg.norm(amplitudes), truncation_leakage(spec.alpha, spec.dim))


def cat_state(alpha: complex, parity: str, dim: int) -> ModeState:
    """(|α⟩ ± |−α⟩)/N; the opposite-parity Fock amplitudes are exactly zero."""

    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    if parity == "odd" and complex(alpha) == 0:
        raise ValueError("Odd cat state at alpha = 0 is the null vector")
    amplitudes = coherent_amplitudes(alpha, dim)
    keep = (np.arange(dim) % 2) == (0 if parity == "even" else 1)
    amplitudes = np.where(keep, 2.0 * amplitudes, 0.0)
    return ModeState(amplitudes / np.linalg.norm(amplitudes), truncation_leakage(alpha, dim))


def product_state(space: HilbertSpace, level: Level, mode_a: np.ndarray, mode_b: np.ndarray) -> QState:
    return QState.product(space, level, mode_a, mode_b, normalize=True)


def _check_qubit(first: complex, second: complex, name: str) -> None:
    norm = abs(first) ** 2 + abs(second) ** 2
    if abs(norm - 1.0) > NORMALIZATION_ATOL:
        raise ValueError(f"Resonator {name} qubit amplitudes are not normalized (|.|^2 sum = {norm:.12f})")


def gate_input_state(
    space: HilbertSpace, alpha: complex, beta: complex, gamma: complex, delta: complex
) -> QState:
    """(α|0⟩ + β|1⟩)_a (γ|0⟩ + δ|1⟩)_b |g⟩."""

    _check_qubit(alpha, beta, "a")
    _check_qubit(gamma, delta, "b")
    mode_a = alpha * fock_state(0, space.dim_a) + beta * fock_state(1, space.dim_a)
    mode_b = gamma * fock_state(0, space.dim_b) + delta * fock_state(1, space.dim_b)
    return QState.product(space, "g", mode_a, mode_b)


def ideal_gate_output(
    alpha: complex, beta: complex, gamma: complex, delta: complex, space: HilbertSpace
) -> QState:
    """Controlled-phase truth table: αγ|00⟩ + αδ|01⟩ + βγ|10⟩ − βδ|11⟩, coupler in |g⟩."""

    _check_qubit(alpha, beta, "a")
    _check_qubit(gamma, delta, "b")
    vector = (
        alpha * gamma * space.basis_vector("g", 0, 0)
        + alpha * delta * space.basis_vector("g", 0, 1)
        + beta * gamma * space.basis_vector("g", 1, 0)
        - beta * delta * space.basis_vector("g", 1, 1)
    )
    return QState.pure(space, vector)


def truncate_fock(state: QState, m: int) -> QState:
    """Keep only n_a, n_b ≤ m − 1 and renormalize."""

    if not state.is_pure:
        raise ValueError("Fock truncation is defined for pure targets only")
    space = state.space
    n_a = np.arange(space.dim_a)[None, :, None]
    n_b = np.arange(space.dim_b)[None, None, :]
    mask = np.broadcast_to((n_a < m) & (n_b < m), space.dims).reshape(-1)
    return QState.pure(space, np.where(mask, state.data, 0.0), normalize=True)


def cat_phase(chi_mhz: float, g_mhz: float, delta_a_ghz: float) -> float:
    """g²π/(χ δ_a), the Stark rotation of resonator a accumulated over π/χ."""

    if chi_mhz <= 0:
        raise ValueError(f"Entangled coherent state needs chi > 0, got {chi_mhz} MHz")
    return g_mhz**2 * math.pi / (chi_mhz * delta_a_ghz * MHZ_PER_GHZ)


def ideal_cat_output(
    alpha_a: complex,
    beta_b: complex,
    chi_mhz: float,
    g_mhz: float,
    delta_a_ghz: float,
    space: HilbertSpace,
    m: Optional[int] = None,
) -> QState:
    """½(|β_a⟩|β_b⟩ + |−β_a⟩|β_b⟩ + |β_a⟩|−β_b⟩ − |−β_a⟩|−β_b⟩)|g⟩ with β_a = α_a e^{i g²π/(χ δ_a)}.

    The four terms are not orthogonal, so the sum is normalized numerically
    after truncation to ``space`` (and to n ≤ m − 1 when ``m`` is given).
    """

    beta_a = complex(alpha_a) * cmath.exp(1j * cat_phase(chi_mhz, g_mhz, delta_a_ghz))
    plus_a = coherent_amplitudes(beta_a, space.dim_a)
    minus_a = coherent_amplitudes(-beta_a, space.dim_a)
    plus_b = coherent_amplitudes(beta_b, space.dim_b)
    minus_b = coherent_amplitudes(-beta_b, space.dim_b)
    joint = 0.5 * (kron(plus_a, plus_b) + kron(minus_a, plus_b) + kron(plus_a, minus_b) - kron(minus_a, minus_b))
    ground = np.zeros(space.dim_qutrit, dtype=complex)
    ground[0] = 1.0
    target = QState.pure(space, kron(ground, joint), normalize=True)
    if m is not None:
        target = truncate_fock(target, m)
    return target
