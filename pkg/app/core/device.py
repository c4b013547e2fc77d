"""Device parameters, derived couplings and Hamiltonian builders.

Frequencies enter and leave this module in the ν = ω/2π convention (GHz for
resonator/qutrit frequencies and detunings, MHz for couplings). Operators
are built in angular units with time measured in μs, so a coupling of
ν MHz becomes 2π·ν rad/μs. Decay rates are reciprocal times in 1/μs and are
never multiplied by 2π.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .operators import (
    HilbertSpace,
    KronTerm,
    QOperator,
    annihilation,
    creation,
    number,
    projector,
    qutrit_op,
)

TWO_PI = 2.0 * math.pi
MHZ_PER_GHZ = 1e3

REGIME_RATIO_MIN = 5.0


def mhz_to_angular(nu_mhz: float) -> float:
    """ν in MHz -> ω in rad/μs."""

    return TWO_PI * nu_mhz


def ghz_to_angular(nu_ghz: float) -> float:
    return TWO_PI * MHZ_PER_GHZ * nu_ghz


class RegimeError(ValueError):
    """Raised when device parameters leave the hard physical bounds of the scheme."""


@dataclass(frozen=True)
class DeviceParams:
    """Physical parameters of the two-resonator / flux-qutrit device.

    ``omega_*``, ``delta_*`` in GHz; ``g``, ``mu``, ``g_ab`` in MHz; rates in 1/μs.
    """

    omega_a: float
    omega_b: float
    delta_a: float
    delta_b: float
    g: float
    mu: float
    g_ab: float = 0.0
    k: int = 1
    kappa_a: float = 0.0
    kappa_b: float = 0.0
    gamma_eg: float = 0.0
    gamma_fe: float = 0.0
    gamma_fg: float = 0.0
    gamma_phi_e: float = 0.0
    gamma_phi_f: float = 0.0

    @property
    def omega_eg(self) -> float:
        return self.omega_a + self.delta_a

    @property
    def omega_fe(self) -> float:
        return self.omega_b + self.delta_b

    @property
    def Delta_ab(self) -> float:  # noqa: N802 - physics symbol
        return self.omega_a - self.omega_b

    @property
    def rates(self) -> Dict[str, float]:
        return {
            "kappa_a": self.kappa_a,
            "kappa_b": self.kappa_b,
            "gamma_eg": self.gamma_eg,
            "gamma_fe": self.gamma_fe,
            "gamma_fg": self.gamma_fg,
            "gamma_phi_e": self.gamma_phi_e,
            "gamma_phi_f": self.gamma_phi_f,
        }

    def validate(self) -> "DeviceParams":
        """Check the hard invariants; returns ``self`` so calls can be chained."""

        if not self.delta_a < 0:
            raise RegimeError(f"delta_a must be negative (omega_eg < omega_a), got {self.delta_a} GHz")
        if not self.delta_b > 0:
            raise RegimeError(f"delta_b must be positive (omega_fe > omega_b), got {self.delta_b} GHz")
        if not self.delta_b > abs(self.delta_a):
            raise RegimeError(
                f"delta_b ({self.delta_b} GHz) must exceed |delta_a| ({abs(self.delta_a)} GHz) so that Delta > 0"
            )
        if self.g < 0 or self.mu < 0 or self.g_ab < 0:
            raise RegimeError("Coupling strengths g, mu, g_ab must be non-negative")
        if int(self.k) != self.k or self.k < 1:
            raise RegimeError(f"Phase-matching index k must be a positive integer, got {self.k}")
        negative = [name for name, rate in self.rates.items() if rate < 0]
        if negative:
            raise RegimeError(f"Rates must be non-negative: {', '.join(negative)}")
        return self

    def replace(self, **changes: float) -> "DeviceParams":
        return replace(self, **changes)

    def with_decoherence(self, gamma_us: float, eta_us: float) -> "DeviceParams":
        """Rates from the qutrit time γ and resonator time η (μs).

        γ_eg⁻¹ = 3γ, γ_fe⁻¹ = 2γ, γ_fg⁻¹ = 10γ, γ_φe⁻¹ = γ_φf⁻¹ = γ, κ_a⁻¹ = κ_b⁻¹ = η.
        An infinite time switches the corresponding channels off.
        """

        if gamma_us <= 0 or eta_us <= 0:
            raise RegimeError("Decoherence times must be positive")
        return replace(
            self,
            kappa_a=1.0 / eta_us,
            kappa_b=1.0 / eta_us,
            gamma_eg=1.0 / (3.0 * gamma_us),
            gamma_fe=1.0 / (2.0 * gamma_us),
            gamma_fg=1.0 / (10.0 * gamma_us),
            gamma_phi_e=1.0 / gamma_us,
            gamma_phi_f=1.0 / gamma_us,
        )

    def lossless(self) -> "DeviceParams":
        return replace(self, **{name: 0.0 for name in self.rates})


@dataclass(frozen=True)
class DerivedParams:
    """Effective couplings in MHz and protocol times in μs."""

    lambda_mhz: float
    Delta_mhz: float
    chi_mhz: float
    theta_mhz: float
    t_gate_us: float
    t_cat_us: float
    warnings: Tuple[str, ...] = ()

    def as_dict(self) -> Dict[str, float]:
        return {
            "lambda_mhz": self.lambda_mhz,
            "Delta_mhz": self.Delta_mhz,
            "chi_mhz": self.chi_mhz,
            "theta_mhz": self.theta_mhz,
            "t_gate_us": self.t_gate_us,
            "t_cat_us": self.t_cat_us,
        }


def _protocol_time(rate_mhz: float) -> float:
    """π/|ω| in μs for a frequency given in MHz."""

    if rate_mhz == 0:
        return math.inf
    return 1.0 / (2.0 * abs(rate_mhz))


def derive(params: DeviceParams) -> DerivedParams:
    """λ, Δ, χ, θ and the gate / cat interaction times.

    Regime checks are returned on ``warnings`` and not logged here; sweeps call
    this once per point and report the run's warnings once.
    """

    params.validate()
    da = abs(params.delta_a) * MHZ_PER_GHZ
    db = params.delta_b * MHZ_PER_GHZ
    g, mu = params.g, params.mu

    lam = 0.5 * g * mu * (1.0 / da + 1.0 / db)
    Delta = db - da
    if Delta <= 0:
        raise RegimeError(f"Delta = delta_b - |delta_a| must be positive, got {Delta} MHz")
    chi = lam**2 / Delta
    theta = chi + g**2 / (params.delta_a * MHZ_PER_GHZ)

    warnings: List[str] = []
    if g == 0 or mu == 0:
        warnings.append("decoupled: g or mu is zero, no cross-Kerr interaction is induced")
    if g > 0 and da / g < REGIME_RATIO_MIN:
        warnings.append(f"|delta_a|/g = {da / g:.2f} < {REGIME_RATIO_MIN:g}: resonator a is not dispersive")
    if mu > 0 and db / mu < REGIME_RATIO_MIN:
        warnings.append(f"delta_b/mu = {db / mu:.2f} < {REGIME_RATIO_MIN:g}: resonator b is not dispersive")
    scale = max(g**2 / da, mu**2 / db, lam)
    if scale > 0 and Delta / scale < 1.0:
        warnings.append(
            f"Delta/max(g^2/|delta_a|, mu^2/delta_b, lambda) = {Delta / scale:.2f} < 1: "
            "second elimination step is not justified"
        )

    return DerivedParams(
        lambda_mhz=lam,
        Delta_mhz=Delta,
        chi_mhz=chi,
        theta_mhz=theta,
        t_gate_us=_protocol_time(theta),
        t_cat_us=_protocol_time(chi),
        warnings=tuple(warnings),
    )


class GateSolution(NamedTuple):
    lambda_mhz: float
    mu_mhz: float
    t_gate_us: float


def solve_gate_parameters(g: float, delta_a: float, delta_b: float, k: int = 1) -> GateSolution:
    """Couplings that make |θ|t = π and (g²/|δ_a|)t = 2kπ hold simultaneously.

    ``g`` in MHz, detunings in GHz. The gate time follows from the second
    condition in angular units: t = 2kπ|δ_a|/g² = k|δ_a|/g² with ν in MHz.
    """

    da = abs(delta_a) * MHZ_PER_GHZ
    db = delta_b * MHZ_PER_GHZ
    if da == 0 or not db > da:
        raise RegimeError(f"Gate relations need delta_b > |delta_a| > 0, got delta_a={delta_a}, delta_b={delta_b}")
    if int(k) != k or k < 1:
        raise RegimeError(f"k must be a positive integer, got {k}")
    if g <= 0:
        raise RegimeError("Gate relations need g > 0")

    root = math.sqrt((db - da) * (2 * k - 1) / (2 * k * da))
    lam = g * root
    mu = (2.0 * da * db / (da + db)) * root
    t_gate = k * da / g**2
    return GateSolution(lambda_mhz=lam, mu_mhz=mu, t_gate_us=t_gate)


def quality_factor(omega_ghz: float, decay_time_us: float) -> float:
    """Q = (2π·ω)·τ."""

    return ghz_to_angular(omega_ghz) * decay_time_us


# ----------------------------------------------------------------------
# Hamiltonians
# ----------------------------------------------------------------------
class HamiltonianKind(str, enum.Enum):
    FULL = "full"
    FULL_CROSSTALK = "full+crosstalk"
    EFFECTIVE3 = "effective3"
    EFFECTIVE4 = "effective4"
    GROUND_EFFECTIVE = "ground-effective"
    CROSS_KERR = "cross-kerr"
    ROTATING_FRAME = "rotating-frame"


@dataclass(frozen=True)
class HamiltonianSpec:
    kind: HamiltonianKind
    params: DeviceParams
    space: HilbertSpace


class Rotating(NamedTuple):
    """e^{iωt}·operator + e^{−iωt}·adjoint."""

    operator: QOperator
    adjoint: QOperator
    frequency: float


@dataclass(frozen=True, eq=False)
class HamiltonianComponents:
    """H(t) = static + Σ (e^{iω_k t} X_k + h.c.), angular units, t in μs."""

    space: HilbertSpace
    static: QOperator
    rotating: Tuple[Rotating, ...] = ()

    @property
    def is_diagonal(self) -> bool:
        return not self.rotating and self.static.is_diagonal

    def diagonal(self) -> np.ndarray:
        return self.static.diagonal()

    def at(self, t: float) -> QOperator:
        terms = list(self.static.terms)
        for rot in self.rotating:
            phase = np.exp(1j * rot.frequency * t)
            terms.extend(term.scaled(phase) for term in rot.operator.terms)
            terms.extend(term.scaled(np.conj(phase)) for term in rot.adjoint.terms)
        return QOperator(self.space, tuple(terms), hermitian=True)

    def apply(self, t: float, x: np.ndarray, *, out: Optional[np.ndarray] = None) -> np.ndarray:
        out = self.static.apply(x, out=out)
        for rot in self.rotating:
            phase = np.exp(1j * rot.frequency * t)
            rot.operator.apply(x, scale=phase, out=out)
            rot.adjoint.apply(x, scale=np.conj(phase), out=out)
        return out

    def max_frequency(self) -> float:
        """Largest angular rate (rad/μs) in exponents, diagonal or coupling row sums."""

        static = np.abs(self.static.to_dense())
        diag = np.diag(static).copy()
        offdiag = static - np.diag(diag)
        row_sums = offdiag.sum(axis=1)
        exponents = [abs(rot.frequency) for rot in self.rotating]
        for rot in self.rotating:
            row_sums = row_sums + np.abs(rot.operator.to_dense()).sum(axis=1)
            row_sums = row_sums + np.abs(rot.adjoint.to_dense()).sum(axis=1)
        return float(max([diag.max(initial=0.0), row_sums.max(initial=0.0), *exponents]))


def _static(space: HilbertSpace, terms: List[KronTerm]) -> QOperator:
    return QOperator(space, tuple(terms), hermitian=True)


def _rotating(space: HilbertSpace, term: KronTerm, frequency: float) -> Rotating:
    operator = QOperator(space, (term,))
    return Rotating(operator, operator.dag(), frequency)


def _coupling_terms(params: DeviceParams, space: HilbertSpace, crosstalk: bool) -> List[Tuple[KronTerm, float]]:
    a = annihilation(space.dim_a)
    b = annihilation(space.dim_b)
    pairs = [
        (KronTerm(mhz_to_angular(params.g), qutrit_op("e", "g"), a, None), ghz_to_angular(params.delta_a)),
        (KronTerm(mhz_to_angular(params.mu), qutrit_op("f", "e"), None, b), ghz_to_angular(params.delta_b)),
    ]
    if crosstalk:
        pairs.append(
            (KronTerm(mhz_to_angular(params.g_ab), None, a, creation(space.dim_b)), ghz_to_angular(params.Delta_ab))
        )
    return pairs


def _stark_terms(params: DeviceParams, space: HilbertSpace) -> List[KronTerm]:
    """−(g²/δ_a)(a†a|g⟩⟨g| − aa†|e⟩⟨e|) − (μ²/δ_b)(b†b|e⟩⟨e| − bb†|f⟩⟨f|)."""

    a = annihilation(space.dim_a)
    b = annihilation(space.dim_b)
    shift_a = mhz_to_angular(params.g) ** 2 / ghz_to_angular(params.delta_a)
    shift_b = mhz_to_angular(params.mu) ** 2 / ghz_to_angular(params.delta_b)
    return [
        KronTerm(-shift_a, projector("g"), number(space.dim_a), None),
        KronTerm(shift_a, projector("e"), a @ a.conj().T, None),
        KronTerm(-shift_b, projector("e"), None, number(space.dim_b)),
        KronTerm(shift_b, projector("f"), None, b @ b.conj().T),
    ]


def _ground_kerr_term(chi: float, space: HilbertSpace) -> KronTerm:
    """−χ n_a n_b |g⟩⟨g|."""

    return KronTerm(-chi, projector("g"), number(space.dim_a), number(space.dim_b))


def _frame_energies(params: DeviceParams) -> Tuple[float, float, float]:
    """(E_e, E_f, x_b) of H0 = E_e|e⟩⟨e| + E_f|f⟩⟨f| + x_b n_b, chosen so e^{iH0t} H_c e^{−iH0t} = H_I(t)."""

    delta_a = ghz_to_angular(params.delta_a)
    delta_b = ghz_to_angular(params.delta_b)
    delta_ab = ghz_to_angular(params.Delta_ab)
    return delta_a, delta_a + delta_b + delta_ab, delta_ab


def _rotating_frame_operator(params: DeviceParams, space: HilbertSpace, crosstalk: bool) -> QOperator:
    e_e, e_f, x_b = _frame_energies(params)
    terms: List[KronTerm] = []
    for term, _ in _coupling_terms(params, space, crosstalk):
        terms.extend((term, term.dag()))
    terms.extend(
        [
            KronTerm(e_e, projector("e"), None, None),
            KronTerm(e_f, projector("f"), None, None),
            KronTerm(x_b, None, None, number(space.dim_b)),
        ]
    )
    return _static(space, terms)


def hamiltonian_components(spec: HamiltonianSpec) -> HamiltonianComponents:
    params, space, kind = spec.params, spec.space, spec.kind

    if kind in (HamiltonianKind.FULL, HamiltonianKind.FULL_CROSSTALK):
        crosstalk = kind is HamiltonianKind.FULL_CROSSTALK
        rotating = tuple(_rotating(space, term, freq) for term, freq in _coupling_terms(params, space, crosstalk))
        return HamiltonianComponents(space, QOperator.zero(space), rotating)

    if kind is HamiltonianKind.ROTATING_FRAME:
        return HamiltonianComponents(space, _rotating_frame_operator(params, space, crosstalk=True))

    derived = derive(params)
    chi = mhz_to_angular(derived.chi_mhz)

    if kind is HamiltonianKind.EFFECTIVE3:
        lam_term = KronTerm(
            mhz_to_angular(derived.lambda_mhz),
            qutrit_op("g", "f"),
            creation(space.dim_a),
            creation(space.dim_b),
        )
        rotating = (_rotating(space, lam_term, -mhz_to_angular(derived.Delta_mhz)),)
        return HamiltonianComponents(space, _static(space, _stark_terms(params, space)), rotating)

    if kind is HamiltonianKind.EFFECTIVE4:
        a = annihilation(space.dim_a)
        b = annihilation(space.dim_b)
        terms = _stark_terms(params, space) + [
            KronTerm(chi, projector("f"), a @ a.conj().T, b @ b.conj().T),
            _ground_kerr_term(chi, space),
        ]
        return HamiltonianComponents(space, _static(space, terms))

    if kind is HamiltonianKind.GROUND_EFFECTIVE:
        shift_a = mhz_to_angular(params.g) ** 2 / ghz_to_angular(params.delta_a)
        terms = [KronTerm(-shift_a, projector("g"), number(space.dim_a), None), _ground_kerr_term(chi, space)]
        return HamiltonianComponents(space, _static(space, terms))

    if kind is HamiltonianKind.CROSS_KERR:
        return HamiltonianComponents(space, _static(space, [_ground_kerr_term(chi, space)]))

    raise ValueError(f"Unsupported Hamiltonian kind {kind!r}")


def build_hamiltonian(spec: HamiltonianSpec, t: float = 0.0) -> QOperator:
    """H(t) as a Hermitian structured operator; ``t`` in μs, ignored for static kinds."""

    return hamiltonian_components(spec).at(t)


def build_rotating_frame(spec: HamiltonianSpec) -> Tuple[QOperator, Callable[[float], QOperator]]:
    """Time-independent H_rot and V(t) with U_I(t) = V(t)·exp(−iH_rot t)·V(0)†.

    V(t) = exp(iH0 t) is diagonal and V(0) = I.
    """

    if spec.kind not in (HamiltonianKind.FULL, HamiltonianKind.FULL_CROSSTALK):
        raise ValueError(f"Rotating frame is only defined for full Hamiltonians, got {spec.kind.value}")
    crosstalk = spec.kind is HamiltonianKind.FULL_CROSSTALK
    h_rot = _rotating_frame_operator(spec.params, spec.space, crosstalk)
    e_e, e_f, x_b = _frame_energies(spec.params)
    n_b = np.arange(spec.space.dim_b)

    def frame_undo(t: float) -> QOperator:
        qutrit = np.diag(np.exp(1j * t * np.array([0.0, e_e, e_f])))
        mode_b = np.diag(np.exp(1j * t * x_b * n_b))
        return QOperator.embed(spec.space, qutrit=qutrit, mode_b=mode_b)

    return h_rot, frame_undo
