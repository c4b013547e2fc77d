"""Composite Hilbert space, structured operators and states (qutrit ⊗ resonator a ⊗ resonator b)."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np

QUTRIT_DIM = 3
QUTRIT_LEVELS: Dict[str, int] = {"g": 0, "e": 1, "f": 2}

HERMITIAN_ATOL = 1e-12
PURE_NORM_ATOL = 1e-10
DENSITY_TRACE_ATOL = 1e-10
DENSITY_MIN_EIGENVALUE = -1e-8

Level = Union[str, int]


class SpaceMismatchError(ValueError):
    """Raised when an operator, state or array does not live on the expected space."""


def _level_index(level: Level) -> int:
    if isinstance(level, str):
        try:
            return QUTRIT_LEVELS[level]
        except KeyError as exc:
            raise ValueError(f"Unknown qutrit label {level!r}; expected one of g, e, f") from exc
    if level not in (0, 1, 2):
        raise ValueError(f"Qutrit level index out of range: {level}")
    return int(level)


@dataclass(frozen=True)
class HilbertSpace:
    """Truncated space with the fixed factor order qutrit ⊗ a ⊗ b."""

    dim_a: int
    dim_b: int
    dim_qutrit: int = QUTRIT_DIM

    def __post_init__(self) -> None:
        if self.dim_qutrit != QUTRIT_DIM:
            raise ValueError("The coupler is always a qutrit (dim_qutrit = 3)")
        if self.dim_a < 2 or self.dim_b < 2:
            raise ValueError(f"Resonator truncations must be >= 2, got ({self.dim_a}, {self.dim_b})")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return (self.dim_qutrit, self.dim_a, self.dim_b)

    @property
    def total_dim(self) -> int:
        return self.dim_qutrit * self.dim_a * self.dim_b

    def index(self, level: Level, n_a: int, n_b: int) -> int:
        """Flat index (q·dim_a + n_a)·dim_b + n_b."""

        q = _level_index(level)
        if not (0 <= n_a < self.dim_a and 0 <= n_b < self.dim_b):
            raise ValueError(f"Fock labels ({n_a}, {n_b}) outside truncation {self.dim_a}x{self.dim_b}")
        return (q * self.dim_a + n_a) * self.dim_b + n_b

    def labels(self, index: int) -> Tuple[int, int, int]:
        if not 0 <= index < self.total_dim:
            raise ValueError(f"Flat index {index} outside space of dimension {self.total_dim}")
        rest, n_b = divmod(index, self.dim_b)
        q, n_a = divmod(rest, self.dim_a)
        return q, n_a, n_b

    def basis_vector(self, level: Level, n_a: int, n_b: int) -> np.ndarray:
        vector = np.zeros(self.total_dim, dtype=complex)
        vector[self.index(level, n_a, n_b)] = 1.0
        return vector


# ----------------------------------------------------------------------
# Factor matrices
# ----------------------------------------------------------------------
def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with the row-major convention (A⊗B)[i·rB+k, j·cB+l] = A[i,j]·B[k,l]."""

    return np.kron(np.asarray(a), np.asarray(b))


def annihilation(dim: int) -> np.ndarray:
    """Truncated annihilation operator with ⟨n−1|a|n⟩ = √n."""

    if dim < 2:
        raise ValueError(f"Fock truncation must be >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).conj().T


def number(dim: int) -> np.ndarray:
    if dim < 2:
        raise ValueError(f"Fock truncation must be >= 2, got {dim}")
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def qutrit_op(row: Level, col: Level) -> np.ndarray:
    """|row⟩⟨col| on the qutrit, e.g. qutrit_op("e", "g") is σ⁺_eg."""

    matrix = np.zeros((QUTRIT_DIM, QUTRIT_DIM), dtype=complex)
    matrix[_level_index(row), _level_index(col)] = 1.0
    return matrix


def projector(level: Level) -> np.ndarray:
    return qutrit_op(level, level)


# ----------------------------------------------------------------------
# Structured representation
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class KronTerm:
    """coeff × qutrit ⊗ mode_a ⊗ mode_b; a ``None`` factor is the identity."""

    coeff: complex
    qutrit: Optional[np.ndarray] = None
    mode_a: Optional[np.ndarray] = None
    mode_b: Optional[np.ndarray] = None

    def factors(self, space: HilbertSpace) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            self.qutrit if self.qutrit is not None else np.eye(QUTRIT_DIM, dtype=complex),
            self.mode_a if self.mode_a is not None else np.eye(space.dim_a, dtype=complex),
            self.mode_b if self.mode_b is not None else np.eye(space.dim_b, dtype=complex),
        )

    def dag(self) -> "KronTerm":
        return KronTerm(
            np.conj(self.coeff),
            None if self.qutrit is None else self.qutrit.conj().T,
            None if self.mode_a is None else self.mode_a.conj().T,
            None if self.mode_b is None else self.mode_b.conj().T,
        )

    def scaled(self, factor: complex) -> "KronTerm":
        return KronTerm(self.coeff * factor, self.qutrit, self.mode_a, self.mode_b)

    def compose(self, other: "KronTerm") -> "KronTerm":
        """Factor-wise product self·other."""

        def _mul(left: Optional[np.ndarray], right: Optional[np.ndarray]) -> Optional[np.ndarray]:
            if left is None:
                return right
            if right is None:
                return left
            return left @ right

        return KronTerm(
            self.coeff * other.coeff,
            _mul(self.qutrit, other.qutrit),
            _mul(self.mode_a, other.mode_a),
            _mul(self.mode_b, other.mode_b),
        )

    def to_dense(self, space: HilbertSpace) -> np.ndarray:
        q, a, b = self.factors(space)
        return self.coeff * kron(kron(q, a), b)


class _Band(NamedTuple):
    """(O x)[lo:lo+len(weights)] += weights · x[lo+offset : lo+offset+len(weights)].

    Every Kronecker term whose factors each have a single nonzero diagonal
    is one constant offset in the flat index.
    """

    offset: int
    lo: int
    weights: np.ndarray

    @property
    def hi(self) -> int:
        return self.lo + self.weights.size


def _factor_band(factor: Optional[np.ndarray], dim: int) -> Optional[Tuple[int, np.ndarray]]:
    """(column offset, weights aligned to the output index) or None for multi-diagonal factors."""

    if factor is None:
        return 0, np.ones(dim, dtype=complex)
    rows, cols = np.nonzero(factor)
    offsets = np.unique(cols - rows)
    if offsets.size > 1:
        return None
    offset = int(offsets[0]) if offsets.size else 0
    weights = np.zeros(dim, dtype=complex)
    dest = np.arange(max(0, -offset), min(dim, dim - offset))
    weights[dest] = factor[dest, dest + offset]
    return offset, weights


def _term_band(term: KronTerm, space: HilbertSpace) -> Optional[Tuple[int, np.ndarray]]:
    """Flat offset and full-length weight vector of a single-band term."""

    bands = [
        _factor_band(term.qutrit, space.dim_qutrit),
        _factor_band(term.mode_a, space.dim_a),
        _factor_band(term.mode_b, space.dim_b),
    ]
    if any(band is None for band in bands):
        return None
    (oq, wq), (oa, wa), (ob, wb) = bands
    offset = (oq * space.dim_a + oa) * space.dim_b + ob
    return offset, term.coeff * kron(kron(wq, wa), wb)


def _trim(offset: int, weights: np.ndarray) -> Optional[_Band]:
    nonzero = np.flatnonzero(weights)
    if nonzero.size == 0:
        return None
    lo, hi = int(nonzero[0]), int(nonzero[-1]) + 1
    return _Band(offset, lo, weights[lo:hi].copy())


class _Plan(NamedTuple):
    bands: Tuple[_Band, ...]
    generic: Tuple[KronTerm, ...]


@dataclass(frozen=True, eq=False)
class QOperator:
    """Operator on a :class:`HilbertSpace`, stored densely or as a sum of Kronecker terms.

    The structured form is the execution path: single-band factors (ladder
    operators, transition operators, projectors) become weighted index
    shifts on the flat basis and everything else is applied factor by factor.
    The dense form exists as the oracle.
    """

    space: HilbertSpace
    terms: Tuple[KronTerm, ...] = ()
    matrix: Optional[np.ndarray] = None
    hermitian: bool = False

    def __post_init__(self) -> None:
        if self.matrix is not None:
            if self.terms:
                raise ValueError("QOperator takes either terms or a dense matrix, not both")
            n = self.space.total_dim
            if self.matrix.shape != (n, n):
                raise SpaceMismatchError(f"Dense matrix shape {self.matrix.shape} does not match dimension {n}")
        for term in self.terms:
            for factor, dim in zip((term.qutrit, term.mode_a, term.mode_b), self.space.dims):
                if factor is not None and factor.shape != (dim, dim):
                    raise SpaceMismatchError(f"Factor shape {factor.shape} does not match factor dimension {dim}")
        if self.hermitian and not self.is_hermitian():
            raise ValueError("Operator flagged Hermitian but O != O† within 1e-12")

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------
    @classmethod
    def from_dense(cls, space: HilbertSpace, matrix: np.ndarray, *, hermitian: bool = False) -> "QOperator":
        return cls(space, matrix=np.asarray(matrix, dtype=complex), hermitian=hermitian)

    @classmethod
    def embed(
        cls,
        space: HilbertSpace,
        *,
        qutrit: Optional[np.ndarray] = None,
        mode_a: Optional[np.ndarray] = None,
        mode_b: Optional[np.ndarray] = None,
        coeff: complex = 1.0,
        hermitian: bool = False,
    ) -> "QOperator":
        return cls(space, (KronTerm(coeff, qutrit, mode_a, mode_b),), hermitian=hermitian)

    @classmethod
    def identity(cls, space: HilbertSpace) -> "QOperator":
        return cls(space, (KronTerm(1.0),), hermitian=True)

    @classmethod
    def zero(cls, space: HilbertSpace) -> "QOperator":
        return cls(space, (), hermitian=True)

    # ------------------------------------------------------------------
    # Algebra
    # ------------------------------------------------------------------
    @property
    def is_structured(self) -> bool:
        return self.matrix is None

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        n = self.space.total_dim
        dense = np.zeros((n, n), dtype=complex)
        for term in self.terms:
            dense += term.to_dense(self.space)
        return dense

    def dag(self) -> "QOperator":
        if self.matrix is not None:
            return QOperator(self.space, matrix=self.matrix.conj().T, hermitian=self.hermitian)
        return QOperator(self.space, tuple(term.dag() for term in self.terms), hermitian=self.hermitian)

    def is_hermitian(self, atol: float = HERMITIAN_ATOL) -> bool:
        dense = self.to_dense()
        return bool(np.all(np.abs(dense - dense.conj().T) <= atol))

    def _check_space(self, other: "QOperator") -> None:
        if other.space != self.space:
            raise SpaceMismatchError(f"Operator spaces differ: {self.space} vs {other.space}")

    def __add__(self, other: "QOperator") -> "QOperator":
        self._check_space(other)
        hermitian = self.hermitian and other.hermitian
        if self.is_structured and other.is_structured:
            return QOperator(self.space, self.terms + other.terms, hermitian=hermitian)
        return QOperator(self.space, matrix=self.to_dense() + other.to_dense(), hermitian=hermitian)

    def __neg__(self) -> "QOperator":
        return self * -1.0

    def __sub__(self, other: "QOperator") -> "QOperator":
        return self + (-other)

    def __mul__(self, scalar: complex) -> "QOperator":
        hermitian = self.hermitian and np.isreal(scalar)
        if self.is_structured:
            return QOperator(self.space, tuple(t.scaled(scalar) for t in self.terms), hermitian=hermitian)
        return QOperator(self.space, matrix=self.matrix * scalar, hermitian=hermitian)

    __rmul__ = __mul__

    def __matmul__(self, other: "QOperator") -> "QOperator":
        self._check_space(other)
        if self.is_structured and other.is_structured:
            terms = tuple(left.compose(right) for left in self.terms for right in other.terms)
            return QOperator(self.space, terms)
        return QOperator(self.space, matrix=self.to_dense() @ other.to_dense())

    # ------------------------------------------------------------------
    # Application
    # ------------------------------------------------------------------
    @cached_property
    def _plan(self) -> _Plan:
        merged: Dict[int, np.ndarray] = {}
        generic: List[KronTerm] = []
        for term in self.terms:
            band = _term_band(term, self.space)
            if band is None:
                generic.append(term)
                continue
            offset, weights = band
            if offset in merged:
                merged[offset] = merged[offset] + weights
            else:
                merged[offset] = weights
        bands = [_trim(offset, merged[offset]) for offset in sorted(merged)]
        return _Plan(tuple(band for band in bands if band is not None), tuple(generic))

    @property
    def is_diagonal(self) -> bool:
        if self.matrix is not None:
            return bool(np.count_nonzero(self.matrix - np.diag(np.diag(self.matrix))) == 0)
        plan = self._plan
        return not plan.generic and all(band.offset == 0 for band in plan.bands)

    def diagonal(self) -> np.ndarray:
        if self.matrix is not None:
            return np.diag(self.matrix).copy()
        if not self.is_diagonal:
            raise ValueError("Operator is not diagonal in the product basis")
        diag = np.zeros(self.space.total_dim, dtype=complex)
        for band in self._plan.bands:
            diag[band.lo : band.hi] += band.weights
        return diag

    def _apply_factors(self, term: KronTerm, x: np.ndarray) -> np.ndarray:
        dq, da, db = self.space.dims
        y = x.reshape(dq, da, db, -1)
        if term.qutrit is not None:
            y = np.einsum("ij,jabm->iabm", term.qutrit, y)
        if term.mode_a is not None:
            y = np.einsum("ij,qjbm->qibm", term.mode_a, y)
        if term.mode_b is not None:
            y = np.einsum("ij,qajm->qaim", term.mode_b, y)
        return term.coeff * y.reshape(x.shape)

    def apply(self, x: np.ndarray, *, scale: complex = 1.0, out: Optional[np.ndarray] = None) -> np.ndarray:
        """Return ``out + scale·O·x`` for a vector (N,) or a stack of columns (N, M)."""

        n = self.space.total_dim
        if x.shape[0] != n:
            raise SpaceMismatchError(f"Array with leading dimension {x.shape[0]} applied on dimension {n}")
        x2 = x.reshape(n, -1)
        if out is None:
            out = np.zeros(x.shape, dtype=complex)
        out2 = out.reshape(n, -1)
        if self.matrix is not None:
            out2 += scale * (self.matrix @ x2)
            return out
        plan = self._plan
        for band in plan.bands:
            src = slice(band.lo + band.offset, band.hi + band.offset)
            out2[band.lo : band.hi] += (scale * band.weights)[:, None] * x2[src]
        for term in plan.generic:
            out2 += scale * self._apply_factors(term, x2)
        return out

    def apply_right(self, x: np.ndarray) -> np.ndarray:
        """x·O computed as (O†·x†)†."""

        return self.dag().apply(x.conj().T).conj().T

    @cached_property
    def _sandwich_weights(self) -> Optional[Tuple[_Band, np.ndarray]]:
        plan = self._plan
        if plan.generic or len(plan.bands) != 1:
            return None
        band = plan.bands[0]
        return band, np.outer(band.weights, band.weights.conj())

    def sandwich(self, rho: np.ndarray, *, scale: float = 1.0, out: Optional[np.ndarray] = None) -> np.ndarray:
        """Return ``out + scale·O·ρ·O†``."""

        if out is None:
            out = np.zeros(rho.shape, dtype=complex)
        if self.matrix is not None:
            out += scale * (self.matrix @ rho @ self.matrix.conj().T)
            return out
        if not self._plan.bands and not self._plan.generic:
            return out
        single = self._sandwich_weights
        if single is not None:
            band, weights = single
            dest = slice(band.lo, band.hi)
            src = slice(band.lo + band.offset, band.hi + band.offset)
            out[dest, dest] += scale * weights * rho[src, src]
            return out
        out += scale * self.apply(self.apply(rho.conj().T).conj().T)
        return out


# ----------------------------------------------------------------------
# States
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class QState:
    """Pure vector or density matrix on a space.

    Use :meth:`pure` / :meth:`density` to get validated states; the raw
    constructor is for intermediate results (e.g. O|ψ⟩) and does not check.
    """

    space: HilbertSpace
    data: np.ndarray
    kind: str = "pure"

    @classmethod
    def pure(cls, space: HilbertSpace, vector: np.ndarray, *, normalize: bool = False) -> "QState":
        vector = np.asarray(vector, dtype=complex).reshape(-1)
        if vector.size != space.total_dim:
            raise SpaceMismatchError(f"State vector of size {vector.size} on dimension {space.total_dim}")
        norm = np.linalg.norm(vector)
        if normalize:
            if norm == 0:
                raise ValueError("Cannot normalize the null vector")
            vector = vector / norm
        elif abs(norm**2 - 1.0) > PURE_NORM_ATOL:
            raise ValueError(f"Pure state norm² = {norm**2:.3e}, expected 1")
        return cls(space, vector, "pure")

    @classmethod
    def density(cls, space: HilbertSpace, matrix: np.ndarray) -> "QState":
        matrix = np.asarray(matrix, dtype=complex)
        n = space.total_dim
        if matrix.shape != (n, n):
            raise SpaceMismatchError(f"Density matrix shape {matrix.shape} on dimension {n}")
        if abs(np.trace(matrix) - 1.0) > DENSITY_TRACE_ATOL:
            raise ValueError(f"Density matrix trace {np.trace(matrix).real:.12f}, expected 1")
        if np.max(np.abs(matrix - matrix.conj().T)) > HERMITIAN_ATOL:
            raise ValueError("Density matrix is not Hermitian within 1e-12")
        min_eig = float(np.linalg.eigvalsh(matrix).min())
        if min_eig < DENSITY_MIN_EIGENVALUE:
            raise ValueError(f"Density matrix has eigenvalue {min_eig:.3e} below -1e-8")
        return cls(space, matrix, "density")

    @classmethod
    def basis(cls, space: HilbertSpace, level: Level, n_a: int, n_b: int) -> "QState":
        return cls(space, space.basis_vector(level, n_a, n_b), "pure")

    @classmethod
    def product(
        cls,
        space: HilbertSpace,
        level: Level,
        mode_a: np.ndarray,
        mode_b: np.ndarray,
        *,
        normalize: bool = False,
    ) -> "QState":
        qutrit = np.zeros(QUTRIT_DIM, dtype=complex)
        qutrit[_level_index(level)] = 1.0
        if len(mode_a) != space.dim_a or len(mode_b) != space.dim_b:
            raise SpaceMismatchError("Mode amplitudes do not match the resonator truncations")
        return cls.pure(space, kron(kron(qutrit, mode_a), mode_b), normalize=normalize)

    @property
    def is_pure(self) -> bool:
        return self.kind == "pure"

    def to_density(self) -> "QState":
        if not self.is_pure:
            return self
        return QState(self.space, np.outer(self.data, self.data.conj()), "density")

    def norm(self) -> float:
        if self.is_pure:
            return float(np.linalg.norm(self.data))
        return float(np.trace(self.data).real)

    def populations(self) -> np.ndarray:
        """Diagonal occupation probabilities in the product basis."""

        if self.is_pure:
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data))


def _check_pair(op: QOperator, state: QState) -> None:
    if op.space != state.space:
        raise SpaceMismatchError(f"Operator space {op.space} differs from state space {state.space}")


def apply(op: QOperator, state: QState, *, side: str = "left") -> QState:
    """O|ψ⟩, or Oρ / ρO / OρO† for density matrices (``side`` = left, right, both)."""

    _check_pair(op, state)
    if state.is_pure:
        if side != "left":
            raise ValueError("Pure states only support left application")
        return QState(state.space, op.apply(state.data), "pure")
    if side == "left":
        data = op.apply(state.data)
    elif side == "right":
        data = op.apply_right(state.data)
    elif side == "both":
        data = op.sandwich(state.data)
    else:
        raise ValueError(f"Unknown application side {side!r}")
    return QState(state.space, data, "density")


def expectation(op: QOperator, state: QState) -> complex:
    """⟨ψ|O|ψ⟩ or Tr(Oρ)."""

    _check_pair(op, state)
    if state.is_pure:
        return complex(np.vdot(state.data, op.apply(state.data)))
    return complex(np.trace(op.apply(state.data)))


def mode_operators(space: HilbertSpace) -> Dict[str, QOperator]:
    """The named operators of the coupled system embedded in ``space``."""

    a = annihilation(space.dim_a)
    b = annihilation(space.dim_b)
    return {
        "a": QOperator.embed(space, mode_a=a),
        "b": QOperator.embed(space, mode_b=b),
        "n_a": QOperator.embed(space, mode_a=number(space.dim_a), hermitian=True),
        "n_b": QOperator.embed(space, mode_b=number(space.dim_b), hermitian=True),
        "sigma_eg_minus": QOperator.embed(space, qutrit=qutrit_op("g", "e")),
        "sigma_fe_minus": QOperator.embed(space, qutrit=qutrit_op("e", "f")),
        "sigma_fg_minus": QOperator.embed(space, qutrit=qutrit_op("g", "f")),
        "sigma_gg": QOperator.embed(space, qutrit=projector("g"), hermitian=True),
        "sigma_ee": QOperator.embed(space, qutrit=projector("e"), hermitian=True),
        "sigma_ff": QOperator.embed(space, qutrit=projector("f"), hermitian=True),
    }

