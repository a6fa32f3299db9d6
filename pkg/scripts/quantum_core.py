"""
Quantum Core - Small Dense Linear Algebra and Canonical States

Carrier types and constructors for the quantum states used by the coin
certifier: density operators on C^d or C^d (x) C^d, pure states, the Werner
family and the one-sided depolarizing channel.

BASIS CONVENTION:
    |0> = (1, 0), |1> = (0, 1)
    Two-party ordering |ab> = |a> (x) |b>, Alice (A) is the left factor.
    Joint row index of |ab> is a * dim_b + b, the same convention coinspace
    uses for joint outcomes.

TOLERANCES:
    DensityOperator invariants are checked at 1e-10 by default. File readers
    construct operators with a looser tolerance (1e-6) so that tomography
    output rounded to a few digits is still accepted.

All values are immutable after construction (arrays are flagged read-only),
so every function here is safe to call from concurrent callers.

Author: Coin Certifier Project
Version: 1.0.0
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from errors import (
    DomainError,
    HermiticityError,
    NormalizationError,
    PositivityError,
    TraceError,
)

logger = logging.getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]

DENSITY_TOL = 1e-10
PURE_STATE_TOL = 1e-12


# ============================================================================
# PAULI ALGEBRA
# ============================================================================

IDENTITY_2: ComplexMatrix = np.eye(2, dtype=complex)
PAULI_X: ComplexMatrix = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y: ComplexMatrix = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z: ComplexMatrix = np.array([[1, 0], [0, -1]], dtype=complex)

PAULIS: Tuple[ComplexMatrix, ComplexMatrix, ComplexMatrix] = (PAULI_X, PAULI_Y, PAULI_Z)
PAULI_BY_NAME = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}

for _m in (IDENTITY_2, PAULI_X, PAULI_Y, PAULI_Z):
    _m.setflags(write=False)


def bloch_operator(vector: Sequence[float]) -> ComplexMatrix:
    """Return n.sigma for a real 3-vector n."""
    x, y, z = (float(v) for v in vector)
    return x * PAULI_X + y * PAULI_Y + z * PAULI_Z


def bloch_components(matrix: ComplexMatrix) -> Tuple[float, np.ndarray]:
    """
    Decompose a Hermitian 2x2 matrix as a*I + b.sigma.

    Returns:
        (a, b) with a real scalar and b a real 3-vector.
    """
    m = np.asarray(matrix, dtype=complex)
    a = float(np.real(np.trace(m))) / 2.0
    b = np.array([float(np.real(np.trace(m @ s))) / 2.0 for s in PAULIS])
    return a, b


# ============================================================================
# MATRIX HELPERS
# ============================================================================

def as_complex_matrix(entries: Union[Sequence, np.ndarray],
                      rows: Optional[int] = None,
                      cols: Optional[int] = None) -> ComplexMatrix:
    """
    Build a complex matrix from nested rows or a flat row-major sequence.

    A flat sequence requires `rows` and `cols`; its length must equal
    rows * cols.
    """
    arr = np.asarray(entries, dtype=complex)
    if arr.ndim == 1:
        if rows is None or cols is None:
            raise DomainError("entries", "flat entries need explicit rows and cols")
        if arr.size != rows * cols:
            raise DomainError(
                "entries", f"length {arr.size} does not equal rows*cols = {rows * cols}"
            )
        arr = arr.reshape(rows, cols)
    elif arr.ndim != 2:
        raise DomainError("entries", f"expected a matrix, got {arr.ndim}-d data")
    if rows is not None and arr.shape[0] != rows:
        raise DomainError("rows", f"expected {rows}, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise DomainError("cols", f"expected {cols}, got {arr.shape[1]}")
    return arr


def matrices_close(a: np.ndarray, b: np.ndarray, atol: float = 1e-12) -> bool:
    """Entrywise equality within an absolute tolerance; shapes must agree."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    return bool(np.max(np.abs(a - b), initial=0.0) <= atol)


def dagger(matrix: ComplexMatrix) -> ComplexMatrix:
    return np.conjugate(np.asarray(matrix)).T


def hermiticity_defect(matrix: ComplexMatrix) -> float:
    """max |M - M^dagger| over all entries."""
    m = np.asarray(matrix)
    return float(np.max(np.abs(m - dagger(m)), initial=0.0))


def min_eigenvalue(matrix: ComplexMatrix) -> float:
    """Smallest eigenvalue of the Hermitian part of a square matrix."""
    m = np.asarray(matrix, dtype=complex)
    return float(np.linalg.eigvalsh(0.5 * (m + dagger(m)))[0])


def tensor_product(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """
    Kronecker product A (x) B.

    Index convention: row (i_a * rows_b + i_b), column (j_a * cols_b + j_b),
    so Tr(A (x) B) = Tr(A) * Tr(B).
    """
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def _frozen(matrix: np.ndarray) -> np.ndarray:
    out = np.array(matrix, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


def check_density_invariants(matrix: ComplexMatrix, tol: float = DENSITY_TOL,
                             subject: str = "density operator") -> None:
    """
    Raise the first violated DensityOperator invariant.

    Checked in order: square shape, Hermiticity, unit trace, positivity.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DomainError("matrix", f"{subject} must be a non-empty square matrix, got shape {m.shape}")
    defect = hermiticity_defect(m)
    if defect > tol:
        raise HermiticityError(subject, f"max |M - M^dagger| = {defect:.3e} exceeds {tol:.1e}")
    trace = complex(np.trace(m))
    if abs(trace - 1.0) > tol:
        raise TraceError(subject, f"trace = {trace.real:.12g} differs from 1 by more than {tol:.1e}")
    lam = min_eigenvalue(m)
    if lam < -tol:
        raise PositivityError(subject, f"minimum eigenvalue {lam:.3e} is below -{tol:.1e}")


def nearest_density_matrix(matrix: ComplexMatrix) -> ComplexMatrix:
    """
    Hermitian part with negative eigenvalues clipped to zero, rescaled to
    unit trace. Leaves a valid density matrix unchanged up to rounding.
    """
    m = np.asarray(matrix, dtype=complex)
    lam, vecs = np.linalg.eigh(0.5 * (m + dagger(m)))
    lam = np.clip(lam, 0.0, None)
    if lam.sum() <= 0:
        raise TraceError("density operator", "no positive spectrum left after projection")
    return (vecs * (lam / lam.sum())) @ dagger(vecs)


# ============================================================================
# STATE TYPES
# ============================================================================

@dataclass(frozen=True)
class PureState:
    """
    Unit vector in C^dim.

    Attributes:
        amplitudes: Complex amplitudes in the computational basis.
        label: Human-readable name (e.g. "psi_minus").
    """
    amplitudes: np.ndarray
    label: str = ""

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size == 0:
            raise DomainError("amplitudes", "pure state needs at least one amplitude")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > PURE_STATE_TOL:
            raise NormalizationError(self.label or "pure state",
                                     f"norm {norm:.15g} differs from 1 by more than {PURE_STATE_TOL:.0e}")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    def projector(self) -> ComplexMatrix:
        """|psi><psi|"""
        return np.outer(self.amplitudes, np.conjugate(self.amplitudes))

    def density(self) -> DensityOperator:
        return DensityOperator(self.projector(), label=self.label)


@dataclass(frozen=True)
class DensityOperator:
    """
    Trace-one positive semidefinite operator.

    Attributes:
        matrix: dim x dim complex matrix (read-only after construction).
        label: Human-readable provenance (e.g. "werner(p=0.7)").
        tol: Tolerance used for the invariant checks at construction.
    """
    matrix: np.ndarray
    label: str = ""
    tol: float = DENSITY_TOL

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        check_density_invariants(m, self.tol, subject=self.label or "density operator")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    def purity(self) -> float:
        """Tr(rho^2)"""
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def fidelity(self, reference: PureState) -> float:
        """<psi|rho|psi> for a pure reference."""
        if reference.dim != self.dim:
            raise DomainError("reference", f"dimension {reference.dim} does not match state dimension {self.dim}")
        psi = reference.amplitudes
        return float(np.real(np.conjugate(psi) @ self.matrix @ psi))

    def __repr__(self) -> str:
        return f"DensityOperator(dim={self.dim}, label={self.label!r})"


@dataclass(frozen=True)
class StateMetrics:
    """Purity and optional fidelity of a state."""
    purity: float
    fidelity: Optional[float] = None


# ============================================================================
# CANONICAL STATES
# ============================================================================

class StateKind(Enum):
    """Named states the certifier constructs."""
    SINGLET = "singlet"                # |psi->
    PSI_PLUS = "psi_plus"              # |psi+>, emitted by the SPDC source
    PHI_PLUS = "phi_plus"              # |phi+> on two qubits
    WERNER = "werner"                  # p|psi-><psi-| + (1-p) I/4
    WERNER_PSI_PLUS = "werner_psi_plus"  # p|psi+><psi+| + (1-p) I/4
    PHI_PLUS_D = "phi_plus_d"          # (1/sqrt d) sum_i |ii>


_SQRT_HALF = 1.0 / math.sqrt(2.0)

_BELL_AMPLITUDES = {
    StateKind.SINGLET: np.array([0.0, _SQRT_HALF, -_SQRT_HALF, 0.0]),
    StateKind.PSI_PLUS: np.array([0.0, _SQRT_HALF, _SQRT_HALF, 0.0]),
    StateKind.PHI_PLUS: np.array([_SQRT_HALF, 0.0, 0.0, _SQRT_HALF]),
}


def bell_state(kind: Union[StateKind, str]) -> PureState:
    """Return |psi->, |psi+> or |phi+> as a PureState."""
    kind = StateKind(kind)
    if kind not in _BELL_AMPLITUDES:
        raise DomainError("kind", f"{kind.value} is not a two-qubit Bell state")
    return PureState(_BELL_AMPLITUDES[kind], label=kind.value)


def phi_plus_d(d: int) -> PureState:
    """(1/sqrt d) sum_i |i>|i> on C^d (x) C^d."""
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise DomainError("d", f"local dimension must be an integer >= 2, got {d!r}")
    amps = np.zeros(d * d, dtype=complex)
    for i in range(d):
        amps[i * d + i] = 1.0 / math.sqrt(d)
    return PureState(amps, label=f"phi_plus_{d}")


def _check_probability(name: str, value: Optional[float]) -> float:
    if value is None:
        raise DomainError(name, "required for this state")
    value = float(value)
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise DomainError(name, f"must lie in [0, 1], got {value!r}")
    return value


def werner_mixture(pure: PureState, p: float) -> DensityOperator:
    """p |psi><psi| + (1 - p) I / dim"""
    p = _check_probability("p", p)
    dim = pure.dim
    matrix = p * pure.projector() + (1.0 - p) * np.eye(dim, dtype=complex) / dim
    return DensityOperator(matrix, label=f"werner[{pure.label}](p={p:.12g})")


def canonical_state(kind: Union[StateKind, str], p: Optional[float] = None,
                    d: Optional[int] = None) -> DensityOperator:
    """
    Construct one of the named states exactly.

    Args:
        kind: singlet, psi_plus, phi_plus, werner, werner_psi_plus or phi_plus_d.
        p: singlet weight for the Werner families, in [0, 1].
        d: local dimension for phi_plus_d, >= 2.

    Raises:
        DomainError: naming the offending parameter.
    """
    try:
        kind = StateKind(kind)
    except ValueError:
        raise DomainError("kind", f"unknown state kind {kind!r}") from None

    if kind in _BELL_AMPLITUDES:
        return bell_state(kind).density()
    if kind is StateKind.WERNER:
        return werner_mixture(bell_state(StateKind.SINGLET), p)
    if kind is StateKind.WERNER_PSI_PLUS:
        return werner_mixture(bell_state(StateKind.PSI_PLUS), p)
    return phi_plus_d(d).density()


# ============================================================================
# CHANNELS AND METRICS
# ============================================================================

class Side(Enum):
    A = "A"
    B = "B"


def apply_depolarizing_one_side(rho: DensityOperator, p: float,
                                side: Union[Side, str] = Side.A) -> DensityOperator:
    """
    Depolarize one half of a two-qubit state.

    The state is kept with probability (1+3p)/4 and hit by each Pauli with
    probability (1-p)/4:
        (1+3p)/4 rho + (1-p)/4 sum_k (s_k (x) I) rho (s_k (x) I)
    for side A, mirrored for side B.
    """
    p = _check_probability("p", p)
    side = Side(side)
    if rho.dim != 4:
        raise DomainError("rho", f"one-sided depolarizing acts on C^2 (x) C^2, got dim {rho.dim}")

    m = rho.matrix
    twirl = np.zeros((4, 4), dtype=complex)
    for sigma in PAULIS:
        k = np.kron(sigma, IDENTITY_2) if side is Side.A else np.kron(IDENTITY_2, sigma)
        twirl += k @ m @ k
    out = (1.0 + 3.0 * p) / 4.0 * m + (1.0 - p) / 4.0 * twirl
    return DensityOperator(out, label=f"depolarized[{side.value}](p={p:.12g})")


def state_metrics(rho: DensityOperator, reference: Optional[PureState] = None) -> StateMetrics:
    """Purity Tr(rho^2) and, when a reference is given, <psi|rho|psi>."""
    fidelity = rho.fidelity(reference) if reference is not None else None
    return StateMetrics(purity=rho.purity(), fidelity=fidelity)
