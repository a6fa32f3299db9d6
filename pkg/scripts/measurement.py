"""
Measurement - POVM Construction, Noise and Projective Simulability

Builds and validates the POVMs used by the coin certifier (trine, tetrahedral
SIC, qutrit Weyl-Heisenberg SIC, unsharp and projective qubit measurements),
applies the Pauli conjugation and time-averaged depolarizing noise the
experiment programs into its measurement devices, and decides whether a qubit
POVM can be simulated by classically post-processing one projective
measurement.

PROJECTIVE SIMULABILITY (qubits):
    Write e_i = a_i I + b_i.sigma. For a basis direction n the projectors are
    pi_+/- = (I +/- n.sigma)/2 and the best post-processing is
        P_i0 = a_i + b_i.n,   P_i1 = a_i - b_i.n
    which is automatically nonnegative and column-stochastic for a valid POVM.
    The squared Frobenius residual left over is
        R(n) = 2 * sum_i |b_i - (b_i.n) n|^2
    R is minimized over a Fibonacci grid of directions, then refined with
    Nelder-Mead. Coarse-graining to a single outcome (d = 1) is covered by
    constant post-processing columns and needs no separate search.

POVM JSON FORMAT:
    {"dim": n, "elements": [[[re, im], ...], ...], "labels": [...]}
    Each element is listed row-major, either flat (n*n pairs) or as n rows of
    n pairs. "labels" is optional.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from coinspace import StochasticMap
from errors import CompletenessError, DomainError, FileFormatError, HermiticityError, PositivityError
from quantum_core import (
    IDENTITY_2,
    PAULI_BY_NAME,
    PAULIS,
    ComplexMatrix,
    bloch_components,
    bloch_operator,
    hermiticity_defect,
    min_eigenvalue,
)

logger = logging.getLogger(__name__)

POVM_TOL = 1e-10
FILE_TOL = 1e-8
SIMULABILITY_TOL = 1e-6
DEFAULT_GRID_SIZE = 10_000
SIC_OVERLAP_TOL = 1e-8
AXIS_NORM_TOL = 1e-9


# =============================================================================
# Povm
# =============================================================================

@dataclass(frozen=True)
class Povm:
    """
    Ordered list of positive semidefinite operators summing to the identity.

    Attributes:
        elements: Tuple of dim x dim complex matrices (read-only after construction).
        labels: Optional outcome names, one per element.
        tol: Tolerance for the positivity and completeness checks.
    """
    elements: Tuple[np.ndarray, ...]
    labels: Optional[Tuple[str, ...]] = None
    tol: float = POVM_TOL

    def __post_init__(self):
        mats = [np.array(e, dtype=complex, copy=True) for e in self.elements]
        if not mats:
            raise DomainError("elements", "a POVM needs at least one element")
        dim = mats[0].shape[0] if mats[0].ndim == 2 else 0
        for idx, m in enumerate(mats):
            if m.ndim != 2 or m.shape != (dim, dim) or dim == 0:
                raise DomainError("elements", f"element {idx} has shape {m.shape}, expected ({dim}, {dim})")

        for idx, m in enumerate(mats):
            defect = hermiticity_defect(m)
            if defect > self.tol:
                raise HermiticityError(f"POVM element {idx}", f"max |E - E^dagger| = {defect:.3e}")
            lam = min_eigenvalue(m)
            if lam < -self.tol:
                raise PositivityError(f"POVM element {idx}", f"minimum eigenvalue {lam:.3e} is below -{self.tol:.1e}")

        deviation = float(np.max(np.abs(sum(mats) - np.eye(dim))))
        if deviation > self.tol:
            raise CompletenessError("POVM", f"elements sum to the identity only within {deviation:.3e}")

        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != len(mats):
                raise DomainError("labels", f"{len(labels)} labels for {len(mats)} elements")
            object.__setattr__(self, "labels", labels)

        for m in mats:
            m.setflags(write=False)
        object.__setattr__(self, "elements", tuple(mats))

    @property
    def dim(self) -> int:
        return int(self.elements[0].shape[0])

    @property
    def n_outcomes(self) -> int:
        return len(self.elements)

    def as_array(self) -> np.ndarray:
        """Elements stacked into an (n_outcomes, dim, dim) array."""
        return np.stack(self.elements)

    def relabeled(self, order: Sequence[int]) -> Povm:
        """New POVM whose outcome k is this POVM's outcome order[k]."""
        order = list(order)
        if sorted(order) != list(range(self.n_outcomes)):
            raise DomainError("order", f"{order} is not a permutation of {self.n_outcomes} outcomes")
        labels = None if self.labels is None else tuple(self.labels[k] for k in order)
        return Povm(tuple(self.elements[k] for k in order), labels=labels, tol=self.tol)

    def conjugated(self, unitary: ComplexMatrix) -> Povm:
        """{U e_i U^dagger}"""
        u = np.asarray(unitary, dtype=complex)
        if u.shape != (self.dim, self.dim):
            raise DomainError("unitary", f"shape {u.shape} does not match POVM dimension {self.dim}")
        u_dag = np.conjugate(u).T
        return Povm(tuple(u @ e @ u_dag for e in self.elements), labels=self.labels, tol=self.tol)


# =============================================================================
# Canonical POVMs
# =============================================================================

class PovmKind(Enum):
    TRINE = "trine"
    TETRA_SIC = "tetra_sic"
    WH_SIC_D3 = "wh_sic_d3"
    UNSHARP = "unsharp"
    PROJECTIVE = "projective"


TRINE_ANGLES = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)

TETRA_DIRECTIONS = np.array([
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
]) / math.sqrt(3.0)


def trine_directions() -> np.ndarray:
    """Bloch vectors (sin t, 0, cos t) for the three trine angles, in the x-z plane."""
    return np.array([[math.sin(t), 0.0, math.cos(t)] for t in TRINE_ANGLES])


def _unit_axis(axis: Optional[Sequence[float]]) -> np.ndarray:
    if axis is None:
        return np.array([0.0, 0.0, 1.0])
    n = np.asarray(axis, dtype=float).reshape(-1)
    if n.size != 3 or not np.all(np.isfinite(n)):
        raise DomainError("axis", f"expected a real 3-vector, got {axis!r}")
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > AXIS_NORM_TOL:
        raise DomainError("axis", f"Bloch axis must have unit norm, got {norm:.12g}")
    return n


def _bloch_povm(directions: np.ndarray, weight: float, label_prefix: str) -> Povm:
    elements = tuple(weight * (IDENTITY_2 + bloch_operator(n)) for n in directions)
    labels = tuple(f"{label_prefix}{k + 1}" for k in range(len(elements)))
    return Povm(elements, labels=labels)


def _weyl_heisenberg_sic_d3() -> Povm:
    d = 3
    omega = np.exp(2j * math.pi / d)
    shift = np.roll(np.eye(d, dtype=complex), 1, axis=0)   # X|m> = |m+1>
    clock = np.diag([omega ** m for m in range(d)])         # Z|m> = w^m |m>
    fiducial = np.array([0.0, 1.0, -1.0], dtype=complex) / math.sqrt(2.0)

    vectors = []
    for j in range(d):
        for k in range(d):
            displacement = np.linalg.matrix_power(shift, j) @ np.linalg.matrix_power(clock, k)
            vectors.append(displacement @ fiducial)

    gram = np.abs(np.array([[np.vdot(a, b) for b in vectors] for a in vectors])) ** 2
    off = gram[~np.eye(d * d, dtype=bool)]
    worst = float(np.max(np.abs(off - 1.0 / (d + 1))))
    if worst > SIC_OVERLAP_TOL:
        raise ValueError(f"qutrit SIC orbit overlaps deviate from 1/4 by {worst:.3e}")

    elements = tuple(np.outer(v, np.conjugate(v)) / d for v in vectors)
    labels = tuple(f"s{j}{k}" for j in range(d) for k in range(d))
    return Povm(elements, labels=labels)


def canonical_povm(kind: Union[PovmKind, str],
                   axis: Optional[Sequence[float]] = None,
                   lam: Optional[float] = None) -> Povm:
    """
    Construct a named POVM.

    Args:
        kind: trine, tetra_sic, wh_sic_d3, unsharp or projective.
        axis: Bloch unit vector for unsharp / projective (default z).
        lam: Sharpness in (0, 1) for unsharp.

    Raises:
        DomainError: unknown kind, lam outside (0, 1) or a non-unit axis.
    """
    try:
        kind = PovmKind(kind)
    except ValueError:
        raise DomainError("kind", f"unknown POVM kind {kind!r}") from None

    if kind is PovmKind.TRINE:
        return _bloch_povm(trine_directions(), 1.0 / 3.0, "t")
    if kind is PovmKind.TETRA_SIC:
        return _bloch_povm(TETRA_DIRECTIONS, 1.0 / 4.0, "s")
    if kind is PovmKind.WH_SIC_D3:
        return _weyl_heisenberg_sic_d3()

    n = _unit_axis(axis)
    if kind is PovmKind.UNSHARP:
        if lam is None or not (0.0 < float(lam) < 1.0):
            raise DomainError("lam", f"unsharpness must lie in (0, 1), got {lam!r}")
        strength = float(lam)
    else:
        strength = 1.0
    n_sigma = strength * bloch_operator(n)
    return Povm((0.5 * (IDENTITY_2 + n_sigma), 0.5 * (IDENTITY_2 - n_sigma)), labels=("+", "-"))


# =============================================================================
# Noise and conjugation
# =============================================================================

def _require_qubit(povm: Povm, operation: str) -> None:
    if povm.dim != 2:
        raise DomainError("povm", f"{operation} acts on qubit POVMs, got dim {povm.dim}")


def pauli_conjugate(povm: Povm, k: str) -> Povm:
    """{sigma_k e_i sigma_k} for k in x, y, z."""
    _require_qubit(povm, "Pauli conjugation")
    key = str(getattr(k, "value", k)).lower()
    if key not in PAULI_BY_NAME:
        raise DomainError("k", f"expected one of x, y, z, got {k!r}")
    sigma = PAULI_BY_NAME[key]
    return Povm(tuple(sigma @ e @ sigma for e in povm.elements), labels=povm.labels, tol=povm.tol)


def noisy_time_averaged_povm(povm: Povm, p: float) -> Povm:
    """
    Time-averaged measurement of the depolarizing schedule.

    Each element becomes (1+3p)/4 e + (1-p)/4 sum_k sigma_k e sigma_k, the
    statistics of measuring {e_i} for a fraction (1+3p)/4 of the time and each
    Pauli-conjugated copy for (1-p)/4.
    """
    _require_qubit(povm, "noisy time averaging")
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise DomainError("p", f"must lie in [0, 1], got {p!r}")
    keep = (1.0 + 3.0 * p) / 4.0
    flip = (1.0 - p) / 4.0
    elements = tuple(keep * e + flip * sum(s @ e @ s for s in PAULIS) for e in povm.elements)
    return Povm(elements, labels=povm.labels, tol=povm.tol)


# =============================================================================
# Projective simulability
# =============================================================================

@dataclass(frozen=True)
class SimulabilityReport:
    """
    Outcome of the projective-simulability search.

    Attributes:
        simulable: residual <= tolerance.
        residual: Minimal sum_i ||e_i - P_i0 pi_+ - P_i1 pi_-||_F^2 found.
        tolerance: Decision threshold used.
        witness_basis: Bloch direction n of the best basis (set when simulable).
        post_processing: n_outcomes x 2 column-stochastic P (set when simulable).
        grid_residual: Best value on the coarse grid, before refinement.
        directions: Number of grid directions searched.
    """
    simulable: bool
    residual: float
    tolerance: float
    witness_basis: Optional[np.ndarray] = None
    post_processing: Optional[StochasticMap] = None
    grid_residual: float = float("nan")
    directions: int = 0

    def reconstruct(self) -> Optional[Tuple[np.ndarray, ...]]:
        """P_i0 pi_+ + P_i1 pi_- for every outcome, or None without a witness."""
        if self.witness_basis is None or self.post_processing is None:
            return None
        n_sigma = bloch_operator(self.witness_basis)
        pi_plus = 0.5 * (IDENTITY_2 + n_sigma)
        pi_minus = 0.5 * (IDENTITY_2 - n_sigma)
        p = self.post_processing.entries
        return tuple(p[i, 0] * pi_plus + p[i, 1] * pi_minus for i in range(p.shape[0]))


def fibonacci_sphere(count: int) -> np.ndarray:
    """Nearly uniform unit vectors on the sphere, shape (count, 3)."""
    if count < 1:
        raise DomainError("count", f"need at least one direction, got {count}")
    i = np.arange(count, dtype=float) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (3.0 - math.sqrt(5.0)) * np.arange(count)
    return np.column_stack((r * np.cos(phi), r * np.sin(phi), z))


def _bloch_table(povm: Povm) -> Tuple[np.ndarray, np.ndarray]:
    pairs = [bloch_components(e) for e in povm.elements]
    a = np.array([a for a, _ in pairs])
    b = np.array([b for _, b in pairs])
    return a, b


def simulability_residual(b: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """R(n) = 2 * sum_i (|b_i|^2 - (b_i.n)^2) for each row n of `directions`."""
    projections = np.atleast_2d(directions) @ b.T
    return 2.0 * (float(np.sum(b * b)) - np.sum(projections * projections, axis=1))


def projective_simulability(povm: Povm, tol: float = SIMULABILITY_TOL,
                            grid_size: int = DEFAULT_GRID_SIZE) -> SimulabilityReport:
    """
    Decide whether a qubit POVM is a post-processed projective measurement.

    The grid minimum (ties broken by lowest grid index) seeds a Nelder-Mead
    refinement over unnormalized 3-vectors; the smaller of the two values is
    reported.
    """
    _require_qubit(povm, "projective simulability")
    if tol <= 0:
        raise DomainError("tol", f"must be positive, got {tol!r}")

    a, b = _bloch_table(povm)
    grid = fibonacci_sphere(max(int(grid_size), 1))
    values = simulability_residual(b, grid)
    best_idx = int(np.argmin(values))
    grid_best = float(values[best_idx])
    logger.debug(f"Simulability grid minimum {grid_best:.3e} at direction {best_idx} of {len(grid)}")

    def objective(v):
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            return float(values.max())
        return float(simulability_residual(b, v / norm)[0])

    refined = minimize(objective, grid[best_idx], method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 4000})
    direction = grid[best_idx]
    residual = grid_best
    if refined.fun < grid_best and np.linalg.norm(refined.x) > 1e-12:
        direction = refined.x / np.linalg.norm(refined.x)
        residual = float(refined.fun)
    residual = max(residual, 0.0)

    simulable = residual <= tol
    witness = None
    post = None
    if simulable:
        overlap = b @ direction
        entries = np.column_stack((a + overlap, a - overlap))
        post = StochasticMap(np.clip(entries, 0.0, None), tol=max(tol, 1e-10))
        witness = np.array(direction, dtype=float)

    return SimulabilityReport(
        simulable=simulable,
        residual=residual,
        tolerance=tol,
        witness_basis=witness,
        post_processing=post,
        grid_residual=grid_best,
        directions=len(grid),
    )


# =============================================================================
# JSON I/O
# =============================================================================

def povm_to_dict(povm: Povm) -> dict:
    data = {
        "dim": povm.dim,
        "elements": [[[float(z.real), float(z.imag)] for z in e.reshape(-1)] for e in povm.elements],
    }
    if povm.labels is not None:
        data["labels"] = list(povm.labels)
    return data


def write_povm_json(path: Union[str, Path], povm: Povm) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(povm_to_dict(povm), f, indent=2)
        f.write("\n")
    return path


def _parse_element(raw, dim: int, index: int, path: Path) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.shape == (dim * dim, 2):
        arr = arr.reshape(dim, dim, 2)
    if arr.shape != (dim, dim, 2):
        raise FileFormatError(path, f"element {index} must hold {dim}x{dim} [re, im] pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FileFormatError(path, f"element {index} contains non-finite numbers")
    return arr[..., 0] + 1j * arr[..., 1]


def read_povm_json(path: Union[str, Path], tol: float = FILE_TOL) -> Povm:
    """
    Load a POVM file and validate it at `tol`.

    Raises:
        FileFormatError: unreadable file or wrong structure.
        ValidationError subclasses: the first violated POVM invariant.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, UnicodeDecodeError) as e:
        raise FileFormatError(path, f"cannot read file: {e}") from e
    except json.JSONDecodeError as e:
        raise FileFormatError(path, f"invalid JSON at line {e.lineno}: {e.msg}") from e

    if not isinstance(data, dict) or "dim" not in data or "elements" not in data:
        raise FileFormatError(path, "expected an object with 'dim' and 'elements'")
    dim = data["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise FileFormatError(path, f"'dim' must be a positive integer, got {dim!r}")
    raw_elements = data["elements"]
    if not isinstance(raw_elements, list) or not raw_elements:
        raise FileFormatError(path, "'elements' must be a non-empty list")

    try:
        elements = tuple(_parse_element(e, dim, k, path) for k, e in enumerate(raw_elements))
    except (TypeError, ValueError) as e:
        raise FileFormatError(path, f"non-numeric element entry: {e}") from e

    labels = data.get("labels")
    return Povm(elements, labels=tuple(labels) if labels else None, tol=tol)
