"""
Experiment - Coincidence-count Simulation and Analysis

Monte Carlo model of the coincidence-counting run and the analysis chain from
counts to a certified payoff.

ACQUISITION SCHEDULE:
    Depolarizing noise of strength p is realized in time, not in the state.
    For a total integration time T per joint setting Alice measures
        {e_i}                  for T (1+3p)/4
        {s_k e_i s_k}, k=x,y,z for T (1-p)/4 each
    and the four slices are summed. Each slice draws independent Poisson
    counts with mean  slice_time * pair_rate * P_slice(ij).
    Accidental coincidences are not modeled.

RANDOM STREAMS:
    SeedSequence(plan.seed).spawn(4) gives one stream per slice (zero-length
    slices still consume their child). Bootstrap resample r uses child r of
    SeedSequence(seed).spawn(resamples).

FILE FORMATS:
    counts CSV      header `i,j,counts`, one row per joint outcome
    metadata JSON   <counts>.meta.json: {"p", "total_time_s", "pair_rate_hz", "seed", "manifest"}
    density JSON    {"dim": 4, "re": [[...]], "im": [[...]]}, row-major
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from bridge import QuantumStrategy, born_probabilities
from coinspace import CoinState, game_payoff
from errors import AnalysisError, DomainError, FileFormatError, PositivityError
from measurement import pauli_conjugate
from quantum_core import DENSITY_TOL, DensityOperator, check_density_invariants, nearest_density_matrix

logger = logging.getLogger(__name__)

CLASSICAL_THRESHOLD = 0.125
DEFAULT_PERCENTILES = (16.0, 84.0)
MIN_RESAMPLES = 100
INGEST_TOL = 1e-6
MAX_COUNT = 2 ** 53
SLICE_PAULIS = (None, "x", "y", "z")


# =============================================================================
# Data Structures
# =============================================================================

@dataclass(frozen=True)
class AcquisitionPlan:
    """
    One simulated data point.

    Attributes:
        p: Depolarizing strength in [0, 1] (1 = noiseless).
        total_time_s: Integration time per joint setting, seconds.
        pair_rate_hz: Expected coincidences per second at unit probability.
        seed: Root seed for the slice streams.
    """
    p: float
    total_time_s: float
    pair_rate_hz: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= float(self.p) <= 1.0):
            raise DomainError("p", f"must lie in [0, 1], got {self.p!r}")
        if not (float(self.total_time_s) > 0):
            raise DomainError("total_time_s", f"must be positive, got {self.total_time_s!r}")
        if not (float(self.pair_rate_hz) > 0):
            raise DomainError("pair_rate_hz", f"must be positive, got {self.pair_rate_hz!r}")
        if int(self.seed) < 0:
            raise DomainError("seed", f"must be a nonnegative integer, got {self.seed!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": float(self.p),
            "total_time_s": float(self.total_time_s),
            "pair_rate_hz": float(self.pair_rate_hz),
            "seed": int(self.seed),
        }


@dataclass(frozen=True)
class TimeSlice:
    """Measurement setting on Alice's side (None = unconjugated) and its duration."""
    pauli: Optional[str]
    duration_s: float


@dataclass
class CountsTable:
    """
    Coincidence counts C_ij.

    Attributes:
        counts: n x n nonnegative integer array, rows indexed by Alice's outcome.
        plan: Acquisition plan the counts came from, when known.
    """
    counts: np.ndarray
    plan: Optional[AcquisitionPlan] = None

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim == 1:
            side = int(round(np.sqrt(arr.size)))
            if side * side != arr.size:
                raise DomainError("counts", f"{arr.size} cells do not form a square table")
            arr = arr.reshape(side, side)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.size == 0:
            raise DomainError("counts", f"expected a square table, got shape {arr.shape}")
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DomainError("counts", "coincidence counts must be integers")
        if arr.min() < 0:
            raise PositivityError("counts table", f"count {int(arr.min())} is negative")
        self.counts = arr.astype(np.int64)

    @property
    def n(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class PayoffEstimate:
    """
    Observed payoff and its bootstrap interval.

    Attributes:
        payoff: Payoff of the normalized observed counts.
        ci_low / ci_high: Percentile interval, widened to contain `payoff`.
        bootstrap_samples: Number of Poisson resamples.
        exceeds_classical: ci_low > threshold.
        threshold: Classical bound the interval was compared against.
        percentiles: Percentiles used for the interval.
    """
    payoff: float
    ci_low: float
    ci_high: float
    bootstrap_samples: int
    exceeds_classical: bool
    threshold: float = CLASSICAL_THRESHOLD
    percentiles: Tuple[float, float] = DEFAULT_PERCENTILES
    counts_total: int = 0
    method: str = "parametric Poisson bootstrap"

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "payoff": self.payoff,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "half_width": self.half_width,
            "bootstrap_samples": self.bootstrap_samples,
            "exceeds_classical": self.exceeds_classical,
            "threshold": self.threshold,
            "percentiles": list(self.percentiles),
            "counts_total": self.counts_total,
            "method": self.method,
        }


# =============================================================================
# Simulation
# =============================================================================

def schedule(plan: AcquisitionPlan) -> List[TimeSlice]:
    """Four slices: unconjugated for T(1+3p)/4, then x, y, z for T(1-p)/4 each."""
    keep = plan.total_time_s * (1.0 + 3.0 * plan.p) / 4.0
    flip = plan.total_time_s * (1.0 - plan.p) / 4.0
    return [TimeSlice(k, keep if k is None else flip) for k in SLICE_PAULIS]


def _require_qubit_strategy(strategy: QuantumStrategy) -> None:
    if strategy.povm_a.dim != 2 or strategy.povm_b.dim != 2:
        raise DomainError("strategy", "the acquisition schedule needs a two-qubit strategy")
    if strategy.povm_a.n_outcomes != strategy.povm_b.n_outcomes:
        raise DomainError("strategy", "both parties must have the same number of outcomes")


def slice_probabilities(strategy: QuantumStrategy, pauli: Optional[str]) -> np.ndarray:
    povm_a = strategy.povm_a if pauli is None else pauli_conjugate(strategy.povm_a, pauli)
    probs = born_probabilities(strategy.state.matrix, povm_a.as_array(), strategy.povm_b.as_array())
    return np.clip(probs, 0.0, None)


def expected_counts(strategy: QuantumStrategy, plan: AcquisitionPlan) -> np.ndarray:
    """Noise-free mean of every cell, summed over the four slices."""
    _require_qubit_strategy(strategy)
    total = np.zeros((strategy.povm_a.n_outcomes, strategy.povm_b.n_outcomes))
    for piece in schedule(plan):
        if piece.duration_s <= 0:
            continue
        mean = piece.duration_s * plan.pair_rate_hz * slice_probabilities(strategy, piece.pauli)
        logger.debug(f"Slice {piece.pauli or 'I'}: {piece.duration_s:.6g} s, expected {mean.sum():.6g} counts")
        total += mean
    return total


def simulate_counts(strategy: QuantumStrategy, plan: AcquisitionPlan) -> CountsTable:
    """
    Draw one coincidence table for `plan`.

    Deterministic given plan.seed.
    """
    _require_qubit_strategy(strategy)
    streams = np.random.SeedSequence(int(plan.seed)).spawn(len(SLICE_PAULIS))
    counts = np.zeros((strategy.povm_a.n_outcomes, strategy.povm_b.n_outcomes), dtype=np.int64)
    for piece, stream in zip(schedule(plan), streams):
        if piece.duration_s <= 0:
            continue
        rng = np.random.default_rng(stream)
        mean = piece.duration_s * plan.pair_rate_hz * slice_probabilities(strategy, piece.pauli)
        counts += rng.poisson(mean)
    logger.debug(f"Simulated {int(counts.sum())} coincidences for p={plan.p:.6g}, seed={plan.seed}")
    return CountsTable(counts, plan=plan)


# =============================================================================
# Analysis
# =============================================================================

def estimate_coin_from_counts(table: CountsTable) -> CoinState:
    """P(ij) = C_ij / sum C"""
    total = table.total
    if total <= 0:
        raise AnalysisError("counts table has no coincidences; cannot normalize", counts_total=total)
    return CoinState(table.n, table.n, (table.counts / total).reshape(-1))


def _payoff_of_counts(counts: np.ndarray) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    mask = ~np.eye(counts.shape[0], dtype=bool)
    return float(counts[mask].min() / total)


def bootstrap_payoff_interval(table: CountsTable, resamples: int, seed: int,
                              threshold: float = CLASSICAL_THRESHOLD,
                              percentiles: Sequence[float] = DEFAULT_PERCENTILES) -> PayoffEstimate:
    """
    Parametric Poisson bootstrap of the payoff.

    Each resample redraws every cell from Poisson(observed count); cells that
    were zero stay zero. A resample with no counts at all scores 0.

    Raises:
        AnalysisError: all-zero table.
        DomainError: fewer than 100 resamples or bad percentiles.
    """
    if int(resamples) < MIN_RESAMPLES:
        raise DomainError("resamples", f"need at least {MIN_RESAMPLES}, got {resamples}")
    lo_pct, hi_pct = (float(x) for x in percentiles)
    if not (0.0 <= lo_pct < hi_pct <= 100.0):
        raise DomainError("percentiles", f"expected 0 <= low < high <= 100, got {percentiles!r}")

    observed = game_payoff(estimate_coin_from_counts(table))
    streams = np.random.SeedSequence(int(seed)).spawn(int(resamples))
    payoffs = np.empty(len(streams))
    for r, stream in enumerate(streams):
        payoffs[r] = _payoff_of_counts(np.random.default_rng(stream).poisson(table.counts))

    low, high = np.percentile(payoffs, [lo_pct, hi_pct])
    ci_low = min(float(low), observed)
    ci_high = max(float(high), observed)
    estimate = PayoffEstimate(
        payoff=observed,
        ci_low=ci_low,
        ci_high=ci_high,
        bootstrap_samples=int(resamples),
        exceeds_classical=bool(ci_low > threshold),
        threshold=float(threshold),
        percentiles=(lo_pct, hi_pct),
        counts_total=table.total,
    )
    logger.debug(f"Bootstrap payoff {observed:.6g} in [{ci_low:.6g}, {ci_high:.6g}] "
                 f"from {table.total} counts")
    return estimate


# =============================================================================
# Density matrix files
# =============================================================================

def _load_json(path: Path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, UnicodeDecodeError) as e:
        raise FileFormatError(path, f"cannot read file: {e}") from e
    except json.JSONDecodeError as e:
        raise FileFormatError(path, f"invalid JSON at line {e.lineno}: {e.msg}") from e


def ingest_density_matrix(path: Union[str, Path], tol: float = INGEST_TOL) -> DensityOperator:
    """
    Load a tomographed two-qubit state and validate it at `tol`.

    A state that passes at `tol` is projected onto the nearest density
    matrix (Hermitian, positive, unit trace), so everything downstream sees
    a state that holds at the strict default tolerance.

    Raises:
        FileFormatError: unreadable file, wrong keys or shapes.
        HermiticityError / TraceError / PositivityError: invariant violations.
    """
    path = Path(path)
    data = _load_json(path)
    if not isinstance(data, dict) or not {"dim", "re", "im"} <= set(data):
        raise FileFormatError(path, "expected an object with 'dim', 're' and 'im'")
    dim = data["dim"]
    if dim != 4:
        raise FileFormatError(path, f"expected a two-qubit state (dim 4), got dim {dim!r}")
    try:
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data["im"], dtype=float)
    except (TypeError, ValueError) as e:
        raise FileFormatError(path, f"non-numeric matrix entry: {e}") from e
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        raise FileFormatError(path, f"'re' and 'im' must both be {dim}x{dim}, got {re.shape} and {im.shape}")
    if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
        raise FileFormatError(path, "matrix entries must be finite")

    raw = re + 1j * im
    check_density_invariants(raw, tol, subject=path.stem)
    repaired = nearest_density_matrix(raw)
    shift = float(np.max(np.abs(repaired - raw)))
    if shift > DENSITY_TOL:
        logger.warning(f"{path.name}: projected onto the nearest density matrix (max change {shift:.2e})")
    rho = DensityOperator(repaired, label=path.stem)
    logger.info(f"Loaded density matrix {path.name} (purity {rho.purity():.4f})")
    return rho


def write_density_json(path: Union[str, Path], rho: DensityOperator, digits: int = 12,
                       manifest: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    data: Dict[str, Any] = {
        "dim": rho.dim,
        "re": [[float(f"{v:.{digits}g}") for v in row] for row in rho.matrix.real],
        "im": [[float(f"{v:.{digits}g}") for v in row] for row in rho.matrix.imag],
    }
    if manifest is not None:
        data["manifest"] = manifest
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    return path


# =============================================================================
# Counts files
# =============================================================================

def metadata_path(counts_path: Union[str, Path]) -> Path:
    return Path(str(counts_path) + ".meta.json")


def write_counts_csv(path: Union[str, Path], table: CountsTable,
                     manifest: Optional[Dict[str, Any]] = None) -> Path:
    """Write the counts CSV and, when the plan is known, its metadata sidecar."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["i", "j", "counts"])
        for i in range(table.n):
            for j in range(table.n):
                writer.writerow([i, j, int(table.counts[i, j])])

    if table.plan is not None:
        meta = table.plan.to_dict()
        if manifest is not None:
            meta["manifest"] = manifest
        with open(metadata_path(path), "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")
    return path


def _read_plan(path: Path) -> Optional[AcquisitionPlan]:
    meta_file = metadata_path(path)
    if not meta_file.exists():
        return None
    meta = _load_json(meta_file)
    try:
        return AcquisitionPlan(meta["p"], meta["total_time_s"], meta["pair_rate_hz"], int(meta["seed"]))
    except (KeyError, TypeError, ValueError) as e:
        logger.warning(f"Ignoring unreadable metadata {meta_file.name}: {e}")
        return None


def read_counts_csv(path: Union[str, Path]) -> CountsTable:
    """
    Read `i,j,counts` rows into a CountsTable.

    Raises:
        FileFormatError: empty file, wrong header, non-integer or missing cells.
    """
    path = Path(path)
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    except (OSError, UnicodeDecodeError) as e:
        raise FileFormatError(path, f"cannot read file: {e}") from e

    if not rows or set(rows[0].keys()) != {"i", "j", "counts"}:
        raise FileFormatError(path, "expected header 'i,j,counts' followed by one row per joint outcome")

    cells: Dict[Tuple[int, int], int] = {}
    try:
        for row in rows:
            key = (int(row["i"]), int(row["j"]))
            if key in cells:
                raise FileFormatError(path, f"duplicate cell {key}")
            value = float(row["counts"])
            if not np.isfinite(value) or value != int(value):
                raise FileFormatError(path, f"cell {key} count {row['counts']!r} is not an integer")
            if abs(value) > MAX_COUNT:
                raise FileFormatError(path, f"cell {key} count {row['counts']!r} is out of range")
            cells[key] = int(value)
    except (TypeError, ValueError, OverflowError) as e:
        raise FileFormatError(path, f"non-numeric entry: {e}") from e

    n = max(max(k) for k in cells) + 1
    if min(min(k) for k in cells) < 0 or len(cells) != n * n:
        raise FileFormatError(path, f"expected {n * n} cells indexed from 0, got {len(cells)}")
    counts = np.array([[cells[(i, j)] for j in range(n)] for i in range(n)], dtype=np.int64)
    return CountsTable(counts, plan=_read_plan(path))
