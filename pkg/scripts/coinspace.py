"""
Coinspace - Classical Correlated Coins and Free Operations

Classical shared-randomness states (two-party joint distributions), the local
stochastic maps that act on them, the game payoff and the mutual-information
quantifier.

JOINT INDEX CONVENTION:
    probs[i * d_b + j] = P(Alice sees i, Bob sees j)
    i.e. (p(11), p(12), ..., p(dd)) in row-major order. Every module shares it.

FREE OPERATIONS:
    A pair of column-stochastic maps S_A (d_a' x d_a), S_B (d_b' x d_b) acts as
    probs' = (S_A (x) S_B) probs.

GAME PAYOFF:
    G(n) pays min_{i != j} P(ij) on an n x n coin; the best any coin can do is
    1/(n^2 - n), reached only by the perfectly anti-correlated coin C_ac(n).

FILE FORMAT:
    Coin CSV with header `i,j,p`, one row per joint outcome (0-based indices).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from errors import DomainError, FileFormatError, NormalizationError, PositivityError, StochasticityError

logger = logging.getLogger(__name__)

COIN_TOL = 1e-10
ENTROPY_ZERO = 1e-15
FILE_TOL = 1e-8


def _frozen(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    out.setflags(write=False)
    return out


# =============================================================================
# Data Structures
# =============================================================================

@dataclass(frozen=True)
class CoinState:
    """
    Joint probability vector over d_a x d_b outcomes.

    Attributes:
        d_a: Number of faces on Alice's side.
        d_b: Number of faces on Bob's side.
        probs: Length d_a * d_b, index i * d_b + j.
        tol: Tolerance for the nonnegativity / normalization checks.
    """
    d_a: int
    d_b: int
    probs: np.ndarray
    tol: float = COIN_TOL

    def __post_init__(self):
        if self.d_a < 1 or self.d_b < 1:
            raise DomainError("dimensions", f"coin faces must be positive, got {self.d_a}x{self.d_b}")
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if probs.size != self.d_a * self.d_b:
            raise DomainError("probs", f"length {probs.size} does not match {self.d_a}x{self.d_b}")
        if not np.all(np.isfinite(probs)):
            raise NormalizationError("coin state", "entries must be finite")
        lowest = float(probs.min())
        if lowest < -self.tol:
            raise PositivityError("coin state", f"entry {lowest:.3e} is negative")
        total = float(probs.sum())
        if abs(total - 1.0) > self.tol:
            raise NormalizationError("coin state", f"entries sum to {total:.15g}")
        object.__setattr__(self, "probs", _frozen(probs))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, tol: float = COIN_TOL) -> CoinState:
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2:
            raise DomainError("matrix", "coin matrix must be two-dimensional")
        return cls(m.shape[0], m.shape[1], m.reshape(-1), tol=tol)

    @property
    def is_square(self) -> bool:
        return self.d_a == self.d_b

    def as_matrix(self) -> np.ndarray:
        """P as a d_a x d_b matrix, rows indexed by Alice's outcome."""
        return self.probs.reshape(self.d_a, self.d_b)

    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.as_matrix()).copy()

    def off_diagonal(self) -> np.ndarray:
        """Entries with i != j, in row-major order."""
        m = self.as_matrix()
        mask = ~np.eye(self.d_a, self.d_b, dtype=bool)
        return m[mask]

    def marginals(self) -> Tuple[np.ndarray, np.ndarray]:
        m = self.as_matrix()
        return m.sum(axis=1), m.sum(axis=0)

    def permuted(self, order_a, order_b=None) -> CoinState:
        """Relabel outcomes: new row r is old row order_a[r]."""
        order_b = order_a if order_b is None else order_b
        m = self.as_matrix()[np.ix_(list(order_a), list(order_b))]
        return CoinState.from_matrix(m, tol=self.tol)


@dataclass(frozen=True)
class StochasticMap:
    """
    Column-stochastic matrix mapping k faces onto d faces.

    Attributes:
        entries: d x k nonnegative matrix, every column sums to 1.
    """
    entries: np.ndarray
    tol: float = COIN_TOL

    def __post_init__(self):
        s = np.asarray(self.entries, dtype=float)
        if s.ndim != 2 or 0 in s.shape:
            raise DomainError("entries", f"stochastic map must be a non-empty matrix, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise StochasticityError("stochastic map", "entries must be finite")
        lowest = float(s.min())
        if lowest < -self.tol:
            raise PositivityError("stochastic map", f"entry {lowest:.3e} is negative")
        sums = s.sum(axis=0)
        worst = int(np.argmax(np.abs(sums - 1.0)))
        if abs(sums[worst] - 1.0) > self.tol:
            raise StochasticityError("stochastic map", f"column {worst} sums to {sums[worst]:.15g}")
        object.__setattr__(self, "entries", _frozen(s))

    @property
    def from_dim(self) -> int:
        return int(self.entries.shape[1])

    @property
    def to_dim(self) -> int:
        return int(self.entries.shape[0])

    @classmethod
    def identity(cls, k: int) -> StochasticMap:
        return cls(np.eye(k))

    def compose(self, first: StochasticMap) -> StochasticMap:
        """Return self o first (apply `first`, then self)."""
        if first.to_dim != self.from_dim:
            raise DomainError("compose", f"cannot follow a {first.from_dim}->{first.to_dim} map "
                                         f"with a {self.from_dim}->{self.to_dim} map")
        return StochasticMap(self.entries @ first.entries)


# =============================================================================
# Canonical coins and strategies
# =============================================================================

class CoinKind(Enum):
    AC3 = "ac3"
    AC4 = "ac4"
    AC = "ac"
    UNIFORM = "uniform"
    PERFECTLY_CORRELATED_2 = "perfectly_correlated_2"


def anticorrelated_coin(d: int) -> CoinState:
    """C_ac(d): zero diagonal, every off-diagonal entry 1/(d^2 - d)."""
    if d < 2:
        raise DomainError("d", f"anti-correlated coin needs d >= 2, got {d}")
    m = np.full((d, d), 1.0 / (d * d - d))
    np.fill_diagonal(m, 0.0)
    return CoinState.from_matrix(m)


def canonical_coin(kind: Union[CoinKind, str], d: Optional[int] = None) -> CoinState:
    """
    Named coins.

    ac3 / ac4 are C_ac(3) / C_ac(4); `ac` takes d; `uniform` takes d;
    perfectly_correlated_2 is (1/2, 0, 0, 1/2).
    """
    try:
        kind = CoinKind(kind)
    except ValueError:
        raise DomainError("kind", f"unknown coin kind {kind!r}") from None

    if kind is CoinKind.AC3:
        return anticorrelated_coin(3)
    if kind is CoinKind.AC4:
        return anticorrelated_coin(4)
    if kind is CoinKind.PERFECTLY_CORRELATED_2:
        return CoinState(2, 2, np.array([0.5, 0.0, 0.0, 0.5]))
    if d is None or d < 2:
        raise DomainError("d", f"{kind.value} coin needs d >= 2, got {d!r}")
    if kind is CoinKind.AC:
        return anticorrelated_coin(d)
    return CoinState(d, d, np.full(d * d, 1.0 / (d * d)))


def canonical_classical_strategy() -> Tuple[CoinState, StochasticMap, StochasticMap]:
    """
    Best two-2-coin strategy for G(3).

    Shared coin (1/2, 0, 0, 1/2) with
        S_A = [[0, 1/2], [1/2, 0], [1/2, 1/2]]
        S_B = [[1/2, 0], [0, 1/2], [1/2, 1/2]]
    yields (0, 1, 1, 1, 0, 1, 1, 1, 2) / 8, payoff 1/8.
    """
    coin = canonical_coin(CoinKind.PERFECTLY_CORRELATED_2)
    s_a = StochasticMap(np.array([[0.0, 0.5], [0.5, 0.0], [0.5, 0.5]]))
    s_b = StochasticMap(np.array([[0.5, 0.0], [0.0, 0.5], [0.5, 0.5]]))
    return coin, s_a, s_b


def one_eighth_coin() -> CoinState:
    """(0, 1, 1, 1, 0, 1, 1, 1, 2) / 8"""
    return CoinState(3, 3, np.array([0, 1, 1, 1, 0, 1, 1, 1, 2], dtype=float) / 8.0)


# =============================================================================
# Operations
# =============================================================================

def apply_free_operation(coin: CoinState, s_a: StochasticMap, s_b: StochasticMap) -> CoinState:
    """probs' = (S_A (x) S_B) probs"""
    if s_a.from_dim != coin.d_a:
        raise DomainError("s_a", f"map expects {s_a.from_dim} faces, coin has d_a = {coin.d_a}")
    if s_b.from_dim != coin.d_b:
        raise DomainError("s_b", f"map expects {s_b.from_dim} faces, coin has d_b = {coin.d_b}")
    probs = np.kron(s_a.entries, s_b.entries) @ coin.probs
    return CoinState(s_a.to_dim, s_b.to_dim, probs)


def max_payoff_bound(n: int) -> float:
    """R_max(n) = 1/(n^2 - n)"""
    if n < 2:
        raise DomainError("n", f"game needs at least two restaurants, got {n}")
    return 1.0 / (n * n - n)


def game_payoff(coin: CoinState, n: Optional[int] = None) -> float:
    """min_{i != j} P(ij) on a square n x n coin."""
    if not coin.is_square:
        raise DomainError("coin", f"game payoff needs a square coin, got {coin.d_a}x{coin.d_b}")
    if n is not None and n != coin.d_a:
        raise DomainError("n", f"coin has {coin.d_a} faces per side, game asked for {n}")
    if coin.d_a < 2:
        raise DomainError("coin", "game payoff needs at least two faces")
    return float(coin.off_diagonal().min())


def _entropy_bits(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).reshape(-1)
    p = p[p > ENTROPY_ZERO]
    return float(-(p * np.log2(p)).sum())


def mutual_information(coin: CoinState) -> float:
    """I(X:Y) = H(X) + H(Y) - H(X,Y) in bits, with 0 log 0 = 0."""
    p_a, p_b = coin.marginals()
    value = _entropy_bits(p_a) + _entropy_bits(p_b) - _entropy_bits(coin.probs)
    # Exact product coins can land a few ulps below zero.
    return max(value, 0.0)


def is_star_anticorrelated(coin: CoinState, tol: float = COIN_TOL) -> bool:
    """C*_ac predicate: every diagonal entry <= tol and every off-diagonal > tol."""
    if not coin.is_square:
        raise DomainError("coin", f"C*_ac predicate needs a square coin, got {coin.d_a}x{coin.d_b}")
    return bool(np.all(coin.diagonal() <= tol) and np.all(coin.off_diagonal() > tol))


def quantum_gain(n: int, m: int) -> Optional[float]:
    """
    R_max(n) - R^{C(m)}_max(n) for the pairs with a known classical optimum.

    Returns None when the classical optimum for (m, n) is not tabulated.
    """
    known = {(2, 3): Fraction(1, 8), (2, 4): Fraction(1, 15), (3, 4): Fraction(2, 27)}
    if m >= n:
        return 0.0
    if (m, n) not in known:
        return None
    return float(Fraction(1, n * n - n) - known[(m, n)])


# =============================================================================
# CSV I/O
# =============================================================================

def write_coin_csv(path: Union[str, Path], coin: CoinState, digits: int = 12) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["i", "j", "p"])
        for i in range(coin.d_a):
            for j in range(coin.d_b):
                writer.writerow([i, j, f"{coin.probs[i * coin.d_b + j]:.{digits}g}"])
    return path


def read_coin_csv(path: Union[str, Path], tol: float = FILE_TOL) -> CoinState:
    """
    Read a coin CSV (`i,j,p`) and validate it at `tol`.

    Raises:
        FileFormatError: missing header, bad numbers, duplicate or missing cells.
        PositivityError / NormalizationError: invariant violations.
    """
    path = Path(path)
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    except (OSError, UnicodeDecodeError) as e:
        raise FileFormatError(path, f"cannot read file: {e}") from e

    if not rows or set(rows[0].keys()) != {"i", "j", "p"}:
        raise FileFormatError(path, "expected header 'i,j,p' followed by one row per joint outcome")

    cells = {}
    try:
        for row in rows:
            key = (int(row["i"]), int(row["j"]))
            if key in cells:
                raise FileFormatError(path, f"duplicate cell {key}")
            cells[key] = float(row["p"])
    except (TypeError, ValueError) as e:
        raise FileFormatError(path, f"non-numeric entry: {e}") from e

    d_a = max(i for i, _ in cells) + 1
    d_b = max(j for _, j in cells) + 1
    if min(min(k) for k in cells) < 0 or len(cells) != d_a * d_b:
        raise FileFormatError(path, f"expected {d_a * d_b} cells with indices from 0, got {len(cells)}")

    probs = np.array([cells[(i, j)] for i in range(d_a) for j in range(d_b)])
    if not np.all(np.isfinite(probs)):
        raise FileFormatError(path, "probabilities must be finite")
    return CoinState(d_a, d_b, probs, tol=tol)


def coin_summary(coin: CoinState) -> str:
    """One-line console summary."""
    parts = [f"{coin.d_a}x{coin.d_b} coin"]
    if coin.is_square and coin.d_a >= 2:
        parts.append(f"payoff={game_payoff(coin):.6g}")
    parts.append(f"I={mutual_information(coin):.6g} bits")
    return ", ".join(parts)


__all__ = [
    "CoinState", "StochasticMap", "CoinKind", "anticorrelated_coin", "canonical_coin",
    "canonical_classical_strategy", "one_eighth_coin", "apply_free_operation",
    "max_payoff_bound", "game_payoff", "mutual_information", "is_star_anticorrelated",
    "quantum_gain", "write_coin_csv", "read_coin_csv", "coin_summary",
    "COIN_TOL", "FILE_TOL",
]
