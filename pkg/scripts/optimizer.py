"""
Optimizer - Multi-start Searches over Classical and Projective Strategies

Non-convex searches behind the certifier's bounds:

    max_classical_payoff             best G(n) payoff from a shared m x m coin
                                     and local m->n stochastic maps
    max_projective_simulable_payoff  best G(n) payoff from any two-qubit state
                                     measured with post-processed projective
                                     measurements
    coin_feasibility_distance        distance from a target coin to the coins
                                     reachable from C(m)
    min_diagonal_mass                smallest total diagonal of phi+_d statistics
                                     over rank-one POVM pairs

CLASSICAL STRATEGIES AS NONNEGATIVE FACTORS:
    A coin reachable from C(m) is exactly a matrix P = A B^T with A, B >= 0 of
    shape n x m and sum(P) = 1; a diagonal shared coin already reaches all of
    them. The payoff min_{i!=j} P_ij / sum(P) is scale free, so the classical
    search minimizes sum(A B^T) subject to (A B^T)_ij >= 1 off the diagonal.
    With one factor fixed that is an LP (HiGHS), and the search alternates
    the two factors until the total stops dropping. The payoff is 1/total.

SEARCH PIPELINE (per restart):
    1. Start. Classical searches take the k-th 0/1 row pattern for A while
       patterns last (fewest ones first), then random factors; the other
       searches draw a random start. Every random stream is a child of
       SeedSequence(cfg.seed).
    2. Local search. Factor alternation for classical payoffs; Nelder-Mead
       direct search for the projective and diagonal-mass searches, whose
       simplices are reached through squared magnitudes x_i^2 / sum_j x_j^2;
       bounded trust-region least squares on the factors for feasibility.
    3. Snap to nearby rationals (denominator <= 60), kept only when the
       objective does not get worse.

The winning classical strategy gets one more Nelder-Mead pass and factor
alternation, kept only if it scores higher. Restarts are independent;
results are reduced in restart order with ties going to the lowest index, so
the outcome is the same for any `workers`.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, linprog, minimize

from bridge import born_probabilities
from coinspace import CoinState, StochasticMap, is_star_anticorrelated, max_payoff_bound
from errors import DomainError
from quantum_core import IDENTITY_2, bloch_operator, phi_plus_d

logger = logging.getLogger(__name__)

SNAP_DENOMINATOR = 60
SEESAW_ROUNDS = 60
SNAP_SLACK = 1e-12
REACHABLE_TOL = 1e-8
MAX_PATTERN_STARTS = 20000
SUM_PENALTY = 10.0
LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


# =============================================================================
# Configuration and results
# =============================================================================

@dataclass(frozen=True)
class SearchConfig:
    """
    Budget and seed for one search.

    Attributes:
        restarts: Independent starts (>= 1).
        seed: Root of the SeedSequence every restart stream is spawned from.
        max_iterations: Nelder-Mead iteration cap and least-squares evaluation cap.
        convergence_tol: Nelder-Mead xatol / fatol and the relative stopping
            gain of factor alternation.
        workers: Threads used to run restarts; 1 runs them inline.
    """
    restarts: int = 1000
    seed: int = 0
    max_iterations: int = 2000
    convergence_tol: float = 1e-10
    workers: int = 1

    def __post_init__(self):
        if int(self.restarts) < 1:
            raise DomainError("restarts", f"must be >= 1, got {self.restarts}")
        if int(self.seed) < 0:
            raise DomainError("seed", f"must be a nonnegative integer, got {self.seed}")
        if int(self.max_iterations) < 1:
            raise DomainError("max_iterations", f"must be >= 1, got {self.max_iterations}")
        if not (self.convergence_tol > 0):
            raise DomainError("convergence_tol", f"must be positive, got {self.convergence_tol}")
        if int(self.workers) < 1:
            raise DomainError("workers", f"must be >= 1, got {self.workers}")

    def with_overrides(self, **changes) -> SearchConfig:
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def child_seeds(self) -> List[np.random.SeedSequence]:
        return np.random.SeedSequence(int(self.seed)).spawn(int(self.restarts))


@dataclass
class SearchResult:
    """
    Best value over all restarts and the parameters that achieve it.

    Attributes:
        operation: Name of the search that produced the result.
        value: Best of per_restart_values (max or min per operation).
        argument: Explicit decoded parameters; the matching evaluate_* function
            reproduces `value` from them.
        per_restart_values: Final value of every restart, in restart order.
        converged: Whether the winning restart reached a polishing fixed point.
        seed: Root seed of the search.
        best_restart: Index of the winning restart.
        details: Operation-specific extras (e.g. reachability, C*_ac flag).
    """
    operation: str
    value: float
    argument: np.ndarray
    per_restart_values: List[float]
    converged: bool
    seed: int
    best_restart: int = 0
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "operation": self.operation,
            "value": float(self.value),
            "per_restart_values": [float(v) for v in self.per_restart_values],
            "seed": int(self.seed),
            "argument": [float(v) for v in np.asarray(self.argument).reshape(-1)],
            "converged": bool(self.converged),
            "best_restart": int(self.best_restart),
            "details": self.details,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def get_summary(self) -> str:
        values = np.asarray(self.per_restart_values, dtype=float)
        lines = [
            f"{self.operation}: value = {self.value:.12g} (restart {self.best_restart} "
            f"of {len(values)}, seed {self.seed})",
            f"Converged: {self.converged}",
        ]
        if values.size > 1:
            lines.append(f"Restart spread: min {values.min():.6g}, median {np.median(values):.6g}, "
                         f"max {values.max():.6g}")
        for key, val in self.details.items():
            lines.append(f"{key}: {val}")
        return "\n".join(lines)


@dataclass
class _RestartOutcome:
    value: float
    argument: np.ndarray
    converged: bool
    valid: bool = True


def _run_restarts(task: Callable[[int, np.random.SeedSequence], _RestartOutcome],
                  cfg: SearchConfig) -> List[_RestartOutcome]:
    seeds = cfg.child_seeds()
    if cfg.workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.workers)) as pool:
            return list(pool.map(task, range(len(seeds)), seeds))
    return [task(k, s) for k, s in enumerate(seeds)]


def _reduce(operation: str, outcomes: List[_RestartOutcome], cfg: SearchConfig,
            maximize: bool, details: Optional[Dict[str, Any]] = None) -> SearchResult:
    values = np.array([o.value for o in outcomes], dtype=float)
    valid = np.array([o.valid for o in outcomes])
    ranked = np.where(valid, values, -np.inf if maximize else np.inf) if valid.any() else values
    best = int(np.argmax(ranked) if maximize else np.argmin(ranked))
    winner = outcomes[best]
    result = SearchResult(
        operation=operation,
        value=float(winner.value),
        argument=np.asarray(winner.argument, dtype=float),
        per_restart_values=[float(v) for v in values],
        converged=bool(winner.converged and winner.valid),
        seed=int(cfg.seed),
        best_restart=best,
        details=dict(details or {}),
    )
    logger.info(f"{operation}: best value {result.value:.12g} at restart {best} of {len(outcomes)}")
    return result


# =============================================================================
# Parameter encodings
# =============================================================================

def _simplex(raw: np.ndarray) -> np.ndarray:
    sq = np.square(raw)
    total = sq.sum()
    if total <= 0:
        return np.full(raw.size, 1.0 / raw.size)
    return sq / total


def _stochastic(raw: np.ndarray, rows: int, cols: int) -> np.ndarray:
    sq = np.square(raw).reshape(rows, cols)
    sums = sq.sum(axis=0)
    safe = np.where(sums > 0, sums, 1.0)
    return np.where(sums > 0, sq / safe, 1.0 / rows)


def _normalize_columns(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, None)
    sums = s.sum(axis=0)
    return np.where(sums > 0, s / np.where(sums > 0, sums, 1.0), 1.0 / s.shape[0])


def _normalize_coin(c: np.ndarray) -> np.ndarray:
    c = np.clip(c, 0.0, None)
    total = c.sum()
    return c / total if total > 0 else np.full(c.size, 1.0 / c.size)


def _snap(values: np.ndarray, max_denominator: int = SNAP_DENOMINATOR) -> np.ndarray:
    flat = [float(Fraction(float(v)).limit_denominator(max_denominator)) for v in np.ravel(values)]
    return np.array(flat).reshape(np.shape(values))


def _offdiag_mask(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool).reshape(-1)


def _offdiag_pairs(n: int) -> List[Tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i != j]


# =============================================================================
# Classical strategies (coin + two stochastic maps)
# =============================================================================

@dataclass(frozen=True)
class _ClassicalLayout:
    """Raw vector = [coin (m*m), S_A (n x m), S_B (n x m)] before squaring."""
    m: int
    n: int

    @property
    def size(self) -> int:
        return self.m * self.m + 2 * self.n * self.m

    def decode(self, raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        mm, nm = self.m * self.m, self.n * self.m
        return (_simplex(raw[:mm]),
                _stochastic(raw[mm:mm + nm], self.n, self.m),
                _stochastic(raw[mm + nm:], self.n, self.m))

    def explicit(self, c: np.ndarray, s_a: np.ndarray, s_b: np.ndarray) -> np.ndarray:
        return np.concatenate([c, s_a.reshape(-1), s_b.reshape(-1)])

    def split(self, argument: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        arg = np.asarray(argument, dtype=float).reshape(-1)
        if arg.size != self.size:
            raise DomainError("argument", f"expected {self.size} entries for m={self.m}, n={self.n}, got {arg.size}")
        mm, nm = self.m * self.m, self.n * self.m
        return arg[:mm], arg[mm:mm + nm].reshape(self.n, self.m), arg[mm + nm:].reshape(self.n, self.m)


def _free_coin(c: np.ndarray, s_a: np.ndarray, s_b: np.ndarray) -> np.ndarray:
    return np.kron(s_a, s_b) @ c


def _payoff(c: np.ndarray, s_a: np.ndarray, s_b: np.ndarray, mask: np.ndarray) -> float:
    return float(np.min(_free_coin(c, s_a, s_b)[mask]))


def _scaled_step(fixed: np.ndarray, n: int) -> Optional[np.ndarray]:
    """
    Best partner X for a fixed factor F.

    Minimizes sum(F X^T) = sum_jk X[j, k] * colsum(F)[k] subject to
    F[i] . X[j] >= 1 for every i != j and X >= 0. The off-diagonal constraint
    set is symmetric in (i, j), so the same LP updates either factor.
    """
    m = fixed.shape[1]
    pairs = _offdiag_pairs(n)
    a_ub = np.zeros((len(pairs), n * m))
    for r, (i, j) in enumerate(pairs):
        a_ub[r, j * m:(j + 1) * m] = -fixed[i]
    lp = linprog(np.tile(fixed.sum(axis=0), n), A_ub=a_ub, b_ub=-np.ones(len(pairs)),
                 bounds=[(0.0, None)] * (n * m), method="highs", options=LP_OPTIONS)
    if not lp.success:
        logger.debug(f"Factor LP failed: {lp.message}")
        return None
    return np.clip(lp.x, 0.0, None).reshape(n, m)


def _scaled_total(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """sum(A B^T) / min off-diagonal entry, i.e. 1 / payoff."""
    p = (a @ b.T).reshape(-1)
    low = float(np.min(p[mask]))
    return float(p.sum()) / low if low > 0 else math.inf


def _alternate_factors(a: np.ndarray, b: np.ndarray, n: int, tol: float,
                       rounds: int = SEESAW_ROUNDS):
    """
    Alternate the two factor LPs. A step is kept only if the scaled total
    does not grow.

    Returns:
        (a, b, total, reached_fixed_point)
    """
    mask = _offdiag_mask(n)
    total = _scaled_total(a, b, mask)
    for _ in range(rounds):
        start = total
        new_b = _scaled_step(a, n)
        if new_b is not None:
            candidate = _scaled_total(a, new_b, mask)
            if candidate <= total:
                b, total = new_b, candidate
        new_a = _scaled_step(b, n)
        if new_a is not None:
            candidate = _scaled_total(new_a, b, mask)
            if candidate <= total:
                a, total = new_a, candidate
        if not math.isfinite(total):
            break
        if start - total <= tol * total:
            return a, b, total, True
    return a, b, total, False


def _strategy_from_factors(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonal coin and maps with S_A diag(w) S_B^T = A B^T / sum(A B^T)."""
    weights = a.sum(axis=0) * b.sum(axis=0)
    c = np.diag(weights / weights.sum()).reshape(-1)
    return c, _normalize_columns(a), _normalize_columns(b)


def _factors_from_strategy(c: np.ndarray, s_a: np.ndarray, s_b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    m = s_a.shape[1]
    return s_a @ c.reshape(m, m), np.array(s_b, dtype=float)


def seesaw_polish(c: np.ndarray, s_a: np.ndarray, s_b: np.ndarray, n: int,
                  tol: float = 1e-12, rounds: int = SEESAW_ROUNDS):
    """
    Polish a classical strategy by alternating the factor LPs from
    A = S_A C and B = S_B.

    The polished strategy uses a diagonal coin. It replaces the input only if
    its payoff is not lower, so the returned payoff is never below the
    starting one.

    Returns:
        (c, s_a, s_b, payoff, reached_fixed_point)
    """
    mask = _offdiag_mask(n)
    value = _payoff(c, s_a, s_b, mask)
    a, b = _factors_from_strategy(c, s_a, s_b)
    a, b, total, fixed = _alternate_factors(a, b, n, tol, rounds)
    if not math.isfinite(total):
        return c, s_a, s_b, value, False
    c2, a2, b2 = _strategy_from_factors(a, b)
    polished = _payoff(c2, a2, b2, mask)
    if polished >= value:
        return c2, a2, b2, polished, fixed
    return c, s_a, s_b, value, fixed


def _snap_strategy(c, s_a, s_b, value, mask):
    c2 = _normalize_coin(_snap(c))
    a2 = _normalize_columns(_snap(s_a))
    b2 = _normalize_columns(_snap(s_b))
    snapped = _payoff(c2, a2, b2, mask)
    if snapped >= value - SNAP_SLACK:
        return c2, a2, b2, snapped
    return c, s_a, s_b, value


def _nelder_mead_options(cfg: SearchConfig) -> Dict[str, Any]:
    return {
        "maxiter": int(cfg.max_iterations),
        "xatol": float(cfg.convergence_tol),
        "fatol": float(cfg.convergence_tol),
        "adaptive": True,
    }


def _check_classical_dims(m: int, n: int) -> None:
    if m < 2:
        raise DomainError("m", f"shared coin needs at least 2 faces, got {m}")
    if n < 2:
        raise DomainError("n", f"game needs at least 2 restaurants, got {n}")
    if m > n:
        raise DomainError("m", f"coin faces m={m} exceed restaurants n={n}")


def pattern_starts(m: int, n: int, limit: int) -> List[np.ndarray]:
    """
    The first `limit` 0/1 starting factors A (n x m, no zero row).

    Patterns are multisets of rows ordered by their number of ones, so the
    sparse factors behind the known optima come first. Returns an empty list
    when there are more than MAX_PATTERN_STARTS patterns.
    """
    rows = [r for r in itertools.product((0.0, 1.0), repeat=m) if any(r)]
    if math.comb(len(rows) + n - 1, n) > MAX_PATTERN_STARTS:
        return []
    patterns = sorted(itertools.combinations_with_replacement(rows, n), key=lambda p: sum(map(sum, p)))
    return [np.array(p) for p in patterns[:max(0, int(limit))]]


def _refine_classical(result: SearchResult, layout: _ClassicalLayout, mask: np.ndarray,
                      cfg: SearchConfig) -> None:
    """Nelder-Mead and factor alternation from the winning strategy."""
    c, s_a, s_b = layout.split(result.argument)
    x0 = layout.explicit(np.sqrt(c), np.sqrt(s_a), np.sqrt(s_b))
    nm = minimize(lambda raw: -_payoff(*layout.decode(raw), mask), x0,
                  method="Nelder-Mead", options=_nelder_mead_options(cfg))
    c, s_a, s_b, value, fixed = seesaw_polish(*layout.decode(nm.x), layout.n, tol=cfg.convergence_tol)
    c, s_a, s_b, value = _snap_strategy(c, s_a, s_b, value, mask)
    improved = value > result.value
    if improved:
        logger.info(f"{result.operation}: refinement raised {result.value:.12g} to {value:.12g}")
        result.value = value
        result.argument = layout.explicit(c, s_a, s_b)
        result.per_restart_values[result.best_restart] = value
        result.converged = fixed
    result.details["refined"] = improved


def max_classical_payoff(m: int, n: int, cfg: SearchConfig) -> SearchResult:
    """
    Best G(n) payoff reachable from a shared m x m coin by local m->n maps.

    Restart k starts from the k-th 0/1 pattern while patterns last and from
    a random positive factor afterwards.

    Raises:
        DomainError: m > n or either dimension below 2.
    """
    _check_classical_dims(m, n)
    layout = _ClassicalLayout(m, n)
    mask = _offdiag_mask(n)
    patterns = pattern_starts(m, n, cfg.restarts)

    def task(index: int, seed: np.random.SeedSequence) -> _RestartOutcome:
        if index < len(patterns):
            a = patterns[index]
        else:
            a = np.random.default_rng(seed).uniform(0.0, 1.0, (n, m))
        a, b, _, fixed = _alternate_factors(a, np.ones((n, m)), n, cfg.convergence_tol)
        c, s_a, s_b = _strategy_from_factors(a, b)
        c, s_a, s_b, value = _snap_strategy(c, s_a, s_b, _payoff(c, s_a, s_b, mask), mask)
        logger.debug(f"classical ({m},{n}) restart {index}: {value:.12g}")
        return _RestartOutcome(value, layout.explicit(c, s_a, s_b), fixed)

    result = _reduce(f"max_classical_payoff(m={m}, n={n})", _run_restarts(task, cfg), cfg, maximize=True)
    _refine_classical(result, layout, mask, cfg)
    result.details["upper_bound"] = max_payoff_bound(n)
    result.details["pattern_starts"] = len(patterns)
    return result


def evaluate_classical_payoff(argument: Sequence[float], m: int, n: int) -> float:
    """G(n) payoff of an explicit [coin, S_A, S_B] vector."""
    c, s_a, s_b = _ClassicalLayout(m, n).split(argument)
    return _payoff(c, s_a, s_b, _offdiag_mask(n))


def classical_strategy_from_argument(argument: Sequence[float], m: int, n: int
                                     ) -> Tuple[CoinState, StochasticMap, StochasticMap]:
    """Validated coin and maps behind a max_classical_payoff argument."""
    c, s_a, s_b = _ClassicalLayout(m, n).split(argument)
    return CoinState(m, m, c, tol=1e-9), StochasticMap(s_a, tol=1e-9), StochasticMap(s_b, tol=1e-9)


# =============================================================================
# Projective-simulable strategies on two qubits
# =============================================================================

_TRIL = np.tril_indices(4, -1)


def _projectors(direction: np.ndarray) -> np.ndarray:
    n_sigma = bloch_operator(direction)
    return np.stack([0.5 * (IDENTITY_2 + n_sigma), 0.5 * (IDENTITY_2 - n_sigma)])


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    return np.array([0.0, 0.0, 1.0]) if norm < 1e-12 else v / norm


def _basis_unitary(direction: np.ndarray) -> np.ndarray:
    """Columns |+n>, |-n>."""
    _, vecs = np.linalg.eigh(bloch_operator(direction))
    return vecs[:, ::-1]


@dataclass(frozen=True)
class _ProjectiveLayout:
    """Raw vector = [Cholesky factor (16), n_A (3), n_B (3), S_A (n x 2), S_B (n x 2)]."""
    n: int

    @property
    def size(self) -> int:
        return 16 + 6 + 4 * self.n

    @property
    def explicit_size(self) -> int:
        return 32 + 6 + 4 * self.n

    def decode(self, raw: np.ndarray):
        factor = np.zeros((4, 4), dtype=complex)
        factor[np.diag_indices(4)] = raw[:4]
        factor[_TRIL] = raw[4:10] + 1j * raw[10:16]
        rho = factor @ np.conjugate(factor).T
        trace = float(np.real(np.trace(rho)))
        rho = rho / trace if trace > 0 else np.eye(4, dtype=complex) / 4.0
        n_a = _unit(raw[16:19])
        n_b = _unit(raw[19:22])
        k = 2 * self.n
        s_a = _stochastic(raw[22:22 + k], self.n, 2)
        s_b = _stochastic(raw[22 + k:], self.n, 2)
        return rho, n_a, n_b, s_a, s_b

    def explicit(self, rho, n_a, n_b, s_a, s_b) -> np.ndarray:
        return np.concatenate([rho.real.reshape(-1), rho.imag.reshape(-1), n_a, n_b,
                               s_a.reshape(-1), s_b.reshape(-1)])

    def split(self, argument: Sequence[float]):
        arg = np.asarray(argument, dtype=float).reshape(-1)
        if arg.size != self.explicit_size:
            raise DomainError("argument", f"expected {self.explicit_size} entries for n={self.n}, got {arg.size}")
        rho = (arg[:16] + 1j * arg[16:32]).reshape(4, 4)
        k = 2 * self.n
        return (rho, arg[32:35], arg[35:38],
                arg[38:38 + k].reshape(self.n, 2), arg[38 + k:].reshape(self.n, 2))


def _basis_coin(rho: np.ndarray, n_a: np.ndarray, n_b: np.ndarray) -> np.ndarray:
    return born_probabilities(rho, _projectors(n_a), _projectors(n_b)).reshape(-1)


def _projective_payoff(rho, n_a, n_b, s_a, s_b, mask) -> float:
    return _payoff(_basis_coin(rho, n_a, n_b), s_a, s_b, mask)


def max_projective_simulable_payoff(n: int, cfg: SearchConfig) -> SearchResult:
    """
    Best G(n) payoff over two-qubit states and PS(2) measurements.

    Each side measures one projective basis (a Bloch direction) and
    post-processes the bit with a 2->n stochastic map. The polish step
    diagonalizes the state in the chosen product basis, polishes that
    diagonal with factor alternation and rebuilds the state, so the search
    never leaves the feasible set.
    """
    if n < 3:
        raise DomainError("n", f"PS(2) bound is defined for n >= 3, got {n}")
    layout = _ProjectiveLayout(n)
    mask = _offdiag_mask(n)

    def negative_payoff(raw):
        return -_projective_payoff(*layout.decode(raw), mask)

    def task(index: int, seed: np.random.SeedSequence) -> _RestartOutcome:
        rng = np.random.default_rng(seed)
        x0 = rng.standard_normal(layout.size)
        nm = minimize(negative_payoff, x0, method="Nelder-Mead", options=_nelder_mead_options(cfg))
        rho, n_a, n_b, s_a, s_b = layout.decode(nm.x)

        c = _normalize_coin(_basis_coin(rho, n_a, n_b))
        c, s_a, s_b, value, fixed = seesaw_polish(c, s_a, s_b, n, tol=cfg.convergence_tol)
        c, s_a, s_b, value = _snap_strategy(c, s_a, s_b, value, mask)
        u = np.kron(_basis_unitary(n_a), _basis_unitary(n_b))
        rho = u @ np.diag(c).astype(complex) @ np.conjugate(u).T

        value = _projective_payoff(rho, n_a, n_b, s_a, s_b, mask)
        logger.debug(f"PS(2) n={n} restart {index}: {value:.12g}")
        return _RestartOutcome(value, layout.explicit(rho, n_a, n_b, s_a, s_b), fixed)

    return _reduce(f"max_projective_simulable_payoff(n={n})", _run_restarts(task, cfg), cfg, maximize=True)


def evaluate_projective_simulable(argument: Sequence[float], n: int) -> float:
    """
    Payoff of an explicit [Re rho (16), Im rho (16), n_A, n_B, S_A, S_B] vector,
    computed through the full Born rule with e_k = sum_s S[k, s] pi_s.
    """
    rho, n_a, n_b, s_a, s_b = _ProjectiveLayout(n).split(argument)
    e_a = np.einsum("ks,sxy->kxy", s_a, _projectors(_unit(n_a)))
    e_b = np.einsum("ks,sxy->kxy", s_b, _projectors(_unit(n_b)))
    probs = born_probabilities(rho, e_a, e_b).reshape(-1)
    return float(np.min(probs[_offdiag_mask(n)]))


# =============================================================================
# Coin feasibility distance
# =============================================================================

def coin_feasibility_distance(target: CoinState, m: int, cfg: SearchConfig) -> SearchResult:
    """
    Euclidean distance from `target` to the set (S_A (x) S_B) C(m).

    Each restart fits nonnegative factors A, B (d x m) to the target with
    bounded trust-region least squares and an analytic Jacobian; a penalty
    row keeps sum(A B^T) near 1. The fit is turned into a diagonal coin and
    maps, so the reported distance is that of an explicit normalized strategy.
    A distance <= 1e-8 is reported as reachable.
    """
    if not target.is_square:
        raise DomainError("target", f"expected a square coin, got {target.d_a}x{target.d_b}")
    d = target.d_a
    if m < 1 or m > d:
        raise DomainError("m", f"need 1 <= m <= {d}, got {m}")
    layout = _ClassicalLayout(m, d)
    goal = np.asarray(target.probs, dtype=float)
    dm = d * m
    eye = np.eye(d)

    def split(x):
        return x[:dm].reshape(d, m), x[dm:].reshape(d, m)

    def residual(x):
        a, b = split(x)
        p = a @ b.T
        return np.append(p.reshape(-1) - goal, SUM_PENALTY * (p.sum() - 1.0))

    def jacobian(x):
        a, b = split(x)
        jac = np.empty((d * d + 1, 2 * dm))
        jac[:-1, :dm] = np.einsum("il,jk->ijlk", eye, b).reshape(d * d, dm)
        jac[:-1, dm:] = np.einsum("jl,ik->ijlk", eye, a).reshape(d * d, dm)
        jac[-1, :dm] = SUM_PENALTY * np.tile(b.sum(axis=0), d)
        jac[-1, dm:] = SUM_PENALTY * np.tile(a.sum(axis=0), d)
        return jac

    def task(index: int, seed: np.random.SeedSequence) -> _RestartOutcome:
        rng = np.random.default_rng(seed)
        x0 = rng.uniform(0.0, 1.0, 2 * dm)
        x0 /= math.sqrt(float((x0[:dm].reshape(d, m) @ x0[dm:].reshape(d, m).T).sum()))
        ls = least_squares(residual, x0, jac=jacobian, bounds=(0.0, np.inf), method="trf",
                           xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=int(cfg.max_iterations))
        a, b = split(np.clip(ls.x, 0.0, None))
        if float((a @ b.T).sum()) <= 0:
            a, b = np.ones((d, m)), np.ones((d, m))
        c, s_a, s_b = _strategy_from_factors(a, b)
        value = float(np.linalg.norm(_free_coin(c, s_a, s_b) - goal))

        c2, a2, b2 = _normalize_coin(_snap(c)), _normalize_columns(_snap(s_a)), _normalize_columns(_snap(s_b))
        snapped = float(np.linalg.norm(_free_coin(c2, a2, b2) - goal))
        if snapped <= value + SNAP_SLACK:
            c, s_a, s_b, value = c2, a2, b2, snapped
        logger.debug(f"feasibility m={m} restart {index}: {value:.3e}")
        return _RestartOutcome(value, layout.explicit(c, s_a, s_b), bool(ls.success))

    outcomes = _run_restarts(task, cfg)
    result = _reduce(f"coin_feasibility_distance(m={m}, d={d})", outcomes, cfg, maximize=False)
    result.details["reachable"] = bool(result.value <= REACHABLE_TOL)
    return result


def evaluate_feasibility_distance(argument: Sequence[float], target: CoinState, m: int) -> float:
    """||(S_A (x) S_B) c - target|| for an explicit [coin, S_A, S_B] vector."""
    c, s_a, s_b = _ClassicalLayout(m, target.d_a).split(argument)
    return float(np.linalg.norm(_free_coin(c, s_a, s_b) - target.probs))


# =============================================================================
# Diagonal-mass search on phi+_d
# =============================================================================

def _rank_one_povm(raw: np.ndarray, d: int, n: int) -> np.ndarray:
    """
    n-1 rank-one elements |v><v| plus the completing element I - sum.

    When sum |v><v| has an eigenvalue above 1 every element is divided by
    it, so the completing element is always positive semidefinite.
    """
    parts = raw.reshape(n - 1, 2, d)
    vecs = parts[:, 0, :] + 1j * parts[:, 1, :]
    elements = np.einsum("ka,kb->kab", vecs, np.conjugate(vecs))
    top = float(np.linalg.eigvalsh(elements.sum(axis=0))[-1])
    if top > 1.0:
        elements = elements / top
    last = np.eye(d, dtype=complex) - elements.sum(axis=0)
    return np.concatenate([elements, last[None]], axis=0)


def _diagonal_mass(rho: np.ndarray, e_a: np.ndarray, e_b: np.ndarray) -> float:
    return float(np.trace(born_probabilities(rho, e_a, e_b)))


def min_diagonal_mass(d_local: int, n_outcomes: int, cfg: SearchConfig,
                      offdiag_floor: float = 0.0) -> SearchResult:
    """
    Minimize sum_i P(ii) for phi+_d over pairs of n-outcome POVMs.

    Each POVM has n-1 free rank-one elements and a last element completing
    the identity (kept positive by rescaling). The objective is the diagonal
    mass itself; with offdiag_floor > 0 the squared shortfall of every
    off-diagonal probability below the floor is added, which steers the
    search toward C*_ac(d) coins. Nelder-Mead is followed by least squares on
    the residuals sqrt(P(ii)), whose squared norm is the same objective; the
    better of the two is kept. Restarts whose final POVMs are not valid are
    reported but never win unless no restart is valid.
    """
    if d_local not in (2, 3):
        raise DomainError("d_local", f"must be 2 or 3, got {d_local}")
    if n_outcomes < d_local:
        raise DomainError("n_outcomes", f"must be >= d_local={d_local}, got {n_outcomes}")
    if offdiag_floor < 0:
        raise DomainError("offdiag_floor", f"must be nonnegative, got {offdiag_floor}")

    d, n = d_local, n_outcomes
    rho = phi_plus_d(d).projector()
    half = 2 * d * (n - 1)
    mask = _offdiag_mask(n)

    def decode(raw):
        return _rank_one_povm(raw[:half], d, n), _rank_one_povm(raw[half:], d, n)

    def residual(raw):
        probs = born_probabilities(rho, *decode(raw))
        terms = [np.sqrt(np.clip(np.diagonal(probs), 0.0, None))]
        if offdiag_floor > 0:
            terms.append(np.maximum(0.0, offdiag_floor - probs.reshape(-1)[mask]))
        return np.concatenate(terms)

    def objective(raw):
        r = residual(raw)
        return float(r @ r)

    def task(index: int, seed: np.random.SeedSequence) -> _RestartOutcome:
        rng = np.random.default_rng(seed)
        x0 = rng.standard_normal(2 * half) / math.sqrt(2.0 * d * n)
        nm = minimize(objective, x0, method="Nelder-Mead", options=_nelder_mead_options(cfg))
        ls = least_squares(residual, nm.x, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                           max_nfev=int(cfg.max_iterations))
        best = ls.x if objective(ls.x) <= objective(nm.x) else nm.x
        e_a, e_b = decode(best)
        lowest = min(float(np.linalg.eigvalsh(e_a[-1])[0]), float(np.linalg.eigvalsh(e_b[-1])[0]))
        valid = lowest >= -REACHABLE_TOL
        value = _diagonal_mass(rho, e_a, e_b)
        logger.debug(f"diag d={d} n={n} restart {index}: {value:.3e} (valid={valid})")
        argument = np.concatenate([e_a.real.reshape(-1), e_a.imag.reshape(-1),
                                   e_b.real.reshape(-1), e_b.imag.reshape(-1)])
        return _RestartOutcome(value, argument, bool(ls.success or nm.success), valid=valid)

    outcomes = _run_restarts(task, cfg)
    if not any(o.valid for o in outcomes):
        logger.warning(f"min_diagonal_mass(d={d}, n={n}): no restart produced valid POVMs")
    result = _reduce(f"min_diagonal_mass(d={d}, n={n})", outcomes, cfg, maximize=False)

    e_a, e_b = diagonal_search_povms(result.argument, d, n)
    probs = np.clip(born_probabilities(rho, e_a, e_b), 0.0, None)
    coin = CoinState(n, n, (probs / probs.sum()).reshape(-1), tol=1e-9)
    result.details.update({
        "offdiag_floor": float(offdiag_floor),
        "valid_restarts": int(sum(o.valid for o in outcomes)),
        "is_star_anticorrelated": is_star_anticorrelated(coin, tol=REACHABLE_TOL),
        "min_offdiag": float(coin.off_diagonal().min()),
    })
    return result


def diagonal_search_povms(argument: Sequence[float], d: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """(E_A, E_B) as (n, d, d) arrays from a min_diagonal_mass argument."""
    arg = np.asarray(argument, dtype=float).reshape(-1)
    block = n * d * d
    if arg.size != 4 * block:
        raise DomainError("argument", f"expected {4 * block} entries for d={d}, n={n}, got {arg.size}")
    e_a = (arg[:block] + 1j * arg[block:2 * block]).reshape(n, d, d)
    e_b = (arg[2 * block:3 * block] + 1j * arg[3 * block:]).reshape(n, d, d)
    return e_a, e_b


def evaluate_diagonal_mass(argument: Sequence[float], d: int, n: int) -> float:
    """sum_i P(ii) of phi+_d for the POVM pair stored in `argument`."""
    e_a, e_b = diagonal_search_povms(argument, d, n)
    return _diagonal_mass(phi_plus_d(d).projector(), e_a, e_b)
