"""
Bridge - From Quantum Strategies to Classical Coins

Turns a shared state plus one POVM per party into the joint outcome
distribution (Born rule), embeds classical strategies into quantum form with
diagonal states and diagonal POVMs, and provides the closed-form noisy
payoff of the trine game.

PAIRING CONVENTIONS:
    rotate_state           psi- source, identical POVMs on both sides.
    conjugate_measurement  psi+ source, Bob measures sigma_z e_i sigma_z.
                           This is how the experiment runs: the photon source
                           emits psi+ and the measurement is reprogrammed
                           instead of rotating the state.
    Both give the same coin for the trine (n=3) and tetrahedral SIC (n=4).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from coinspace import CoinState, StochasticMap, game_payoff
from errors import BornRuleError, DomainError
from measurement import Povm, PovmKind, canonical_povm, noisy_time_averaged_povm, pauli_conjugate
from quantum_core import (
    DensityOperator,
    StateKind,
    bell_state,
    canonical_state,
)

logger = logging.getLogger(__name__)

BORN_CLIP_TOL = 1e-12
BORN_RENORM_TOL = 1e-10


@dataclass(frozen=True)
class QuantumStrategy:
    """
    Shared state and the two local measurements.

    Attributes:
        state: Density operator on C^k_a (x) C^k_b.
        povm_a: Alice's POVM on C^k_a.
        povm_b: Bob's POVM on C^k_b.
    """
    state: DensityOperator
    povm_a: Povm
    povm_b: Povm

    def __post_init__(self):
        expected = self.povm_a.dim * self.povm_b.dim
        if self.state.dim != expected:
            raise DomainError(
                "strategy",
                f"state dimension {self.state.dim} does not match POVM dimensions "
                f"{self.povm_a.dim} x {self.povm_b.dim}",
            )

    @property
    def outcomes(self):
        return self.povm_a.n_outcomes, self.povm_b.n_outcomes


def born_probabilities(rho: np.ndarray, elements_a: np.ndarray, elements_b: np.ndarray) -> np.ndarray:
    """
    Raw P(ij) = Tr[rho (E_i (x) F_j)] as an (n_a, n_b) real array.

    No validation; the optimizer calls this in its inner loop.
    """
    k_a = elements_a.shape[-1]
    k_b = elements_b.shape[-1]
    r = rho.reshape(k_a, k_b, k_a, k_b)
    return np.real(np.einsum("acbd,iba,jdc->ij", r, elements_a, elements_b))


def born_coin(strategy: QuantumStrategy) -> CoinState:
    """
    Joint outcome distribution of a quantum strategy.

    Negative entries down to -1e-12 are floating-point noise on exact zeros
    and are clipped; anything below that means the inputs were not a valid
    state and POVMs.
    """
    probs = born_probabilities(strategy.state.matrix, strategy.povm_a.as_array(),
                               strategy.povm_b.as_array())
    lowest = float(probs.min())
    if lowest < -BORN_CLIP_TOL:
        raise BornRuleError("Born-rule coin", f"probability {lowest:.3e} is below -{BORN_CLIP_TOL:.0e}")
    probs = np.clip(probs, 0.0, None)
    total = float(probs.sum())
    if abs(total - 1.0) <= BORN_RENORM_TOL:
        probs = probs / total
    return CoinState(probs.shape[0], probs.shape[1], probs.reshape(-1))


def ideal_noisy_payoff(p: float) -> float:
    """(2 + p) / 18"""
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise DomainError("p", f"must lie in [0, 1], got {p!r}")
    return (2.0 + p) / 18.0


def classical_embedding(coin: CoinState, s_a: StochasticMap, s_b: StochasticMap) -> QuantumStrategy:
    """
    Quantum realization of a classical strategy.

    rho = sum_ij P(ij) |ij><ij| and e^k = sum_i S[k, i] |i><i| on each side, so
    born_coin of the result is apply_free_operation(coin, s_a, s_b).
    """
    if s_a.from_dim != coin.d_a or s_b.from_dim != coin.d_b:
        raise DomainError(
            "maps",
            f"maps expect {s_a.from_dim}x{s_b.from_dim} faces, coin has {coin.d_a}x{coin.d_b}",
        )
    rho = DensityOperator(np.diag(coin.probs).astype(complex), label="embedded coin")
    povm_a = Povm(tuple(np.diag(row).astype(complex) for row in s_a.entries))
    povm_b = Povm(tuple(np.diag(row).astype(complex) for row in s_b.entries))
    return QuantumStrategy(rho, povm_a, povm_b)


# =============================================================================
# Game strategies
# =============================================================================

class PairingConvention(Enum):
    ROTATE_STATE = "rotate_state"
    CONJUGATE_MEASUREMENT = "conjugate_measurement"


_GAME_POVMS = {3: PovmKind.TRINE, 4: PovmKind.TETRA_SIC}


def game_povm(n: int) -> Povm:
    """Trine for n = 3, tetrahedral SIC for n = 4."""
    if n not in _GAME_POVMS:
        raise DomainError("n", f"quantum game strategies exist for n in {sorted(_GAME_POVMS)}, got {n}")
    return canonical_povm(_GAME_POVMS[n])


def _bob_povm(base: Povm, convention: PairingConvention) -> Povm:
    if convention is PairingConvention.CONJUGATE_MEASUREMENT:
        return pauli_conjugate(base, "z")
    return base


def game_strategy(n: int, p: float = 1.0,
                  convention: Union[PairingConvention, str] = PairingConvention.CONJUGATE_MEASUREMENT
                  ) -> QuantumStrategy:
    """Werner-noised Bell state with the noiseless G(n) measurements."""
    convention = PairingConvention(convention)
    base = game_povm(n)
    kind = (StateKind.WERNER_PSI_PLUS if convention is PairingConvention.CONJUGATE_MEASUREMENT
            else StateKind.WERNER)
    return QuantumStrategy(canonical_state(kind, p=p), base, _bob_povm(base, convention))


def noisy_measurement_strategy(n: int, p: float,
                               convention: Union[PairingConvention, str] = PairingConvention.CONJUGATE_MEASUREMENT
                               ) -> QuantumStrategy:
    """Pure Bell state, Alice's POVM replaced by its time-averaged noisy version."""
    convention = PairingConvention(convention)
    base = game_povm(n)
    kind = (StateKind.PSI_PLUS if convention is PairingConvention.CONJUGATE_MEASUREMENT
            else StateKind.SINGLET)
    return QuantumStrategy(canonical_state(kind), noisy_time_averaged_povm(base, p),
                           _bob_povm(base, convention))


def convention_for_state(rho: DensityOperator) -> PairingConvention:
    """psi+-like states pair with conjugate_measurement, psi--like with rotate_state."""
    if rho.dim != 4:
        raise DomainError("rho", f"expected a two-qubit state, got dim {rho.dim}")
    f_plus = rho.fidelity(bell_state(StateKind.PSI_PLUS))
    f_minus = rho.fidelity(bell_state(StateKind.SINGLET))
    return (PairingConvention.CONJUGATE_MEASUREMENT if f_plus > f_minus
            else PairingConvention.ROTATE_STATE)


def predict_payoff(rho: DensityOperator, p: float = 1.0, n: int = 3,
                   convention: Optional[Union[PairingConvention, str]] = None) -> float:
    """
    Payoff of the G(n) strategy run on `rho` with depolarizing strength p.

    The noise enters through the time-averaged POVM on Alice's side, exactly
    as the experiment applies it.
    """
    convention = convention_for_state(rho) if convention is None else PairingConvention(convention)
    base = game_povm(n)
    strategy = QuantumStrategy(rho, noisy_time_averaged_povm(base, p), _bob_povm(base, convention))
    return game_payoff(born_coin(strategy))
