"""
Run configuration for the coin certifier.

Loaded from configs/certifier_parameters.json. The file may carry `//` and
`/* */` comments; they are stripped before parsing. Missing keys fall back to
the dataclass defaults, and unknown enum values log a warning and fall back
as well.

Seed precedence (highest first): CLI flag, COINCERT_SEED, config file, default.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from bridge import PairingConvention
from errors import FileFormatError
from optimizer import SearchConfig

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "COINCERT_SEED"
DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "configs" / "certifier_parameters.json"


@dataclass
class SearchBudget:
    restarts: int = 1000
    feasibility_restarts: int = 10000
    max_iterations: int = 2000
    convergence_tol: float = 1e-10
    workers: int = 1


@dataclass
class SimulabilitySettings:
    grid_size: int = 10000
    tolerance: float = 1e-6


@dataclass
class ExperimentSettings:
    total_time_s: float = 3600.0
    pair_rate_hz: float = 2.0
    bootstrap_resamples: int = 2000
    percentiles: Tuple[float, float] = (16.0, 84.0)


@dataclass
class SweepSettings:
    p_start: float = 0.0
    p_end: float = 1.0
    p_step: float = 0.05
    convention: PairingConvention = PairingConvention.CONJUGATE_MEASUREMENT


@dataclass
class CertifierParameters:
    """
    User-configurable settings shared by every command.

    Attributes:
        default_seed: Seed used when neither a flag nor COINCERT_SEED is given.
        classical_threshold: Payoff the bootstrap interval must clear (R^C(2)_max(3)).
        search: Restart budgets and Nelder-Mead tolerances.
        simulability: Direction grid and decision tolerance.
        experiment: Acquisition and bootstrap defaults.
        sweep: Noise grid and pairing convention for `sweep`.
        significant_digits: Digits for every number written by the CLI.
        source: File the parameters were loaded from, if any.
    """
    default_seed: int = 0
    classical_threshold: float = 0.125
    search: SearchBudget = field(default_factory=SearchBudget)
    simulability: SimulabilitySettings = field(default_factory=SimulabilitySettings)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    significant_digits: int = 12
    source: Optional[Path] = None

    @classmethod
    def from_file(cls, path: Path) -> CertifierParameters:
        """Load parameters from a JSON file (with comment support)."""
        path = Path(path)
        with open(path, "r", encoding="utf-8") as f:
            content = f.read()

        content = re.sub(r"//.*?$", "", content, flags=re.MULTILINE)
        content = re.sub(r"/\*.*?\*/", "", content, flags=re.DOTALL)
        try:
            data: Dict[str, Any] = json.loads(content)
        except json.JSONDecodeError as e:
            raise FileFormatError(path, f"invalid JSON at line {e.lineno}: {e.msg}") from e

        search = data.get("search", {})
        sim = data.get("simulability", {})
        exp = data.get("experiment", {})
        sweep = data.get("sweep", {})
        output = data.get("output", {})

        convention_str = sweep.get("convention", PairingConvention.CONJUGATE_MEASUREMENT.value)
        try:
            convention = PairingConvention(convention_str)
        except ValueError:
            logger.warning(f"Unknown pairing convention '{convention_str}', using conjugate_measurement")
            convention = PairingConvention.CONJUGATE_MEASUREMENT

        defaults = cls()
        return cls(
            default_seed=int(data.get("default_seed", defaults.default_seed)),
            classical_threshold=float(data.get("classical_threshold", defaults.classical_threshold)),
            search=SearchBudget(
                restarts=int(search.get("restarts", defaults.search.restarts)),
                feasibility_restarts=int(search.get("feasibility_restarts", defaults.search.feasibility_restarts)),
                max_iterations=int(search.get("max_iterations", defaults.search.max_iterations)),
                convergence_tol=float(search.get("convergence_tol", defaults.search.convergence_tol)),
                workers=int(search.get("workers", defaults.search.workers)),
            ),
            simulability=SimulabilitySettings(
                grid_size=int(sim.get("grid_size", defaults.simulability.grid_size)),
                tolerance=float(sim.get("tolerance", defaults.simulability.tolerance)),
            ),
            experiment=ExperimentSettings(
                total_time_s=float(exp.get("total_time_s", defaults.experiment.total_time_s)),
                pair_rate_hz=float(exp.get("pair_rate_hz", defaults.experiment.pair_rate_hz)),
                bootstrap_resamples=int(exp.get("bootstrap_resamples", defaults.experiment.bootstrap_resamples)),
                percentiles=tuple(float(x) for x in exp.get("percentiles", defaults.experiment.percentiles)),
            ),
            sweep=SweepSettings(
                p_start=float(sweep.get("p_start", defaults.sweep.p_start)),
                p_end=float(sweep.get("p_end", defaults.sweep.p_end)),
                p_step=float(sweep.get("p_step", defaults.sweep.p_step)),
                convention=convention,
            ),
            significant_digits=int(output.get("significant_digits", defaults.significant_digits)),
            source=path,
        )

    @classmethod
    def defaults(cls) -> CertifierParameters:
        return cls()

    @classmethod
    def load(cls, path: Optional[Path] = None) -> CertifierParameters:
        """Explicit path, else the shipped config if present, else defaults."""
        if path is not None:
            params = cls.from_file(path)
            logger.info(f"Loaded configuration from {path}")
            return params
        if DEFAULT_CONFIG_PATH.exists():
            params = cls.from_file(DEFAULT_CONFIG_PATH)
            logger.debug(f"Loaded configuration from {DEFAULT_CONFIG_PATH}")
            return params
        logger.warning(f"No configuration at {DEFAULT_CONFIG_PATH}, using built-in defaults")
        return cls.defaults()

    def effective_seed(self, flag: Optional[int] = None) -> int:
        if flag is not None:
            return int(flag)
        env = os.environ.get(SEED_ENV_VAR)
        if env not in (None, ""):
            try:
                return int(env)
            except ValueError:
                logger.warning(f"Ignoring non-integer {SEED_ENV_VAR}={env!r}")
        return int(self.default_seed)

    def search_config(self, seed: int, restarts: Optional[int] = None,
                      feasibility: bool = False) -> SearchConfig:
        budget = self.search.feasibility_restarts if feasibility else self.search.restarts
        return SearchConfig(
            restarts=int(restarts if restarts is not None else budget),
            seed=int(seed),
            max_iterations=self.search.max_iterations,
            convergence_tol=self.search.convergence_tol,
            workers=self.search.workers,
        )

    def fmt(self, value: float) -> str:
        return f"{float(value):.{self.significant_digits}g}"
