"""
Coin Certifier - Command-line Interface

Reproducible runs for the correlated-coin game: payoff sweeps, classical and
projective-simulable bounds, feasibility and diagonal searches, simulated
coincidence counts and their certification.

Usage:
    python coincert.py sweep --out sweep.csv
    python coincert.py sweep --state file --state-file ../data/samples/density_psi_plus_f097.json --out sweep.csv
    python coincert.py classical-bound --m 2 --n 3 --restarts 1000
    python coincert.py ps-bound --n 3 --restarts 1000
    python coincert.py feasibility --target ac3 --m 2 --restarts 10000
    python coincert.py diag-search --d-local 2 --n-outcomes 3
    python coincert.py simulability --povm trine
    python coincert.py simulate --p 1.0 --time-s 3600 --rate-hz 2.0 --seed 7 --out counts.csv
    python coincert.py certify counts.csv --resamples 2000 --seed 7
    python coincert.py validate povm ../data/samples/trine_povm.json

Exit codes:
    0  success / advantage certified
    2  valid run, advantage not certified
    1  input, configuration or file error
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from bridge import PairingConvention, convention_for_state, game_strategy, ideal_noisy_payoff, predict_payoff
from coinspace import CoinKind, canonical_coin, one_eighth_coin, read_coin_csv
from errors import CertifierError, DomainError
from experiment import (
    AcquisitionPlan,
    bootstrap_payoff_interval,
    ingest_density_matrix,
    read_counts_csv,
    simulate_counts,
    write_counts_csv,
)
from measurement import PovmKind, canonical_povm, projective_simulability, read_povm_json
from optimizer import (
    SearchConfig,
    coin_feasibility_distance,
    max_classical_payoff,
    max_projective_simulable_payoff,
    min_diagonal_mass,
)
from parameters import CertifierParameters
from quantum_core import canonical_state
from run_manifest import RunManifest, write_json_with_manifest, write_manifest_sidecar

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CERTIFIED = 2

SWEEP_COLUMNS = ["p", "ideal_payoff", "model_payoff", "classical_bound"]
FEASIBILITY_TARGETS = ["ac3", "ac4", "one_eighth", "uniform3", "uniform4"]
GRID_SLACK = 1e-9
POSITIONAL_ARGS = {"certify": ("counts",), "validate": ("target", "path")}


# =============================================================================
# Helpers
# =============================================================================

def _rounded(value: Any, digits: int) -> Any:
    """Round every float in a JSON-like structure to `digits` significant digits."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, (float, np.floating)):
        return float(f"{float(value):.{digits}g}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, dict):
        return {k: _rounded(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_rounded(v, digits) for v in value]
    return value


def _emit(payload: Dict[str, Any], params: CertifierParameters) -> None:
    print(json.dumps(_rounded(payload, params.significant_digits), indent=2))


def _manifest(args: argparse.Namespace, seed: Optional[int], params: CertifierParameters,
              settings: Optional[Dict[str, Any]] = None, **resolved: Any) -> RunManifest:
    """Manifest with every None flag replaced by the value the run actually used."""
    skip = {"command", "handler", "config", "verbose"}
    run_params = {k: v for k, v in vars(args).items() if k not in skip}
    run_params.update(resolved)
    if "seed" in run_params:
        run_params["seed"] = seed
    return RunManifest(
        command=args.command,
        params=run_params,
        seed=seed,
        positionals=POSITIONAL_ARGS.get(args.command, ()),
        config=None if params.source is None else str(params.source),
        settings=dict(settings or {}),
    )


def _search_settings(cfg: SearchConfig) -> Dict[str, Any]:
    return {"max_iterations": cfg.max_iterations, "convergence_tol": cfg.convergence_tol,
            "workers": cfg.workers}


def _write_result(args: argparse.Namespace, payload: Dict[str, Any], seed: Optional[int],
                  params: CertifierParameters, settings: Optional[Dict[str, Any]] = None,
                  **resolved: Any) -> None:
    _emit(payload, params)
    if getattr(args, "out", None):
        manifest = _manifest(args, seed, params, settings, **resolved)
        write_json_with_manifest(args.out, _rounded(payload, params.significant_digits), manifest)


def sweep_grid(p_start: float, p_end: float, p_step: float) -> List[float]:
    """p_start + k * p_step for every k that does not pass p_end."""
    if not (0.0 <= p_start <= p_end <= 1.0):
        raise DomainError("p range", f"need 0 <= p_start <= p_end <= 1, got [{p_start}, {p_end}]")
    if not (p_step > 0):
        raise DomainError("p_step", f"must be positive, got {p_step}")
    count = int(np.floor((p_end - p_start) / p_step + GRID_SLACK)) + 1
    grid = []
    for k in range(count):
        p = p_start + k * p_step
        if abs(p - p_end) < GRID_SLACK:
            p = p_end
        grid.append(p)
    return grid


# =============================================================================
# Commands
# =============================================================================

def cmd_sweep(args: argparse.Namespace, params: CertifierParameters) -> int:
    """Payoff versus noise strength, one CSV row per p."""
    p_start = params.sweep.p_start if args.p_start is None else args.p_start
    p_end = params.sweep.p_end if args.p_end is None else args.p_end
    p_step = params.sweep.p_step if args.p_step is None else args.p_step
    grid = sweep_grid(p_start, p_end, p_step)

    if args.state == "file":
        if not args.state_file:
            raise DomainError("state_file", "--state file requires --state-file PATH")
        rho = ingest_density_matrix(args.state_file)
        convention = None
        used = convention_for_state(rho)
    else:
        convention = PairingConvention(args.convention or params.sweep.convention)
        kind = "psi_plus" if convention is PairingConvention.CONJUGATE_MEASUREMENT else "singlet"
        rho = canonical_state(kind)
        used = convention

    fmt = params.fmt
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for p in grid:
            model = predict_payoff(rho, p, convention=convention)
            writer.writerow([fmt(p), fmt(ideal_noisy_payoff(p)), fmt(model), fmt(params.classical_threshold)])

    manifest = _manifest(args, None, params, settings={"p_grid": grid, "convention": used.value},
                         p_start=p_start, p_end=p_end, p_step=p_step,
                         convention=None if convention is None else convention.value)
    manifest.add_output(out)
    write_manifest_sidecar(out, manifest)
    logger.info(f"Wrote {len(grid)} sweep rows to {out}")
    return EXIT_OK


def cmd_classical_bound(args: argparse.Namespace, params: CertifierParameters) -> int:
    seed = params.effective_seed(args.seed)
    logger.info(f"Effective seed: {seed}")
    cfg = params.search_config(seed, restarts=args.restarts)
    result = max_classical_payoff(args.m, args.n, cfg)
    _write_result(args, result.to_dict(), seed, params, _search_settings(cfg), restarts=cfg.restarts)
    return EXIT_OK


def cmd_ps_bound(args: argparse.Namespace, params: CertifierParameters) -> int:
    seed = params.effective_seed(args.seed)
    logger.info(f"Effective seed: {seed}")
    cfg = params.search_config(seed, restarts=args.restarts)
    result = max_projective_simulable_payoff(args.n, cfg)
    _write_result(args, result.to_dict(), seed, params, _search_settings(cfg), restarts=cfg.restarts)
    return EXIT_OK


def _feasibility_target(args: argparse.Namespace):
    if args.target_file:
        return read_coin_csv(args.target_file)
    if args.target == "one_eighth":
        return one_eighth_coin()
    if args.target.startswith("uniform"):
        return canonical_coin(CoinKind.UNIFORM, d=int(args.target[-1]))
    return canonical_coin(args.target)


def cmd_feasibility(args: argparse.Namespace, params: CertifierParameters) -> int:
    seed = params.effective_seed(args.seed)
    logger.info(f"Effective seed: {seed}")
    cfg = params.search_config(seed, restarts=args.restarts, feasibility=True)
    result = coin_feasibility_distance(_feasibility_target(args), args.m, cfg)
    _write_result(args, result.to_dict(), seed, params, _search_settings(cfg), restarts=cfg.restarts)
    return EXIT_OK


def cmd_diag_search(args: argparse.Namespace, params: CertifierParameters) -> int:
    seed = params.effective_seed(args.seed)
    logger.info(f"Effective seed: {seed}")
    cfg = params.search_config(seed, restarts=args.restarts)
    result = min_diagonal_mass(args.d_local, args.n_outcomes, cfg, offdiag_floor=args.floor)
    _write_result(args, result.to_dict(), seed, params, _search_settings(cfg), restarts=cfg.restarts)
    return EXIT_OK


def cmd_simulability(args: argparse.Namespace, params: CertifierParameters) -> int:
    if args.povm_file:
        povm = read_povm_json(args.povm_file)
    else:
        povm = canonical_povm(args.povm, axis=args.axis, lam=args.lam)
    tol = params.simulability.tolerance if args.tol is None else args.tol
    grid = params.simulability.grid_size if args.grid_size is None else args.grid_size
    report = projective_simulability(povm, tol=tol, grid_size=grid)

    payload: Dict[str, Any] = {
        "simulable": report.simulable,
        "residual": report.residual,
        "tolerance": report.tolerance,
        "grid_residual": report.grid_residual,
        "directions": report.directions,
        "witness_basis": None if report.witness_basis is None else report.witness_basis.tolist(),
        "post_processing": None if report.post_processing is None else report.post_processing.entries.tolist(),
    }
    _write_result(args, payload, None, params, tol=tol, grid_size=grid)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, params: CertifierParameters) -> int:
    """Simulated counts CSV plus its metadata sidecar."""
    seed = params.effective_seed(args.seed)
    logger.info(f"Effective seed: {seed}")
    plan = AcquisitionPlan(
        p=args.p,
        total_time_s=params.experiment.total_time_s if args.time_s is None else args.time_s,
        pair_rate_hz=params.experiment.pair_rate_hz if args.rate_hz is None else args.rate_hz,
        seed=seed,
    )
    convention = PairingConvention(args.convention or params.sweep.convention)
    table = simulate_counts(game_strategy(args.n, 1.0, convention), plan)

    manifest = _manifest(args, seed, params, time_s=plan.total_time_s, rate_hz=plan.pair_rate_hz,
                         convention=convention.value)
    manifest.add_output(args.out)
    write_counts_csv(args.out, table, manifest=manifest.to_dict())
    logger.info(f"Wrote {table.total} coincidences to {args.out}")
    return EXIT_OK


def cmd_certify(args: argparse.Namespace, params: CertifierParameters) -> int:
    """Bootstrap the payoff of a counts file; exit 0 only when certified."""
    seed = params.effective_seed(args.seed)
    logger.info(f"Effective seed: {seed}")
    table = read_counts_csv(args.counts)
    threshold = params.classical_threshold if args.threshold is None else args.threshold
    resamples = params.experiment.bootstrap_resamples if args.resamples is None else args.resamples
    estimate = bootstrap_payoff_interval(table, resamples, seed, threshold=threshold,
                                         percentiles=params.experiment.percentiles)
    _write_result(args, estimate.to_dict(), seed, params,
                  {"percentiles": list(params.experiment.percentiles)},
                  threshold=threshold, resamples=resamples)

    verdict = "CERTIFIED" if estimate.exceeds_classical else "NOT CERTIFIED"
    logger.info(f"{verdict}: payoff {estimate.payoff:.6g}, interval "
                f"[{estimate.ci_low:.6g}, {estimate.ci_high:.6g}] vs threshold {threshold:.6g}")
    return EXIT_OK if estimate.exceeds_classical else EXIT_NOT_CERTIFIED


def cmd_validate(args: argparse.Namespace, params: CertifierParameters) -> int:
    readers: Dict[str, Callable[[str], Any]] = {
        "povm": read_povm_json,
        "coin": read_coin_csv,
        "density": ingest_density_matrix,
    }
    readers[args.target](args.path)
    print(f"OK: {args.path} is a valid {args.target}")
    return EXIT_OK


# =============================================================================
# Argument parsing
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Coin Certifier - certify non-classical shared randomness',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Reproduce the payoff-vs-noise curve from the ideal state
  python coincert.py sweep --p-start 0 --p-end 1 --p-step 0.05 --out sweep.csv

  # Classical bound for G(3) with a two-faced shared coin
  python coincert.py classical-bound --m 2 --n 3 --restarts 1000 --seed 1

  # Simulate one data point and certify it
  python coincert.py simulate --p 1.0 --time-s 3600 --rate-hz 2.0 --seed 7 --out counts.csv
  python coincert.py certify counts.csv --seed 7
        """
    )
    parser.add_argument('--config', default=None, help='Path to certifier_parameters.json')
    parser.add_argument('--verbose', action='store_true', help='Enable verbose logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('sweep', help='Payoff versus depolarizing strength (CSV)')
    p.add_argument('--p-start', type=float, default=None)
    p.add_argument('--p-end', type=float, default=None)
    p.add_argument('--p-step', type=float, default=None)
    p.add_argument('--state', choices=['ideal', 'file'], default='ideal',
                   help='Ideal Bell state or a tomographed density matrix')
    p.add_argument('--state-file', default=None, help='Density matrix JSON for --state file')
    p.add_argument('--convention', choices=[c.value for c in PairingConvention], default=None,
                   help='Pairing of the ideal state with the measurements')
    p.add_argument('--out', required=True, help='Output CSV path')
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser('classical-bound', help='Best classical payoff from a shared m-coin')
    p.add_argument('--m', type=int, required=True, help='Faces of the shared coin')
    p.add_argument('--n', type=int, required=True, help='Restaurants in the game')
    p.add_argument('--restarts', type=int, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', default=None, help='Optional JSON output path')
    p.set_defaults(handler=cmd_classical_bound)

    p = sub.add_parser('ps-bound', help='Best payoff with projective-simulable qubit measurements')
    p.add_argument('--n', type=int, default=3)
    p.add_argument('--restarts', type=int, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', default=None)
    p.set_defaults(handler=cmd_ps_bound)

    p = sub.add_parser('feasibility', help='Distance from a target coin to the coins reachable from C(m)')
    p.add_argument('--target', choices=FEASIBILITY_TARGETS, default='ac3')
    p.add_argument('--target-file', default=None, help='Coin CSV (overrides --target)')
    p.add_argument('--m', type=int, default=2)
    p.add_argument('--restarts', type=int, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', default=None)
    p.set_defaults(handler=cmd_feasibility)

    p = sub.add_parser('diag-search', help='Minimize the diagonal mass of phi+_d statistics')
    p.add_argument('--d-local', type=int, default=2)
    p.add_argument('--n-outcomes', type=int, default=3)
    p.add_argument('--floor', type=float, default=0.0, help='Penalize off-diagonal entries below this value')
    p.add_argument('--restarts', type=int, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', default=None)
    p.set_defaults(handler=cmd_diag_search)

    p = sub.add_parser('simulability', help='Projective-simulability test for a qubit POVM')
    p.add_argument('--povm', choices=[k.value for k in PovmKind if k is not PovmKind.WH_SIC_D3],
                   default='trine')
    p.add_argument('--povm-file', default=None, help='POVM JSON (overrides --povm)')
    p.add_argument('--axis', type=float, nargs=3, default=None, metavar=('X', 'Y', 'Z'))
    p.add_argument('--lam', type=float, default=None, help='Sharpness for unsharp POVMs')
    p.add_argument('--tol', type=float, default=None)
    p.add_argument('--grid-size', type=int, default=None)
    p.add_argument('--out', default=None)
    p.set_defaults(handler=cmd_simulability)

    p = sub.add_parser('simulate', help='Simulate coincidence counts for one noise setting')
    p.add_argument('--p', type=float, required=True, help='Depolarizing strength in [0, 1]')
    p.add_argument('--time-s', type=float, default=None)
    p.add_argument('--rate-hz', type=float, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--n', type=int, choices=[3, 4], default=3, help='3 = trine, 4 = tetrahedral SIC')
    p.add_argument('--convention', choices=[c.value for c in PairingConvention], default=None)
    p.add_argument('--out', required=True, help='Counts CSV path (metadata goes to <out>.meta.json)')
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser('certify', help='Bootstrap a counts file against the classical bound')
    p.add_argument('counts', help='Counts CSV (i,j,counts)')
    p.add_argument('--threshold', type=float, default=None)
    p.add_argument('--resamples', type=int, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', default=None)
    p.set_defaults(handler=cmd_certify)

    p = sub.add_parser('validate', help='Check a POVM, coin or density file against its invariants')
    p.add_argument('target', choices=['povm', 'coin', 'density'])
    p.add_argument('path')
    p.set_defaults(handler=cmd_validate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for command-line usage."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT_ERROR

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        params = CertifierParameters.load(Path(args.config) if args.config else None)
        return args.handler(args, params)
    except (CertifierError, OSError) as e:
        logger.error(str(e))
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}: {e}")
        return EXIT_INPUT_ERROR


if __name__ == '__main__':
    sys.exit(main())
