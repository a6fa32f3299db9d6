"""
Tests for experiment: the time-sliced acquisition model, Poisson simulation,
the bootstrap certification and the counts / density file formats.
"""

import json
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# Add scripts directory to path
SCRIPTS_DIR = Path(__file__).parent
sys.path.insert(0, str(SCRIPTS_DIR))

from bridge import QuantumStrategy, born_coin, game_strategy, predict_payoff
from coinspace import game_payoff
from errors import AnalysisError, DomainError, FileFormatError, HermiticityError, PositivityError, TraceError
from experiment import (
    CLASSICAL_THRESHOLD,
    AcquisitionPlan,
    CountsTable,
    bootstrap_payoff_interval,
    estimate_coin_from_counts,
    expected_counts,
    ingest_density_matrix,
    metadata_path,
    read_counts_csv,
    schedule,
    simulate_counts,
    write_counts_csv,
    write_density_json,
)
from quantum_core import bell_state, canonical_state

SAMPLES_DIR = SCRIPTS_DIR.parent / "data" / "samples"

# ~10^4 coincidences per data point, the scale of an hour-long run
LAB_RATE_HZ = 2.78
LAB_TIME_S = 3600.0


def _ideal():
    return game_strategy(3, 1.0)


# =============================================================================
# Acquisition model
# =============================================================================

class TestAcquisition(unittest.TestCase):

    def test_schedule_durations(self):
        slices = schedule(AcquisitionPlan(p=0.6, total_time_s=100.0, pair_rate_hz=1.0))
        self.assertEqual([s.pauli for s in slices], [None, "x", "y", "z"])
        self.assertAlmostEqual(slices[0].duration_s, 70.0, delta=1e-12)
        for s in slices[1:]:
            self.assertAlmostEqual(s.duration_s, 10.0, delta=1e-12)
        self.assertAlmostEqual(sum(s.duration_s for s in slices), 100.0, delta=1e-12)

    def test_noiseless_schedule(self):
        slices = schedule(AcquisitionPlan(p=1.0, total_time_s=50.0, pair_rate_hz=1.0))
        self.assertEqual(slices[0].duration_s, 50.0)
        self.assertTrue(all(s.duration_s == 0.0 for s in slices[1:]))

    def test_plan_domain(self):
        with self.assertRaises(DomainError):
            AcquisitionPlan(p=1.2, total_time_s=1.0, pair_rate_hz=1.0)
        with self.assertRaises(DomainError):
            AcquisitionPlan(p=0.5, total_time_s=0.0, pair_rate_hz=1.0)
        with self.assertRaises(DomainError):
            AcquisitionPlan(p=0.5, total_time_s=1.0, pair_rate_hz=-1.0)
        with self.assertRaises(DomainError):
            AcquisitionPlan(p=0.5, total_time_s=1.0, pair_rate_hz=1.0, seed=-3)

    def test_expected_counts_follow_noisy_coin(self):
        for p in (0.0, 0.3, 0.96, 1.0):
            plan = AcquisitionPlan(p=p, total_time_s=3600.0, pair_rate_hz=2.0)
            mean = expected_counts(_ideal(), plan)
            self.assertAlmostEqual(mean.sum(), 7200.0, delta=1e-8)
            coin = mean / mean.sum()
            self.assertAlmostEqual(float(coin[~np.eye(3, dtype=bool)].min()), (2.0 + p) / 18.0, delta=1e-12)
            self.assertLessEqual(float(np.max(np.abs(np.diag(coin) - (1.0 - p) / 9.0))), 1e-12)


# =============================================================================
# Simulation
# =============================================================================

class TestSimulation(unittest.TestCase):

    def test_deterministic_given_seed(self):
        plan = AcquisitionPlan(p=0.8, total_time_s=600.0, pair_rate_hz=2.0, seed=42)
        first = simulate_counts(_ideal(), plan)
        second = simulate_counts(_ideal(), plan)
        self.assertTrue(np.array_equal(first.counts, second.counts))
        self.assertIs(first.plan, plan)

    def test_seed_changes_counts(self):
        a = simulate_counts(_ideal(), AcquisitionPlan(0.8, 600.0, 2.0, seed=1))
        b = simulate_counts(_ideal(), AcquisitionPlan(0.8, 600.0, 2.0, seed=2))
        self.assertFalse(np.array_equal(a.counts, b.counts))

    def test_counts_near_expectation(self):
        plan = AcquisitionPlan(p=0.96, total_time_s=LAB_TIME_S, pair_rate_hz=LAB_RATE_HZ, seed=9)
        table = simulate_counts(_ideal(), plan)
        expected = LAB_TIME_S * LAB_RATE_HZ
        self.assertLess(abs(table.total - expected), 5.0 * np.sqrt(expected))
        payoff = game_payoff(estimate_coin_from_counts(table))
        self.assertAlmostEqual(payoff, (2.0 + 0.96) / 18.0, delta=0.02)

    def test_estimated_coin_converges(self):
        exact = born_coin(_ideal()).probs

        def mean_distance(time_s):
            distances = []
            for seed in range(100):
                table = simulate_counts(_ideal(), AcquisitionPlan(1.0, time_s, LAB_RATE_HZ, seed=seed))
                if table.total == 0:
                    continue
                distances.append(0.5 * float(np.abs(estimate_coin_from_counts(table).probs - exact).sum()))
            return float(np.mean(distances))

        brief, full = mean_distance(LAB_TIME_S / 100.0), mean_distance(LAB_TIME_S)
        self.assertLess(full, 0.02)
        self.assertLess(full, brief / 5.0)

    def test_relabeling_permutes_counts(self):
        strategy = _ideal()
        order = [2, 0, 1]
        relabeled = QuantumStrategy(strategy.state, strategy.povm_a.relabeled(order),
                                    strategy.povm_b.relabeled(order))
        plan = AcquisitionPlan(0.7, 600.0, 2.0, seed=4)
        base = expected_counts(strategy, plan)
        self.assertLessEqual(float(np.max(np.abs(expected_counts(relabeled, plan) - base[np.ix_(order, order)]))),
                             1e-9)
        self.assertTrue(np.allclose(born_coin(relabeled).probs,
                                    born_coin(strategy).permuted(order).probs, atol=1e-12))
        self.assertAlmostEqual(game_payoff(born_coin(relabeled)), game_payoff(born_coin(strategy)), delta=1e-12)

    def test_ideal_diagonal_stays_empty(self):
        table = simulate_counts(_ideal(), AcquisitionPlan(1.0, 3600.0, 2.0, seed=3))
        self.assertTrue(np.all(np.diag(table.counts) == 0))


# =============================================================================
# Bootstrap certification
# =============================================================================

class TestBootstrap(unittest.TestCase):

    def test_lab_scale_run_is_certified(self):
        plan = AcquisitionPlan(p=0.96, total_time_s=LAB_TIME_S, pair_rate_hz=LAB_RATE_HZ, seed=2024)
        estimate = bootstrap_payoff_interval(simulate_counts(_ideal(), plan), resamples=2000, seed=5)
        self.assertTrue(estimate.exceeds_classical)
        self.assertGreater(estimate.ci_low, CLASSICAL_THRESHOLD)
        self.assertGreaterEqual(estimate.half_width, 0.001)
        self.assertLessEqual(estimate.half_width, 0.01)
        self.assertLessEqual(estimate.ci_low, estimate.payoff)
        self.assertGreaterEqual(estimate.ci_high, estimate.payoff)
        self.assertEqual(estimate.percentiles, (16.0, 84.0))

    def test_interval_shrinks_with_counts(self):
        small = CountsTable(np.round(expected_counts(_ideal(), AcquisitionPlan(0.9, 1000.0, 2.0))))
        large = CountsTable(np.round(expected_counts(_ideal(), AcquisitionPlan(0.9, 16000.0, 2.0))))
        w_small = bootstrap_payoff_interval(small, resamples=2000, seed=1).half_width
        w_large = bootstrap_payoff_interval(large, resamples=2000, seed=1).half_width
        self.assertGreaterEqual(w_small / w_large, 2.8)
        self.assertLessEqual(w_small / w_large, 5.2)

    def test_tiny_table_is_not_certified(self):
        estimate = bootstrap_payoff_interval(CountsTable(np.ones((3, 3), dtype=int)), resamples=500, seed=0)
        self.assertAlmostEqual(estimate.payoff, 1.0 / 9.0, delta=1e-15)
        self.assertFalse(estimate.exceeds_classical)
        self.assertGreater(estimate.ci_high - estimate.ci_low, 0.05)

    def test_reproducible(self):
        table = CountsTable(np.array([[3, 160, 170], [165, 4, 158], [171, 162, 2]]))
        a = bootstrap_payoff_interval(table, resamples=300, seed=77)
        b = bootstrap_payoff_interval(table, resamples=300, seed=77)
        self.assertEqual(a.to_dict(), b.to_dict())

    def test_threshold_is_configurable(self):
        table = CountsTable(np.array([[3, 160, 170], [165, 4, 158], [171, 162, 2]]))
        self.assertFalse(bootstrap_payoff_interval(table, 300, 1, threshold=0.3).exceeds_classical)

    def test_errors(self):
        with self.assertRaises(AnalysisError):
            bootstrap_payoff_interval(CountsTable(np.zeros((3, 3), dtype=int)), resamples=200, seed=0)
        table = CountsTable(np.ones((3, 3), dtype=int))
        with self.assertRaises(DomainError):
            bootstrap_payoff_interval(table, resamples=50, seed=0)
        with self.assertRaises(DomainError):
            bootstrap_payoff_interval(table, resamples=200, seed=0, percentiles=(84, 16))


# =============================================================================
# Counts tables and files
# =============================================================================

class TestCountsFiles(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.tmp = Path(self.tmpdir.name)

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_table_validation(self):
        self.assertEqual(CountsTable(np.arange(9)).n, 3)
        with self.assertRaises(DomainError):
            CountsTable(np.arange(8))
        with self.assertRaises(DomainError):
            CountsTable(np.array([[1.5, 1.0], [1.0, 1.0]]))
        with self.assertRaises(PositivityError):
            CountsTable(np.array([[1, -1], [1, 1]]))

    def test_write_then_read_with_plan(self):
        plan = AcquisitionPlan(0.7, 100.0, 2.0, seed=12)
        table = simulate_counts(_ideal(), plan)
        path = write_counts_csv(self.tmp / "counts.csv", table, manifest={"command": "simulate"})
        self.assertEqual(path.read_text().splitlines()[0], "i,j,counts")
        meta = json.loads(metadata_path(path).read_text())
        self.assertEqual(meta["seed"], 12)
        self.assertEqual(meta["manifest"]["command"], "simulate")

        loaded = read_counts_csv(path)
        self.assertTrue(np.array_equal(loaded.counts, table.counts))
        self.assertEqual(loaded.plan, plan)

    def test_read_without_metadata(self):
        path = self.tmp / "bare.csv"
        path.write_text("i,j,counts\n0,0,1\n0,1,2\n1,0,3\n1,1,4\n")
        loaded = read_counts_csv(path)
        self.assertIsNone(loaded.plan)
        self.assertEqual(loaded.counts.tolist(), [[1, 2], [3, 4]])

    def test_malformed_counts(self):
        cases = {
            "header.csv": "a,b,c\n0,0,1\n",
            "fraction.csv": "i,j,counts\n0,0,1.5\n0,1,2\n1,0,3\n1,1,4\n",
            "missing.csv": "i,j,counts\n0,0,1\n0,1,2\n1,1,4\n",
            "text.csv": "i,j,counts\n0,0,many\n0,1,2\n1,0,3\n1,1,4\n",
            "infinite.csv": "i,j,counts\n0,0,inf\n0,1,2\n1,0,3\n1,1,4\n",
            "nan.csv": "i,j,counts\n0,0,nan\n0,1,2\n1,0,3\n1,1,4\n",
            "huge.csv": "i,j,counts\n0,0,1e30\n0,1,2\n1,0,3\n1,1,4\n",
        }
        for name, text in cases.items():
            path = self.tmp / name
            path.write_text(text)
            with self.assertRaises(FileFormatError, msg=name):
                read_counts_csv(path)


# =============================================================================
# Density matrix files
# =============================================================================

class TestDensityFiles(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.tmp = Path(self.tmpdir.name)

    def tearDown(self):
        self.tmpdir.cleanup()

    def _write(self, name, data):
        path = self.tmp / name
        path.write_text(json.dumps(data))
        return path

    def test_sample_state(self):
        rho = ingest_density_matrix(SAMPLES_DIR / "density_psi_plus_f097.json")
        self.assertAlmostEqual(rho.fidelity(bell_state("psi_plus")), 0.97, delta=1e-12)
        self.assertAlmostEqual(rho.purity(), 0.9412, delta=1e-12)

    def test_write_then_ingest(self):
        rho = canonical_state("werner", p=0.3)
        loaded = ingest_density_matrix(write_density_json(self.tmp / "w.json", rho))
        self.assertLessEqual(float(np.max(np.abs(loaded.matrix - rho.matrix))), 1e-12)

    def _write_state(self, name, matrix):
        return self._write(name, {"dim": 4, "re": np.real(matrix).tolist(), "im": np.imag(matrix).tolist()})

    def test_trace_slack_is_repaired(self):
        path = self._write_state("trace.json", (1.0 + 4e-7) * bell_state("psi_plus").projector())
        rho = ingest_density_matrix(path)
        self.assertAlmostEqual(float(np.real(np.trace(rho.matrix))), 1.0, delta=1e-12)
        self.assertAlmostEqual(predict_payoff(rho), 1.0 / 6.0, delta=1e-9)

    def test_negative_eigenvalue_slack_is_repaired(self):
        eps = 5e-7
        matrix = (1.0 + eps) * bell_state("psi_plus").projector() - eps * bell_state("singlet").projector()
        rho = ingest_density_matrix(self._write_state("neg.json", matrix))
        self.assertGreaterEqual(float(np.linalg.eigvalsh(rho.matrix)[0]), -1e-12)
        self.assertAlmostEqual(rho.fidelity(bell_state("psi_plus")), 1.0, delta=1e-12)
        self.assertAlmostEqual(predict_payoff(rho), 1.0 / 6.0, delta=1e-9)

    def test_invariant_violations(self):
        zeros = [[0.0] * 4 for _ in range(4)]
        trace = self._write("trace.json", {"dim": 4, "re": np.diag([0.3] * 4).tolist(), "im": zeros})
        with self.assertRaises(TraceError):
            ingest_density_matrix(trace)

        skew = np.diag([0.25] * 4)
        skew[0, 1] = 0.1
        herm = self._write("herm.json", {"dim": 4, "re": skew.tolist(), "im": zeros})
        with self.assertRaises(HermiticityError):
            ingest_density_matrix(herm)

        negative = self._write("neg.json", {"dim": 4, "re": np.diag([0.6, 0.6, 0.0, -0.2]).tolist(), "im": zeros})
        with self.assertRaises(PositivityError):
            ingest_density_matrix(negative)

    def test_malformed(self):
        with self.assertRaises(FileFormatError):
            ingest_density_matrix(self._write("dim.json", {"dim": 3, "re": [], "im": []}))
        with self.assertRaises(FileFormatError):
            ingest_density_matrix(self._write("keys.json", {"dim": 4, "re": [[1.0]]}))
        with self.assertRaises(FileFormatError):
            ingest_density_matrix(self._write("shape.json", {"dim": 4, "re": [[1.0]], "im": [[0.0]]}))
        with self.assertRaises(FileFormatError):
            ingest_density_matrix(self.tmp / "absent.json")


if __name__ == '__main__':
    unittest.main(verbosity=2)
