"""
Tests for measurement: canonical POVMs, POVM validation, Pauli conjugation,
the time-averaged noisy POVM, projective simulability and POVM JSON files.
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

from errors import CompletenessError, DomainError, FileFormatError, HermiticityError, PositivityError
from measurement import (
    Povm,
    canonical_povm,
    fibonacci_sphere,
    noisy_time_averaged_povm,
    pauli_conjugate,
    projective_simulability,
    read_povm_json,
    write_povm_json,
)
from quantum_core import IDENTITY_2, matrices_close

SAMPLES_DIR = SCRIPTS_DIR.parent / "data" / "samples"


def _random_unitary(rng, dim=2):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def _sum_is_identity(povm, atol=1e-12):
    return matrices_close(sum(povm.elements), np.eye(povm.dim), atol=atol)


# =============================================================================
# Canonical POVMs
# =============================================================================

class TestCanonicalPovms(unittest.TestCase):

    def test_trine(self):
        trine = canonical_povm("trine")
        self.assertEqual(trine.n_outcomes, 3)
        self.assertEqual(trine.labels, ("t1", "t2", "t3"))
        self.assertTrue(_sum_is_identity(trine))
        for e in trine.elements:
            self.assertAlmostEqual(np.trace(e).real, 2.0 / 3.0, delta=1e-12)
            eig = np.linalg.eigvalsh(e)
            self.assertAlmostEqual(eig[0], 0.0, delta=1e-12)

    def test_trine_first_element(self):
        e1 = canonical_povm("trine").elements[0]
        self.assertTrue(matrices_close(e1, np.array([[2.0 / 3.0, 0.0], [0.0, 0.0]]), atol=1e-15))

    def test_tetra_sic(self):
        sic = canonical_povm("tetra_sic")
        self.assertEqual(sic.n_outcomes, 4)
        self.assertTrue(_sum_is_identity(sic))
        for i, e in enumerate(sic.elements):
            self.assertAlmostEqual(np.trace(e).real, 0.5, delta=1e-12)
            for j, f in enumerate(sic.elements):
                if i != j:
                    # (1/16) Tr[(I + n.s)(I + m.s)] = (1/16)(2 - 2/3)
                    self.assertAlmostEqual(np.trace(e @ f).real, 1.0 / 12.0, delta=1e-12)

    def test_qutrit_sic(self):
        sic = canonical_povm("wh_sic_d3")
        self.assertEqual(sic.dim, 3)
        self.assertEqual(sic.n_outcomes, 9)
        self.assertTrue(_sum_is_identity(sic))
        for i, e in enumerate(sic.elements):
            self.assertAlmostEqual(np.trace(e).real, 1.0 / 3.0, delta=1e-12)
            for j, f in enumerate(sic.elements):
                if i != j:
                    self.assertAlmostEqual(np.trace(e @ f).real, 1.0 / 36.0, delta=1e-12)

    def test_unsharp(self):
        povm = canonical_povm("unsharp", axis=(0.0, 0.0, 1.0), lam=0.5)
        self.assertTrue(matrices_close(povm.elements[0], np.diag([0.75, 0.25]), atol=1e-15))
        self.assertEqual(povm.labels, ("+", "-"))

    def test_projective_default_axis(self):
        povm = canonical_povm("projective")
        self.assertTrue(matrices_close(povm.elements[0], np.diag([1.0, 0.0]), atol=1e-15))

    def test_unsharp_domain(self):
        for lam in (0.0, 1.0, 1.5, None):
            with self.assertRaises(DomainError):
                canonical_povm("unsharp", lam=lam)
        with self.assertRaises(DomainError):
            canonical_povm("unsharp", axis=(0.0, 0.0, 2.0), lam=0.5)
        with self.assertRaises(DomainError):
            canonical_povm("pentagon")


# =============================================================================
# Validation
# =============================================================================

class TestPovmValidation(unittest.TestCase):

    def test_completeness(self):
        with self.assertRaises(CompletenessError) as ctx:
            Povm((0.9 * IDENTITY_2,))
        self.assertIn("completeness", str(ctx.exception))

    def test_positivity(self):
        with self.assertRaises(PositivityError):
            Povm((np.diag([1.5, 0.5]), np.diag([-0.5, 0.5])))

    def test_hermiticity(self):
        with self.assertRaises(HermiticityError):
            Povm((np.array([[0.5, 0.2], [0.0, 0.5]]), np.array([[0.5, -0.2], [0.0, 0.5]])))

    def test_shape_mismatch(self):
        with self.assertRaises(DomainError):
            Povm((np.eye(2), np.zeros((3, 3))))

    def test_label_count(self):
        with self.assertRaises(DomainError):
            Povm((np.eye(2),), labels=("a", "b"))

    def test_relabeled(self):
        trine = canonical_povm("trine")
        swapped = trine.relabeled([2, 0, 1])
        self.assertEqual(swapped.labels, ("t3", "t1", "t2"))
        self.assertTrue(matrices_close(swapped.elements[0], trine.elements[2], atol=0.0))
        with self.assertRaises(DomainError):
            trine.relabeled([0, 0, 1])


# =============================================================================
# Conjugation and noise
# =============================================================================

class TestNoise(unittest.TestCase):

    def setUp(self):
        self.trine = canonical_povm("trine")

    def test_pauli_conjugate_involution(self):
        for k in ("x", "y", "z"):
            twice = pauli_conjugate(pauli_conjugate(self.trine, k), k)
            for e, f in zip(twice.elements, self.trine.elements):
                self.assertTrue(matrices_close(e, f, atol=1e-15))

    def test_pauli_z_swaps_trine_outcomes(self):
        # sigma_z flips the x component of the Bloch vector: t2 <-> t3
        flipped = pauli_conjugate(self.trine, "z")
        self.assertTrue(matrices_close(flipped.elements[0], self.trine.elements[0], atol=1e-15))
        self.assertTrue(matrices_close(flipped.elements[1], self.trine.elements[2], atol=1e-15))

    def test_pauli_rejects_unknown_axis_and_qutrits(self):
        with self.assertRaises(DomainError):
            pauli_conjugate(self.trine, "w")
        with self.assertRaises(DomainError):
            pauli_conjugate(canonical_povm("wh_sic_d3"), "x")

    def test_noise_free_is_identity(self):
        noisy = noisy_time_averaged_povm(self.trine, 1.0)
        for e, f in zip(noisy.elements, self.trine.elements):
            self.assertTrue(matrices_close(e, f, atol=1e-15))

    def test_full_noise_is_trivial(self):
        noisy = noisy_time_averaged_povm(self.trine, 0.0)
        for e in noisy.elements:
            self.assertTrue(matrices_close(e, IDENTITY_2 / 3.0, atol=1e-15))

    def test_noise_shrinks_bloch_vector(self):
        noisy = noisy_time_averaged_povm(self.trine, 0.4)
        expected = (1.0 / 3.0) * (IDENTITY_2 + 0.4 * np.array([[1.0, 0.0], [0.0, -1.0]]))
        self.assertTrue(matrices_close(noisy.elements[0], expected, atol=1e-15))

    def test_noise_domain(self):
        with self.assertRaises(DomainError):
            noisy_time_averaged_povm(self.trine, -0.1)


# =============================================================================
# Projective simulability
# =============================================================================

class TestProjectiveSimulability(unittest.TestCase):

    def test_fibonacci_grid_is_unit(self):
        grid = fibonacci_sphere(500)
        self.assertEqual(grid.shape, (500, 3))
        self.assertLessEqual(float(np.max(np.abs(np.linalg.norm(grid, axis=1) - 1.0))), 1e-12)

    def test_projective_is_simulable(self):
        report = projective_simulability(canonical_povm("projective", axis=(1.0, 0.0, 0.0)))
        self.assertTrue(report.simulable)
        self.assertLessEqual(report.residual, 1e-6)

    def test_unsharp_is_simulable(self):
        axis = np.array([1.0, 2.0, 2.0]) / 3.0
        for lam in (0.1, 0.5, 0.9):
            povm = canonical_povm("unsharp", axis=axis, lam=lam)
            report = projective_simulability(povm)
            self.assertTrue(report.simulable, f"lam={lam}")
            self.assertLessEqual(report.residual, 1e-6)
            self.assertGreater(abs(float(np.dot(report.witness_basis, axis))), 1.0 - 1e-3)
            self.assertEqual(report.post_processing.entries.shape, (2, 2))
            for e, r in zip(povm.elements, report.reconstruct()):
                self.assertTrue(matrices_close(e, r, atol=1e-3))

    def test_trine_is_not_simulable(self):
        report = projective_simulability(canonical_povm("trine"))
        self.assertFalse(report.simulable)
        self.assertGreaterEqual(report.residual, 1e-5)
        self.assertAlmostEqual(report.residual, 1.0 / 3.0, delta=1e-6)
        self.assertIsNone(report.witness_basis)
        self.assertIsNone(report.reconstruct())

    def test_tetra_sic_is_not_simulable(self):
        report = projective_simulability(canonical_povm("tetra_sic"))
        self.assertFalse(report.simulable)
        self.assertAlmostEqual(report.residual, 1.0 / 3.0, delta=1e-6)

    def test_trivial_povm_is_simulable(self):
        report = projective_simulability(Povm((0.25 * IDENTITY_2, 0.75 * IDENTITY_2)))
        self.assertTrue(report.simulable)

    def test_invariant_under_unitaries(self):
        rng = np.random.default_rng(2024)
        trine = canonical_povm("trine")
        unsharp = canonical_povm("unsharp", lam=0.5)
        base = {"trine": projective_simulability(trine), "unsharp": projective_simulability(unsharp)}
        for _ in range(100):
            u = _random_unitary(rng)
            for name, povm in (("trine", trine), ("unsharp", unsharp)):
                report = projective_simulability(povm.conjugated(u))
                self.assertEqual(report.simulable, base[name].simulable)
                self.assertLessEqual(abs(report.residual - base[name].residual), 1e-6)

    def test_rejects_qutrits(self):
        with self.assertRaises(DomainError):
            projective_simulability(canonical_povm("wh_sic_d3"))


# =============================================================================
# JSON files
# =============================================================================

class TestPovmFiles(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.tmp = Path(self.tmpdir.name)

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_write_then_read(self):
        sic = canonical_povm("tetra_sic")
        loaded = read_povm_json(write_povm_json(self.tmp / "sic.json", sic))
        self.assertEqual(loaded.labels, sic.labels)
        for e, f in zip(loaded.elements, sic.elements):
            self.assertTrue(matrices_close(e, f, atol=1e-15))

    def test_sample_trine(self):
        loaded = read_povm_json(SAMPLES_DIR / "trine_povm.json")
        for e, f in zip(loaded.elements, canonical_povm("trine").elements):
            self.assertTrue(matrices_close(e, f, atol=1e-12))

    def test_nested_rows(self):
        path = self.tmp / "z.json"
        path.write_text(json.dumps({
            "dim": 2,
            "elements": [
                [[[1, 0], [0, 0]], [[0, 0], [0, 0]]],
                [[[0, 0], [0, 0]], [[0, 0], [1, 0]]],
            ],
        }))
        povm = read_povm_json(path)
        self.assertIsNone(povm.labels)
        self.assertTrue(matrices_close(povm.elements[1], np.diag([0.0, 1.0]), atol=0.0))

    def test_incomplete_file(self):
        path = self.tmp / "bad.json"
        path.write_text(json.dumps({"dim": 2, "elements": [[[0.9, 0], [0, 0], [0, 0], [0.9, 0]]]}))
        with self.assertRaises(CompletenessError):
            read_povm_json(path)

    def test_malformed_files(self):
        broken = self.tmp / "broken.json"
        broken.write_text("{not json")
        with self.assertRaises(FileFormatError):
            read_povm_json(broken)
        wrong = self.tmp / "wrong.json"
        wrong.write_text(json.dumps({"dim": 2, "elements": [[[1, 0], [0, 0]]]}))
        with self.assertRaises(FileFormatError):
            read_povm_json(wrong)
        with self.assertRaises(FileFormatError):
            read_povm_json(self.tmp / "missing.json")


if __name__ == '__main__':
    unittest.main(verbosity=2)
