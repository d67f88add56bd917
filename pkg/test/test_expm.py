import unittest

import numpy as np
import scipy.linalg

import ladder
from datastructures import ReducedConfig
from engines.exact_engine import ExactEngine, evolve_exact
from engines.ladder_engine import (
    TridiagonalGenerator,
    expm_structured,
    initial_state,
    ladder_generator,
    oracle_expm,
)
from utils import UNITARITY_TOLERANCE, DomainError, NumericError


def random_tridiagonal(size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lower = rng.normal(size=size - 1) + 1j * rng.normal(size=size - 1)
    return (
        np.diag(1j * rng.normal(size=size))
        + np.diag(lower, -1)
        + np.diag(-np.conj(lower), 1)
    )


class TestStructuredExponential(unittest.TestCase):
    def test_zero_generator(self):
        propagator = expm_structured(np.zeros((4, 4), dtype=complex))
        np.testing.assert_allclose(propagator.unitary, np.eye(4), atol=1e-14)

    def test_two_level_rotation(self):
        g = 0.7
        generator = np.array([[0, -g], [g, 0]], dtype=complex)
        expected = np.array([[np.cos(g), -np.sin(g)], [np.sin(g), np.cos(g)]])
        np.testing.assert_allclose(expm_structured(generator).unitary, expected, atol=1e-12)

    def test_tridiagonal_against_oracle(self):
        generator = random_tridiagonal(12, seed=3)
        np.testing.assert_allclose(
            expm_structured(generator).unitary, oracle_expm(generator), atol=1e-10
        )
        np.testing.assert_allclose(
            expm_structured(generator).unitary, scipy.linalg.expm(generator), atol=1e-10
        )

    def test_bands_match_dense_input(self):
        generator = random_tridiagonal(7, seed=11)
        bands = TridiagonalGenerator(
            np.diag(generator).copy(), np.diag(generator, -1).copy(), np.diag(generator, 1).copy()
        )
        np.testing.assert_allclose(
            expm_structured(bands, 0.3).unitary, expm_structured(generator, 0.3).unitary, atol=1e-12
        )

    def test_dense_fallback_against_oracle(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        generator = (a - a.conj().T) / 2
        np.testing.assert_allclose(
            expm_structured(generator).unitary, oracle_expm(generator), atol=1e-10
        )

    def test_unitarity(self):
        propagator = expm_structured(random_tridiagonal(30, seed=7) * 10)
        self.assertLess(propagator.unitarity_error(), UNITARITY_TOLERANCE)

    def test_rejects_non_anti_hermitian(self):
        with self.assertRaises(DomainError):
            expm_structured(np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex))
        with self.assertRaises(DomainError):
            expm_structured(np.array([[0, 1.0], [1.0, 0]], dtype=complex))

    def test_rejects_non_square(self):
        with self.assertRaises(DomainError):
            expm_structured(np.zeros((2, 3), dtype=complex))


class TestOracle(unittest.TestCase):
    def test_scalar_diagonal(self):
        result = oracle_expm(np.eye(3), 0.7)
        np.testing.assert_allclose(result, np.exp(0.7) * np.eye(3), rtol=1e-13)

    def test_nilpotent_is_exact(self):
        result = oracle_expm(np.array([[0.0, 1.0], [0.0, 0.0]]), 3.0)
        self.assertTrue(np.array_equal(result, np.array([[1.0, 3.0], [0.0, 1.0]])))

    def test_squaring_limit(self):
        with self.assertRaises(NumericError):
            oracle_expm(np.eye(2) * 1e30)

    def test_ladder_instance(self):
        phases = ladder.mismatch_phases(ReducedConfig(sigma=2.0, coupling_g_qu=0.8, truncation_n_max=7))
        generator = ladder_generator(phases, 0.8).to_dense()
        expected = np.exp(-1j * phases.phiL) * oracle_expm(generator)[:, phases.index(0)]
        state = evolve_exact(phases, 0.8, initial_state(phases), check_truncation=False)
        np.testing.assert_allclose(state.amplitudes, expected, atol=1e-10)

    def test_propagator_uses_ladder_generator(self):
        phases = ladder.mismatch_phases(ReducedConfig(sigma=3.0, coupling_g_qu=1.1, truncation_n_max=9))
        generator = ladder_generator(phases, 1.1, initial_fock=0).to_dense()
        expected = np.exp(-1j * phases.phiL)[:, None] * oracle_expm(generator)
        propagator = ExactEngine().propagator(phases, 1.1, initial_fock=0)
        np.testing.assert_allclose(propagator.unitary, expected, atol=1e-10)
        self.assertEqual(propagator.length, 1.0)


if __name__ == "__main__":
    unittest.main()
