import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from spectra.circle import (
    as_hermitian, build_filter, eval_transfer, grid_angles, hermitian_coordinates,
    hermitian_from_coordinates, hermitian_unit_basis, integrate_circle,
    lyapunov_sigma, transfer_at,
)
from spectra.exceptions import (
    DimensionMismatch, NotHermitian, NotReachable, NotStable, RankDeficientB,
)
from spectra.gamma import gamma_identity

from .factories import random_filter, random_hermitian, rng_for, scalar_filter


class BuildFilterTests(SimpleTestCase):
    def test_scalar_delay(self):
        filt = scalar_filter(0.0)
        self.assertEqual((filt.n, filt.m), (1, 1))
        self.assertEqual(filt.spectral_radius, 0.0)

    def test_nilpotent_reachable(self):
        filt = build_filter([[0, 1], [0, 0]], [[0], [1]])
        self.assertEqual(filt.reachability_rank, 2)

    def test_unit_radius_is_not_stable(self):
        with self.assertRaises(NotStable):
            build_filter([[1.0]], [[1.0]])

    def test_rank_deficient_input(self):
        with self.assertRaises(RankDeficientB):
            build_filter(np.diag([0.5, 0.2]), [[1, 2], [2, 4]])
        with self.assertRaises(RankDeficientB):
            build_filter([[0.5]], [[1, 1]])

    def test_unreachable_pair(self):
        with self.assertRaises(NotReachable):
            build_filter(np.diag([0.5, 0.5]), [[1], [1]])

    def test_dimension_checks(self):
        with self.assertRaises(DimensionMismatch):
            build_filter(np.zeros((2, 3)), np.ones((2, 1)))
        with self.assertRaises(DimensionMismatch):
            build_filter(np.zeros((2, 2)), np.ones((3, 1)))

    def test_filter_arrays_are_read_only(self):
        filt = scalar_filter(0.5)
        with self.assertRaises(ValueError):
            filt.A[0, 0] = 0.1


class TransferTests(SimpleTestCase):
    def test_delay_on_four_points(self):
        theta = grid_angles(4)
        samples = transfer_at(scalar_filter(0.0), theta)
        assert_allclose(samples[:, 0, 0], np.exp(-1j * theta), atol=1e-15)

    def test_first_order_values(self):
        samples = transfer_at(scalar_filter(0.5), [0.0, np.pi])
        assert_allclose(samples[:, 0, 0], [2.0, -2.0 / 3.0], atol=1e-14)

    def test_grid_size_rules(self):
        filt = scalar_filter(0.5)
        for K in (4, 62, 65):
            with self.assertRaises(ValueError):
                eval_transfer(filt, K)
        self.assertEqual(eval_transfer(filt, 64).K, 64)

    def test_refinement_reproduces_shared_points(self):
        filt = random_filter(rng_for(3), 3, 2)
        coarse = eval_transfer(filt, 128)
        fine = eval_transfer(filt, 256)
        assert_array_equal(fine.theta[::2], coarse.theta)
        assert_allclose(fine.transfer[::2], coarse.transfer, rtol=0, atol=1e-14)

    def test_resolvent_norm_bound(self):
        for seed in range(5):
            filt = random_filter(rng_for(seed), 3, 1)
            grid = eval_transfer(filt, 256)
            norms = np.linalg.norm(grid.transfer, ord=2, axis=(1, 2))
            for theta, norm in zip(grid.theta, norms):
                resolvent = np.linalg.inv(np.exp(1j * theta) * np.eye(3) - filt.A)
                self.assertLessEqual(norm, np.linalg.norm(resolvent, 2) * np.linalg.norm(filt.B, 2) * (1 + 1e-12))
            self.assertGreater(norms.min(), 0)

    def test_transfer_is_read_only(self):
        grid = eval_transfer(scalar_filter(0.5), 64)
        with self.assertRaises(ValueError):
            grid.transfer[0, 0, 0] = 0


class QuadratureTests(SimpleTestCase):
    def test_constant_and_harmonic(self):
        C = np.array([[1 + 2j, 3], [0, -1j]])
        assert_allclose(integrate_circle(np.broadcast_to(C, (64, 2, 2))), C)
        self.assertAlmostEqual(abs(integrate_circle(np.exp(1j * grid_angles(64)))), 0.0, places=14)

    def test_empty_samples_rejected(self):
        with self.assertRaises(DimensionMismatch):
            integrate_circle(np.zeros((0, 1, 1)))

    def test_first_order_lyapunov_oracle(self):
        grid = eval_transfer(scalar_filter(0.5), 512)
        G = grid.transfer
        sigma = integrate_circle(G @ np.swapaxes(G.conj(), 1, 2))
        assert_allclose(sigma, [[4.0 / 3.0]], atol=1e-10)

    def test_quadrature_matches_lyapunov(self):
        for seed in range(10):
            rng = rng_for(seed)
            filt = random_filter(rng, int(rng.integers(2, 5)), 1 + seed % 2)
            reference = lyapunov_sigma(filt)
            error = np.linalg.norm(gamma_identity(eval_transfer(filt, 512)) - reference)
            self.assertLessEqual(error, 1e-8 * np.linalg.norm(reference))


class LyapunovTests(SimpleTestCase):
    def test_closed_forms(self):
        assert_allclose(lyapunov_sigma(scalar_filter(0.0)), [[1.0]])
        assert_allclose(lyapunov_sigma(scalar_filter(0.5)), [[4.0 / 3.0]], rtol=1e-14)

    def test_plug_back_residual(self):
        for seed in range(5):
            filt = random_filter(rng_for(seed), 4, 2)
            sigma = lyapunov_sigma(filt)
            residual = sigma - filt.A @ sigma @ filt.A.conj().T - filt.B @ filt.B.conj().T
            self.assertLessEqual(np.linalg.norm(residual), 1e-12 * max(1.0, np.linalg.norm(sigma)))
            self.assertGreater(np.linalg.eigvalsh(sigma)[0], 0)


class HermitianCoordinateTests(SimpleTestCase):
    def test_isometry(self):
        rng = rng_for(11)
        X, Y = random_hermitian(rng, 3), random_hermitian(rng, 3)
        inner = np.trace(X @ Y).real
        self.assertAlmostEqual(hermitian_coordinates(X) @ hermitian_coordinates(Y), inner, places=12)
        assert_allclose(hermitian_from_coordinates(hermitian_coordinates(X), 3), X, atol=1e-15)

    def test_unit_basis_is_orthonormal(self):
        units = hermitian_unit_basis(3)
        gram = np.einsum('pij,qji->pq', units, units).real
        assert_allclose(gram, np.eye(9), atol=1e-15)

    def test_as_hermitian(self):
        with self.assertRaises(NotHermitian):
            as_hermitian([[1, 2], [0, 1]])
        with self.assertRaises(DimensionMismatch):
            as_hermitian(np.zeros((2, 3)))
        assert_allclose(as_hermitian([[2.0]]), [[2.0]])
