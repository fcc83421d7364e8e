import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from spectra.circle import eval_transfer, integrate_circle
from spectra.divergences import (
    SpectralDensity, hermitian_factor, hellinger_multivar,
    kl_divergence, spectrum_from_function, white_spectrum,
)
from spectra.exceptions import DomainViolation, NotConverged, NotScalar
from spectra.gamma import certify_covariance, gamma_adjoint, gamma_apply, range_basis
from spectra.solvers import (
    HELLINGER, KL, HellingerDual, KLDual, SolverOptions, approximate, dual_variable,
    h_dual_gradient, h_dual_value, h_primal, h_solve, inverse_q, kl_dual_gradient,
    kl_dual_value, kl_primal, kl_solve, newton_minimize, optimality_residual,
)

from .factories import (
    feasible_instance, instance_corpus, random_hermitian, rng_for, scalar_filter,
)


def scalar_case(sigma, psi=None, K=128):
    filt = scalar_filter(0.0)
    grid = eval_transfer(filt, K)
    basis = range_basis(grid)
    psi = white_spectrum(grid) if psi is None else psi(grid)
    return basis, certify_covariance(filt, [[sigma]], basis), psi


def scalar_dual(problem, value):
    return dual_variable(problem, problem.basis.coordinates([[value]]))


def in_domain_point(problem, rng, scale=0.3):
    start = problem.initial_point()
    floor = 0.5 * problem.margin(start)
    while True:
        coords = start + scale * rng.standard_normal(problem.basis.d)
        if problem.margin(coords) > floor:
            return coords
        scale /= 2


def corpus():
    kl = [(KL, case) for case in instance_corpus(m=1, count=10, start_seed=200)]
    hellinger = [(HELLINGER, case) for case in instance_corpus(m=1, count=4, start_seed=300)]
    hellinger += [(HELLINGER, case) for case in instance_corpus(m=2, count=6, start_seed=400)]
    return kl + hellinger


def dual_for(metric, case):
    cls = KLDual if metric == KL else HellingerDual
    return cls(case.basis, case.sigma, case.psi)


class ScalarKullbackLeiblerTests(SimpleTestCase):
    def test_value_and_gradient_closed_forms(self):
        basis, sigma, psi = scalar_case(1.0)
        problem = KLDual(basis, sigma, psi)
        for lam in (0.5, 1.0, 3.0):
            dual = scalar_dual(problem, lam)
            self.assertAlmostEqual(kl_dual_value(dual, sigma, psi), -np.log(lam) + lam, places=13)
        assert_allclose(kl_dual_gradient(scalar_dual(problem, 1.0), sigma, psi), 0.0, atol=1e-14)

    def test_unit_prior_optimum(self):
        for s in (0.5, 2.0):
            basis, sigma, psi = scalar_case(s ** 2)
            lam, report = kl_solve(sigma, psi, basis)
            self.assertTrue(report.converged)
            assert_allclose(lam.matrix, [[1.0 / s ** 2]], atol=1e-8)
            assert_allclose(kl_primal(lam, psi).scalar_samples(), s ** 2, atol=1e-8)

    def test_arbitrary_prior_optimum(self):
        sigma2 = 2.5
        basis, sigma, psi = scalar_case(sigma2, lambda grid: spectrum_from_function(
            grid, lambda t: [[1.5 + np.cos(t) + 0.3 * np.sin(2 * t)]],
        ))
        mass = float(integrate_circle(psi.scalar_samples()))
        lam, report = kl_solve(sigma, psi, basis)
        assert_allclose(lam.matrix, [[mass / sigma2]], atol=1e-8)
        assert_allclose(kl_primal(lam, psi).scalar_samples(), psi.scalar_samples() * sigma2 / mass, atol=1e-8)

    def test_unit_dual_returns_prior(self):
        basis, sigma, psi = scalar_case(1.0, lambda grid: spectrum_from_function(grid, lambda t: [[2 + np.cos(t)]]))
        phi = kl_primal(scalar_dual(KLDual(basis, sigma, psi), 1.0), psi)
        assert_allclose(phi.samples, psi.samples, atol=1e-15)

    def test_domain_guard(self):
        basis, sigma, psi = scalar_case(1.0)
        problem = KLDual(basis, sigma, psi)
        with self.assertRaises(DomainViolation):
            problem.value(basis.coordinates([[-1.0]]))
        with self.assertRaises(DomainViolation):
            dual_variable(problem, basis.coordinates([[0.0]]))

    def test_matrix_prior_rejected(self):
        case = feasible_instance(1, 2, 2)
        with self.assertRaisesMessage(NotScalar, 'scalar-only'):
            KLDual(case.basis, case.sigma, case.psi)


class ScalarHellingerTests(SimpleTestCase):
    def test_value_closed_forms(self):
        basis, sigma, psi = scalar_case(1.0)
        problem = HellingerDual(basis, sigma, psi)
        self.assertAlmostEqual(problem.value(np.zeros(1)), 1.0, places=14)
        for lam in (-0.5, 0.0, 2.0):
            dual = scalar_dual(problem, lam)
            self.assertAlmostEqual(h_dual_value(dual, sigma, psi), 1 / (1 + lam) + lam, places=13)

    def test_unit_prior_optimum(self):
        for s in (0.5, 2.0):
            basis, sigma, psi = scalar_case(s ** 2)
            lam, report = h_solve(sigma, psi, basis)
            self.assertTrue(report.converged)
            assert_allclose(lam.matrix, [[1.0 / s - 1.0]], atol=1e-8)
            phi, _ = h_primal(lam, psi)
            assert_allclose(phi.scalar_samples(), s ** 2, atol=1e-8)

    def test_domain_guard(self):
        basis, sigma, psi = scalar_case(1.0)
        with self.assertRaises(DomainViolation):
            HellingerDual(basis, sigma, psi).value(basis.coordinates([[-1.5]]))


class DerivativeTests(SimpleTestCase):
    h = 1e-5

    def check_derivatives(self, problem, rng):
        for _ in range(5):
            coords = in_domain_point(problem, rng)
            gradient = problem.gradient(coords)
            hessian = problem.hessian(coords)
            for _ in range(4):
                E = rng.standard_normal(problem.basis.d)
                E /= np.linalg.norm(E)
                fd = (problem.value(coords + self.h * E) - problem.value(coords - self.h * E)) / (2 * self.h)
                self.assertLessEqual(abs(fd - gradient @ E), 1e-4 * max(1.0, abs(fd)))
                fd_hv = (problem.gradient(coords + self.h * E) - problem.gradient(coords - self.h * E)) / (2 * self.h)
                self.assertLessEqual(np.linalg.norm(fd_hv - hessian @ E), 1e-4 * max(1.0, np.linalg.norm(fd_hv)))

    def test_kl_derivatives(self):
        rng = rng_for(21)
        for seed in range(3):
            self.check_derivatives(dual_for(KL, feasible_instance(seed, 3, 1)), rng)

    def test_hellinger_derivatives(self):
        rng = rng_for(22)
        for seed, m in ((0, 1), (1, 2), (2, 2)):
            self.check_derivatives(dual_for(HELLINGER, feasible_instance(seed, 3, m)), rng)

    def test_convexity(self):
        rng = rng_for(23)
        for metric, m in ((KL, 1), (HELLINGER, 2)):
            problem = dual_for(metric, feasible_instance(5, 3, m))
            for _ in range(20):
                a, b = in_domain_point(problem, rng), in_domain_point(problem, rng)
                mid = problem.value(0.5 * (a + b))
                self.assertLess(mid, 0.5 * (problem.value(a) + problem.value(b)) - 1e-12)
                self.assertGreater(np.linalg.eigvalsh(problem.hessian(a))[0], 0)

    def test_coordinates_match_materialized_matrix(self):
        case = feasible_instance(6, 3, 1)
        problem = dual_for(KL, case)
        lam = dual_variable(problem, in_domain_point(problem, rng_for(24)))
        kernel = gamma_adjoint(case.grid, lam.matrix)[:, 0, 0].real
        direct = -np.mean(case.psi.scalar_samples() * np.log(kernel)) + np.trace(lam.matrix @ case.sigma.sigma).real
        self.assertAlmostEqual(kl_dual_value(lam, case.sigma, case.psi), direct, delta=1e-13 * max(1.0, abs(direct)))

    def test_perturbation_is_linear_in_sigma(self):
        rng = rng_for(25)
        for metric, m in ((KL, 1), (HELLINGER, 2)):
            case = feasible_instance(7, 3, m)
            problem = dual_for(metric, case)
            coords = in_domain_point(problem, rng)
            lam = problem.basis.matrix(coords)
            delta = random_hermitian(rng, 3)
            delta = case.basis.matrix(case.basis.coordinates(delta))
            shifted = type(problem)(case.basis, case.sigma.sigma + delta, case.psi)
            expected = problem.value(coords) + np.trace(delta @ lam).real
            self.assertAlmostEqual(shifted.value(coords), expected, delta=1e-12 * max(1.0, abs(expected)))

    def test_gradient_wrappers_agree(self):
        case = feasible_instance(8, 3, 2)
        problem = dual_for(HELLINGER, case)
        lam = dual_variable(problem, in_domain_point(problem, rng_for(26)))
        assert_allclose(h_dual_gradient(lam, case.sigma, case.psi), problem.gradient(lam.coordinates))


class SolveTests(SimpleTestCase):
    def test_moment_matching_on_corpus(self):
        for metric, case in corpus():
            result = approximate(metric, case.sigma, case.psi, case.basis)
            self.assertTrue(result.report.converged, msg=f'{metric} n={case.filter.n}')
            self.assertLessEqual(result.report.iterations, 200)
            scale = np.linalg.norm(case.sigma.sigma)
            self.assertLessEqual(result.constraint_residual, 1e-6 * scale)
            residual = np.linalg.norm(gamma_apply(case.grid, result.spectrum) - case.sigma.sigma)
            self.assertLessEqual(residual, 1e-6 * scale)
            self.assertLessEqual(result.report.gradient_norm, result.report.tolerance)
            self.assertTrue(all(margin > 0 for margin in result.report.margins))

    def test_uniqueness_from_distinct_starts(self):
        rng = rng_for(31)
        options = SolverOptions(tol=1e-11)
        for metric, case in corpus()[::3]:
            problem = dual_for(metric, case)
            first, _ = newton_minimize(problem, problem.initial_point(), options)
            second, _ = newton_minimize(problem, in_domain_point(problem, rng, scale=0.1), options)
            assert_allclose(first.coordinates, second.coordinates, atol=1e-6)

    def test_line_search_never_increases_value(self):
        rng = rng_for(32)
        for metric, case in corpus()[::4]:
            problem = dual_for(metric, case)
            start = in_domain_point(problem, rng)
            _, report = newton_minimize(problem, start, SolverOptions())
            self.assertLessEqual(report.dual_value, problem.value(start))

    def test_converges_when_value_decrease_is_below_rounding(self):
        # these instances finish with a Newton decrement under eps |J|
        for metric, m, seed in ((KL, 1, 1051), (HELLINGER, 2, 1002), (HELLINGER, 2, 1074)):
            case = feasible_instance(seed, 2 + seed % 3, m)
            result = approximate(metric, case.sigma, case.psi, case.basis)
            self.assertTrue(result.report.converged, msg=f'{metric} seed {seed}')
            self.assertLessEqual(result.report.iterations, 200)
            self.assertLessEqual(result.report.gradient_norm, result.report.tolerance)

    def test_prior_already_matching(self):
        case = feasible_instance(33, 3, 2)
        sigma = certify_covariance(case.filter, gamma_apply(case.grid, case.psi), case.basis)
        lam, report = h_solve(sigma, case.psi, case.basis)
        self.assertEqual(report.iterations, 0)
        assert_allclose(lam.coordinates, 0.0, atol=1e-8)
        phi, factor = h_primal(lam, case.psi)
        assert_allclose(phi.samples, case.psi.samples, atol=1e-12)
        assert_allclose(factor.samples, hermitian_factor(case.psi).samples, atol=1e-12)

    def test_iteration_cap_reports_non_convergence(self):
        case = feasible_instance(34, 3, 2)
        lam, report = h_solve(case.sigma, case.psi, case.basis, SolverOptions(max_iter=1))
        self.assertFalse(report.converged)
        self.assertEqual(report.iterations, 1)
        self.assertGreater(lam.margin, 0)
        with self.assertRaises(NotConverged) as ctx:
            report.raise_for_convergence()
        self.assertIs(ctx.exception.report, report)
        self.assertNotIn('wall_time', report.as_dict())

    def test_kl_optimality_against_competitors(self):
        case = feasible_instance(35, 3, 1)
        result = approximate(KL, case.sigma, case.psi, case.basis)
        phi_hat = result.spectrum.scalar_samples()
        theta = case.grid.theta
        harmonics = [np.cos(j * theta) for j in range(8)] + [np.sin(j * theta) for j in range(1, 8)]
        images = np.array([case.basis.coordinates(gamma_apply(case.grid, h)) for h in harmonics]).T
        rng = rng_for(35)
        best = kl_divergence(case.psi, result.spectrum)
        for _ in range(50):
            bump = sum(rng.standard_normal() * np.cos(j * theta + rng.uniform(0, 2 * np.pi)) for j in range(1, 12))
            target = case.basis.coordinates(gamma_apply(case.grid, bump))
            weights, *_ = np.linalg.lstsq(images, target, rcond=None)
            direction = bump - np.tensordot(weights, np.array(harmonics), axes=1)
            eps = 0.2 * phi_hat.min() / np.max(np.abs(direction))
            competitor = SpectralDensity(case.grid, phi_hat + eps * direction)
            self.assertGreaterEqual(kl_divergence(case.psi, competitor), best - 1e-9)
        self.assertGreater(phi_hat.min(), 0)


class HellingerPrimalTests(SimpleTestCase):
    def test_zero_dual_returns_prior(self):
        case = feasible_instance(41, 3, 2)
        lam = dual_variable(dual_for(HELLINGER, case), np.zeros(case.basis.d))
        phi, factor = h_primal(lam, case.psi)
        assert_allclose(phi.samples, case.psi.samples, atol=1e-12)

    def test_optimal_factor_condition(self):
        rng = rng_for(42)
        case = feasible_instance(42, 3, 2)
        problem = dual_for(HELLINGER, case)
        factor_psi = hermitian_factor(case.psi)
        for _ in range(5):
            lam = dual_variable(problem, in_domain_point(problem, rng))
            phi, factor = h_primal(lam, case.psi, factor_psi)
            self.assertLessEqual(optimality_residual(lam, factor_psi, factor), 1e-10)
            assert_allclose(factor.spectrum_samples(), phi.samples, atol=1e-12)

    def test_inverse_q_converges_along_sequence(self):
        rng = rng_for(43)
        case = feasible_instance(43, 3, 2)
        problem = dual_for(HELLINGER, case)
        base = in_domain_point(problem, rng)
        step = in_domain_point(problem, rng) - base
        reference = inverse_q(dual_variable(problem, base))
        gaps = []
        for j in range(1, 31):
            q_inv = inverse_q(dual_variable(problem, base + step / 2 ** j))
            gaps.append(float(np.max(np.linalg.norm(q_inv - reference, ord=2, axis=(1, 2)))))
        self.assertTrue(all(b <= a * 0.75 for a, b in zip(gaps[:20], gaps[1:21])))
        self.assertLessEqual(gaps[-1], 1e-6)

    def test_approximation_reports_divergence(self):
        case = feasible_instance(44, 3, 2)
        result = approximate('hellinger', case.sigma, case.psi, case.basis)
        self.assertAlmostEqual(result.divergence, hellinger_multivar(result.spectrum, case.psi), places=12)
        self.assertEqual(result.metric, HELLINGER)
        self.assertIsNotNone(result.factor)

