"""
Dual problems of the Kullback-Leibler (scalar) and Hellinger (multivariable)
spectrum approximation problems, a guarded damped-Newton engine working in
Range Gamma coordinates, and reconstruction of the optimal spectra.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .circle import integrate_circle
from .divergences import (
    SpectralDensity, SpectralFactor, hellinger_multivar, hermitian_factor,
    hermitian_part, kl_divergence,
)
from .exceptions import DimensionMismatch, DomainViolation, NotConverged, NotScalar
from .gamma import frobenius, gamma_apply

logger = logging.getLogger(__name__)

KL = 'KL'
HELLINGER = 'H'
METRICS = {'kl': KL, 'hellinger': HELLINGER}
# below this Newton decrement (relative to |J|) the Armijo test is lost in rounding
DECREMENT_FLOOR = 100 * np.finfo(float).eps


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 200
    armijo: float = 1e-4
    shrink: float = 0.5
    min_step: float = 2.0 ** -60

    def gradient_tolerance(self, sigma):
        return self.tol * (1.0 + frobenius(sigma))


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    gradient_norm: float
    dual_value: float
    backtracks: list
    margins: list
    converged: bool
    wall_time: float
    tolerance: float

    def raise_for_convergence(self):
        if not self.converged:
            raise NotConverged(
                f'dual solve stopped after {self.iterations} iterations with '
                f'gradient norm {self.gradient_norm:.3g} > {self.tolerance:.3g}',
                report=self,
            )

    def as_dict(self):
        """Serializable view; wall time is left out so reruns compare equal."""
        return {
            'iterations': self.iterations,
            'gradient_norm': self.gradient_norm,
            'dual_value': self.dual_value,
            'backtracks': list(self.backtracks),
            'margins': list(self.margins),
            'converged': self.converged,
            'tolerance': self.tolerance,
        }


def basis_images(basis):
    """P_i = G* L_i G on the grid, shape (d, K, m, m)."""
    G = basis.grid.transfer
    return hermitian_part(np.einsum('kia,dij,kjb->dkab', G.conj(), basis.elements, G))


def lambda_kernel(lam):
    """Samples of G* Lambda G for a DualVariable."""
    return np.tensordot(lam.coordinates, basis_images(lam.basis), axes=1)


def _inverse_q(kernel, kind):
    q = np.eye(kernel.shape[-1]) + kernel
    margin = float(np.min(np.linalg.eigvalsh(q)[:, 0]))
    if not margin > 0:
        raise DomainViolation(f'{kind} domain margin is {margin:.3g}')
    return np.linalg.inv(q)


class DualProblem:
    """J(c) = F(sum_i c_i P_i) + <c, s> in Range Gamma coordinates.

    ``P_i = G* L_i G`` are the adjoint images of the basis on the grid and
    ``s_i = tr(L_i Sigma)``.
    """

    kind = None

    def __init__(self, basis, sigma, psi):
        if psi.m != basis.grid.m:
            raise DimensionMismatch(f'prior has m = {psi.m}, filter has m = {basis.grid.m}')
        self.basis = basis
        self.sigma = np.asarray(getattr(sigma, 'sigma', sigma))
        self.psi = psi
        self.images = basis_images(basis)
        self.moments = basis.coordinates(self.sigma)

    def kernel(self, coords):
        """Samples of G* Lambda G for Lambda = sum_i c_i L_i."""
        return np.tensordot(np.asarray(coords, dtype=float), self.images, axes=1)

    def margin(self, coords):
        raise NotImplementedError

    def check_domain(self, coords):
        margin = self.margin(coords)
        if not margin > 0:
            raise DomainViolation(f'{self.kind} domain margin is {margin:.3g}')
        return margin

    def value(self, coords):
        raise NotImplementedError

    def gradient(self, coords):
        raise NotImplementedError

    def hessian(self, coords):
        raise NotImplementedError

    def initial_point(self):
        raise NotImplementedError


class KLDual(DualProblem):
    """J(Lambda) = -int Psi log G*Lambda G + tr Lambda Sigma (scalar processes)."""

    kind = KL

    def __init__(self, basis, sigma, psi):
        if basis.grid.m != 1 or psi.m != 1:
            raise NotScalar('Kullback-Leibler approximation is scalar-only')
        super().__init__(basis, sigma, psi)
        self.images = self.images[:, :, 0, 0].real
        self.weights = psi.scalar_samples()

    def margin(self, coords):
        return float(np.min(self.kernel(coords)))

    def value(self, coords):
        self.check_domain(coords)
        q = self.kernel(coords)
        return float(-integrate_circle(self.weights * np.log(q)) + coords @ self.moments)

    def gradient(self, coords):
        self.check_domain(coords)
        ratio = self.weights / self.kernel(coords)
        return self.moments - integrate_circle((self.images * ratio).T)

    def hessian(self, coords):
        self.check_domain(coords)
        weight = self.weights / self.kernel(coords) ** 2
        return np.einsum('ik,jk,k->ij', self.images, self.images, weight) / weight.shape[0]

    def initial_point(self):
        # Pi(I): G* Pi(I) G = G*G > 0 since the Range Gamma-perp part vanishes on the circle
        return self.basis.coordinates(np.eye(self.basis.n))

    def primal_samples(self, coords):
        self.check_domain(coords)
        return self.weights / self.kernel(coords)


class HellingerDual(DualProblem):
    """J(Lambda) = tr int (I + G*Lambda G)^{-1} Psi + tr Lambda Sigma."""

    kind = HELLINGER

    def q_matrix(self, coords):
        return np.eye(self.basis.grid.m) + self.kernel(coords)

    def inverse_q(self, coords):
        return _inverse_q(self.kernel(coords), self.kind)

    def margin(self, coords):
        return float(np.min(np.linalg.eigvalsh(self.q_matrix(coords))[:, 0]))

    def value(self, coords):
        q_inv = self.inverse_q(coords)
        trace = np.einsum('kab,kba->k', q_inv, self.psi.samples).real
        return float(integrate_circle(trace) + coords @ self.moments)

    def primal_samples(self, coords):
        q_inv = self.inverse_q(coords)
        return hermitian_part(q_inv @ self.psi.samples @ q_inv)

    def gradient(self, coords):
        phi = self.primal_samples(coords)
        traces = np.einsum('dkab,kba->dk', self.images, phi).real
        return self.moments - integrate_circle(traces.T)

    def hessian(self, coords):
        q_inv = self.inverse_q(coords)
        left = q_inv[None] @ self.images
        right = left @ q_inv[None] @ self.psi.samples[None]
        # H_ij = 2 Re int tr(Q^-1 P_i Q^-1 P_j Q^-1 Psi)
        terms = np.einsum('ikab,jkba->ij', left, right).real
        hessian = 2.0 * terms / q_inv.shape[0]
        return (hessian + hessian.T) / 2

    def initial_point(self):
        return np.zeros(self.basis.d)


def dual_problem(metric, basis, sigma, psi):
    metric = METRICS.get(metric, metric)
    if metric == KL:
        return KLDual(basis, sigma, psi)
    if metric == HELLINGER:
        return HellingerDual(basis, sigma, psi)
    raise ValueError(f'unknown metric {metric!r}')


@dataclass(frozen=True, eq=False)
class DualVariable:
    basis: object
    coordinates: np.ndarray
    kind: str
    margin: float

    @property
    def matrix(self):
        return self.basis.matrix(self.coordinates)


def dual_variable(problem, coords):
    """Certify ``coords`` against the problem's domain and wrap them."""
    coords = np.array(coords, dtype=float)
    margin = problem.check_domain(coords)
    coords.setflags(write=False)
    return DualVariable(basis=problem.basis, coordinates=coords, kind=problem.kind, margin=margin)


def newton_minimize(problem, start, options):
    """Damped Newton with Armijo backtracking that never leaves the domain."""
    started = time.perf_counter()
    tolerance = options.gradient_tolerance(problem.sigma)
    coords = np.array(start, dtype=float)
    problem.check_domain(coords)
    value = problem.value(coords)
    gradient = problem.gradient(coords)
    backtracks, margins = [], [problem.margin(coords)]
    converged = False
    iterations = 0

    while True:
        grad_norm = float(np.linalg.norm(gradient))
        if grad_norm <= tolerance:
            converged = True
            break
        if iterations >= options.max_iter:
            break
        hessian = problem.hessian(coords)
        try:
            step = -scipy.linalg.solve(hessian, gradient, assume_a='pos')
        except (np.linalg.LinAlgError, ValueError):
            step = -np.linalg.lstsq(hessian, gradient, rcond=None)[0]
        slope = float(gradient @ step)
        if slope >= 0:
            step, slope = -gradient, -grad_norm ** 2
        negligible = -slope <= DECREMENT_FLOOR * max(1.0, abs(value))

        alpha, halvings = 1.0, 0
        while alpha >= options.min_step:
            trial = coords + alpha * step
            if problem.margin(trial) > 0:
                trial_value = problem.value(trial)
                if trial_value <= value + options.armijo * alpha * slope:
                    break
                # value changes are below resolution; settle for a smaller gradient
                if negligible and np.linalg.norm(problem.gradient(trial)) < grad_norm:
                    break
            alpha *= options.shrink
            halvings += 1
        else:
            logger.warning('line search stalled at iteration %d (gradient norm %.3g)', iterations, grad_norm)
            break

        coords, value = trial, trial_value
        gradient = problem.gradient(coords)
        iterations += 1
        backtracks.append(halvings)
        margins.append(problem.margin(coords))
        logger.debug('%s iter %d: J=%.15g |grad|=%.3g step=%.3g', problem.kind, iterations, value, np.linalg.norm(gradient), alpha)

    report = SolveReport(
        iterations=iterations,
        gradient_norm=float(np.linalg.norm(gradient)),
        dual_value=float(value),
        backtracks=backtracks,
        margins=margins,
        converged=converged,
        wall_time=time.perf_counter() - started,
        tolerance=tolerance,
    )
    if converged:
        logger.info('%s dual converged in %d iterations (%.3fs)', problem.kind, iterations, report.wall_time)
    else:
        logger.warning('%s dual did not converge: gradient norm %.3g after %d iterations', problem.kind, report.gradient_norm, iterations)
    return dual_variable(problem, coords), report


# -- Kullback-Leibler -----------------------------------------------------

def kl_dual_value(lam, sigma, psi):
    return KLDual(lam.basis, sigma, psi).value(lam.coordinates)


def kl_dual_gradient(lam, sigma, psi):
    return KLDual(lam.basis, sigma, psi).gradient(lam.coordinates)


def kl_solve(sigma, psi, basis, options=None, start=None):
    """Minimize J_KL over L^KL_Gamma starting from Pi(I)."""
    problem = KLDual(basis, sigma, psi)
    start = problem.initial_point() if start is None else start
    return newton_minimize(problem, start, options or SolverOptions())


def kl_primal(lam, psi):
    """Phi = Psi / G*Lambda G."""
    if psi.m != 1 or lam.basis.grid.m != 1:
        raise NotScalar('Kullback-Leibler approximation is scalar-only')
    kernel = lambda_kernel(lam)[:, 0, 0].real
    if not np.min(kernel) > 0:
        raise DomainViolation(f'KL domain margin is {np.min(kernel):.3g}')
    samples = psi.scalar_samples() / kernel
    return SpectralDensity(psi.grid, samples, role='solution')


# -- Hellinger ------------------------------------------------------------

def h_dual_value(lam, sigma, psi):
    return HellingerDual(lam.basis, sigma, psi).value(lam.coordinates)


def h_dual_gradient(lam, sigma, psi):
    return HellingerDual(lam.basis, sigma, psi).gradient(lam.coordinates)


def h_solve(sigma, psi, basis, options=None, start=None):
    """Minimize J_H over L^H_Gamma starting from Lambda = 0."""
    problem = HellingerDual(basis, sigma, psi)
    start = problem.initial_point() if start is None else start
    return newton_minimize(problem, start, options or SolverOptions())


def inverse_q(lam):
    """Samples of Q_Lambda^{-1} = (I + G*Lambda G)^{-1}."""
    return _inverse_q(lambda_kernel(lam), HELLINGER)


def h_primal(lam, psi, factor=None):
    """W = Q^{-1} W_Psi and Phi = W W* for the given Lambda."""
    if factor is None:
        factor = hermitian_factor(psi)
    q_inv = inverse_q(lam)
    w = q_inv @ factor.samples
    phi = SpectralDensity(psi.grid, hermitian_part(w @ np.swapaxes(w.conj(), -1, -2)), role='solution')
    return phi, SpectralFactor(psi.grid, w)


def optimality_residual(lam, factor_psi, factor_opt):
    """max_k ||W - W_Psi + G*Lambda G W||, zero at the optimal factor."""
    kernel = lambda_kernel(lam)
    residual = factor_opt.samples - factor_psi.samples + kernel @ factor_opt.samples
    return float(np.max(np.linalg.norm(residual, ord=2, axis=(-2, -1))))


# -- Combined -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Approximation:
    metric: str
    dual: DualVariable
    report: SolveReport
    spectrum: SpectralDensity
    factor: object = None
    constraint_residual: float = 0.0
    divergence: float = 0.0
    extras: dict = field(default_factory=dict)


def approximate(metric, sigma, psi, basis, options=None, start=None):
    """Solve the dual, rebuild the optimal spectrum and measure it."""
    metric = METRICS.get(metric, metric)
    sigma_matrix = np.asarray(getattr(sigma, 'sigma', sigma))
    if metric == KL:
        lam, report = kl_solve(sigma, psi, basis, options, start)
        spectrum, factor = kl_primal(lam, psi), None
        divergence = kl_divergence(psi, spectrum)
    elif metric == HELLINGER:
        lam, report = h_solve(sigma, psi, basis, options, start)
        spectrum, factor = h_primal(lam, psi)
        divergence = hellinger_multivar(spectrum, psi)
    else:
        raise ValueError(f'unknown metric {metric!r}')
    residual = frobenius(gamma_apply(basis.grid, spectrum) - sigma_matrix)
    return Approximation(
        metric=metric, dual=lam, report=report, spectrum=spectrum, factor=factor,
        constraint_residual=residual, divergence=divergence,
    )
