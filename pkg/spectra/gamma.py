"""
The operator Gamma(Phi) = int G Phi G*, its adjoint, Range Gamma, and the
feasibility / repair logic for state covariances.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .circle import (
    as_hermitian, hermitian_coordinates, hermitian_from_coordinates,
    hermitian_unit_basis, integrate_circle,
)
from .exceptions import (
    DimensionMismatch, GridMismatch, InfeasibleCovariance, RepairFailed,
)

logger = logging.getLogger(__name__)

RANGE_CUTOFF = 1e-10
FEASIBILITY_TOLERANCE = 1e-8
PD_FLOOR = 1e-6
BISECTION_STEPS = 60
REPAIR_METHODS = ('blend', 'shift')


def _samples_of(grid, phi):
    samples = getattr(phi, 'samples', phi)
    owner = getattr(phi, 'grid', None)
    if owner is not None and not owner.same_as(grid):
        raise GridMismatch('spectrum is sampled on a different grid')
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[:, None, None]
    if samples.shape != (grid.K, grid.m, grid.m):
        raise GridMismatch(
            f'expected samples of shape {(grid.K, grid.m, grid.m)}, got {samples.shape}'
        )
    return samples


def gamma_apply(grid, phi):
    """Gamma(Phi) = (1/K) sum_k G_k Phi_k G_k*."""
    samples = _samples_of(grid, phi)
    G = grid.transfer
    integrand = np.einsum('kia,kab,kjb->kij', G, samples, G.conj())
    return as_hermitian(integrate_circle(integrand), tol=None)


def gamma_identity(grid):
    """Gamma(I), a strictly positive member of Range Gamma."""
    return gamma_apply(grid, np.broadcast_to(np.eye(grid.m), (grid.K, grid.m, grid.m)))


def gamma_adjoint(grid, lam):
    """Samples G_k* Lambda G_k, shape (K, m, m)."""
    lam = np.asarray(lam, dtype=complex)
    if lam.shape != (grid.n, grid.n):
        raise DimensionMismatch(f'Lambda must be {grid.n}x{grid.n}, got {lam.shape}')
    G = grid.transfer
    samples = np.einsum('kia,ij,kjb->kab', G.conj(), lam, G)
    return (samples + np.swapaxes(samples.conj(), -1, -2)) / 2


def frobenius(matrix):
    return float(np.linalg.norm(matrix))


@dataclass(frozen=True, eq=False)
class RangeGammaBasis:
    """Orthonormal basis L_1..L_d of Range Gamma and of its complement in H(n)."""
    grid: object
    elements: np.ndarray
    complement: np.ndarray
    element_coords: np.ndarray
    singular_values: np.ndarray

    @property
    def d(self):
        return self.elements.shape[0]

    @property
    def n(self):
        return self.grid.n

    def coordinates(self, matrix):
        """<matrix, L_i> for i = 1..d."""
        return self.element_coords @ hermitian_coordinates(matrix)

    def matrix(self, coords):
        """sum_i c_i L_i."""
        return hermitian_from_coordinates(np.asarray(coords) @ self.element_coords, self.n)


def _adjoint_matrix(grid):
    """Real matrix of X -> (G_k* X G_k)_k on the coordinates of H(n)."""
    units = hermitian_unit_basis(grid.n)
    G = grid.transfer
    images = np.einsum('kia,pij,kjb->pkab', G.conj(), units, G)
    images = images.reshape(units.shape[0], -1)
    return np.concatenate([images.real, images.imag], axis=1).T


def range_basis(grid):
    """Range Gamma as the orthogonal complement of ker(X -> G* X G) on the grid."""
    if grid.K < 2 * grid.n + 2:
        raise ValueError(f'range computation needs K >= 2n+2, got K={grid.K}')
    operator = _adjoint_matrix(grid)
    _, singular, vh = np.linalg.svd(operator, full_matrices=False)
    rank = int(np.sum(singular > RANGE_CUTOFF * singular[0]))
    element_coords = vh[:rank].copy()
    elements = hermitian_from_coordinates(element_coords, grid.n)
    complement = hermitian_from_coordinates(vh[rank:], grid.n)
    for array in (elements, complement, element_coords, singular):
        array.setflags(write=False)
    logger.debug('dim Range Gamma = %d of %d', rank, grid.n ** 2)
    return RangeGammaBasis(
        grid=grid, elements=elements, complement=complement,
        element_coords=element_coords, singular_values=singular,
    )


def project_range(sigma, basis):
    """Orthogonal projection of a Hermitian matrix onto Range Gamma."""
    sigma = as_hermitian(sigma)
    if sigma.shape != (basis.n, basis.n):
        raise DimensionMismatch(f'expected {basis.n}x{basis.n}, got {sigma.shape}')
    return basis.matrix(basis.coordinates(sigma))


@dataclass(frozen=True)
class FeasibilityCertificate:
    H: object
    equation_residual: float
    projection_residual: float
    min_eigenvalue: float
    feasible: bool
    tolerance: float

    @property
    def solvable(self):
        return self.H is not None


def _cross_term_operator(filt):
    """Real matrix of H -> B H + H* B* from R^{2mn} into the coordinates of H(n)."""
    n, m = filt.n, filt.m
    columns = []
    for part in (1.0, 1j):
        for i in range(m):
            for j in range(n):
                unit = np.zeros((m, n), dtype=complex)
                unit[i, j] = part
                image = filt.B @ unit
                columns.append(hermitian_coordinates(image + image.conj().T))
    return np.array(columns).T


def solve_state_equation(filt, sigma):
    """Least-squares H for Sigma - A Sigma A* = B H + H* B*; returns (H, residual)."""
    n, m = filt.n, filt.m
    lhs = sigma - filt.A @ sigma @ filt.A.conj().T
    operator = _cross_term_operator(filt)
    params, *_ = scipy.linalg.lstsq(operator, hermitian_coordinates(lhs))
    H = (params[:m * n] + 1j * params[m * n:]).reshape(m, n)
    residual = lhs - filt.B @ H - H.conj().T @ filt.B.conj().T
    return H, frobenius(residual)


def feasibility(filt, sigma, basis, tol=FEASIBILITY_TOLERANCE):
    """Certify whether Sigma lies in P_Gamma."""
    sigma = as_hermitian(sigma)
    scale = frobenius(sigma)
    H, equation_residual = solve_state_equation(filt, sigma)
    projection_residual = frobenius(sigma - project_range(sigma, basis))
    min_eigenvalue = float(np.linalg.eigvalsh(sigma)[0])
    feasible = projection_residual <= tol * scale and min_eigenvalue > 0
    return FeasibilityCertificate(
        H=H if equation_residual <= tol * scale else None,
        equation_residual=equation_residual,
        projection_residual=projection_residual,
        min_eigenvalue=min_eigenvalue,
        feasible=bool(feasible),
        tolerance=tol,
    )


@dataclass(frozen=True)
class CovarianceInPGamma:
    sigma: np.ndarray
    certificate: FeasibilityCertificate
    repair: dict = field(default_factory=dict)


def certify_covariance(filt, sigma, basis, tol=FEASIBILITY_TOLERANCE):
    """Wrap Sigma as a member of P_Gamma or raise InfeasibleCovariance."""
    sigma = as_hermitian(sigma)
    certificate = feasibility(filt, sigma, basis, tol=tol)
    if not certificate.feasible:
        reason = 'not positive definite' if certificate.min_eigenvalue <= 0 else 'not in Range Gamma'
        raise InfeasibleCovariance(f'Sigma is {reason}', certificate=certificate)
    return CovarianceInPGamma(sigma=sigma, certificate=certificate)


def _meets_floor(matrix, floor, minimum=0.0):
    eigenvalues = np.linalg.eigvalsh(matrix)
    n = matrix.shape[0]
    return eigenvalues[0] > 0 and eigenvalues[0] >= max(floor * np.trace(matrix).real / n, minimum)


def _smallest_admissible(candidate, lo, hi, floor, minimum):
    """Bisect the boundary of {s in [lo, hi] : candidate(s) meets the floor}."""
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if _meets_floor(candidate(mid), floor, minimum):
            hi = mid
        else:
            lo = mid
    return hi


def nearest_feasible(sigma_hat, basis, filt, method='blend', pd_floor=PD_FLOOR,
                     tol=FEASIBILITY_TOLERANCE):
    """Repair an estimated covariance into P_Gamma.

    The estimate is projected onto Range Gamma. If the projection is not
    comfortably positive definite (smallest eigenvalue below ``pd_floor``
    times the mean eigenvalue) it is moved toward Sigma_0 = Gamma(I) until
    the smallest eigenvalue also reaches ``pd_floor`` times the mean
    eigenvalue of Sigma_0:
    ``blend`` uses (1-t) Sigma_p + t Sigma_0 with the smallest t in (0, 1],
    ``shift`` uses Sigma_p + s Sigma_0 with the smallest s > 0.
    """
    if method not in REPAIR_METHODS:
        raise ValueError(f'unknown repair method {method!r}')
    projected = project_range(sigma_hat, basis)
    projection_residual = frobenius(as_hermitian(sigma_hat) - projected)
    anchor = gamma_identity(basis.grid)
    minimum = pd_floor * np.trace(anchor).real / basis.n

    if _meets_floor(projected, pd_floor):
        weight, repaired = 0.0, projected
    elif method == 'blend':
        if not _meets_floor(anchor, pd_floor):
            raise RepairFailed('Gamma(I) does not meet the positivity floor')
        weight = _smallest_admissible(
            lambda t: (1 - t) * projected + t * anchor, 0.0, 1.0, pd_floor, minimum,
        )
        repaired = (1 - weight) * projected + weight * anchor
    else:
        upper = 1.0
        while not _meets_floor(projected + upper * anchor, pd_floor, minimum):
            upper *= 2.0
            if upper > 1e12:
                raise RepairFailed('no admissible shift toward Gamma(I)')
        weight = _smallest_admissible(
            lambda s: projected + s * anchor, 0.0, upper, pd_floor, minimum,
        )
        repaired = projected + weight * anchor

    repaired = as_hermitian(repaired, tol=None)
    certificate = feasibility(filt, repaired, basis, tol=tol)
    if not certificate.feasible:
        raise RepairFailed('repaired covariance failed certification')
    if weight > 0:
        logger.info('repaired covariance by %s with weight %.3g', method, weight)
    return CovarianceInPGamma(
        sigma=repaired,
        certificate=certificate,
        repair={
            'method': method,
            'weight': float(weight),
            'projection_residual': projection_residual,
        },
    )
