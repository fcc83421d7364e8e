"""
Filter banks x(t+1) = A x(t) + B y(t), their transfer function
G(z) = (zI - A)^{-1} B sampled on a uniform unit-circle grid, and
quadrature with respect to the normalized Lebesgue measure dtheta/2pi.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    DimensionMismatch, NotHermitian, NotReachable, NotStable,
    RankDeficientB, SingularResolvent,
)

logger = logging.getLogger(__name__)

STABILITY_MARGIN = 1e-9
RANK_TOLERANCE = 1e-12
MIN_GRID_POINTS = 64
DEFAULT_GRID_POINTS = 512
HERMITIAN_TOLERANCE = 1e-13


def _frozen(array):
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


def numerical_rank(matrix):
    """Rank with singular-value cutoff size * ||matrix|| * 1e-12."""
    if matrix.size == 0:
        return 0
    singular = np.linalg.svd(matrix, compute_uv=False)
    cutoff = max(matrix.shape) * singular[0] * RANK_TOLERANCE
    return int(np.sum(singular > cutoff))


@dataclass(frozen=True)
class StateSpaceFilter:
    A: np.ndarray
    B: np.ndarray
    spectral_radius: float
    input_rank: int
    reachability_rank: int

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


def reachability_matrix(A, B):
    """[B, AB, ..., A^{n-1}B]."""
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def build_filter(A, B):
    """Check the filter invariants and return an immutable StateSpaceFilter."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.asarray(B, dtype=complex)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    elif B.ndim == 0:
        B = B.reshape(1, 1)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f'A must be square, got shape {A.shape}')
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionMismatch(f'B must have {n} rows, got shape {B.shape}')
    m = B.shape[1]
    if m > n:
        raise RankDeficientB(f'B has {m} columns but only {n} rows')

    radius = float(np.max(np.abs(np.linalg.eigvals(A))))
    if radius > 1.0 - STABILITY_MARGIN:
        raise NotStable(f'spectral radius of A is {radius:.12g}, must be below 1 - {STABILITY_MARGIN:g}')

    input_rank = numerical_rank(B)
    if input_rank < m:
        raise RankDeficientB(f'rank(B) = {input_rank} < m = {m}')

    reach_rank = numerical_rank(reachability_matrix(A, B))
    if reach_rank < n:
        raise NotReachable(f'reachability matrix has rank {reach_rank} < n = {n}')

    return StateSpaceFilter(
        A=_frozen(A), B=_frozen(B), spectral_radius=radius,
        input_rank=input_rank, reachability_rank=reach_rank,
    )


def transfer_at(filt, theta):
    """G(e^{j theta}) for every angle in ``theta``; shape (len(theta), n, m)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    z = np.exp(1j * theta)
    resolvent = z[:, None, None] * np.eye(filt.n) - filt.A[None, :, :]
    rhs = np.broadcast_to(filt.B, (len(theta),) + filt.B.shape)
    try:
        samples = np.linalg.solve(resolvent, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularResolvent('zI - A is singular on the unit circle') from exc
    if not np.all(np.isfinite(samples)):
        raise SingularResolvent('transfer function is not finite on the unit circle')
    return samples


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    filter: StateSpaceFilter
    theta: np.ndarray
    transfer: np.ndarray

    @property
    def K(self):
        return self.theta.shape[0]

    @property
    def n(self):
        return self.filter.n

    @property
    def m(self):
        return self.filter.m

    def same_as(self, other):
        return other is self or (
            other.K == self.K
            and other.filter.A.shape == self.filter.A.shape
            and np.array_equal(other.transfer, self.transfer)
        )


def grid_angles(K):
    return 2.0 * np.pi * np.arange(K) / K


def eval_transfer(filt, K=DEFAULT_GRID_POINTS):
    """Sample G on theta_k = 2 pi k / K, k = 0..K-1."""
    K = int(K)
    if K % 2 or K < MIN_GRID_POINTS:
        raise ValueError(f'grid size must be even and at least {MIN_GRID_POINTS}, got {K}')
    theta = grid_angles(K)
    theta.setflags(write=False)
    samples = transfer_at(filt, theta)
    samples.setflags(write=False)
    logger.debug('sampled G on %d points (n=%d, m=%d)', K, filt.n, filt.m)
    return FrequencyGrid(filter=filt, theta=theta, transfer=samples)


def integrate_circle(samples):
    """Mean of grid samples along the first axis: the periodic trapezoid rule."""
    samples = np.asarray(samples)
    if samples.ndim == 0 or samples.shape[0] == 0:
        raise DimensionMismatch('need at least one grid sample')
    return samples.sum(axis=0) / samples.shape[0]


def lyapunov_sigma(filt):
    """Solve Sigma - A Sigma A* = B B* directly (vectorized linear solve)."""
    sigma = scipy.linalg.solve_discrete_lyapunov(
        filt.A, filt.B @ filt.B.conj().T, method='direct',
    )
    return as_hermitian(sigma, tol=None)


# -- Hermitian matrices ---------------------------------------------------

def as_hermitian(matrix, tol=HERMITIAN_TOLERANCE):
    """Return (M + M*)/2, refusing matrices that are not Hermitian within ``tol``."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f'expected a square matrix, got shape {matrix.shape}')
    if tol is not None:
        scale = max(1.0, float(np.max(np.abs(matrix))))
        if np.max(np.abs(matrix - matrix.conj().T)) > tol * scale:
            raise NotHermitian('matrix is not Hermitian')
    return (matrix + matrix.conj().T) / 2


def hermitian_coordinates(matrix):
    """Isometry H(n) -> R^{n^2} for the inner product <X, Y> = tr XY.

    Layout: the real diagonal, then sqrt(2) Re and sqrt(2) Im of the strict
    upper triangle in row-major order.
    """
    matrix = np.asarray(matrix)
    n = matrix.shape[-1]
    rows, cols = np.triu_indices(n, k=1)
    upper = matrix[..., rows, cols]
    return np.concatenate([
        np.real(np.diagonal(matrix, axis1=-2, axis2=-1)),
        np.sqrt(2.0) * upper.real,
        np.sqrt(2.0) * upper.imag,
    ], axis=-1)


def hermitian_from_coordinates(coords, n):
    """Inverse of :func:`hermitian_coordinates`; accepts leading batch axes."""
    coords = np.asarray(coords, dtype=float)
    rows, cols = np.triu_indices(n, k=1)
    p = len(rows)
    batch = coords.shape[:-1]
    matrix = np.zeros(batch + (n, n), dtype=complex)
    idx = np.arange(n)
    matrix[..., idx, idx] = coords[..., :n]
    upper = (coords[..., n:n + p] + 1j * coords[..., n + p:]) / np.sqrt(2.0)
    matrix[..., rows, cols] = upper
    matrix[..., cols, rows] = upper.conj()
    return matrix


def hermitian_unit_basis(n):
    """Orthonormal real basis of H(n), shape (n^2, n, n)."""
    return hermitian_from_coordinates(np.eye(n * n), n)
