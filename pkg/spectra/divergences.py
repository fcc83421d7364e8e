"""
Spectral densities sampled on a FrequencyGrid, their spectral factors, and
the Kullback-Leibler / Hellinger discrepancies between them.
"""
from dataclasses import dataclass

import numpy as np

from .circle import integrate_circle
from .exceptions import (
    DimensionMismatch, GridMismatch, NotCoercive, NotHermitian, NotScalar,
)

COERCIVITY = 1e-8
HERMITIAN_TOLERANCE = 1e-13
ROLES = ('prior', 'solution', 'true', 'estimate')


def hermitian_part(samples):
    return (samples + np.swapaxes(samples.conj(), -1, -2)) / 2


def hermitian_sqrt(samples, floor=0.0):
    """Pointwise Hermitian square root via eigendecomposition, eigenvalues floored."""
    eigenvalues, vectors = np.linalg.eigh(hermitian_part(samples))
    roots = np.sqrt(np.maximum(eigenvalues, floor))
    return (vectors * roots[..., None, :]) @ np.swapaxes(vectors.conj(), -1, -2)


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    grid: object
    samples: np.ndarray
    role: str = 'prior'

    def __post_init__(self):
        samples = np.array(self.samples, dtype=complex)
        if samples.ndim == 1:
            samples = samples[:, None, None]
        if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
            raise DimensionMismatch(f'expected (K, m, m) samples, got shape {samples.shape}')
        if samples.shape[0] != self.grid.K:
            raise GridMismatch(f'{samples.shape[0]} samples for a grid of {self.grid.K} points')
        if self.role not in ROLES:
            raise ValueError(f'unknown spectrum role {self.role!r}')

        scale = np.maximum(1.0, np.max(np.abs(samples), axis=(1, 2)))
        skew = np.max(np.abs(samples - np.swapaxes(samples.conj(), 1, 2)), axis=(1, 2))
        if np.any(skew > HERMITIAN_TOLERANCE * scale):
            raise NotHermitian('spectral density samples are not Hermitian')
        samples = hermitian_part(samples)

        eigenvalues = np.linalg.eigvalsh(samples)
        if eigenvalues[:, 0].min() < COERCIVITY or eigenvalues[:, -1].max() > 1.0 / COERCIVITY:
            raise NotCoercive(
                f'eigenvalues span [{eigenvalues[:, 0].min():.3g}, {eigenvalues[:, -1].max():.3g}], '
                f'must stay within [{COERCIVITY:g}, {1.0 / COERCIVITY:g}]'
            )
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)

    @property
    def m(self):
        return self.samples.shape[1]

    @property
    def K(self):
        return self.samples.shape[0]

    def scalar_samples(self):
        if self.m != 1:
            raise NotScalar(f'expected a scalar spectrum, got m = {self.m}')
        return self.samples[:, 0, 0].real

    def integral(self):
        return integrate_circle(self.samples)


def constant_spectrum(grid, value, role='prior'):
    value = np.atleast_2d(np.asarray(value, dtype=complex))
    return SpectralDensity(grid, np.broadcast_to(value, (grid.K,) + value.shape), role=role)


def white_spectrum(grid, role='prior'):
    return constant_spectrum(grid, np.eye(grid.m), role=role)


def spectrum_from_function(grid, func, role='prior'):
    """Sample ``func(theta) -> (m, m)`` on every grid angle."""
    return SpectralDensity(grid, np.array([func(t) for t in grid.theta]), role=role)


@dataclass(frozen=True, eq=False)
class SpectralFactor:
    grid: object
    samples: np.ndarray

    def spectrum_samples(self):
        return self.samples @ np.swapaxes(self.samples.conj(), -1, -2)


def hermitian_factor(spectrum):
    """The pointwise positive square root W = Phi^{1/2}."""
    return SpectralFactor(spectrum.grid, hermitian_sqrt(spectrum.samples, floor=COERCIVITY))


def aligned_factor(spectrum, reference):
    """Factor of ``spectrum`` closest in L2 to the factor ``reference``.

    At each frequency this is Phi^{1/2} U, U the unitary polar factor of
    Phi^{1/2} W_ref (an orthogonal Procrustes problem).
    """
    reference = np.asarray(getattr(reference, 'samples', reference))
    root = hermitian_sqrt(spectrum.samples, floor=COERCIVITY)
    u, _, vh = np.linalg.svd(np.swapaxes(root.conj(), -1, -2) @ reference)
    return SpectralFactor(spectrum.grid, root @ (u @ vh))


def factor_distance(first, second):
    """||W_1 - W_2||_2 in L2 of the circle."""
    diff = np.asarray(getattr(first, 'samples', first)) - np.asarray(getattr(second, 'samples', second))
    return float(np.sqrt(integrate_circle(np.sum(np.abs(diff) ** 2, axis=(-2, -1)))))


def _check_pair(first, second):
    if first.samples.shape != second.samples.shape:
        raise DimensionMismatch(
            f'spectra have shapes {first.samples.shape} and {second.samples.shape}'
        )
    if not first.grid.same_as(second.grid):
        raise GridMismatch('spectra are sampled on different grids')


def kl_divergence(psi, phi):
    """D(Psi || Phi) = int Psi log(Psi / Phi), scalar spectra only."""
    _check_pair(psi, phi)
    psi_k, phi_k = psi.scalar_samples(), phi.scalar_samples()
    return float(integrate_circle(psi_k * np.log(psi_k / phi_k)))


def hellinger_scalar(phi, psi):
    _check_pair(phi, psi)
    phi_k, psi_k = phi.scalar_samples(), psi.scalar_samples()
    return float(np.sqrt(integrate_circle((np.sqrt(phi_k) - np.sqrt(psi_k)) ** 2)))


def hellinger_multivar(phi, psi):
    """Distance between the sets of square spectral factors of Phi and Psi.

    Psi^{1/2} is held fixed and the factor of Phi is aligned to it pointwise;
    the result equals :func:`hellinger_trace_form` without its cancellation
    near Phi = Psi.
    """
    _check_pair(phi, psi)
    reference = hermitian_factor(psi)
    return factor_distance(aligned_factor(phi, reference), reference)


def hellinger_trace_form(phi, psi):
    """d_H from int tr Phi + tr Psi - 2 tr (Psi^{1/2} Phi Psi^{1/2})^{1/2}."""
    _check_pair(phi, psi)
    root = hermitian_sqrt(psi.samples, floor=COERCIVITY)
    cross = hermitian_part(root @ phi.samples @ root)
    nuclear = np.sqrt(np.maximum(np.linalg.eigvalsh(cross), 0.0)).sum(axis=-1)
    traces = np.trace(phi.samples, axis1=1, axis2=2).real + np.trace(psi.samples, axis1=1, axis2=2).real
    return float(np.sqrt(max(integrate_circle(traces - 2.0 * nuclear), 0.0)))
