"""
Load a problem file into validated library objects.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .circle import as_hermitian, eval_transfer
from .conf import get_setting
from .divergences import SpectralDensity, constant_spectrum, white_spectrum
from .exceptions import ProblemError, SpectraError
from .gamma import range_basis
from .serializers import ProblemSerializer, flatten_errors
from .solvers import SolverOptions

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Problem:
    filter: object
    grid: object
    basis: object
    psi: SpectralDensity
    sigma: object = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    data_path: object = None
    synthesis: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    source: object = None

    @property
    def n(self):
        return self.filter.n

    @property
    def m(self):
        return self.filter.m


def build_spectrum(spec, grid, role, field_name):
    """Turn a validated spectrum block into a SpectralDensity on ``grid``."""
    m = grid.m
    try:
        if spec is None or spec['kind'] == 'white':
            return white_spectrum(grid, role=role)
        if spec['kind'] == 'constant':
            value = spec['value']
            if isinstance(value, float):
                value = value * np.eye(m)
            elif value.shape != (m, m):
                raise ProblemError([f'{field_name}.value: Expected a {m}x{m} matrix, got {value.shape}.'])
            return constant_spectrum(grid, value, role=role)
        samples = np.array(spec['samples'])
        if samples.shape != (grid.K, m, m):
            raise ProblemError([
                f'{field_name}.samples: Expected {grid.K} samples of shape {m}x{m}, got {samples.shape}.'
            ])
        return SpectralDensity(grid, samples, role=role)
    except ProblemError:
        raise
    except SpectraError as exc:
        raise ProblemError([f'{field_name}: {exc}']) from exc


def parse_problem(payload, base_dir=None, grid_points=None, tol=None, max_iter=None):
    """Validate a decoded problem payload; keyword overrides beat file values."""
    serializer = ProblemSerializer(data=payload)
    if not serializer.is_valid():
        raise ProblemError(flatten_errors(serializer.errors))
    attrs = serializer.validated_data

    filt = attrs['filter']
    K = grid_points or attrs.get('grid_points') or get_setting('GRID_POINTS')
    try:
        grid = eval_transfer(filt, K)
    except ValueError as exc:
        raise ProblemError([f'grid_points: {exc}']) from exc
    except SpectraError as exc:
        raise ProblemError([f'A: {exc}']) from exc
    basis = range_basis(grid)

    solver = dict(attrs.get('solver', {}))
    if tol is not None:
        solver['tol'] = tol
    if max_iter is not None:
        solver['max_iter'] = max_iter

    data_path = attrs.get('data')
    if data_path is not None:
        data_path = Path(data_path)
        if base_dir is not None and not data_path.is_absolute():
            data_path = Path(base_dir) / data_path

    sigma = attrs.get('Sigma')
    problem = Problem(
        filter=filt,
        grid=grid,
        basis=basis,
        psi=build_spectrum(attrs.get('Psi'), grid, 'prior', 'Psi'),
        sigma=None if sigma is None else as_hermitian(sigma, tol=None),
        solver=SolverOptions(**solver),
        data_path=data_path,
        synthesis=dict(attrs.get('synthesis', {})),
        experiment=dict(attrs.get('experiment', {})),
    )
    logger.debug('problem n=%d m=%d K=%d dim Range Gamma=%d', filt.n, filt.m, grid.K, basis.d)
    return problem


def load_problem(path, **overrides):
    """Read and validate a problem file; raises ProblemError with field-path diagnostics."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise ProblemError([f'{path}: {exc.strerror or exc}']) from exc
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProblemError([f'{path}: not valid UTF-8 JSON ({exc})']) from exc
    problem = parse_problem(payload, base_dir=path.parent, **overrides)
    return replace(problem, source=path)


def synthesis_truth(problem):
    """Phi_true of the synthesis block (white when absent)."""
    return build_spectrum(problem.synthesis.get('Phi_true'), problem.grid, 'true', 'synthesis.Phi_true')
