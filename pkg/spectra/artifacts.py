"""
CSV and JSON artifacts written by the management commands, and readers
for them. Every write goes to a temporary file in the target directory and
is renamed into place once complete.
"""
import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .divergences import SpectralDensity
from .exceptions import DimensionMismatch, GridMismatch
from .serializers import decode_matrix, encode_matrix


def _current_umask():
    mask = os.umask(0)
    os.umask(mask)
    return mask


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(handle, 'w', encoding='utf-8', newline='') as stream:
            stream.write(text)
        # mkstemp creates 0600; give the artifact the usual umask-derived mode
        os.chmod(temp_name, 0o666 & ~_current_umask())
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    return path


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path, payload):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    return write_atomic(path, text + '\n')


def read_json(path):
    return json.loads(Path(path).read_text(encoding='utf-8'))


def matrix_payload(matrix, **extra):
    return {'matrix': encode_matrix(matrix), **extra}


def read_matrix(path, key='matrix'):
    return decode_matrix(read_json(path)[key])


def _csv_text(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


# -- Spectrum tables ------------------------------------------------------

def spectrum_header(m):
    header = ['theta']
    for i in range(m):
        for j in range(i, m):
            header += [f'phi_{i}{j}_re', f'phi_{i}{j}_im']
    return header


def spectrum_rows(spectrum):
    rows_idx, cols_idx = np.triu_indices(spectrum.m)
    upper = spectrum.samples[:, rows_idx, cols_idx]
    values = np.empty((spectrum.K, 1 + 2 * upper.shape[1]))
    values[:, 0] = spectrum.grid.theta
    values[:, 1::2] = upper.real
    values[:, 2::2] = upper.imag
    return [[repr(float(v)) for v in row] for row in values]


def write_spectrum_csv(path, spectrum):
    return write_atomic(path, _csv_text(spectrum_header(spectrum.m), spectrum_rows(spectrum)))


def read_spectrum_csv(path, grid=None, role='solution'):
    """Return (theta, samples); with ``grid`` given, a SpectralDensity on it."""
    with open(path, newline='', encoding='utf-8') as stream:
        reader = csv.reader(stream)
        header = next(reader)
        values = np.array([[float(v) for v in row] for row in reader], dtype=float)
    m = int(round((math.sqrt(1 + 4 * (len(header) - 1)) - 1) / 2))
    if header != spectrum_header(m):
        raise DimensionMismatch(f'unexpected spectrum header {header[:4]}...')
    theta = values[:, 0]
    upper = values[:, 1::2] + 1j * values[:, 2::2]
    rows_idx, cols_idx = np.triu_indices(m)
    samples = np.zeros((values.shape[0], m, m), dtype=complex)
    samples[:, rows_idx, cols_idx] = upper
    samples[:, cols_idx, rows_idx] = upper.conj()
    if grid is None:
        return theta, samples
    if len(theta) != grid.K or not np.array_equal(theta, grid.theta):
        raise GridMismatch('spectrum file was written on a different grid')
    return SpectralDensity(grid, samples, role=role)


# -- Sample data ----------------------------------------------------------

def samples_header(m):
    header = []
    for i in range(m):
        header += [f'y{i}_re', f'y{i}_im']
    return header


def write_samples_csv(path, y):
    y = np.asarray(y, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
    values = np.empty((y.shape[0], 2 * y.shape[1]))
    values[:, 0::2] = y.real
    values[:, 1::2] = y.imag
    rows = [[repr(float(v)) for v in row] for row in values]
    return write_atomic(path, _csv_text(samples_header(y.shape[1]), rows))


def read_samples_csv(path, m=None):
    """Read an N x 2m CSV of re/im interleaved samples into an (N, m) array."""
    with open(path, newline='', encoding='utf-8') as stream:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise DimensionMismatch(f'{path} is empty') from None
        if len(header) % 2 or header != samples_header(len(header) // 2):
            raise DimensionMismatch(f'{path}: header must read y0_re,y0_im,...')
        if m is not None and len(header) != 2 * m:
            raise DimensionMismatch(f'{path}: {len(header) // 2} channels, filter expects {m}')
        rows = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DimensionMismatch(f'{path}:{line}: expected {len(header)} values, got {len(row)}')
            rows.append([float(v) for v in row])
    values = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return values[:, 0::2] + 1j * values[:, 1::2]


# -- Experiment tables ----------------------------------------------------

def table_header(table):
    return [table.control_name] + list(table.metric_names) + ['status']


def write_table_csv(path, table):
    rows = []
    for row in table.rows:
        cells = [repr(float(row.control))]
        cells += [repr(float(row.metrics[name])) for name in table.metric_names]
        cells.append(row.metadata.get('status', 'ok'))
        rows.append(cells)
    return write_atomic(path, _csv_text(table_header(table), rows))


def read_table_csv(path):
    """Return (header, rows) with numeric cells as floats."""
    with open(path, newline='', encoding='utf-8') as stream:
        reader = csv.reader(stream)
        header = next(reader)
        rows = [[float(v) for v in row[:-1]] + [row[-1]] for row in reader]
    return header, rows
