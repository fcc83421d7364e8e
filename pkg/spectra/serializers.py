"""
Problem-file schema.

A problem file is UTF-8 JSON. Complex numbers are ``[re, im]`` pairs and
matrices are row-major nested lists of such pairs. Every serializer here is
strict: fields it does not declare are reported instead of ignored.
"""
import numpy as np
from rest_framework import serializers

from .circle import MIN_GRID_POINTS, build_filter
from .exceptions import DimensionMismatch, FilterError, RankDeficientB
from .gamma import REPAIR_METHODS

PSI_KINDS = ('white', 'constant', 'grid')


def decode_matrix(data):
    """Nested [re, im] pairs -> complex ndarray (raises ValueError/TypeError)."""
    pairs = np.asarray(data, dtype=float)
    if pairs.ndim < 1 or pairs.shape[-1] != 2:
        raise ValueError('expected [re, im] pairs')
    return pairs[..., 0] + 1j * pairs[..., 1]


def encode_matrix(matrix):
    matrix = np.asarray(matrix, dtype=complex)
    return np.stack([matrix.real, matrix.imag], axis=-1).tolist()


class ComplexMatrixField(serializers.Field):
    default_error_messages = {
        'invalid': 'Expected a matrix given as nested lists of [re, im] pairs.',
        'not_square': 'Expected a square matrix, got shape {shape}.',
        'not_finite': 'Matrix entries must be finite.',
    }

    def __init__(self, *, square=False, **kwargs):
        self.square = square
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        if isinstance(data, (str, bytes)):
            self.fail('invalid')
        try:
            matrix = decode_matrix(data)
        except (TypeError, ValueError):
            self.fail('invalid')
        if matrix.ndim == 1:
            matrix = matrix.reshape(-1, 1)
        if matrix.ndim != 2:
            self.fail('invalid')
        if not np.all(np.isfinite(matrix)):
            self.fail('not_finite')
        if self.square and matrix.shape[0] != matrix.shape[1]:
            self.fail('not_square', shape=matrix.shape)
        return matrix

    def to_representation(self, value):
        return encode_matrix(value)


class ComplexValueField(ComplexMatrixField):
    """A real number or a square [re, im] matrix."""

    def __init__(self, **kwargs):
        super().__init__(square=True, **kwargs)

    def to_internal_value(self, data):
        if isinstance(data, bool):
            self.fail('invalid')
        if isinstance(data, (int, float)):
            if not np.isfinite(data):
                self.fail('not_finite')
            return float(data)
        return super().to_internal_value(data)


class FloatListField(serializers.ListField):
    child = serializers.FloatField()


class StrictSerializer(serializers.Serializer):
    """Serializer that reports undeclared keys as errors."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({name: ['Unknown field.'] for name in unknown})
        return super().to_internal_value(data)


class SpectrumSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=PSI_KINDS)
    value = ComplexValueField(required=False)
    samples = serializers.ListField(child=ComplexMatrixField(square=True), required=False, allow_empty=False)

    def validate(self, attrs):
        if attrs['kind'] == 'constant' and 'value' not in attrs:
            raise serializers.ValidationError({'value': ['Required for a constant spectrum.']})
        if attrs['kind'] == 'grid' and 'samples' not in attrs:
            raise serializers.ValidationError({'samples': ['Required for a grid spectrum.']})
        return attrs


class SolverSerializer(StrictSerializer):
    tol = serializers.FloatField(required=False)
    max_iter = serializers.IntegerField(min_value=1, required=False)

    def validate_tol(self, value):
        if value <= 0:
            raise serializers.ValidationError('Ensure this value is greater than 0.')
        return value


class SynthesisSerializer(StrictSerializer):
    Phi_true = SpectrumSerializer(required=False)
    n_samples = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0, default=0)
    taps = serializers.IntegerField(min_value=2, required=False)
    burn_in = serializers.IntegerField(min_value=0, required=False)


class ExperimentSerializer(StrictSerializer):
    t_list = FloatListField(required=False, allow_empty=False)
    n_list = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False, allow_empty=False)
    trials = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    direction = ComplexMatrixField(square=True, required=False)
    repair = serializers.ChoiceField(choices=REPAIR_METHODS, required=False)


class ProblemSerializer(StrictSerializer):
    A = ComplexMatrixField(square=True)
    B = ComplexMatrixField()
    Sigma = ComplexMatrixField(square=True, required=False)
    Psi = SpectrumSerializer(required=False)
    grid_points = serializers.IntegerField(min_value=MIN_GRID_POINTS, required=False)
    solver = SolverSerializer(required=False)
    data = serializers.CharField(required=False)
    synthesis = SynthesisSerializer(required=False)
    experiment = ExperimentSerializer(required=False)

    def validate_grid_points(self, value):
        if value % 2:
            raise serializers.ValidationError('Grid size must be even.')
        return value

    def validate(self, attrs):
        try:
            attrs['filter'] = build_filter(attrs['A'], attrs['B'])
        except RankDeficientB as exc:
            raise serializers.ValidationError({'B': [str(exc)]})
        except FilterError as exc:
            raise serializers.ValidationError({'A': [str(exc)]})
        except DimensionMismatch as exc:
            raise serializers.ValidationError({'B': [str(exc)]})

        n = attrs['filter'].n
        sigma = attrs.get('Sigma')
        if sigma is not None:
            if sigma.shape != (n, n):
                raise serializers.ValidationError({'Sigma': [f'Expected a {n}x{n} matrix, got {sigma.shape}.']})
            if np.max(np.abs(sigma - sigma.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(sigma))):
                raise serializers.ValidationError({'Sigma': ['Matrix is not Hermitian.']})
        direction = attrs.get('experiment', {}).get('direction')
        if direction is not None and direction.shape != (n, n):
            raise serializers.ValidationError(
                {'experiment': {'direction': [f'Expected a {n}x{n} matrix, got {direction.shape}.']}}
            )
        return attrs


def flatten_errors(detail, prefix=''):
    """DRF error detail -> sorted 'field.path: message' lines."""
    lines = []
    if isinstance(detail, dict):
        for key, value in detail.items():
            if key == 'non_field_errors':
                path = prefix or '(root)'
            else:
                path = f'{prefix}.{key}' if prefix else str(key)
            lines.extend(flatten_errors(value, path))
    elif isinstance(detail, (list, tuple)):
        for item in detail:
            lines.extend(flatten_errors(item, prefix))
    else:
        lines.append(f'{prefix or "(root)"}: {detail}')
    return sorted(lines)
