from django.core.management.base import CommandError

from spectra.artifacts import matrix_payload, write_json, write_spectrum_csv
from spectra.exceptions import SpectraError
from spectra.serializers import encode_matrix
from spectra.solvers import approximate

from ._base import EXIT_NOT_CONVERGED, ProblemCommand

REPAIR_HINT = '; repair it with an estimate-style projection onto P_Gamma (manage.py estimate)'


def dual_payload(result):
    lam = result.dual
    return matrix_payload(
        lam.matrix,
        kind=lam.kind,
        coordinates=lam.coordinates,
        margin=lam.margin,
        basis=[encode_matrix(element) for element in lam.basis.elements],
    )


def report_payload(problem, result, **extra):
    return {
        'metric': result.metric,
        'n': problem.n,
        'm': problem.m,
        'grid_points': problem.grid.K,
        'range_dimension': problem.basis.d,
        'constraint_residual': result.constraint_residual,
        'divergence': result.divergence,
        'solver': result.report.as_dict(),
        **extra,
    }


def run_approximation(problem, metric, sigma):
    try:
        return approximate(metric, sigma, problem.psi, problem.basis, problem.solver)
    except SpectraError as exc:
        raise CommandError(f'dual solve failed: {exc}', returncode=EXIT_NOT_CONVERGED) from exc


def write_solution(output, problem, result, dual=True, **extra):
    written = [write_spectrum_csv(output / 'spectrum.csv', result.spectrum)]
    if dual:
        written.append(write_json(output / 'dual.json', dual_payload(result)))
    written.append(write_json(output / 'report.json', report_payload(problem, result, **extra)))
    return written


class Command(ProblemCommand):
    help = 'Find the spectrum closest to the prior Psi that matches the state covariance Sigma.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_metric_argument(parser)
        self.add_output_argument(parser)

    def handle(self, *args, **options):
        problem = self.load(options)
        metric = self.metric(options, problem)
        sigma = self.certify(problem, self.require_sigma(problem), hint=REPAIR_HINT)

        result = run_approximation(problem, metric, sigma)
        self.stdout.write(f'constraint residual ||Gamma(Phi) - Sigma||_F = {result.constraint_residual:.6e}')
        self.stdout.write(f'divergence = {result.divergence:.12g}')
        written = write_solution(self.output_dir(options), problem, result)
        self.finish(result.report, written)
