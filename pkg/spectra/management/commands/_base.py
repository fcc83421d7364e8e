"""
Shared plumbing for the spectra management commands: problem loading,
common flags and the exit-code contract.
"""
import sys
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from spectra.exceptions import InfeasibleCovariance, ProblemError
from spectra.gamma import certify_covariance
from spectra.problem import load_problem
from spectra.solvers import KL, METRICS

EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_NOT_CONVERGED = 3


def comma_list(kind):
    """argparse type for ``a,b,c`` lists."""
    def parse(text):
        try:
            return [kind(item) for item in text.split(',') if item.strip()]
        except ValueError as exc:
            raise ValueError(f'invalid list {text!r}') from exc
    parse.__name__ = f'{kind.__name__}_list'
    return parse


class ProblemCommand(BaseCommand):
    requires_system_checks = []
    default_output = 'out'

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        usage_error = parser.error

        def error(message):
            # argparse exits with 2, which is reserved for infeasible problems
            try:
                usage_error(message)
            except SystemExit:
                sys.exit(EXIT_INPUT)

        parser.error = error
        return parser

    def add_arguments(self, parser):
        parser.add_argument('problem', help='Path to the JSON problem file.')
        parser.add_argument('--grid', type=int, dest='grid', help='Grid size K (even, >= 64).')
        parser.add_argument('--tol', type=float, help='Relative gradient tolerance.')
        parser.add_argument('--max-iter', type=int, dest='max_iter', help='Newton iteration cap.')

    def add_metric_argument(self, parser):
        parser.add_argument('--metric', choices=sorted(METRICS), default='hellinger')

    def add_output_argument(self, parser):
        parser.add_argument('--output', default=self.default_output, help='Directory for the artifacts.')

    def load(self, options):
        try:
            return load_problem(
                options['problem'],
                grid_points=options.get('grid'),
                tol=options.get('tol'),
                max_iter=options.get('max_iter'),
            )
        except ProblemError as exc:
            raise CommandError('\n'.join(exc.diagnostics), returncode=EXIT_INPUT) from exc

    def output_dir(self, options):
        path = Path(options['output'])
        path.mkdir(parents=True, exist_ok=True)
        return path

    def metric(self, options, problem):
        metric = METRICS[options['metric']]
        if metric == KL and problem.m != 1:
            raise CommandError('Kullback-Leibler approximation is scalar-only', returncode=EXIT_INPUT)
        return metric

    def require_sigma(self, problem):
        if problem.sigma is None:
            raise CommandError('Sigma: This field is required.', returncode=EXIT_INPUT)
        return problem.sigma

    def certify(self, problem, sigma, hint=''):
        try:
            return certify_covariance(problem.filter, sigma, problem.basis)
        except InfeasibleCovariance as exc:
            raise CommandError(f'{exc}{hint}', returncode=EXIT_INFEASIBLE) from exc

    def finish(self, report, written):
        for path in written:
            self.stdout.write(f'wrote {path}')
        if not report.converged:
            raise CommandError(
                f'dual solve did not converge (gradient norm {report.gradient_norm:.3g} '
                f'after {report.iterations} iterations)',
                returncode=EXIT_NOT_CONVERGED,
            )
        self.stdout.write(self.style.SUCCESS('converged'))
