import numpy as np
from django.core.management.base import CommandError

from spectra.artifacts import write_json, write_table_csv
from spectra.conf import get_setting
from spectra.estimation import consistency_experiment, continuity_experiment, summarize
from spectra.exceptions import InfeasibleCovariance, ProblemError, SpectraError
from spectra.gamma import REPAIR_METHODS, gamma_apply
from spectra.problem import synthesis_truth

from ._base import (
    EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NOT_CONVERGED, ProblemCommand, comma_list,
)

DEFAULT_T_LIST = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
DEFAULT_N_LIST = [2 ** 8, 2 ** 10, 2 ** 12, 2 ** 14]
DEFAULT_TRIALS = 20


def random_direction(n, seed):
    """A seeded random Hermitian n x n matrix."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (X + X.conj().T) / 2


def pick(option, *fallbacks):
    for value in (option,) + fallbacks:
        if value is not None:
            return value
    return None


class Command(ProblemCommand):
    help = 'Run the continuity or consistency experiment and write table.csv and summary.json.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('kind', choices=['continuity', 'consistency'])
        self.add_metric_argument(parser)
        self.add_output_argument(parser)
        parser.add_argument('--t-list', type=comma_list(float), dest='t_list', help='Decreasing perturbation sizes a,b,c.')
        parser.add_argument('--n-list', type=comma_list(int), dest='n_list', help='Increasing sample sizes a,b,c.')
        parser.add_argument('--trials', type=int, help='Monte-Carlo trials per sample size.')
        parser.add_argument('--seed', type=int, help='Master seed.')
        parser.add_argument('--repair', choices=REPAIR_METHODS)

    def base_sigma(self, problem):
        if problem.sigma is not None:
            return self.certify(problem, problem.sigma)
        try:
            truth = synthesis_truth(problem)
        except ProblemError as exc:
            raise CommandError('\n'.join(exc.diagnostics), returncode=EXIT_INPUT) from exc
        return self.certify(problem, gamma_apply(problem.grid, truth))

    def continuity(self, problem, metric, options):
        spec = problem.experiment
        seed = pick(options.get('seed'), spec.get('seed'), 0)
        direction = spec.get('direction')
        if direction is None:
            direction = random_direction(problem.n, seed)
        t_list = pick(options.get('t_list'), spec.get('t_list'), DEFAULT_T_LIST)
        sigma = self.base_sigma(problem)
        return continuity_experiment(
            sigma, problem.psi, direction, t_list, metric,
            problem.basis, problem.filter, options=problem.solver, strict=False,
        )

    def consistency(self, problem, metric, options):
        spec, synthesis = problem.experiment, problem.synthesis
        try:
            phi_true = synthesis_truth(problem)
        except ProblemError as exc:
            raise CommandError('\n'.join(exc.diagnostics), returncode=EXIT_INPUT) from exc
        return consistency_experiment(
            problem.filter, phi_true, problem.psi,
            n_list=pick(options.get('n_list'), spec.get('n_list'), DEFAULT_N_LIST),
            trials=pick(options.get('trials'), spec.get('trials'), DEFAULT_TRIALS),
            metric=metric,
            seed=pick(options.get('seed'), spec.get('seed'), synthesis.get('seed'), 0),
            basis=problem.basis,
            options=problem.solver,
            threads=get_setting('THREADS'),
            taps=synthesis.get('taps') or get_setting('TAPS'),
            repair=pick(options.get('repair'), spec.get('repair'), 'blend'),
        )

    def handle(self, *args, **options):
        problem = self.load(options)
        metric = self.metric(options, problem)
        runner = self.continuity if options['kind'] == 'continuity' else self.consistency
        try:
            table = runner(problem, metric, options)
        except CommandError:
            raise
        except InfeasibleCovariance as exc:
            raise CommandError(str(exc), returncode=EXIT_INFEASIBLE) from exc
        except SpectraError as exc:
            raise CommandError(f'experiment failed: {exc}', returncode=EXIT_NOT_CONVERGED) from exc
        except ValueError as exc:
            raise CommandError(str(exc), returncode=EXIT_INPUT) from exc

        summary = summarize(table)
        output = self.output_dir(options)
        for path in (write_table_csv(output / 'table.csv', table), write_json(output / 'summary.json', summary)):
            self.stdout.write(f'wrote {path}')
        for key in sorted(k for k in summary if k.endswith('_ratio')):
            value = summary[key]
            self.stdout.write(f'{key}: ' + ('n/a' if value is None else f'{value:.4g}'))
        self.stdout.write(self.style.SUCCESS(f'{table.kind} table complete ({len(table.rows)} rows)'))
