from django.core.management.base import CommandError

from spectra.artifacts import matrix_payload, read_samples_csv, write_json
from spectra.conf import get_setting
from spectra.estimation import (
    default_burn_in, generate_process, run_state_recursion, sample_covariance,
)
from spectra.exceptions import ProblemError, RepairFailed, SpectraError
from spectra.gamma import REPAIR_METHODS, nearest_feasible
from spectra.problem import synthesis_truth

from ._base import EXIT_INFEASIBLE, EXIT_INPUT, ProblemCommand
from .solve import run_approximation, write_solution


def certificate_payload(certificate):
    return {
        'equation_residual': certificate.equation_residual,
        'projection_residual': certificate.projection_residual,
        'min_eigenvalue': certificate.min_eigenvalue,
        'feasible': certificate.feasible,
        'tolerance': certificate.tolerance,
    }


class Command(ProblemCommand):
    help = 'Estimate Sigma from data (or synthesized samples), repair it into P_Gamma and solve.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_metric_argument(parser)
        self.add_output_argument(parser)
        parser.add_argument('--seed', type=int, help='Overrides synthesis.seed.')
        parser.add_argument('--repair', choices=REPAIR_METHODS, default='blend')
        parser.add_argument('--burn-in', type=int, dest='burn_in', help='Leading states left out of Sigma_hat.')

    def samples(self, problem, options):
        if problem.data_path is not None:
            try:
                return read_samples_csv(problem.data_path, m=problem.m), {'source': 'data'}
            except (OSError, ValueError, SpectraError) as exc:
                raise CommandError(f'data: {exc}', returncode=EXIT_INPUT) from exc
        if not problem.synthesis:
            raise CommandError('data: either a data path or a synthesis block is required.', returncode=EXIT_INPUT)
        synthesis = problem.synthesis
        seed = options['seed'] if options.get('seed') is not None else synthesis['seed']
        taps = synthesis.get('taps') or get_setting('TAPS')
        try:
            phi_true = synthesis_truth(problem)
            y = generate_process(phi_true, synthesis['n_samples'], seed, taps=taps)
        except ProblemError as exc:
            raise CommandError('\n'.join(exc.diagnostics), returncode=EXIT_INPUT) from exc
        except ValueError as exc:
            raise CommandError(f'synthesis.taps: {exc}', returncode=EXIT_INPUT) from exc
        return y, {'source': 'synthesis', 'seed': seed, 'taps': taps}

    def handle(self, *args, **options):
        problem = self.load(options)
        metric = self.metric(options, problem)
        y, provenance = self.samples(problem, options)

        burn_in = options.get('burn_in')
        if burn_in is None:
            burn_in = problem.synthesis.get('burn_in', default_burn_in(problem.n))
        if burn_in < 0:
            raise CommandError('--burn-in must be non-negative.', returncode=EXIT_INPUT)
        traj = run_state_recursion(problem.filter, y)
        try:
            sigma_hat = sample_covariance(traj, burn_in=burn_in)
        except SpectraError as exc:
            raise CommandError(str(exc), returncode=EXIT_INPUT) from exc
        try:
            sigma_bar = nearest_feasible(sigma_hat, problem.basis, problem.filter, method=options['repair'])
        except RepairFailed as exc:
            raise CommandError(f'repair failed: {exc}', returncode=EXIT_INFEASIBLE) from exc
        self.stdout.write(
            f'N = {traj.N}, burn-in = {burn_in}, repair weight = {sigma_bar.repair["weight"]:.6g} '
            f'({sigma_bar.repair["method"]})'
        )

        result = run_approximation(problem, metric, sigma_bar)
        self.stdout.write(f'constraint residual ||Gamma(Phi) - Sigma_bar||_F = {result.constraint_residual:.6e}')
        output = self.output_dir(options)
        written = [
            write_json(output / 'sigma_hat.json', matrix_payload(
                sigma_hat, n_samples=traj.N, burn_in=burn_in, **provenance,
            )),
            write_json(output / 'sigma_bar.json', matrix_payload(
                sigma_bar.sigma, repair=sigma_bar.repair,
                certificate=certificate_payload(sigma_bar.certificate),
            )),
        ]
        written += write_solution(output, problem, result, dual=False, estimate=provenance)
        self.finish(result.report, written)
