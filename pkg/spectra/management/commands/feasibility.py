import numpy as np
from django.core.management.base import CommandError

from spectra.gamma import feasibility

from ._base import EXIT_INFEASIBLE, ProblemCommand


def format_matrix(matrix):
    return np.array2string(np.asarray(matrix), precision=6, suppress_small=True, max_line_width=120)


class Command(ProblemCommand):
    help = 'Certify whether the problem Sigma is a feasible state covariance for the filter.'

    def handle(self, *args, **options):
        problem = self.load(options)
        sigma = self.require_sigma(problem)
        certificate = feasibility(problem.filter, sigma, problem.basis)

        self.stdout.write(f'n = {problem.n}, m = {problem.m}, dim Range Gamma = {problem.basis.d}')
        if certificate.H is None:
            self.stdout.write('H: none (state equation has no solution within tolerance)')
        else:
            self.stdout.write('H =\n' + format_matrix(certificate.H))
        self.stdout.write(f'state equation residual: {certificate.equation_residual:.6e}')
        self.stdout.write(f'Range Gamma projection residual: {certificate.projection_residual:.6e}')
        self.stdout.write(f'lambda_min(Sigma): {certificate.min_eigenvalue:.6e}')

        if certificate.feasible:
            self.stdout.write(self.style.SUCCESS('verdict: feasible'))
            return
        reasons = []
        if certificate.min_eigenvalue <= 0:
            reasons.append('not positive definite')
        if certificate.projection_residual > certificate.tolerance * np.linalg.norm(sigma):
            reasons.append('not in Range Gamma')
        verdict = 'verdict: infeasible (' + ', '.join(reasons) + ')'
        self.stdout.write(self.style.ERROR(verdict))
        raise CommandError(verdict, returncode=EXIT_INFEASIBLE)
