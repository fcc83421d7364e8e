"""
Estimation pipeline on simulated data and the well-posedness experiments:
continuity of the optimum in Sigma, and consistency of the estimated
spectrum as the sample size grows.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .divergences import hellinger_multivar, hermitian_sqrt, kl_divergence
from .exceptions import (
    InfeasibleCovariance, InfeasiblePerturbation, SpectraError, TooFewSamples,
)
from .gamma import (
    certify_covariance, frobenius, gamma_apply, nearest_feasible, project_range,
)
from .solvers import KL, METRICS, approximate

logger = logging.getLogger(__name__)

DEFAULT_TAPS = 64
CONTINUITY_DUAL = 'continuity-dual'
CONTINUITY_PRIMAL = 'continuity-primal'
CONSISTENCY_KL = 'consistency-KL'
CONSISTENCY_H = 'consistency-H'


def default_burn_in(n):
    return max(10 * n, 100)


def trial_seed(master_seed, trial):
    return int(master_seed) ^ int(trial)


def sup_distance(first, second):
    """max over the grid of the spectral norm of the difference."""
    diff = np.asarray(first.samples) - np.asarray(second.samples)
    return float(np.max(np.linalg.norm(diff, ord=2, axis=(-2, -1))))


# -- Data generation ------------------------------------------------------

def synthesis_taps(phi_true, taps=DEFAULT_TAPS):
    """Two-sided FIR coefficients h_tau, tau = -T/2..T/2-1, of Phi^{1/2}."""
    K = phi_true.K
    if taps % 2 or taps < 2 or taps > K:
        raise ValueError(f'taps must be even and between 2 and K={K}, got {taps}')
    factor = hermitian_sqrt(phi_true.samples)
    # h_tau = int W(e^{j theta}) e^{j theta tau}
    coefficients = np.fft.ifft(factor, axis=0)
    lags = np.arange(-taps // 2, taps // 2)
    return lags, coefficients[lags % K]


def generate_process(phi_true, n_samples, seed, taps=DEFAULT_TAPS):
    """Draw y_1..y_N with spectrum close to Phi_true from seeded white noise."""
    lags, coefficients = synthesis_taps(phi_true, taps)
    m = phi_true.m
    rng = np.random.Generator(np.random.Philox(int(seed)))
    noise = (rng.standard_normal((n_samples + taps, m))
             + 1j * rng.standard_normal((n_samples + taps, m))) / np.sqrt(2.0)
    y = np.zeros((n_samples, m), dtype=complex)
    half = taps // 2
    # the first T draws only feed the filter memory
    for lag, h in zip(lags, coefficients):
        start = half - lag
        y += noise[start:start + n_samples] @ h.T
    return y


@dataclass(frozen=True, eq=False)
class SampleTrajectory:
    y: np.ndarray
    x: np.ndarray
    seed: object = None

    @property
    def N(self):
        return self.y.shape[0]


def _recursion(A, B, y, x_init):
    x = np.empty((y.shape[0], A.shape[0]), dtype=complex)
    state = np.array(x_init, dtype=complex)
    for t in range(y.shape[0]):
        x[t] = state
        state = A @ state + B @ y[t]
    return x


def run_state_recursion(filt, y, x_init=None, seed=None):
    """x(t+1) = A x(t) + B y(t) with x_1 = x_init (zero by default)."""
    y = np.array(y, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != filt.m:
        raise ValueError(f'samples have {y.shape[1]} channels, filter expects {filt.m}')
    x_init = np.zeros(filt.n) if x_init is None else x_init
    x = _recursion(filt.A, filt.B, y, x_init)
    y.setflags(write=False)
    x.setflags(write=False)
    return SampleTrajectory(y=y, x=x, seed=seed)


def replay_matches(filt, traj):
    """Recompute the states from the stored input and compare bit-for-bit."""
    return np.array_equal(_recursion(filt.A, filt.B, traj.y, traj.x[0]), traj.x)


def sample_covariance(traj, burn_in=None):
    """(1/(N - b)) sum_{k > b} x_k x_k*."""
    n = traj.x.shape[1]
    burn_in = default_burn_in(n) if burn_in is None else burn_in
    if burn_in < 0:
        raise ValueError(f'burn-in must be non-negative, got {burn_in}')
    kept = traj.x[burn_in:]
    if kept.shape[0] < max(n, 1):
        raise TooFewSamples(f'{traj.N} samples leave {kept.shape[0]} after burn-in {burn_in}; need at least {n}')
    sigma = kept.T @ kept.conj() / kept.shape[0]
    return (sigma + sigma.conj().T) / 2


# -- Experiment tables ----------------------------------------------------

@dataclass
class ExperimentRow:
    control: float
    metrics: dict
    metadata: dict = field(default_factory=dict)


@dataclass
class ExperimentTable:
    kind: str
    control_name: str
    metric_names: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, control, metrics, **metadata):
        if self.rows:
            step = control - self.rows[-1].control
            trend = self.rows[-1].control - self.rows[-2].control if len(self.rows) > 1 else step
            if step == 0 or (step > 0) != (trend > 0):
                raise ValueError('control parameter must be strictly monotone')
        self.rows.append(ExperimentRow(control=control, metrics=dict(metrics), metadata=metadata))

    def column(self, name):
        return np.array([row.metrics[name] for row in self.rows], dtype=float)


def _unit_direction(direction, basis):
    projected = project_range(direction, basis)
    norm = frobenius(projected)
    if norm == 0:
        raise ValueError('perturbation direction has no component in Range Gamma')
    discarded = frobenius(np.asarray(direction) - projected)
    return projected / norm, discarded


def continuity_experiment(sigma, psi, direction, t_list, metric, basis, filt,
                          options=None, strict=True):
    """Measure how far the optimum moves when Sigma moves by t * Delta.

    Rows follow ``t_list`` (decreasing) and end with the t = 0 baseline.
    With ``strict=False`` an infeasible perturbation is recorded in the
    row instead of raising.
    """
    metric = METRICS.get(metric, metric)
    t_list = [float(t) for t in t_list]
    if any(t <= 0 for t in t_list) or any(b >= a for a, b in zip(t_list, t_list[1:])):
        raise ValueError('t_list must be strictly decreasing positive values')
    delta, discarded = _unit_direction(direction, basis)
    reference = approximate(metric, sigma, psi, basis, options)
    table = ExperimentTable(
        kind=CONTINUITY_DUAL, control_name='t',
        metric_names=['dual_error', 'primal_error'],
        metadata={
            'metric': metric,
            'companion_kind': CONTINUITY_PRIMAL,
            'discarded_perp_norm': discarded,
            'baseline_iterations': reference.report.iterations,
        },
    )
    for t in t_list + [0.0]:
        if t == 0.0:
            table.add(0.0, {'dual_error': 0.0, 'primal_error': 0.0}, status='baseline')
            continue
        try:
            perturbed_sigma = certify_covariance(filt, sigma.sigma + t * delta, basis)
        except InfeasibleCovariance as exc:
            if strict:
                raise InfeasiblePerturbation(f'Sigma + {t:g} Delta is infeasible', exc.certificate) from exc
            table.add(t, {'dual_error': np.nan, 'primal_error': np.nan}, status='infeasible')
            continue
        perturbed = approximate(metric, perturbed_sigma, psi, basis, options)
        dual_error = float(np.linalg.norm(perturbed.dual.coordinates - reference.dual.coordinates))
        primal_error = sup_distance(perturbed.spectrum, reference.spectrum)
        table.add(t, {'dual_error': dual_error, 'primal_error': primal_error},
                  status='ok' if perturbed.report.converged else 'not-converged',
                  iterations=perturbed.report.iterations)
        logger.info('continuity t=%g: dual %.3g primal %.3g', t, dual_error, primal_error)
    return table


def _thread_count(threads):
    if threads and threads > 0:
        return int(threads)
    return os.cpu_count() or 1


def _consistency_trial(filt, phi_true, psi, basis, n_samples, seed, metric, reference,
                       sigma_true, options, taps, repair):
    y = generate_process(phi_true, n_samples, seed, taps=taps)
    traj = run_state_recursion(filt, y, seed=seed)
    sigma_hat = sample_covariance(traj)
    sigma_bar = nearest_feasible(sigma_hat, basis, filt, method=repair)
    outcome = {
        'seed': seed,
        'sigma_hat_error': frobenius(sigma_hat - sigma_true),
        'sigma_bar_error': frobenius(sigma_bar.sigma - sigma_true),
        'projection_residual': sigma_bar.repair['projection_residual'],
        'repair_weight': sigma_bar.repair['weight'],
    }
    try:
        result = approximate(metric, sigma_bar, psi, basis, options)
    except SpectraError as exc:
        logger.warning('trial with seed %d failed: %s', seed, exc)
        outcome.update(error=np.nan, divergence=np.nan, converged=False, failure=str(exc))
        return outcome
    if metric == KL:
        divergence = kl_divergence(reference.spectrum, result.spectrum)
    else:
        divergence = hellinger_multivar(result.spectrum, reference.spectrum)
    outcome.update(
        error=sup_distance(result.spectrum, reference.spectrum),
        divergence=divergence,
        converged=result.report.converged,
    )
    return outcome


def consistency_experiment(filt, phi_true, psi, n_list, trials, metric, seed, basis,
                           options=None, threads=0, taps=DEFAULT_TAPS, repair='blend'):
    """Monte-Carlo run of the full estimation pipeline for increasing N."""
    metric = METRICS.get(metric, metric)
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError('n_list must be strictly increasing')
    sigma_true = certify_covariance(filt, gamma_apply(basis.grid, phi_true), basis)
    reference = approximate(metric, sigma_true, psi, basis, options)
    table = ExperimentTable(
        kind=CONSISTENCY_KL if metric == KL else CONSISTENCY_H,
        control_name='N',
        metric_names=['median_error', 'max_error', 'median_sigma_bar_error', 'median_divergence'],
        metadata={'metric': metric, 'trials': trials, 'seed': seed, 'repair': repair},
    )
    seeds = [trial_seed(seed, trial) for trial in range(trials)]
    with ThreadPoolExecutor(max_workers=_thread_count(threads)) as pool:
        for n_samples in n_list:
            outcomes = list(pool.map(
                lambda s: _consistency_trial(
                    filt, phi_true, psi, basis, n_samples, s, metric, reference,
                    sigma_true.sigma, options, taps, repair,
                ),
                seeds,
            ))
            errors = np.array([o['error'] for o in outcomes])
            table.add(n_samples, {
                'median_error': float(np.nanmedian(errors)),
                'max_error': float(np.nanmax(errors)),
                'median_sigma_bar_error': float(np.median([o['sigma_bar_error'] for o in outcomes])),
                'median_divergence': float(np.nanmedian([o['divergence'] for o in outcomes])),
            }, trials=outcomes, failures=int(np.sum(np.isnan(errors))))
            logger.info('consistency N=%d: median error %.3g', n_samples, table.rows[-1].metrics['median_error'])
    return table


# -- Summaries ------------------------------------------------------------

def _ratio(values):
    values = [v for v in values if np.isfinite(v)]
    if len(values) < 2 or values[0] == 0:
        return None
    return float(values[-1] / values[0])


def _loglog_slope(x, y):
    keep = (np.asarray(x) > 0) & (np.asarray(y) > 0) & np.isfinite(y)
    if np.sum(keep) < 2:
        return None
    return float(np.polyfit(np.log(np.asarray(x)[keep]), np.log(np.asarray(y)[keep]), 1)[0])


def summarize(table):
    """Acceptance statistics: decay ratios and log-log slopes (None when undefined)."""
    positive = [row for row in table.rows if row.control > 0]
    summary = {'kind': table.kind, 'rows': len(table.rows)}
    summary.update({k: v for k, v in table.metadata.items() if isinstance(v, (str, int, float))})
    if table.kind in (CONTINUITY_DUAL, CONTINUITY_PRIMAL):
        controls = [row.control for row in positive]
        for name in table.metric_names:
            values = [row.metrics[name] for row in positive]
            summary[f'{name}_ratio'] = _ratio(values)
            summary[f'{name}_slope'] = _loglog_slope(controls, values) if len(values) > 1 else None
    else:
        controls = [row.control for row in positive]
        medians = [row.metrics['median_error'] for row in positive]
        summary['median_error_ratio'] = _ratio(medians)
        summary['median_error_slope'] = _loglog_slope(controls, medians) if len(medians) > 1 else None
        summary['median_decreasing'] = bool(len(medians) > 1 and all(b < a for a, b in zip(medians, medians[1:])))
        summary['failures'] = int(sum(row.metadata.get('failures', 0) for row in table.rows))
    return summary
