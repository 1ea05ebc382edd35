"""A-posteriori output error bound for reduced switched systems and the BT envelope bound.

For time-driven switching and ``c = max_i ||M_i||_2 ||Sigma_E||_inf < 1``
the output error of the reduced switched system obeys

    ||y - y~||_L2 <= eta ||Sigma_E - Sigma~_E||_inf ||u~_E||_L2,
    eta = sqrt(2) / (1 - c),

where ``u~_E`` is the envelope input of the reduced closed loop.  On a
finite horizon the same inequality holds for the truncated signals by
causality.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as spla

from . import numerics
from .errors import InvalidInputError, UnsupportedError
from .model import StateSpaceModel
from .reduction import distinct_tail_sum
from .signals import OutputDriven, SwitchSchedule, TimeDriven
from .simulation import DEFAULT_ATOL, DEFAULT_RTOL, l2_norm, simulate_envelope_closed_loop

__all__ = ['BoundReport', 'check_condition', 'eta', 'error_system', 'posterior_bound',
           'bt_envelope_bound']

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundReport:
    condition_value: float
    condition_ok: bool
    eta: float
    hinf_error: float
    u_tilde_l2: float
    bound: float
    measured_error: float
    horizon: float = None
    quadrature_agreement: float = None

    @property
    def conservativeness(self):
        """``bound / measured_error`` (inf for a zero measured error)."""
        if self.bound is None or self.measured_error is None:
            return None
        return np.inf if self.measured_error == 0 else self.bound / self.measured_error

    def as_dict(self):
        d = asdict(self)
        d['conservativeness'] = self.conservativeness
        return {k: (float(v) if isinstance(v, (np.floating, float)) and v is not None else v)
                for k, v in d.items()}


def check_condition(env, tol=1e-8):
    """``(max_i ||M_i||_2 * ||Sigma_E||_inf, value < 1)``; the value is 0 without cores."""
    core = env.max_core_norm()
    if core == 0.0:
        return 0.0, True
    value = core * numerics.hinf_norm(env.sys, tol)
    return float(value), bool(value < 1)


def eta(condition_value):
    """``sqrt(2) / (1 - c)`` for ``c < 1``."""
    if not 0 <= condition_value < 1:
        raise InvalidInputError('eta needs a condition value in [0, 1)')
    return float(np.sqrt(2) / (1 - condition_value))


def error_system(full, reduced):
    """Realization of ``Sigma - Sigma~``: block-diagonal A, stacked B, differenced C and D."""
    full, reduced = full.standard(), reduced.standard()
    if (full.m, full.p) != (reduced.m, reduced.p):
        raise InvalidInputError('systems differ in input or output dimension')
    return StateSpaceModel(
        spla.block_diag(full.A, reduced.A), np.vstack([full.B, reduced.B]),
        np.hstack([full.C, -reduced.C]), full.D - reduced.D)


def _signal(sig):
    if isinstance(sig, OutputDriven):
        raise UnsupportedError(
            'the error bound needs switching that depends on time only; with '
            'output-dependent switching the reduced model may switch at other '
            'instants and the error is not bounded')
    if isinstance(sig, SwitchSchedule):
        return TimeDriven(sig)
    if isinstance(sig, TimeDriven):
        return sig
    raise InvalidInputError('unknown switching signal')


def _refined_l2(run, samples, rel_tol, max_samples):
    """L2 norms from `run(samples)`, doubling the sampling until they settle."""
    prev = run(samples)
    agreement = np.inf
    while samples < max_samples:
        samples = 2 * samples - 1
        cur = run(samples)
        agreement = max(abs(c - p) / max(abs(c), 1e-300) for c, p in zip(cur, prev))
        prev = cur
        if agreement <= rel_tol:
            break
    return prev, agreement


def posterior_bound(env, maps, reduced_env, sig, u, horizon, atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL,
                    samples=1001, quad_tol=1e-6, max_samples=32001, hinf_tol=1e-8):
    """Evaluate the a-posteriori bound and the measured error on ``[0, horizon]``.

    The reduced envelope must share the feedback maps of `env` (true for
    any projection of it).  If the condition fails, the report carries
    the condition value and ``bound=None``.

    Raises
    ------
    UnsupportedError
        For output-driven switching.
    """
    sig = _signal(sig)
    if (reduced_env.m_E, reduced_env.p_E) != (env.m_E, env.p_E):
        raise InvalidInputError('reduced envelope does not match the envelope ports')
    value, ok = check_condition(env, hinf_tol)
    if not ok:
        log.warning('bound not applicable: condition value %.3g >= 1', value)
        return BoundReport(value, False, None, None, None, None, None, horizon)
    et = eta(value)
    hinf_err = numerics.hinf_norm(error_system(env.sys, reduced_env.sys), hinf_tol)

    def run(n_samples):
        full = simulate_envelope_closed_loop(env, maps, sig, u, horizon, atol, rtol,
                                             samples=n_samples)
        red = simulate_envelope_closed_loop(reduced_env, maps, sig, u, horizon, atol, rtol,
                                            samples=n_samples)
        if len(full) != len(red) or np.any(full.times != red.times):
            raise InvalidInputError('full and reduced runs are sampled differently')
        err = l2_norm((full.times, full.outputs - red.outputs))
        return err, l2_norm(red, which='u_E')

    (measured, u_l2), agreement = _refined_l2(run, samples, quad_tol, max_samples)
    bound = et * hinf_err * u_l2
    report = BoundReport(value, True, et, hinf_err, u_l2, bound, measured, horizon, agreement)
    log.info('posterior bound %.4g, measured %.4g, ratio %.3g', bound, measured,
             report.conservativeness)
    return report


def bt_envelope_bound(report, u_E_l2):
    """``2 * (sum of distinct neglected HSVs) * ||u_E||_L2``."""
    if report.hsv is None or len(report.hsv) == 0:
        raise InvalidInputError('report carries no Hankel singular values')
    return float(2 * distinct_tail_sum(report.hsv, report.r) * u_E_l2)
