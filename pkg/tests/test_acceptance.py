"""End-to-end acceptance checks on the benchmark systems.

Each test carries ``@pytest.mark.criterion(n)``; the terminal summary
prints one PASS/FAIL line per criterion.
"""
import logging

import numpy as np
import pytest
from scipy.optimize import brentq

from envmor.benchmarks import (CD_PLAYER_SCHEDULE, HEAT_SCHEDULE, RANDOM_SCHEDULES, RLC_SCHEDULE,
                               HeatParams, cd_player_switched, heat_hysteresis, heat_two_rooms,
                               random_lss, rlc_example, rlc_steering_input, tangential_toy)
from envmor.bounds import check_condition, error_system, posterior_bound
from envmor.envelope import envelope
from envmor.model import (ProjectionPair, StateSpaceModel, SwitchedModel, exact_switched_solution,
                          exact_switched_trajectory, hankel_singular_values, piecewise_output_l2)
from envmor.reduction import (balanced_truncation, irka, naive_per_mode_reduction,
                              orthonormal_basis, ph_reduce, reduce_switched,
                              stability_preserving_pair)
from envmor.signals import Constant, Exp, PiecewiseConstant, Sine, SwitchSchedule
from envmor.simulation import simulate_envelope_closed_loop, simulate_switched
from envmor.stability import lmi_margin, verify_quadratic_stability

from helpers import FIXTURES

log = logging.getLogger(__name__)

HOURS = 3600.0


def rel_linf(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


@pytest.fixture(scope='module')
def heat_seconds():
    """Calibrated heat model with time in seconds (Hankel spectrum reference)."""
    return heat_two_rooms(HeatParams.calibrated())


@pytest.fixture(scope='module')
def heat_hours():
    """The same model with time in hours (simulation scenarios)."""
    return heat_two_rooms(HeatParams.calibrated(time_scale=HOURS))


@pytest.fixture(scope='module')
def heat_reductions(heat_seconds):
    """BT and IRKA projections at r = 6 and 10 of the seconds envelope."""
    env, _ = envelope(heat_seconds)
    out = {}
    for r in (6, 10):
        out[('bt', r)] = balanced_truncation(env, r)[1]
        out[('irka', r)] = irka(env, r)[1]
    return out


# --- envelope closed loop equals the switched system -------------------------

def _closed_loop_vs_direct(sys, sched, u, horizon):
    env, maps = envelope(sys)
    grid = np.linspace(0, horizon, 401)
    direct = simulate_switched(sys, sched, u, horizon, atol=1e-9, rtol=1e-8, t_eval=grid)
    loop = simulate_envelope_closed_loop(env, maps, sched, u, horizon, atol=1e-9, rtol=1e-8,
                                         t_eval=grid)
    assert np.array_equal(direct.times, loop.times)
    return rel_linf(loop.outputs, direct.outputs)


@pytest.mark.criterion(1)
def test_closed_loop_rlc():
    err = _closed_loop_vs_direct(rlc_example(), RLC_SCHEDULE, rlc_steering_input(), 2.0)
    assert err <= 1e-5


@pytest.mark.criterion(1)
@pytest.mark.parametrize('schedule', [0, 1])
@pytest.mark.parametrize('u', [Sine(1.0, 1.0), Exp(1.0, 1.0)], ids=['sin', 'exp'])
def test_closed_loop_random(schedule, u):
    err = _closed_loop_vs_direct(random_lss(seed=7), RANDOM_SCHEDULES[schedule], u, 1.0)
    assert err <= 1e-5


@pytest.mark.criterion(1)
def test_closed_loop_heat(heat_hours):
    err = _closed_loop_vs_direct(heat_hours, HEAT_SCHEDULE, Constant(1.0), 6.0)
    assert err <= 1e-5


# --- closed-form solution against adaptive integration -----------------------

def _oracle_cases():
    steps = PiecewiseConstant((0.0, 0.3, 0.7), (1.0, -0.5, 2.0))
    toy = tangential_toy()
    yield 'rlc', rlc_example(), RLC_SCHEDULE, rlc_steering_input(), 2.0
    for k, sched in enumerate(RANDOM_SCHEDULES):
        yield f'random-{k}', random_lss(seed=3), sched, steps, 1.0
    yield 'heat', heat_two_rooms(HeatParams.calibrated(time_scale=HOURS)), HEAT_SCHEDULE, \
        PiecewiseConstant((0.0, 2.0), (1.0, 0.5)), 6.0
    yield 'cd-fixture', cd_player_switched(FIXTURES / 'cd_player_synthetic'), CD_PLAYER_SCHEDULE, \
        steps, 2.0
    yield 'toy', toy.full, SwitchSchedule((0.0, 0.5), (1, 2)), steps, 2.0


@pytest.mark.criterion(2)
@pytest.mark.parametrize('case', list(_oracle_cases()), ids=lambda c: c[0])
def test_exact_solution_matches_integration(case):
    _, sys, sched, u, horizon = case
    assert sys.modes[0].n <= 120
    traj = simulate_switched(sys, sched, u, horizon, atol=1e-10, rtol=1e-8, samples=301)
    # compare away from switch instants, where both one-sided limits are sampled
    keep = ~np.isin(traj.times, sched.switch_times(horizon))
    _, exact = exact_switched_trajectory(sys, sched, u, traj.times[keep])
    assert rel_linf(traj.outputs[keep], exact) <= 1e-6


# --- RLC: per-mode reduction loses the output, the envelope keeps it ---------

@pytest.mark.criterion(3)
def test_rlc_naive_reduction_fails_envelope_recovers():
    sys = rlc_example()
    u = rlc_steering_input(xi=1.0)
    _, y2 = exact_switched_solution(sys, RLC_SCHEDULE, u, 2.0)
    assert y2[0] == pytest.approx(np.exp(-1), abs=1e-12)

    pairs = [ProjectionPair.identity(2), ProjectionPair([[1.0], [1.0]], [[2.0], [-1.0]])]
    naive, trans = naive_per_mode_reduction(sys, pairs)
    tr = simulate_switched(naive, RLC_SCHEDULE, u, 2.0, atol=1e-12, rtol=1e-10,
                           transitions=trans, t_eval=[0.0, 2.0])
    assert tr.outputs[-1, 0] == pytest.approx(0.0, abs=1e-8)

    env, maps = envelope(sys)
    red_env, rep = balanced_truncation(env, 2)
    tr = simulate_envelope_closed_loop(red_env, maps, RLC_SCHEDULE, u, 2.0, atol=1e-12,
                                       rtol=1e-10, t_eval=[0.0, 2.0])
    assert tr.outputs[-1, 0] == pytest.approx(np.exp(-1), abs=1e-6)
    tr = simulate_switched(reduce_switched(sys, rep.projection), RLC_SCHEDULE, u, 2.0,
                           atol=1e-12, rtol=1e-10, t_eval=[0.0, 2.0])
    assert tr.outputs[-1, 0] == pytest.approx(np.exp(-1), abs=1e-6)


# --- Hankel spectrum of the heat benchmark -----------------------------------

REF_MODE1 = [1, 0.1303, 7.674e-3, 6.064e-7, 7.329e-11]
REF_MODE2 = [1, 0.1284, 1.043e-2, 5.503e-4, 2.878e-5, 6.064e-6]
REF_ENVELOPE = [1, 0.9575, 0.6579, 8.309e-3, 2.778e-4, 2.224e-5]


def _leading(hsv, k=6):
    vals = hsv / hsv[0]
    return vals[vals > 1e-12][:k]


@pytest.mark.criterion(4)
@pytest.mark.parametrize('which,ref', [(1, REF_MODE1), (2, REF_MODE2), ('envelope', REF_ENVELOPE)],
                         ids=['mode1', 'mode2', 'envelope'])
def test_heat_hankel_spectrum(which, ref, heat_seconds):
    if which == 'envelope':
        sys = envelope(heat_seconds)[0].sys
    else:
        sys = heat_seconds.mode(which)
    vals = _leading(hankel_singular_values(sys))
    assert len(vals) == len(ref)
    np.testing.assert_allclose(vals, ref, rtol=0.05)


# --- heat scenario accuracy at r = 10 and r = 6 ------------------------------

@pytest.mark.criterion(5)
@pytest.mark.parametrize('method', ['bt', 'irka'])
def test_heat_reduced_accuracy(method, heat_hours, heat_reductions):
    grid = np.linspace(0, 6, 601)
    full = simulate_switched(heat_hours, HEAT_SCHEDULE, Constant(1.0), 6.0, atol=1e-10,
                             rtol=1e-8, t_eval=grid)
    err = {}
    for r in (6, 10):
        red = reduce_switched(heat_hours, heat_reductions[(method, r)].projection)
        tr = simulate_switched(red, HEAT_SCHEDULE, Constant(1.0), 6.0, atol=1e-10, rtol=1e-8,
                               t_eval=grid)
        err[r] = np.max(np.abs(tr.outputs - full.outputs))
    log.info('%s heat L-inf errors: r=10 %.3g, r=6 %.3g', method, err[10], err[6])
    assert err[10] < 1e-2
    assert err[6] > 5 * err[10]


# --- a-priori balanced truncation bound on the heat envelope -----------------

@pytest.mark.criterion(6)
@pytest.mark.parametrize('r', [6, 10])
def test_heat_envelope_bt_bound(r, heat_seconds):
    env, _ = envelope(heat_seconds)
    red_env, rep = balanced_truncation(env, r)
    err_sys = error_system(env.sys, red_env.sys)
    horizon, pieces = 6 * HOURS, 24
    times = tuple(np.linspace(0, horizon, pieces + 1)[:-1])
    violations = 0
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        u = PiecewiseConstant(times, tuple(rng.standard_normal((pieces, env.m_E))))
        err, u_l2 = piecewise_output_l2(err_sys, u, horizon)
        violations += err > rep.bt_bound * u_l2
        worst = max(worst, err / (rep.bt_bound * u_l2))
    log.info('r=%d: worst error / bound %.3g', r, worst)
    assert violations == 0


# --- a-posteriori bound on synthetic systems ---------------------------------

def _synthetic_base(seed, n=10):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    A = -(X @ X.T / n + 0.5 * np.eye(n)) + (X - X.T) / 2
    B = 0.1 * rng.standard_normal((n, 1))
    C = 0.1 * rng.standard_normal((1, n))
    return rng, A, B, C


def shared_dynamics_system(seed):
    """Two modes with equal A, so the difference cores are empty."""
    rng, A, B, C = _synthetic_base(seed)
    return SwitchedModel([
        StateSpaceModel(A, B, C),
        StateSpaceModel(A, B + 0.1 * rng.standard_normal(B.shape),
                        C + 0.1 * rng.standard_normal(C.shape)),
    ])


def rank_one_system(seed, target=0.5):
    """Two modes differing by a rank-one A term scaled to the given condition value."""
    rng, A, B, C = _synthetic_base(seed)
    a = rng.standard_normal((A.shape[0], 1))
    b = rng.standard_normal((1, A.shape[0]))

    def make(s):
        return SwitchedModel([StateSpaceModel(A, B, C), StateSpaceModel(A - s * a @ b, B, C)])

    s = brentq(lambda s: check_condition(envelope(make(s))[0])[0] - target, 1e-6, 10,
               xtol=1e-10)
    return make(s)


@pytest.mark.criterion(7)
@pytest.mark.parametrize('family,expected', [(shared_dynamics_system, 0.0),
                                             (rank_one_system, 0.5)],
                         ids=['condition-0', 'condition-0.5'])
def test_posterior_bound_holds(family, expected):
    sched = SwitchSchedule((0.0, 1.0, 2.5, 3.0), (1, 2, 1, 2))
    u = Sine(1.0, 0.5)
    violations = 0
    for seed in range(3):
        env, maps = envelope(family(seed))
        for r in (3, 6):
            red_env, _ = balanced_truncation(env, r)
            rep = posterior_bound(env, maps, red_env, sched, u, 5.0)
            assert rep.condition_value == pytest.approx(expected, abs=1e-8)
            log.info('seed %d r=%d: measured %.3g, bound %.3g, conservativeness %.3g',
                     seed, r, rep.measured_error, rep.bound, rep.conservativeness)
            violations += rep.measured_error > rep.bound
    assert violations == 0


# --- structure-preserving reduction ------------------------------------------

def dissipative_instance(seed, n=20, n_modes=3):
    """Modes ``(J_i - R_i) Q`` with random skew J_i, R_i > 0 and a shared Q > 0."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    Q = X @ X.T / n + 0.1 * np.eye(n)
    Js, Rs, modes = [], [], []
    for _ in range(n_modes):
        Y = rng.standard_normal((n, n))
        Z = rng.standard_normal((n, n))
        J = (Y - Y.T) / 2
        R = Z @ Z.T / n + 0.05 * np.eye(n)
        B = rng.standard_normal((n, 1))
        Js.append(J)
        Rs.append(R)
        modes.append(StateSpaceModel((J - R) @ Q, B, B.T @ Q))
    return SwitchedModel(modes), Q, Js, Rs


@pytest.mark.criterion(8)
def test_structure_preserving_reduction():
    worst_margin, worst_skew, min_r = -np.inf, 0.0, np.inf
    for seed in range(100):
        sys, Q, Js, Rs = dissipative_instance(seed)
        assert verify_quadratic_stability(sys, Q)
        env, _ = envelope(sys)
        _, rep = balanced_truncation(env, 5)
        V = orthonormal_basis(rep.projection.V)
        P = stability_preserving_pair(V, Q)
        Qr = V.T @ Q @ V
        for i, mode in enumerate(sys.modes):
            worst_margin = max(worst_margin, lmi_margin(P.W.T @ mode.A @ V, Qr))
            Jr, Rr, _, _ = ph_reduce(Js[i], Rs[i], Q, mode.B, V)
            worst_skew = max(worst_skew, np.max(np.abs(Jr + Jr.T)))
            min_r = min(min_r, np.linalg.eigvalsh((Rr + Rr.T) / 2)[0])
    log.info('worst reduced LMI margin %.3g, skewness %.3g, min eig R %.3g',
             worst_margin, worst_skew, min_r)
    assert worst_margin < 0
    assert worst_skew <= 1e-12
    assert min_r >= -1e-10


# --- substitutions for data not shipped with the package ---------------------

@pytest.mark.criterion(9)
def test_cd_player_loader_fixture():
    sys = cd_player_switched(FIXTURES / 'cd_player_synthetic')
    assert sys.n_modes == 2
    assert (sys.modes[0].n, sys.m, sys.p) == (4, 1, 1)
    np.testing.assert_array_equal(sys.mode(1).A, sys.mode(2).A)
    env, maps = envelope(sys)
    # equal dynamics: the envelope needs no difference channels
    assert env.total_rank == 0
    u = Sine(1.0, 1.0)
    direct = simulate_switched(sys, CD_PLAYER_SCHEDULE, u, 2.0, atol=1e-10, rtol=1e-9)
    loop = simulate_envelope_closed_loop(env, maps, CD_PLAYER_SCHEDULE, u, 2.0, atol=1e-10,
                                         rtol=1e-9)
    assert rel_linf(loop.outputs, direct.outputs) <= 1e-6


# --- hysteresis switching on the heat benchmark ------------------------------

@pytest.mark.criterion(10)
def test_heat_hysteresis_switch_counts(heat_hours, heat_reductions):
    sig = heat_hysteresis(0.2, 0.5)
    u = Constant(1.0)
    full = simulate_switched(heat_hours, sig, u, 6.0, atol=1e-8, rtol=1e-6)
    tight = simulate_switched(heat_hours, sig, u, 6.0, atol=1e-9, rtol=1e-7)
    assert 0 < full.switch_count < 1000
    assert tight.switch_count == full.switch_count
    for method in ('bt', 'irka'):
        red = reduce_switched(heat_hours, heat_reductions[(method, 10)].projection)
        rom = simulate_switched(red, sig, u, 6.0, atol=1e-8, rtol=1e-6)
        assert rom.switch_count == full.switch_count
        shift = np.max(np.abs(rom.switch_times - full.switch_times))
        red6 = reduce_switched(heat_hours, heat_reductions[(method, 6)].projection)
        rom6 = simulate_switched(red6, sig, u, 6.0, atol=1e-8, rtol=1e-6)
        log.info('%s switch counts: full %d, r=10 %d (largest time shift %.3g), r=6 %d',
                 method, full.switch_count, rom.switch_count, shift, rom6.switch_count)
