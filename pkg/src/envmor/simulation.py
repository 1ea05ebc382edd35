"""Time integration of switched systems and closed-loop envelopes, plus signal norms.

Switch instants and input breakpoints are restart points of the
integrator, never stepped over.  Mode ``k`` of a schedule is active on
``(t_k, t_{k+1}]``.  A switch instant is sampled twice, first as the
left limit in the old mode, then as the right limit in the new mode, so
trapezoidal quadrature sees output jumps exactly.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .envelope import EnvelopeModel
from .errors import InvalidInputError, StiffnessError
from .model import SwitchedModel
from .signals import OutputDriven, SwitchSchedule, TimeDriven

__all__ = [
    'Trajectory', 'simulate_switched', 'simulate_envelope_closed_loop',
    'simulate_implicit', 'l2_norm', 'linf_norm', 'DEFAULT_ATOL', 'DEFAULT_RTOL',
]

log = logging.getLogger(__name__)

DEFAULT_ATOL = 1e-8
DEFAULT_RTOL = 1e-6
#: more switches than this at a single instant means the rules chatter
MAX_INSTANT_SWITCHES = 16


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled simulation result.

    ``events`` lists ``(time, from_mode, to_mode)``.  ``states`` is a
    list because reduced modes of different orders may alternate;
    ``extras`` holds further sampled signals (``'u_E'`` and ``'y_E'``
    for closed-loop envelope runs).
    """

    times: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray
    modes: np.ndarray
    events: tuple
    states: list = None
    extras: dict = field(default_factory=dict)

    @property
    def switch_count(self):
        return len(self.events)

    @property
    def switch_times(self):
        return np.array([e[0] for e in self.events])

    def resample(self, times, which='outputs'):
        """Linear interpolation of a sampled signal at `times`."""
        vals = self.outputs if which == 'outputs' else self.extras[which] if which in self.extras \
            else getattr(self, which)
        times = np.asarray(times, dtype=float)
        return np.column_stack([np.interp(times, self.times, v) for v in vals.T])

    def __len__(self):
        return len(self.times)


def _as_signal(sig):
    if isinstance(sig, SwitchSchedule):
        return TimeDriven(sig)
    if isinstance(sig, (TimeDriven, OutputDriven)):
        return sig
    raise InvalidInputError('switching signal must be a schedule, TimeDriven or OutputDriven')


def _grid(horizon, t_eval, samples):
    if t_eval is None:
        return np.linspace(0.0, horizon, samples)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or np.any(np.diff(t_eval) < 0) or t_eval[0] < 0 or t_eval[-1] > horizon:
        raise InvalidInputError('t_eval must be sorted within [0, horizon]')
    return t_eval


class _Plant:
    """Per-mode right-hand side and output of the system being simulated."""

    def __init__(self, m, p, n_modes, dims):
        self.m, self.p, self.n_modes, self.dims = m, p, n_modes, dims

    def rhs(self, mode, t, x, u):
        raise NotImplementedError

    def output(self, mode, t, x, u):
        raise NotImplementedError

    def jac(self, mode):
        raise NotImplementedError

    def feed(self, mode):
        raise NotImplementedError

    def extras(self, mode, t, x, u):
        return {}


class _SwitchedPlant(_Plant):
    def __init__(self, sys):
        self.sys = sys.standard()
        dims = [s.n for s in self.sys.modes]
        super().__init__(sys.m, sys.p, sys.n_modes, dims)

    def rhs(self, mode, t, x, u):
        S = self.sys.modes[mode - 1]
        return S.A @ x + S.B @ u

    def output(self, mode, t, x, u):
        S = self.sys.modes[mode - 1]
        return S.C @ x + S.D @ u

    def jac(self, mode):
        return self.sys.modes[mode - 1].A

    def feed(self, mode):
        return self.sys.modes[mode - 1].B


class _EnvelopePlant(_Plant):
    """Envelope with the loop ``u_E = K y_E + K0 u`` closed.

    Since ``K D_E = 0`` the loop has no algebraic part:
    ``u_E = K C_E x + K0 u``.
    """

    def __init__(self, env, maps):
        self.env, self.maps = env, maps
        super().__init__(env.m, env.p, maps.n_modes, [env.n] * maps.n_modes)
        S = env.sys
        self.A, self.B, self.C, self.D = S.A, S.B, S.C, S.D

    def loop(self, mode, x, u):
        K, K0, _, _ = self.maps.at(mode)
        return K @ (self.C @ x) + K0 @ u

    def rhs(self, mode, t, x, u):
        return self.A @ x + self.B @ self.loop(mode, x, u)

    def output(self, mode, t, x, u):
        _, _, C0, D0 = self.maps.at(mode)
        uE = self.loop(mode, x, u)
        return C0 @ (self.C @ x + self.D @ uE) + D0 @ u

    def jac(self, mode):
        K = self.maps.at(mode)[0]
        return self.A + self.B @ K @ self.C

    def feed(self, mode):
        return self.B @ self.maps.at(mode)[1]

    def extras(self, mode, t, x, u):
        uE = self.loop(mode, x, u)
        return {'u_E': uE, 'y_E': self.C @ x + self.D @ uE}


class _Recorder:
    def __init__(self, plant, u, keep_states):
        self.plant, self.u, self.keep = plant, u, keep_states
        self.t, self.y, self.uu, self.modes, self.x = [], [], [], [], []
        self.extra = {}
        self.events = []

    def add(self, mode, t, x):
        ut = np.broadcast_to(np.atleast_1d(self.u(t)), (self.plant.m,)).astype(float)
        self.t.append(t)
        self.y.append(self.plant.output(mode, t, x, ut))
        self.uu.append(ut)
        self.modes.append(mode)
        if self.keep:
            self.x.append(np.array(x))
        for k, v in self.plant.extras(mode, t, x, ut).items():
            self.extra.setdefault(k, []).append(v)

    def finish(self):
        return Trajectory(
            np.array(self.t), np.array(self.y).reshape(len(self.t), self.plant.p),
            np.array(self.uu).reshape(len(self.t), self.plant.m), np.array(self.modes, dtype=int),
            tuple(self.events), self.x if self.keep else None,
            {k: np.array(v) for k, v in self.extra.items()})


def _check_common(plant, horizon, transitions):
    if not horizon > 0:
        raise InvalidInputError('horizon must be positive')
    dims = plant.dims
    if len(set(dims)) > 1 and transitions is None:
        raise InvalidInputError('modes of different order need state transitions')


def _input_breaks(u, horizon):
    return [b for b in getattr(u, 'breakpoints', ()) if 0 < b < horizon]


def _switch(plant, transitions, x, old, new):
    if transitions is not None:
        key = (old, new)
        if key not in transitions:
            raise InvalidInputError(f'no state transition for switch {old} -> {new}')
        return np.asarray(transitions[key]) @ x
    return x


def _initial_mode(sig, n_modes):
    if isinstance(sig, TimeDriven):
        sig.schedule.validate(n_modes)
        return sig.schedule.mode_at(0.0)
    if not 1 <= sig.initial_mode <= n_modes:
        raise InvalidInputError('initial mode out of range')
    for rule in sig.rules:
        if not (1 <= rule.source <= n_modes and 1 <= rule.target <= n_modes):
            raise InvalidInputError('switching rule refers to a missing mode')
    return sig.initial_mode


def _fire(plant, sig, mode, t, x, u):
    """Target of the first rule of `mode` that has fired at (t, x), else None."""
    ut = np.broadcast_to(np.atleast_1d(u(t)), (plant.m,))
    y = plant.output(mode, t, x, ut)
    for rule in sig.rules_for(mode):
        if rule.fires(y):
            return rule.target
    return None


def _run(plant, sig, u, horizon, atol, rtol, transitions, t_eval, samples, keep_states, max_step):
    sig = _as_signal(sig)
    _check_common(plant, horizon, transitions)
    grid = _grid(horizon, t_eval, samples)
    mode = _initial_mode(sig, plant.n_modes)
    x = np.zeros(plant.dims[mode - 1])
    rec = _Recorder(plant, u, keep_states)
    rec.add(mode, 0.0, x)
    gi = 1 if grid[0] == 0.0 else 0
    breaks = set(_input_breaks(u, horizon))
    if isinstance(sig, TimeDriven):
        breaks |= {b for b in sig.schedule.switch_times(horizon)}
    t = 0.0
    dwell_until = 0.0
    instant, instant_count = -1.0, 0
    output_driven = isinstance(sig, OutputDriven)
    while t < horizon:
        if output_driven and t >= dwell_until:
            target = _fire(plant, sig, mode, t, x, u)
            if target is not None:
                instant_count = instant_count + 1 if t == instant else 1
                instant = t
                if instant_count > MAX_INSTANT_SWITCHES:
                    raise InvalidInputError(f'switching rules chatter at t={t}')
                rec.events.append((t, mode, target))
                x = _switch(plant, transitions, x, mode, target)
                mode = target
                rec.add(mode, t, x)
                dwell_until = t + sig.min_dwell
                continue
        t_end = min([b for b in breaks if b > t] + [horizon])
        if output_driven and t < dwell_until < t_end:
            t_end = dwell_until
        watch = output_driven and t >= dwell_until
        x, t_new, fired, dense = _segment(plant, sig, mode, u, x, t, t_end, atol, rtol, watch,
                                          max_step)
        while gi < len(grid) and grid[gi] <= t_new:
            if grid[gi] > t:
                rec.add(mode, grid[gi], x if grid[gi] == t_new else dense(grid[gi]))
            gi += 1
        if rec.t[-1] != t_new:
            rec.add(mode, t_new, x)
        t = t_new
        if fired is not None:
            rec.events.append((t, mode, fired))
            x = _switch(plant, transitions, x, mode, fired)
            mode = fired
            rec.add(mode, t, x)
            dwell_until = t + sig.min_dwell
            instant, instant_count = t, 1
        elif not output_driven and t < horizon:
            new = sig.schedule.mode_at(np.nextafter(t, np.inf))
            if new != mode:
                rec.events.append((t, mode, new))
                x = _switch(plant, transitions, x, mode, new)
                mode = new
                rec.add(mode, t, x)
    return rec.finish()


def _segment(plant, sig, mode, u, x, t0, t1, atol, rtol, watch, max_step):
    """Integrate one mode on ``[t0, t1]``; stops early at a rule crossing.

    Returns the end state, the end time, the target mode of a fired
    rule (or None) and the dense output of the segment.
    """
    J = plant.jac(mode)
    F = plant.feed(mode)
    m = plant.m

    def f(t, z):
        return J @ z + F @ np.broadcast_to(np.atleast_1d(u(t)), (m,))

    events = []
    rules = sig.rules_for(mode) if watch else []
    for rule in rules:
        def ev(t, z, rule=rule):
            ut = np.broadcast_to(np.atleast_1d(u(t)), (m,))
            return rule.margin(plant.output(mode, t, z, ut))
        ev.terminal = True
        ev.direction = -1
        events.append(ev)
    if x.size == 0:
        return x, t1, None, lambda t: x
    sol = solve_ivp(f, (t0, t1), x, method='RK45', rtol=rtol, atol=atol, dense_output=True,
                    events=events or None, max_step=max_step)
    if sol.status == -1:
        raise StiffnessError(f'integration failed in mode {mode} at t={sol.t[-1]:.6g}: {sol.message}; '
                             'try the implicit integrator')
    if sol.status == 1:
        for k, te in enumerate(sol.t_events):
            if len(te):
                return sol.y_events[k][0], float(te[0]), rules[k].target, sol.sol
    return sol.y[:, -1], t1, None, sol.sol


def simulate_switched(sys, sig, u, horizon, atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL,
                      transitions=None, t_eval=None, samples=1001, keep_states=False,
                      max_step=np.inf):
    """Simulate a switched system from zero initial state.

    Parameters
    ----------
    sys : SwitchedModel
    sig : SwitchSchedule, TimeDriven or OutputDriven
    u : callable
        Input signal, ``u(t)`` returns an ``m``-vector.
    horizon : float
    atol, rtol : float
        Tolerances of the Dormand-Prince 4(5) integrator.
    transitions : dict, optional
        ``(i, j) -> T_ij`` applied to the state when switching from mode
        ``i`` to ``j``; required when the modes differ in order.
    t_eval : array, optional
        Sample times; default is `samples` equidistant points.  Switch
        instants are always sampled in addition.

    Raises
    ------
    StiffnessError
        If the step size underflows.
    """
    if not isinstance(sys, SwitchedModel):
        raise InvalidInputError('expected a SwitchedModel')
    return _run(_SwitchedPlant(sys), sig, u, horizon, atol, rtol, transitions, t_eval, samples,
                keep_states, max_step)


def simulate_envelope_closed_loop(env, maps, sig, u, horizon, atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL,
                                  t_eval=None, samples=1001, keep_states=False, max_step=np.inf):
    """Simulate the envelope under the mode-dependent feedback.

    The recorded output is ``C0(sigma) y_E + D0(sigma) u``; the envelope
    input ``u_E`` and output ``y_E`` are stored in ``extras``.
    """
    if not isinstance(env, EnvelopeModel):
        raise InvalidInputError('expected an EnvelopeModel')
    return _run(_EnvelopePlant(env, maps), sig, u, horizon, atol, rtol, None, t_eval, samples,
                keep_states, max_step)


def simulate_implicit(sys, sig, u, horizon, step, transitions=None, keep_states=False):
    """Backward Euler with fixed `step`.

    Schedule switch instants split the step they fall into.  Output
    rules are checked after each step; a crossing is located by linear
    interpolation between the two samples, the state is interpolated
    to that instant and integration restarts there in the new mode.
    """
    if not step > 0:
        raise InvalidInputError('step must be positive')
    if isinstance(sys, EnvelopeModel):
        raise InvalidInputError('use simulate_envelope_closed_loop for envelopes')
    plant = _SwitchedPlant(sys)
    sig = _as_signal(sig)
    _check_common(plant, horizon, transitions)
    mode = _initial_mode(sig, plant.n_modes)
    x = np.zeros(plant.dims[mode - 1])
    rec = _Recorder(plant, u, keep_states)
    rec.add(mode, 0.0, x)
    breaks = sorted(set(_input_breaks(u, horizon))
                    | (set(sig.schedule.switch_times(horizon)) if isinstance(sig, TimeDriven) else set()))
    output_driven = isinstance(sig, OutputDriven)
    cache = {}

    def solver(mode, h):
        key = (mode, h)
        if key not in cache:
            M = np.eye(plant.dims[mode - 1]) - h * plant.jac(mode)
            if np.linalg.cond(M) > 1e14:
                raise InvalidInputError(f'backward Euler matrix singular for step {h}')
            cache[key] = np.linalg.inv(M)
        return cache[key]

    t = 0.0
    dwell_until = 0.0
    eps = 1e-12 * max(horizon, 1.0)
    while t < horizon - eps:
        t_next = min(t + step, horizon)
        nb = [b for b in breaks if t + eps < b < t_next - eps]
        if nb:
            t_next = nb[0]
        elif any(abs(b - t_next) <= eps for b in breaks):
            t_next = min(b for b in breaks if abs(b - t_next) <= eps)
        h = t_next - t
        un = np.broadcast_to(np.atleast_1d(u(t_next)), (plant.m,))
        x_new = solver(mode, h) @ (x + h * plant.feed(mode) @ un)
        fired = None
        if output_driven and t_next > dwell_until:
            uo = np.broadcast_to(np.atleast_1d(u(t)), (plant.m,))
            y0 = plant.output(mode, t, x, uo)
            y1 = plant.output(mode, t_next, x_new, un)
            for rule in sig.rules_for(mode):
                if rule.fires(y1):
                    m0, m1 = rule.margin(y0), rule.margin(y1)
                    theta = 0.0 if m0 <= 0 else m0 / (m0 - m1)
                    t_star = t + theta * h
                    x_new = x + theta * (x_new - x)
                    t_next = max(t_star, t)
                    fired = rule.target
                    break
        x, t = x_new, t_next
        if t > rec.t[-1]:
            rec.add(mode, t, x)
        if fired is not None:
            rec.events.append((t, mode, fired))
            x = _switch(plant, transitions, x, mode, fired)
            mode = fired
            rec.add(mode, t, x)
            dwell_until = t + sig.min_dwell
        elif not output_driven and breaks and any(abs(b - t) <= eps for b in breaks):
            new = sig.schedule.mode_at(t + 2 * eps)
            if new != mode:
                rec.events.append((t, mode, new))
                x = _switch(plant, transitions, x, mode, new)
                mode = new
                rec.add(mode, t, x)
    return rec.finish()


def _values(traj, channels, which):
    if isinstance(traj, Trajectory):
        times = traj.times
        vals = traj.outputs if which == 'outputs' else traj.extras.get(which, getattr(traj, which, None))
    else:
        times, vals = traj
        times = np.asarray(times, dtype=float)
        vals = np.asarray(vals, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
    if times is None or len(times) == 0:
        raise InvalidInputError('empty trajectory')
    if channels is not None:
        vals = vals[:, list(channels)]
    return times, vals


def l2_norm(traj, channels=None, which='outputs'):
    """``sqrt(int |y(t)|^2 dt)`` by the trapezoidal rule over the samples.

    `traj` is a :class:`Trajectory` or a ``(times, values)`` pair.
    """
    times, vals = _values(traj, channels, which)
    if len(times) == 1:
        return 0.0
    return float(np.sqrt(np.trapezoid(np.sum(vals ** 2, axis=1), times)))


def linf_norm(traj, channels=None, which='outputs'):
    """Largest Euclidean norm over the samples."""
    _, vals = _values(traj, channels, which)
    return float(np.max(np.linalg.norm(vals, axis=1))) if vals.size else 0.0
