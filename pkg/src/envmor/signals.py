"""Input signals and switching signals.

Mode labels are 1-based throughout the package, matching the usual
``sigma(t) in {1, ..., l}`` notation.  Piecewise quantities use the
convention that a value attached to breakpoint ``t_k`` is active on
``(t_k, t_{k+1}]``; the value at ``t = 0`` is the first one.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

__all__ = [
    'SwitchSchedule', 'OutputRule', 'TimeDriven', 'OutputDriven',
    'Constant', 'Sine', 'Exp', 'PiecewiseConstant', 'Samples',
]


def _piece_index(breakpoints, t):
    return max(int(np.searchsorted(breakpoints, t, side='left')) - 1, 0)


@dataclass(frozen=True)
class SwitchSchedule:
    """Time-driven switching: mode ``modes[k]`` on ``(times[k], times[k+1]]``."""

    times: tuple
    modes: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        modes = tuple(int(i) for i in self.modes)
        if len(times) != len(modes) or not times:
            raise InvalidInputError('schedule needs one mode per breakpoint')
        if times[0] != 0.0:
            raise InvalidInputError('schedule must start at t=0')
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidInputError('schedule times must be strictly increasing')
        if any(i < 1 for i in modes):
            raise InvalidInputError('mode labels are 1-based')
        if any(a == b for a, b in zip(modes, modes[1:])):
            raise InvalidInputError('consecutive modes must differ')
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'modes', modes)

    @classmethod
    def constant(cls, mode):
        return cls((0.0,), (mode,))

    def mode_at(self, t):
        return self.modes[_piece_index(self.times, t)]

    def switch_times(self, horizon=np.inf):
        return [t for t in self.times[1:] if t < horizon]

    def validate(self, n_modes):
        if max(self.modes) > n_modes:
            raise InvalidInputError(f'schedule refers to mode {max(self.modes)} of {n_modes}')


@dataclass(frozen=True)
class OutputRule:
    """Switch ``source -> target`` once output ``y[channel]`` crosses ``threshold``.

    ``direction`` is ``'<'`` (fires when the functional drops below the
    threshold) or ``'>'`` (fires when it rises above).
    """

    source: int
    direction: str
    threshold: float
    target: int
    channel: int = 0

    def __post_init__(self):
        if self.direction not in ('<', '>'):
            raise InvalidInputError("direction must be '<' or '>'")
        if self.source == self.target:
            raise InvalidInputError('rule must change the mode')

    def value(self, y):
        return float(np.atleast_1d(y)[self.channel])

    def margin(self, y):
        """Positive while the rule has not fired, crosses zero when it fires."""
        v = self.value(y)
        return v - self.threshold if self.direction == '<' else self.threshold - v

    def fires(self, y):
        return self.margin(y) < 0


@dataclass(frozen=True)
class TimeDriven:
    schedule: SwitchSchedule


@dataclass(frozen=True)
class OutputDriven:
    rules: tuple
    initial_mode: int
    min_dwell: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'rules', tuple(self.rules))
        # hysteresis pairs need a gap between the thresholds
        for a in self.rules:
            for b in self.rules:
                if a.source == b.target and a.target == b.source and a.direction != b.direction:
                    low, high = (a, b) if a.direction == '<' else (b, a)
                    if not low.threshold < high.threshold:
                        raise InvalidInputError('hysteresis thresholds need low < high')

    @classmethod
    def hysteresis(cls, low, high, low_mode, high_mode, initial_mode, channel=0, min_dwell=0.0):
        """Switch to `high_mode` below `low` and to `low_mode` above `high`."""
        rules = (OutputRule(low_mode, '<', low, high_mode, channel),
                 OutputRule(high_mode, '>', high, low_mode, channel))
        return cls(rules, initial_mode, min_dwell)

    def rules_for(self, mode):
        return [r for r in self.rules if r.source == mode]


class _Signal:
    #: times where the signal (or its derivative) jumps
    breakpoints = ()
    piecewise_constant = False

    def __call__(self, t):
        raise NotImplementedError

    def sample(self, times):
        return np.array([np.atleast_1d(self(t)) for t in times])


@dataclass(frozen=True)
class Constant(_Signal):
    level: object = 1.0
    piecewise_constant = True

    def __call__(self, t):
        return np.atleast_1d(np.asarray(self.level, dtype=float))


@dataclass(frozen=True)
class Sine(_Signal):
    """``amplitude * sin(2 pi frequency t)``."""

    amplitude: float = 1.0
    frequency: float = 1.0

    def __call__(self, t):
        return np.atleast_1d(self.amplitude * np.sin(2 * np.pi * self.frequency * t))


@dataclass(frozen=True)
class Exp(_Signal):
    """``scale * exp(-rate t)``."""

    scale: float = 1.0
    rate: float = 1.0

    def __call__(self, t):
        return np.atleast_1d(self.scale * np.exp(-self.rate * t))


@dataclass(frozen=True)
class PiecewiseConstant(_Signal):
    """``levels[k]`` on ``(times[k], times[k+1]]``; ``times[0]`` must be 0."""

    times: tuple
    levels: tuple
    piecewise_constant = True

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        levels = tuple(np.atleast_1d(np.asarray(v, dtype=float)) for v in self.levels)
        if len(times) != len(levels) or not times or times[0] != 0.0:
            raise InvalidInputError('piecewise-constant input needs times starting at 0')
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidInputError('input breakpoints must be strictly increasing')
        if not all(np.all(np.isfinite(v)) for v in levels):
            raise InvalidInputError('input levels must be finite')
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'levels', levels)

    @property
    def breakpoints(self):
        return self.times[1:]

    def __call__(self, t):
        return self.levels[_piece_index(self.times, t)]


@dataclass(frozen=True)
class Samples(_Signal):
    """Linear interpolation of sampled values (constant extrapolation)."""

    times: np.ndarray
    values: np.ndarray
    _vals: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or len(times) != len(values) or len(times) < 2:
            raise InvalidInputError('samples need matching 1-D times and values')
        if np.any(np.diff(times) <= 0):
            raise InvalidInputError('sample times must be strictly increasing')
        if not np.all(np.isfinite(values)):
            raise InvalidInputError('sample values must be finite')
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, '_vals', values)

    @property
    def breakpoints(self):
        return tuple(self.times[1:-1])

    def __call__(self, t):
        return np.array([np.interp(t, self.times, v) for v in self._vals.T])
