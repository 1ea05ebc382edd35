"""Example systems: RLC circuit, tangential toy, random LSS, two-room heat model, CD player."""
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InvalidInputError, LoadError
from .model import StateSpaceModel, SwitchedModel
from .signals import OutputDriven, OutputRule, SwitchSchedule

__all__ = [
    'rlc_example', 'RLC_SCHEDULE', 'rlc_steering_input', 'TangentialToy', 'tangential_toy', 'random_lss', 'HeatParams',
    'heat_two_rooms', 'interface_conductivity', 'cd_player_switched', 'cd_player_from_matrices',
    'heat_hysteresis', 'HEAT_SCHEDULE', 'RANDOM_SCHEDULES', 'CD_PLAYER_SCHEDULE', 'BUILTINS',
]

#: door open on [0, 1.1] and (1.6, 1.7], closed otherwise
HEAT_SCHEDULE = SwitchSchedule((0.0, 1.1, 1.6, 1.7), (2, 1, 2, 1))

RANDOM_SCHEDULES = (
    SwitchSchedule((0.0, 0.2, 0.6, 0.8), (2, 1, 2, 1)),
    SwitchSchedule((0.0, 0.4, 0.7, 0.9), (1, 2, 1, 2)),
)

CD_PLAYER_SCHEDULE = SwitchSchedule((0.0, 0.5, 1.0, 1.5), (2, 1, 2, 1))


def rlc_example():
    """Two-mode RLC circuit with switched inductance (R=C=1, L1=1/2, L2=1)."""
    C = [[0.0, 1.0]]
    return SwitchedModel([
        StateSpaceModel([[0.0, -1.0], [2.0, -4.0]], [[1.0], [2.0]], C),
        StateSpaceModel([[0.0, -1.0], [1.0, -2.0]], [[1.0], [1.0]], C),
    ])


#: mode 1 up to t=1, mode 2 afterwards
RLC_SCHEDULE = SwitchSchedule((0.0, 1.0), (1, 2))


def rlc_steering_input(xi=1.0, pieces=2):
    """Piecewise-constant input driving mode 1 of the RLC circuit to ``(xi, 2 xi)`` at t=1.

    The input is zero after t=1, so with :data:`RLC_SCHEDULE` the exact
    output at t=2 is ``xi / e``.
    """
    from .model import _propagate
    from .signals import PiecewiseConstant

    mode1 = rlc_example().mode(1)
    h = 1.0 / pieces
    # x(1) = sum_k Phi^(pieces-1-k) g levels[k]
    Phi, g = _propagate(mode1.A, mode1.B[:, 0], h)
    cols = [np.linalg.matrix_power(Phi, pieces - 1 - k) @ g for k in range(pieces)]
    levels, *_ = np.linalg.lstsq(np.column_stack(cols), xi * np.array([1.0, 2.0]), rcond=None)
    times = tuple(k * h for k in range(pieces)) + (1.0,)
    return PiecewiseConstant(times, tuple(levels) + (0.0,))


@dataclass(frozen=True)
class TangentialToy:
    """Full mode, its one-state approximation and the output switching rule."""

    full: SwitchedModel
    reduced: SwitchedModel
    switching: OutputDriven
    threshold: float
    p: float


def tangential_toy(p=0.1, mode2=None, reduced_mode2=None):
    """Toy system whose output touches the switching surface almost tangentially.

    The second mode is left open; by default it is a frozen copy of the
    first mode (and of the one-state approximation, respectively).
    """
    if p <= 0:
        raise InvalidInputError('p must be positive')
    full1 = StateSpaceModel(-np.eye(2), [[1.0], [1.0]], [[1.0, p]])
    red1 = StateSpaceModel([[-1.0]], [[1.0]], [[1.0]])
    threshold = (1 + p / 2) * (1 - np.exp(-1))
    # runs in mode 1 until the output reaches the threshold, then leaves it
    switching = OutputDriven((OutputRule(1, '>', threshold, 2),), initial_mode=1)
    full = SwitchedModel([full1, mode2 if mode2 is not None else full1])
    reduced = SwitchedModel([red1, reduced_mode2 if reduced_mode2 is not None else red1])
    return TangentialToy(full, reduced, switching, threshold, p)


def random_lss(seed=0, n=11, n_modes=2, margin=0.5, m=1, p=1):
    """Seeded random switched system, every mode shifted to spectral abscissa ``-margin``."""
    rng = np.random.default_rng(seed)
    modes = []
    for _ in range(n_modes):
        A = rng.standard_normal((n, n))
        A -= (numerics.spectral_abscissa(A) + margin) * np.eye(n)
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        modes.append(StateSpaceModel(A, B, C))
    return SwitchedModel(modes)


@dataclass(frozen=True)
class HeatParams:
    """Physical and mesh data of the 1-D two-room model (SI units).

    ``time_scale`` is the number of seconds per model time unit.  The
    default measures time in seconds; ``time_scale=3600`` gives hours,
    which is the natural unit for the heating scenarios (a room needs
    several hours to warm up).
    """

    zeta1: float = 2e6
    zeta2: float = 700.0
    k1: float = 0.015
    k2: float = 3.0
    h: float = 100.0
    lengths: tuple = (5.0, 0.3, 5.0)
    widths: tuple = (0.1, 0.1, 0.1)
    cells: tuple = (50, 3, 50)
    time_scale: float = 1.0

    @classmethod
    def calibrated(cls, **overrides):
        """Door data ``k1=0.01``, ``zeta1=2.5e6`` matching the benchmark Hankel spectrum.

        With the default door data the leading normalized Hankel singular
        values of the closed-door mode are a few percent off the benchmark
        values and the trailing ones off by a factor of two; these two
        values match all of them to about four digits.
        """
        return cls(**{'k1': 0.01, 'zeta1': 2.5e6, **overrides})

    def __post_init__(self):
        vals = (self.zeta1, self.zeta2, self.k1, self.k2, self.h, self.time_scale,
                *self.lengths, *self.widths)
        if min(vals) <= 0 or min(self.cells) < 1:
            raise InvalidInputError('heat parameters must be positive')
        for L, dx, nc in zip(self.lengths, self.widths, self.cells):
            if not np.isclose(L, nc * dx):
                raise InvalidInputError(f'cell count {nc} x width {dx} != length {L}')


def interface_conductivity(dx_outer, dx_door, k_outer, k_door):
    """Effective conductivity between a room cell and a door cell (harmonic weighting)."""
    return (dx_outer + dx_door) / (dx_outer / k_outer + dx_door / k_door)


def _tridiag(n):
    return -2 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)


def heat_two_rooms(params=HeatParams()):
    """Finite-volume two-room model in generalized form ``E_s x' = A_s x + B u``.

    Mode 1 is the closed door (isolating), mode 2 the open door.
    """
    prm = params
    n1, n2, n3 = prm.cells
    dx1, dx2, dx3 = prm.widths
    n = n1 + n2 + n3
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = np.zeros((1, n))
    C[0, n1 + n2:] = 1.0 / n3
    modes = []
    for k_door, z_door in ((prm.k1, prm.zeta1), (prm.k2, prm.zeta2)):
        k2 = prm.k2
        k12 = interface_conductivity(dx1, dx2, k2, k_door)
        k23 = interface_conductivity(dx3, dx2, k2, k_door)
        c12 = 2 * k12 / (dx1 + dx2)
        c23 = 2 * k23 / (dx3 + dx2)
        A11 = k2 / dx1 * _tridiag(n1)
        A11[0, 0] += k2 / dx1
        A11[-1, -1] += k2 / dx1 - c12
        A22 = k_door / dx2 * _tridiag(n2)
        A22[0, 0] += k_door / dx2 - c12
        A22[-1, -1] += k_door / dx2 - c23
        A33 = k2 / dx3 * _tridiag(n3)
        A33[0, 0] += k2 / dx3 - c23
        A33[-1, -1] += k2 / dx3 - prm.h / 2
        A12 = np.zeros((n1, n2))
        A12[-1, 0] = c12
        A23 = np.zeros((n2, n3))
        A23[-1, 0] = c23
        A = np.block([
            [A11, A12, np.zeros((n1, n3))],
            [A12.T, A22, A23],
            [np.zeros((n3, n1)), A23.T, A33],
        ])
        E = np.diag(np.concatenate([
            np.full(n1, prm.zeta2 * dx1), np.full(n2, z_door * dx2), np.full(n3, prm.zeta2 * dx3),
        ])) / prm.time_scale
        modes.append(StateSpaceModel(A, B, C, E=E))
    return SwitchedModel(modes)


def heat_hysteresis(low=0.2, high=0.5, min_dwell=0.0):
    """Close the door above `high`, open it below `low`; door initially open."""
    return OutputDriven.hysteresis(low, high, low_mode=1, high_mode=2, initial_mode=2,
                                   min_dwell=min_dwell)


def cd_player_from_matrices(A, B, C):
    """Two SISO modes from the 2-input/2-output CD player matrices.

    Mode 1 uses input column 2 and output row 1 scaled by 2/1000, mode 2
    input column 1 and output row 2 scaled by 5.
    """
    A = numerics.as_matrix(A, 'A')
    n = A.shape[0]
    B = numerics.as_matrix(B, 'B')
    C = numerics.as_matrix(C, 'C')
    if A.shape != (n, n) or B.shape != (n, 2) or C.shape != (2, n):
        raise LoadError(f'CD player data must be n x n, n x 2, 2 x n; got {A.shape}, {B.shape}, {C.shape}')
    mode1 = StateSpaceModel(A, B[:, [1]], 2 / 1000 * C[[0], :])
    mode2 = StateSpaceModel(A, B[:, [0]], 5 * C[[1], :])
    return SwitchedModel([mode1, mode2])


def cd_player_switched(path):
    """Load ``A.mtx``, ``B.mtx``, ``C.mtx`` from directory `path` (data not shipped)."""
    from pathlib import Path

    from .io import read_matrix

    path = Path(path)
    try:
        A, B, C = (read_matrix(path / f'{k}.mtx') for k in 'ABC')
    except FileNotFoundError as exc:
        raise LoadError(f'missing CD player matrix file: {exc.filename}') from exc
    return cd_player_from_matrices(A, B, C)


BUILTINS = {
    'rlc': rlc_example,
    'heat': heat_two_rooms,
    'random': random_lss,
}
