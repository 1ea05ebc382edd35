"""System data model, Petrov-Galerkin projection and the exact switched solution."""
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InstabilityError, InvalidInputError, PoleError, ProjectionDegenerateError
from .numerics import as_matrix
from .signals import SwitchSchedule

__all__ = [
    'StateSpaceModel', 'SwitchedModel', 'ProjectionPair', 'project',
    'state_transition', 'transfer_eval', 'gramians', 'gramian_factors',
    'hankel_singular_values', 'exact_switched_solution', 'exact_switched_trajectory',
    'is_stable', 'piecewise_output_l2',
]


def _frozen(M):
    M = np.array(M, dtype=float)
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """LTI system ``E x' = A x + B u, y = C x + D u``; ``E=None`` means identity."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray = None
    E: np.ndarray = None

    def __post_init__(self):
        A = as_matrix(self.A, 'A')
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvalidInputError(f'A must be square, got {A.shape}')
        B = as_matrix(self.B, 'B', shape=(n, None)) if n else np.zeros((0, np.shape(self.B)[-1]))
        C = as_matrix(self.C, 'C', shape=(None, n)) if n else np.zeros((np.shape(self.C)[0], 0))
        if self.D is None:
            D = np.zeros((C.shape[0], B.shape[1]))
        else:
            D = as_matrix(self.D, 'D', shape=(C.shape[0], B.shape[1]))
        object.__setattr__(self, 'A', _frozen(A))
        object.__setattr__(self, 'B', _frozen(B))
        object.__setattr__(self, 'C', _frozen(C))
        object.__setattr__(self, 'D', _frozen(D))
        if self.E is not None:
            E = as_matrix(self.E, 'E', shape=(n, n))
            if n and np.linalg.matrix_rank(E) < n:
                raise InvalidInputError('E must be nonsingular')
            object.__setattr__(self, 'E', _frozen(E))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def cond_E(self):
        return 1.0 if self.E is None else float(np.linalg.cond(self.E))

    def standard(self):
        """Equivalent system with ``E = I`` (``A <- E^-1 A``, ``B <- E^-1 B``)."""
        if self.E is None:
            return self
        return StateSpaceModel(np.linalg.solve(self.E, self.A), np.linalg.solve(self.E, self.B),
                               self.C, self.D)

    def poles(self):
        return numerics.eigenvalues(self.standard().A)

    def __repr__(self):
        e = '' if self.E is None else ', E'
        return f'StateSpaceModel(n={self.n}, m={self.m}, p={self.p}{e})'


def is_stable(sys):
    return sys.n == 0 or numerics.spectral_abscissa(sys.standard().A) < 0


class SwitchedModel:
    """Ordered list of modes ``Sigma_1, ..., Sigma_l`` (1-based labels).

    All modes share input and output dimensions.  State dimensions must
    agree unless ``shared_state=False``, which is only meaningful for
    independently reduced modes connected by state transition matrices.
    """

    def __init__(self, modes, shared_state=True):
        modes = tuple(modes)
        if not modes:
            raise InvalidInputError('a switched model needs at least one mode')
        if not all(isinstance(s, StateSpaceModel) for s in modes):
            raise InvalidInputError('modes must be StateSpaceModel instances')
        m, p = modes[0].m, modes[0].p
        if any(s.m != m or s.p != p for s in modes):
            raise InvalidInputError('all modes must share input and output dimensions')
        if shared_state and any(s.n != modes[0].n for s in modes):
            raise InvalidInputError('all modes must share the state dimension')
        self.modes = modes
        self.shared_state = shared_state

    @property
    def n_modes(self):
        return len(self.modes)

    @property
    def n(self):
        if not self.shared_state:
            raise InvalidInputError('modes have individual state dimensions')
        return self.modes[0].n

    @property
    def m(self):
        return self.modes[0].m

    @property
    def p(self):
        return self.modes[0].p

    def mode(self, i):
        """Mode with 1-based label `i`."""
        if not 1 <= i <= self.n_modes:
            raise InvalidInputError(f'mode {i} out of range 1..{self.n_modes}')
        return self.modes[i - 1]

    @property
    def has_E(self):
        return any(s.E is not None for s in self.modes)

    def standard(self):
        return SwitchedModel([s.standard() for s in self.modes], self.shared_state)

    def __iter__(self):
        return iter(self.modes)

    def __len__(self):
        return len(self.modes)

    def __repr__(self):
        dims = f'n={self.modes[0].n}' if self.shared_state else 'mixed n'
        return f'SwitchedModel(l={self.n_modes}, {dims}, m={self.m}, p={self.p})'


@dataclass(frozen=True, eq=False)
class ProjectionPair:
    """Right and left projection bases ``V, W`` (both ``n x r``)."""

    V: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        V = as_matrix(self.V, 'V')
        W = as_matrix(self.W, 'W', shape=V.shape)
        if V.shape[1] > V.shape[0]:
            raise InvalidInputError('reduced order exceeds state dimension')
        object.__setattr__(self, 'V', _frozen(V))
        object.__setattr__(self, 'W', _frozen(W))

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def r(self):
        return self.V.shape[1]

    @property
    def condition(self):
        return float(np.linalg.cond(self.W.T @ self.V))

    def oblique(self):
        """``(W^T V)^{-1} W^T``, raising if ``W^T V`` is singular."""
        WtV = self.W.T @ self.V
        if self.r and (not np.isfinite(self.condition) or self.condition > 1e14):
            raise ProjectionDegenerateError(f'W^T V is singular (cond={self.condition:.3g})')
        return np.linalg.solve(WtV, self.W.T) if self.r else np.zeros((0, self.n))

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.eye(n))


def project(sys, P):
    """Petrov-Galerkin reduction ``((W^T V)^-1 W^T A V, (W^T V)^-1 W^T B, C V, D)``."""
    sys = sys.standard()
    if P.n != sys.n:
        raise InvalidInputError(f'projection has n={P.n}, system has n={sys.n}')
    L = P.oblique()
    return StateSpaceModel(L @ sys.A @ P.V, L @ sys.B, sys.C @ P.V, sys.D)


def state_transition(Pi, Pj):
    """Matrix ``(W_j^T V_j)^-1 W_j^T V_i`` mapping reduced states of mode i to mode j."""
    if Pi.n != Pj.n:
        raise InvalidInputError('projection pairs live in different state spaces')
    return Pj.oblique() @ Pi.V


def transfer_eval(sys, s):
    """``C (s E - A)^{-1} B + D`` at the complex frequency `s`."""
    n = sys.n
    if n == 0:
        return sys.D.astype(complex)
    E = np.eye(n) if sys.E is None else sys.E
    M = s * E - sys.A
    if np.linalg.cond(M) > 1e15:
        raise PoleError(f's={s} is a pole of the system')
    return sys.C @ np.linalg.solve(M, sys.B.astype(complex)) + sys.D


def _require_stable(sys):
    if not is_stable(sys):
        raise InstabilityError('Gramians need an asymptotically stable system')


def gramians(sys):
    """Controllability and observability Gramians ``(P, Q)``."""
    sys = sys.standard()
    _require_stable(sys)
    P = numerics.solve_lyapunov(sys.A, sys.B @ sys.B.T)
    Q = numerics.solve_lyapunov(sys.A.T, sys.C.T @ sys.C)
    return P, Q


def gramian_factors(sys):
    """Square factors ``(Lp, Lq)`` with ``P = Lp Lp^T`` and ``Q = Lq Lq^T``."""
    sys = sys.standard()
    _require_stable(sys)
    return numerics.lyapunov_factor(sys.A, sys.B), numerics.lyapunov_factor(sys.A.T, sys.C.T)


def hankel_singular_values(sys):
    """Hankel singular values, descending.

    Computed as singular values of ``Lq^T Lp`` from directly computed
    Gramian factors rather than from eigenvalues of ``P Q``; the latter
    loses everything below ``sqrt(eps)`` relative to the largest value.
    """
    Lp, Lq = gramian_factors(sys)
    if Lp.size == 0:
        return np.zeros(0)
    return np.linalg.svd(Lq.T @ Lp, compute_uv=False)


def _input_pieces(u):
    if not getattr(u, 'piecewise_constant', False):
        raise InvalidInputError('exact solution needs a piecewise-constant input')
    return tuple(getattr(u, 'times', (0.0,)))


def _propagate(A, b, h):
    """State map over a step of length h with constant forcing b: (e^{Ah}, int_0^h e^{As} ds b)."""
    Phi, Gamma = _propagators(A, np.reshape(b, (-1, 1)), h)
    return Phi, Gamma[:, 0]


def _propagators(A, B, h):
    """``(e^{Ah}, int_0^h e^{As} ds B)`` from one exponential of ``[[A, B], [0, 0]]``."""
    n, m = B.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    F = numerics.matrix_exponential(aug, h)
    return F[:n, :n], F[:n, n:]


def exact_switched_trajectory(sys, schedule, u, times, transitions=None):
    """Closed-form states and outputs at `times` for a time-driven switched system.

    The input must be piecewise constant; each constant piece is
    integrated with the augmented-matrix exponential, so no inverse of
    ``A`` is needed.  Zero initial state.

    Returns
    -------
    states
        List of state vectors (their length may vary with the mode when
        `transitions` connects modes of different order).
    outputs
        Array of shape ``(len(times), p)``.
    """
    sys = sys.standard()
    schedule.validate(sys.n_modes)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise InvalidInputError('times must be nonnegative')
    knots = sorted(set(_input_pieces(u)) | set(schedule.times))
    order = np.argsort(times, kind='stable')
    mode = schedule.mode_at(0.0)
    x = np.zeros(sys.mode(mode).n)
    t_cur = 0.0
    cache = {}
    states = [None] * len(times)
    outputs = np.zeros((len(times), sys.p))

    def advance(x, mode, t0, t1):
        h = t1 - t0
        if h <= 0:
            return x
        uk = np.broadcast_to(u(0.5 * (t0 + t1)), (sys.m,))
        S = sys.mode(mode)
        key = (mode, h)
        if key not in cache:
            cache[key] = _propagators(S.A, S.B, h)
        Phi, Gamma = cache[key]
        return Phi @ x + Gamma @ uk

    for idx in order:
        t = times[idx]
        while t_cur < t:
            new_mode = schedule.mode_at(np.nextafter(t_cur, np.inf))
            if new_mode != mode:
                if transitions is not None:
                    x = transitions[(mode, new_mode)] @ x
                mode = new_mode
            t_next = min([k for k in knots if k > t_cur] + [t])
            x = advance(x, mode, t_cur, t_next)
            t_cur = t_next
        S = sys.mode(mode)
        states[idx] = x.copy()
        outputs[idx] = S.C @ x + S.D @ np.broadcast_to(u(t), (sys.m,))
    return states, outputs


def _output_gramian_step(F, Q, h):
    """``(e^{Fh}, int_0^h e^{F^T t} Q e^{Ft} dt)``.

    Van Loan's block exponential on a step short enough to stay well
    scaled, then repeated doubling ``X(2t) = X(t) + e^{Ft}^T X(t) e^{Ft}``,
    which only adds semidefinite terms and so neither overflows nor
    cancels for stiff, slowly decaying systems.
    """
    k = F.shape[0]
    doublings = max(0, int(np.ceil(np.log2(max(np.linalg.norm(F, 1) * h, 1.0)))))
    tau = h / 2 ** doublings
    M = np.zeros((2 * k, 2 * k))
    M[:k, :k] = -F.T
    M[:k, k:] = Q
    M[k:, k:] = F
    E = numerics.matrix_exponential(M, tau)
    Phi = E[k:, k:]
    X = Phi.T @ E[:k, k:]
    X = (X + X.T) / 2
    for _ in range(doublings):
        X = X + Phi.T @ X @ Phi
        X = (X + X.T) / 2
        Phi = Phi @ Phi
    return Phi, X


def piecewise_output_l2(sys, u, horizon):
    """Exact ``L2(0, horizon)`` norms of output and input of an LTI system.

    `u` must be piecewise constant; zero initial state.  On each piece
    the integral of ``|y|^2`` is a quadratic form in the state and the
    input level whose matrix is an integral of matrix exponentials, so
    no time sampling is involved.

    Returns
    -------
    (y_l2, u_l2)
    """
    sys = sys.standard()
    if not horizon > 0:
        raise InvalidInputError('horizon must be positive')
    n, m = sys.n, sys.m
    knots = sorted({t for t in _input_pieces(u) if t < horizon} | {0.0}) + [horizon]
    F = np.zeros((n + m, n + m))
    F[:n, :n] = sys.A
    F[:n, n:] = sys.B
    G = np.hstack([sys.C, sys.D])
    Q = G.T @ G
    cache = {}
    x = np.zeros(n)
    y2 = u2 = 0.0
    for t0, t1 in zip(knots[:-1], knots[1:]):
        h = t1 - t0
        if h not in cache:
            cache[h] = _output_gramian_step(F, Q, h)
        Phi, X = cache[h]
        uk = np.broadcast_to(np.atleast_1d(u(0.5 * (t0 + t1))), (m,)).astype(float)
        z = np.concatenate([x, uk])
        y2 += max(float(z @ X @ z), 0.0)
        u2 += h * float(uk @ uk)
        x = (Phi @ z)[:n]
    return float(np.sqrt(y2)), float(np.sqrt(u2))


def exact_switched_solution(sys, schedule, u, t, transitions=None):
    """State and output at a single time ``t`` (zero initial state)."""
    if t < 0:
        raise InvalidInputError('t must be nonnegative')
    states, outputs = exact_switched_trajectory(sys, schedule, u, [t], transitions)
    return states[0], outputs[0]
