"""Projection-based reduction of the envelope and of switched systems.

Both backends accept an :class:`EnvelopeModel` (the usual case) or a
plain :class:`StateSpaceModel` and return the reduced object of the
same kind together with a :class:`ReductionReport`.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import numerics
from .envelope import EnvelopeModel, project_envelope
from .errors import InstabilityError, InvalidInputError, ProjectionDegenerateError
from .model import (ProjectionPair, StateSpaceModel, SwitchedModel, gramian_factors,
                    hankel_singular_values, is_stable, project, state_transition)

__all__ = [
    'ReductionReport', 'balanced_truncation', 'irka', 'reduce_switched',
    'naive_per_mode_reduction', 'stability_preserving_pair', 'ph_preserving_pair',
    'ph_reduce', 'distinct_tail_sum', 'orthonormal_basis',
]

log = logging.getLogger(__name__)

#: HSVs closer than this (relative) count as one distinct value
DISTINCT_GAP = 1e-8


@dataclass(frozen=True, eq=False)
class ReductionReport:
    method: str
    r: int
    hsv: np.ndarray
    bt_bound: float
    projection: ProjectionPair
    condition: float
    converged: bool = True
    iterations: int = 0
    shifts: np.ndarray = None

    def as_dict(self):
        return {
            'method': self.method,
            'r': self.r,
            'hsv': [float(v) for v in self.hsv],
            'bt_bound': None if self.bt_bound is None else float(self.bt_bound),
            'condition': float(self.condition),
            'converged': bool(self.converged),
            'iterations': int(self.iterations),
        }


def _split(model):
    if isinstance(model, EnvelopeModel):
        return model.sys, lambda P: project_envelope(model, P)
    if isinstance(model, StateSpaceModel):
        return model.standard(), lambda P: project(model, P)
    raise InvalidInputError('expected an EnvelopeModel or a StateSpaceModel')


def _check_order(r, n):
    if not isinstance(r, (int, np.integer)) or not 1 <= r <= n:
        raise InvalidInputError(f'reduced order must satisfy 1 <= r <= {n}, got {r}')


def _groups(hsv, gap=DISTINCT_GAP):
    """Start indices of runs of (relatively) equal values in a descending list."""
    starts = [0]
    for k in range(1, len(hsv)):
        if hsv[k - 1] - hsv[k] > gap * max(hsv[k - 1], np.finfo(float).tiny):
            starts.append(k)
    return starts


def distinct_tail_sum(hsv, r, gap=DISTINCT_GAP):
    """Sum of the distinct values among ``hsv[r:]`` (one per multiplicity group)."""
    hsv = np.asarray(hsv, dtype=float)
    if r >= len(hsv):
        return 0.0
    return float(sum(hsv[k] for k in _groups(hsv, gap) if k >= r)
                 + (hsv[r] if r not in _groups(hsv, gap) else 0.0))


def balanced_truncation(model, r):
    """Square-root balanced truncation to order `r`.

    The cut is moved up to the end of a multiplicity group if `r` would
    split one.  ``report.bt_bound`` is twice the sum of the distinct
    neglected Hankel singular values.
    """
    sys, reduce = _split(model)
    n = sys.n
    _check_order(r, n)
    if not is_stable(sys):
        raise InstabilityError(
            'balanced truncation needs a stable envelope; consider a stable '
            'hypothesized base system as reference')
    Lp, Lq = gramian_factors(sys)
    U, s, Vt = np.linalg.svd(Lq.T @ Lp)
    starts = _groups(s)
    if r < n and r not in starts:
        r_new = min([k for k in starts if k > r], default=n)
        log.warning('order %d splits a group of equal Hankel singular values, using %d', r, r_new)
        r = r_new
    if r == n:
        P = ProjectionPair.identity(n)
    else:
        if s[r - 1] <= n * np.finfo(float).eps * s[0]:
            raise ProjectionDegenerateError(
                f'order {r} exceeds the numerical minimal order of the system')
        scale = 1 / np.sqrt(s[:r])
        P = ProjectionPair(Lp @ Vt[:r].T * scale, Lq @ U[:, :r] * scale)
    report = ReductionReport('bt', r, s, 2 * distinct_tail_sum(s, r), P, P.condition)
    return reduce(P), report


def orthonormal_basis(M):
    """Orthonormal basis of the column span of `M` (thin QR)."""
    Q, _ = np.linalg.qr(numerics.as_matrix(M, 'M'))
    return Q


def _real_basis(cols, shifts):
    """Real matrix spanning the complex columns (shifts closed under conjugation)."""
    out = []
    seen = set()
    for k, s in enumerate(shifts):
        if abs(s.imag) <= 1e-12 * max(abs(s), 1.0):
            out.append(cols[:, k].real)
        elif k not in seen:
            out.extend([cols[:, k].real, cols[:, k].imag])
            partner = int(np.argmin(np.abs(shifts - np.conj(s)) + (np.arange(len(shifts)) == k)))
            seen.add(partner)
    return orthonormal_basis(np.column_stack(out))


def _initial_shifts(A, r):
    lam = numerics.eigenvalues(A)
    re = np.abs(lam.real)
    lo, hi = max(re.min(), 1e-12), re.max()
    return np.logspace(np.log10(lo), np.log10(hi), r).astype(complex)


def _leading_directions(H):
    if not np.any(H.imag):
        H = H.real
    U, _, Vh = np.linalg.svd(H)
    return Vh[0].conj(), U[:, 0]


def _interpolation_pair(A, B, C, shifts, bdir, cdir):
    n = A.shape[0]
    I = np.eye(n)
    V = np.column_stack([np.linalg.solve(s * I - A, B @ bdir[:, k]) for k, s in enumerate(shifts)])
    W = np.column_stack([np.linalg.solve((s * I - A).T, C.T @ cdir[:, k]) for k, s in enumerate(shifts)])
    return _real_basis(V, shifts), _real_basis(W, shifts)


def _shift_change(old, new):
    a = old[np.lexsort((old.imag, old.real))]
    b = new[np.lexsort((new.imag, new.real))]
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))


def irka(model, r, max_iters=100, shift_tol=1e-6, shifts=None):
    """Tangential iterative rational Krylov algorithm for MIMO systems.

    Initial shifts are logarithmically spaced between the smallest and
    largest ``|Re lambda(A)|``; initial tangential directions are the
    dominant singular vectors of the transfer function at the shifts.
    Each sweep replaces shifts and directions by the mirrored poles and
    residue directions of the current reduced model.  Stops when the
    largest relative shift change falls below `shift_tol`; otherwise the
    last iterate with a stable reduced model is returned and flagged as
    not converged.
    """
    sys, reduce = _split(model)
    A, B, C = sys.A, sys.B, sys.C
    n = sys.n
    _check_order(r, n)
    if not is_stable(sys):
        raise InstabilityError('IRKA needs a stable system')
    s = _initial_shifts(A, r) if shifts is None else np.asarray(shifts, dtype=complex)
    if len(s) != r:
        raise InvalidInputError(f'need {r} shifts, got {len(s)}')
    bdir = np.empty((sys.m, r), dtype=complex)
    cdir = np.empty((sys.p, r), dtype=complex)
    for k, sk in enumerate(s):
        bdir[:, k], cdir[:, k] = _leading_directions(numerics.freqresp(A, B, C, sys.D, sk))
    best = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        Vr, Wr = _interpolation_pair(A, B, C, s, bdir, cdir)
        if Vr.shape[1] != r or Wr.shape[1] != r:
            raise ProjectionDegenerateError('interpolation basis lost rank')
        P = ProjectionPair(Vr, Wr)
        red = project(sys, P)
        stable = is_stable(red)
        if stable:
            best = (P, s)
        lam, X = np.linalg.eig(red.A)
        bdir = np.linalg.solve(X, red.B).T
        cdir = red.C @ X
        # mirrored reduced poles; unstable ones are reflected first
        new = np.abs(lam.real) - 1j * lam.imag
        change = _shift_change(s, new)
        s = new
        if stable and change < shift_tol:
            converged = True
            break
    if not converged:
        log.warning('IRKA did not converge in %d iterations', max_iters)
        if best is None:
            raise InstabilityError('IRKA produced no stable reduced model')
    P, s = best
    try:
        hsv = hankel_singular_values(sys)
    except InstabilityError:
        hsv = np.zeros(0)
    report = ReductionReport('irka', r, hsv, None, P, P.condition, converged, it, s)
    return reduce(P), report


def reduce_switched(sys, P):
    """Project every mode with the shared pair `P` (no state transitions needed)."""
    return SwitchedModel([project(mode, P) for mode in sys.modes])


def naive_per_mode_reduction(sys, pairs):
    """Reduce each mode with its own pair.

    Returns
    -------
    reduced : SwitchedModel
        Modes may have different orders.
    transitions : dict
        ``(i, j) -> (W_j^T V_j)^-1 W_j^T V_i`` applied to the reduced
        state when switching from mode ``i`` to mode ``j``.
    """
    if len(pairs) != sys.n_modes:
        raise InvalidInputError('need one projection pair per mode')
    modes = [project(m, P) for m, P in zip(sys.modes, pairs)]
    trans = {}
    for i, Pi in enumerate(pairs, 1):
        for j, Pj in enumerate(pairs, 1):
            if i != j:
                trans[(i, j)] = state_transition(Pi, Pj)
    return SwitchedModel(modes, shared_state=False), trans


def _check_spd(Q, name='Q'):
    Q = numerics.as_matrix(Q, name)
    if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise InvalidInputError(f'{name} must be symmetric')
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise InvalidInputError(f'{name} must be positive definite') from None
    return Q


def stability_preserving_pair(V, Q):
    """Pair with ``W = Q V (V^T Q V)^-1``, so ``W^T V = I``.

    If all modes satisfy ``A_i^T Q + Q A_i < 0``, the reduced modes
    satisfy the same inequality with ``V^T Q V``.
    """
    V = numerics.as_matrix(V, 'V')
    Q = _check_spd(Q)
    if Q.shape[0] != V.shape[0]:
        raise InvalidInputError('V and Q have incompatible sizes')
    if np.linalg.matrix_rank(V) < V.shape[1]:
        raise InvalidInputError('V must have full column rank')
    QV = Q @ V
    return ProjectionPair(V, np.linalg.solve(V.T @ QV, QV.T).T)


def ph_preserving_pair(V, Q):
    """Per-mode pair keeping the form ``(J - R) Q`` of a mode (same formula, mode-specific Q)."""
    return stability_preserving_pair(V, Q)


def ph_reduce(J, R, Q, B, V):
    """Reduced port-Hamiltonian data ``(J~, R~, Q~, B~)`` for ``x' = (J - R) Q x + B u``.

    With ``W = Q V (V^T Q V)^-1``: ``J~ = W^T J W``, ``R~ = W^T R W``,
    ``Q~ = V^T Q V`` and ``B~ = W^T B``, so the reduced output matrix is
    ``B~^T Q~``.
    """
    P = ph_preserving_pair(V, Q)
    W = P.W
    return W.T @ J @ W, W.T @ R @ W, V.T @ Q @ V, W.T @ B
