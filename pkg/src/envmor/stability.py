"""Common quadratic Lyapunov functions and dissipative-Hamiltonian splitting.

A switched system is quadratically stable with ``Q`` if ``Q > 0`` and
``A_i^T Q + Q A_i < 0`` for every mode; equivalently every mode can be
written as ``A_i = (J_i - R_i) Q`` with ``J_i`` skew and ``R_i > 0``.
"""
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InvalidInputError

__all__ = ['StabilityCertificate', 'PHDecomposition', 'verify_quadratic_stability', 'dh_split',
           'ph_decomposition', 'search_common_q', 'lmi_margin']


@dataclass(frozen=True)
class StabilityCertificate:
    """``passed`` iff ``Q > 0`` and every ``lambda_max(A_i^T Q + Q A_i) < -margin``."""

    passed: bool
    q_min_eig: float
    mode_max_eigs: tuple

    def __bool__(self):
        return self.passed


@dataclass(frozen=True, eq=False)
class PHDecomposition:
    J: tuple
    R: tuple
    Q: np.ndarray

    def reconstruct(self, i):
        """``(J_i - R_i) Q`` for the 1-based mode label."""
        return (self.J[i - 1] - self.R[i - 1]) @ self.Q


def _sym(Q, name='Q'):
    Q = numerics.as_matrix(Q, name)
    if Q.shape[0] != Q.shape[1]:
        raise InvalidInputError(f'{name} must be square')
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise InvalidInputError(f'{name} must be symmetric')
    return (Q + Q.T) / 2


def lmi_margin(A, Q):
    """``lambda_max(A^T Q + Q A)``."""
    A = numerics.as_matrix(A, 'A')
    return float(np.linalg.eigvalsh(A.T @ Q + Q @ A)[-1])


def _modes(sys):
    return [m.standard().A for m in sys.modes]


def verify_quadratic_stability(sys, Q, margin=0.0):
    """Check the Lyapunov inequalities of all modes for a given ``Q``.

    A failure is a result, not an error.  `margin` tightens the strict
    inequality to ``lambda_max < -margin``.
    """
    Q = _sym(Q)
    As = _modes(sys)
    if Q.shape[0] != As[0].shape[0]:
        raise InvalidInputError('Q does not match the state dimension')
    qmin = float(np.linalg.eigvalsh(Q)[0])
    eigs = tuple(lmi_margin(A, Q) for A in As)
    passed = qmin > 0 and all(e < -margin for e in eigs)
    return StabilityCertificate(passed, qmin, eigs)


def _require_pd(Q):
    Q = _sym(Q)
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise InvalidInputError('Q must be positive definite') from None
    return Q


def dh_split(A, Q):
    """``(J, R)`` with ``J = (A Q^-1 - Q^-1 A^T)/2``, ``R = -(A Q^-1 + Q^-1 A^T)/2``.

    Always ``A = (J - R) Q``; ``R`` is positive definite exactly when
    ``A^T Q + Q A`` is negative definite.
    """
    A = numerics.as_matrix(A, 'A')
    Q = _require_pd(Q)
    if A.shape != Q.shape:
        raise InvalidInputError('A and Q must have the same shape')
    AQi = np.linalg.solve(Q, A.T).T
    QiAt = AQi.T
    J = (AQi - QiAt) / 2
    R = -(AQi + QiAt) / 2
    return J, R


def ph_decomposition(sys, Q):
    """Split every mode with the shared ``Q``."""
    Q = _require_pd(Q)
    parts = [dh_split(A, Q) for A in _modes(sys)]
    return PHDecomposition(tuple(p[0] for p in parts), tuple(p[1] for p in parts), Q)


def _project_lmi(Q, As, target):
    """One sweep pushing ``Q`` into each cone ``{A^T Q + Q A <= -target I}``."""
    for A in As:
        L = A.T @ Q + Q @ A
        w, U = np.linalg.eigh(L)
        excess = np.clip(w + target, 0, None)
        if not np.any(excess):
            continue
        G = U @ np.diag(excess) @ U.T
        # the correction dQ solving A^T dQ + dQ A = -G removes the excess exactly
        dQ = numerics.solve_lyapunov(A.T, G)
        Q = Q + dQ
    w, U = np.linalg.eigh((Q + Q.T) / 2)
    return U @ np.diag(np.maximum(w, target)) @ U.T


def search_common_q(sys, eps=None, sweeps=50):
    """Heuristic search for a common quadratic Lyapunov matrix.

    Starts from the Lyapunov solution of the averaged mode matrix and, if
    that fails, runs alternating correction sweeps over the modes.
    Returns ``Q`` only if :func:`verify_quadratic_stability` passes with
    margin `eps` (default ``1e-8 * max ||A_i||``); ``None`` proves nothing.
    """
    As = _modes(sys)
    n = As[0].shape[0]
    if any(numerics.spectral_abscissa(A) >= 0 for A in As):
        raise InvalidInputError('all modes must be asymptotically stable')
    if eps is None:
        eps = 1e-8 * max(np.linalg.norm(A, 2) for A in As)
    Abar = sum(As) / len(As)
    try:
        Q = numerics.solve_lyapunov(Abar.T, np.eye(n))
    except Exception:
        Q = np.eye(n)
    if numerics.spectral_abscissa(Abar) >= 0:
        Q = np.eye(n)
    Q = Q / np.linalg.norm(Q, 2)
    for _ in range(sweeps + 1):
        if verify_quadratic_stability(sys, Q, eps):
            return Q
        Q = _project_lmi(Q, As, eps * 10)
        Q = Q / np.linalg.norm(Q, 2)
    return None
