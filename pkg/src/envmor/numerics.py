"""Dense linear-algebra kernels.

Everything here works on plain ``numpy`` arrays and is free of global
state.  Problem sizes are assumed to be at most a few hundred, so all
routines are dense O(n^3).
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from .errors import DegenerateSpectrumError, InstabilityError, InvalidInputError

__all__ = [
    'RankFactorization', 'as_matrix', 'skinny_svd', 'solve_lyapunov',
    'lyapunov_factor', 'matrix_exponential', 'eigenvalues', 'real_schur',
    'spectral_abscissa', 'hinf_norm', 'freqresp',
]

DEFAULT_RANK_TOL = 1e-10


def as_matrix(M, name='matrix', shape=None):
    """Return `M` as a finite 2-D float array, raising on bad input."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise InvalidInputError(f'{name} must be 2-D, got ndim={M.ndim}')
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f'{name} has non-finite entries')
    if shape is not None:
        for want, got in zip(shape, M.shape):
            if want is not None and want != got:
                raise InvalidInputError(f'{name} has shape {M.shape}, expected {shape}')
    return M


@dataclass(frozen=True)
class RankFactorization:
    """``left @ core @ right.T`` factorization of rank ``rank``."""

    left: np.ndarray
    core: np.ndarray
    right: np.ndarray

    @property
    def rank(self):
        return self.core.shape[0]

    def reconstruct(self):
        return self.left @ self.core @ self.right.T


def skinny_svd(M, tol=DEFAULT_RANK_TOL, weight=1.0):
    """Truncated SVD ``M ~ S @ I @ T.T`` with ``S = U`` and ``T = V Sigma``.

    Singular values not exceeding ``tol * sigma_1`` are dropped.  The
    optional scalar `weight` moves scale from ``T`` to ``S`` (``S = w U``,
    ``T = V Sigma / w``), which leaves the product unchanged.
    """
    M = as_matrix(M, 'M')
    if not 0 < tol < 1:
        raise InvalidInputError('tol must lie in (0, 1)')
    if weight <= 0:
        raise InvalidInputError('weight must be positive')
    rows, cols = M.shape
    if M.size == 0 or not np.any(M):
        return RankFactorization(np.zeros((rows, 0)), np.zeros((0, 0)), np.zeros((cols, 0)))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    beta = int(np.sum(s > tol * s[0]))
    S = weight * U[:, :beta]
    T = Vt[:beta].T * s[:beta] / weight
    return RankFactorization(S, np.eye(beta), T)


def real_schur(A):
    """Real Schur form ``A = Q T Q^T`` with quasi-triangular ``T``."""
    A = as_matrix(A, 'A')
    T, Q = spla.schur(A, output='real')
    return Q, T


def eigenvalues(A):
    A = as_matrix(A, 'A')
    if A.size == 0:
        return np.zeros(0, dtype=complex)
    return np.linalg.eigvals(A)


def spectral_abscissa(A):
    ev = eigenvalues(A)
    return -np.inf if ev.size == 0 else float(np.max(ev.real))


def matrix_exponential(A, t=1.0):
    """``exp(A t)`` by scaling and squaring with Pade approximants."""
    A = as_matrix(A, 'A')
    if A.size == 0:
        return A.copy()
    return spla.expm(A * t)


def _schur_blocks(T):
    """Index slices of the 1x1 and 2x2 diagonal blocks of a quasi-triangular T."""
    n = T.shape[0]
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            blocks.append(slice(i, i + 2))
            i += 2
        else:
            blocks.append(slice(i, i + 1))
            i += 1
    return blocks


def _small_sylvester(Tii, Tjj, rhs, scale):
    """Solve ``Tii Y + Y Tjj^T = rhs`` for blocks of size at most 2."""
    p, q = rhs.shape
    if p == 1 and q == 1:
        d = Tii[0, 0] + Tjj[0, 0]
        if abs(d) <= 1e-14 * scale:
            raise DegenerateSpectrumError('eigenvalues of A sum to (nearly) zero')
        return rhs / d
    K = np.kron(np.eye(q), Tii) + np.kron(Tjj, np.eye(p))
    if np.min(np.linalg.svd(K, compute_uv=False)) <= 1e-14 * scale:
        raise DegenerateSpectrumError('eigenvalues of A sum to (nearly) zero')
    y = np.linalg.solve(K, rhs.reshape(-1, order='F'))
    return y.reshape((p, q), order='F')


def solve_lyapunov(A, RHS):
    """Solve ``A X + X A^T + RHS = 0`` by the Bartels-Stewart method.

    ``A`` is reduced to real Schur form; the transformed equation is
    solved block by block, with 2x2 diagonal blocks (complex conjugate
    eigenvalue pairs) handled in real arithmetic.

    Raises
    ------
    DegenerateSpectrumError
        If two eigenvalues of ``A`` sum to zero.
    """
    A = as_matrix(A, 'A')
    n = A.shape[0]
    RHS = as_matrix(RHS, 'RHS', shape=(n, n))
    if n == 0:
        return np.zeros((0, 0))
    Q, T = real_schur(A)
    F = -(Q.T @ RHS @ Q)
    Y = np.zeros((n, n))
    blocks = _schur_blocks(T)
    scale = max(np.linalg.norm(T, 1), 1e-300)
    for jb in reversed(range(len(blocks))):
        cj = blocks[jb]
        R = F[:, cj].copy()
        if cj.stop < n:
            R -= Y[:, cj.stop:] @ T[cj, cj.stop:].T
        for ib in reversed(range(len(blocks))):
            ci = blocks[ib]
            rhs = R[ci]
            if ci.stop < n:
                rhs = rhs - T[ci, ci.stop:] @ Y[ci.stop:, cj]
            Y[ci, cj] = _small_sylvester(T[ci, ci], T[cj, cj], rhs, scale)
    X = Q @ Y @ Q.T
    return (X + X.T) / 2


def lyapunov_factor(A, G):
    """Square factor ``L`` of the solution ``X = L L^T`` of ``A X + X A^T + G G^T = 0``.

    Hammarling's method on the complex Schur form; the factor is computed
    directly, so tiny eigenvalues of ``X`` keep their relative accuracy
    (which matters for Hankel singular values far below machine
    precision relative to the largest one).  The returned ``L`` is real.
    """
    A = as_matrix(A, 'A')
    n = A.shape[0]
    G = as_matrix(G, 'G', shape=(n, None))
    if n == 0:
        return np.zeros((0, 0))
    T, Z = spla.schur(A.astype(complex), output='complex')
    if np.max(T.diagonal().real) >= 0:
        raise InstabilityError('A is not asymptotically stable')
    Gc = Z.conj().T @ G
    if Gc.shape[1] > n:
        Rg = np.linalg.qr(Gc.conj().T, mode='r')
        Gc = Rg.conj().T
    U = np.zeros((n, n), dtype=complex)
    for k in range(n - 1, -1, -1):
        lam = T[k, k]
        gh = Gc[k, :]
        mu = np.linalg.norm(gh) / np.sqrt(-2 * lam.real)
        U[k, k] = mu
        if k == 0:
            break
        if mu == 0:
            Gc = Gc[:k, :]
            continue
        rhs = -(T[:k, k] * mu + Gc[:k, :] @ gh.conj() / mu)
        u = spla.solve_triangular(T[:k, :k] + np.conj(lam) * np.eye(k), rhs)
        U[:k, k] = u
        Gc = Gc[:k, :] - np.outer(u, gh) / mu
    L = Z @ U
    F = np.hstack([L.real, L.imag])
    R = np.linalg.qr(F.T, mode='r')
    return R.T


def freqresp(A, B, C, D, s):
    """``C (s I - A)^{-1} B + D`` for a single complex frequency."""
    n = A.shape[0]
    if n == 0:
        return D.astype(complex)
    X = np.linalg.solve(s * np.eye(n) - A, B)
    return C @ X + D


def _sigma_max(M):
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


def _hamiltonian(A, B, C, D, gamma):
    """Hamiltonian with an eigenvalue ``i w`` iff ``gamma`` is a singular value of ``H(i w)``."""
    m = B.shape[1]
    R = D.T @ D - gamma ** 2 * np.eye(m)
    Ri = np.linalg.inv(R)
    H11 = A - B @ Ri @ D.T @ C
    H12 = -B @ Ri @ B.T
    H21 = -C.T @ (np.eye(C.shape[0]) + D @ Ri @ D.T) @ C
    H22 = -A.T + C.T @ D @ Ri @ B.T
    return np.block([[H11, H12], [H21, H22]])


def hinf_norm(sys, tol=1e-8, max_iter=200):
    """H-infinity norm of a stable LTI system.

    Level-set iteration in the style of Boyd and Balakrishnan: for a
    candidate level ``gamma`` the Hamiltonian matrix has eigenvalues on
    the imaginary axis iff ``gamma`` is below the norm.  Lower bounds
    are always actual values ``sigma_max(H(i w))``, upper bounds are
    levels certified by an eigenvalue-free imaginary axis.

    Parameters
    ----------
    sys
        Object with attributes ``A, B, C, D`` (standard state space).
    tol
        Relative width of the final bracket.
    """
    A, B, C, D = (np.asarray(getattr(sys, k), dtype=float) for k in 'ABCD')
    n = A.shape[0]
    d_norm = _sigma_max(D)
    if n == 0 or B.size == 0 or C.size == 0:
        return d_norm
    ev = np.linalg.eigvals(A)
    if np.max(ev.real) >= 0:
        raise InstabilityError('H-infinity norm undefined for an unstable system')

    def sv(w):
        return _sigma_max(freqresp(A, B, C, D, 1j * w))

    cands = np.unique(np.concatenate([[0.0], np.abs(ev), np.abs(ev.imag)]))
    lo = max(d_norm, max(sv(w) for w in cands))
    if lo == 0.0:
        return 0.0
    hi = d_norm + 2 * np.linalg.norm(C, 2) * np.linalg.norm(B, 2) / abs(np.max(ev.real))
    hi = max(hi, lo * (1 + 2 * tol))

    def crossings(gamma):
        # near a peak the two crossing eigenvalues almost coalesce and their
        # computed real parts grow to about sqrt(eps); candidates are only
        # used to raise the lower bound through actual values of sigma_max,
        # so a loose axis test cannot produce a wrong lower bound
        lam = np.linalg.eigvals(_hamiltonian(A, B, C, D, gamma))
        scale = max(1.0, np.max(np.abs(lam)))
        on_axis = np.abs(lam.real) <= 1e-6 * scale
        return np.unique(np.abs(lam[on_axis].imag))

    # make sure hi is a certified upper bound
    for _ in range(60):
        w = crossings(hi)
        if w.size == 0:
            break
        lo = max(lo, max(sv(x) for x in w))
        hi *= 2
    for _ in range(max_iter):
        if hi - lo <= tol * lo:
            break
        gamma = np.sqrt(lo * hi) if hi < 10 * lo else (lo + hi) / 2
        w = crossings(gamma)
        new_lo = lo
        if w.size:
            pts = np.concatenate([w, (w[1:] + w[:-1]) / 2])
            new_lo = max(lo, max(sv(x) for x in pts))
        if new_lo > gamma:
            lo = new_lo
        else:
            hi = gamma
    return (lo + hi) / 2
