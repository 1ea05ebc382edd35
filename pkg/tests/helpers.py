"""Independent reference computations shared by the tests."""
from pathlib import Path

import numpy as np

FIXTURES = Path(__file__).parent / 'fixtures'


def kron_lyapunov(A, RHS):
    """``X`` with ``A X + X A^T + RHS = 0`` from the vectorized Kronecker system."""
    n = A.shape[0]
    K = np.kron(np.eye(n), A) + np.kron(A, np.eye(n))
    return np.linalg.solve(K, -RHS.reshape(-1, order='F')).reshape((n, n), order='F')


def taylor_expm(A, terms=50):
    """Truncated Taylor series of ``e^A`` (only for small ``||A||``)."""
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


def stable_matrix(rng, n, margin=0.5):
    A = rng.standard_normal((n, n))
    return A - (np.max(np.linalg.eigvals(A).real) + margin) * np.eye(n)
