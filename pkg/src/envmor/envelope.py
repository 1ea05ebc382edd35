"""Envelope system of a switched system and the feedback that recovers each mode.

Every mode is written as a reference system plus a difference,
``A_i = A_ref - S_i M_i T_i^T``, ``B_i = B_ref - dB_i`` and so on.  The
envelope is the LTI system driven by all the difference channels at
once; closing the loop ``u_E = K(sigma) y_E + K0(sigma) u`` and reading
``y = C0(sigma) y_E + D0(sigma) u`` reproduces the switched system exactly.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from . import numerics
from .errors import InvalidInputError
from .model import StateSpaceModel, SwitchedModel, project

__all__ = [
    'DeltaEntry', 'DeltaSet', 'EnvelopeModel', 'FeedbackMaps', 'compute_deltas',
    'build_envelope', 'compress_io', 'transform_generalized', 'generalized_deltas',
    'realize_modes', 'project_envelope', 'envelope',
]


@dataclass(frozen=True, eq=False)
class DeltaEntry:
    """Difference of mode ``label`` to the reference system."""

    label: int
    dA: np.ndarray
    dB: np.ndarray
    dC: np.ndarray
    dD: np.ndarray
    factor: numerics.RankFactorization

    @property
    def rank(self):
        return self.factor.rank


@dataclass(frozen=True, eq=False)
class DeltaSet:
    """Reference system and the differences of all other modes to it.

    ``reference`` is the 1-based label of the reference mode, or ``None``
    when a user-supplied base system is used (then every mode has an
    entry).
    """

    base: StateSpaceModel
    entries: tuple
    n_modes: int
    reference: object = 1

    @property
    def ranks(self):
        return tuple(e.rank for e in self.entries)

    @property
    def total_rank(self):
        return int(sum(self.ranks))

    def entry(self, label):
        for e in self.entries:
            if e.label == label:
                return e
        return None


def transform_generalized(sys):
    """Standard form ``A_i <- E_i^-1 A_i``, ``B_i <- E_i^-1 B_i`` of every mode."""
    for i, mode in enumerate(sys.modes, 1):
        if mode.E is not None and mode.cond_E > 1e14:
            raise InvalidInputError(f'E of mode {i} is numerically singular')
    return sys.standard()


def generalized_deltas(sys, i, reference=1):
    """Standard-form differences of mode `i` computed from generalized-form data.

    Uses ``dA = E_r^-1 dA_hat - E_r^-1 dE E_i^-1 A_i`` (``dB`` likewise)
    with ``dX_hat = X_r - X_i``.  The result equals the difference of
    the standard forms but exhibits its rank structure: it is at most
    ``rank(dA_hat) + rank(dE)``.
    """
    ref, mode = sys.mode(reference), sys.mode(i)
    n = sys.n
    Er = np.eye(n) if ref.E is None else ref.E
    Ei = np.eye(n) if mode.E is None else mode.E
    dE = Er - Ei
    dA = np.linalg.solve(Er, (ref.A - mode.A) - dE @ np.linalg.solve(Ei, mode.A))
    dB = np.linalg.solve(Er, (ref.B - mode.B) - dE @ np.linalg.solve(Ei, mode.B))
    return dA, dB


def _weight(weights, label):
    if weights is None:
        return 1.0
    if isinstance(weights, dict):
        return float(weights.get(label, 1.0))
    return float(weights[label - 1])


def compute_deltas(sys, tol=numerics.DEFAULT_RANK_TOL, reference=1, weights=None):
    """Differences of all modes to a reference and low-rank factors of ``dA``.

    Parameters
    ----------
    sys : SwitchedModel
        Generalized-form modes are brought to standard form first.
    tol : float
        Relative singular-value cutoff of the rank decisions.
    reference : int or StateSpaceModel
        Label of the reference mode (default 1), or a hypothesized base
        system, which is useful when no mode is stable.
    weights : dict or sequence, optional
        Positive scalar per mode label moving scale between ``S_i`` and
        ``T_i`` (``S = w U``, ``T = V Sigma / w``).
    """
    sys = transform_generalized(sys)
    if isinstance(reference, StateSpaceModel):
        base = reference.standard()
        if (base.n, base.m, base.p) != (sys.n, sys.m, sys.p):
            raise InvalidInputError('base system dimensions differ from the modes')
        labels = range(1, sys.n_modes + 1)
        ref_label = None
    else:
        ref_label = int(reference)
        base = sys.mode(ref_label)
        labels = [i for i in range(1, sys.n_modes + 1) if i != ref_label]
    entries = []
    for i in labels:
        mode = sys.mode(i)
        dA = base.A - mode.A
        entries.append(DeltaEntry(
            i, dA, base.B - mode.B, base.C - mode.C, base.D - mode.D,
            numerics.skinny_svd(dA, tol, weight=_weight(weights, i))))
    return DeltaSet(base, tuple(entries), sys.n_modes, ref_label)


@dataclass(frozen=True, eq=False)
class FeedbackMaps:
    """Per-mode loop closure ``u_E = K y_E + K0 u`` and output ``y = C0 y_E + D0 u``.

    Lists are indexed by ``label - 1``.
    """

    K: tuple
    K0: tuple
    C0: tuple
    D0: tuple

    def at(self, label):
        """``(K, K0, C0, D0)`` for the 1-based mode label."""
        if not 1 <= label <= len(self.K):
            raise InvalidInputError(f'mode {label} out of range 1..{len(self.K)}')
        i = label - 1
        return self.K[i], self.K0[i], self.C0[i], self.D0[i]

    @property
    def n_modes(self):
        return len(self.K)


@dataclass(frozen=True, eq=False)
class EnvelopeModel:
    """Envelope LTI system with its block bookkeeping.

    Input blocks are ``[B_ref | dB_j ... | S_j ...]`` and output blocks
    ``[C_ref; dC_j ...; T_j^T ...]``, in the order of ``labels`` (the
    mode labels with a difference entry).  After :func:`compress_io`
    the system acts on compressed coordinates ``B_E = B_hat R_B``,
    ``C_E = R_C C_hat``; ``R_B``/``R_C`` are ``None`` otherwise.
    """

    sys: StateSpaceModel
    core_matrices: tuple
    ranks: tuple
    labels: tuple
    input_offsets: tuple
    output_offsets: tuple
    n_modes: int
    m: int
    p: int
    R_B: np.ndarray = None
    R_C: np.ndarray = None
    D_full: np.ndarray = None

    @property
    def n(self):
        return self.sys.n

    @property
    def m_E(self):
        return self.sys.m

    @property
    def p_E(self):
        return self.sys.p

    @property
    def total_rank(self):
        return int(sum(self.ranks))

    @property
    def compressed(self):
        return self.R_B is not None

    @property
    def uncompressed_dims(self):
        """``(m_E, p_E)`` of the uncompressed envelope."""
        return self.input_offsets[-1], self.output_offsets[-1]

    def max_core_norm(self):
        """``max ||M_i||_2`` over modes with a nonzero difference (0 if none)."""
        norms = [np.linalg.norm(M, 2) for M in self.core_matrices if M.size]
        return float(max(norms, default=0.0))

    def __repr__(self):
        return (f'EnvelopeModel(n={self.n}, m_E={self.m_E}, p_E={self.p_E}, '
                f'ranks={self.ranks}, compressed={self.compressed})')


def build_envelope(sys, deltas=None, tol=numerics.DEFAULT_RANK_TOL):
    """Envelope system and the feedback maps of all modes.

    The feedthrough of a difference channel is ``-dD_i`` so that
    ``C0 y_E`` yields ``D_i u``; all other blocks are as described in
    :class:`EnvelopeModel`.
    """
    sys = transform_generalized(sys)
    if deltas is None:
        deltas = compute_deltas(sys, tol)
    base = deltas.base
    if deltas.n_modes != sys.n_modes or base.n != sys.n or base.m != sys.m or base.p != sys.p:
        raise InvalidInputError('delta set does not belong to this switched system')
    n, m, p = sys.n, sys.m, sys.p
    ents = deltas.entries
    k = len(ents)
    ranks = tuple(e.rank for e in ents)
    L = int(sum(ranks))
    B_E = np.hstack([base.B] + [e.dB for e in ents] + [e.factor.left for e in ents])
    C_E = np.vstack([base.C] + [e.dC for e in ents] + [e.factor.right.T for e in ents])
    D_E = spla.block_diag(base.D, *[-e.dD for e in ents], np.zeros((L, L)))
    in_off = np.cumsum([0, m] + [m] * k + list(ranks)).tolist()
    out_off = np.cumsum([0, p] + [p] * k + list(ranks)).tolist()
    env = EnvelopeModel(
        StateSpaceModel(base.A, B_E, C_E, D_E),
        tuple(e.factor.core for e in ents), ranks, tuple(e.label for e in ents),
        tuple(in_off), tuple(out_off), sys.n_modes, m, p)
    return env, _feedback_maps(env)


def envelope(sys, tol=numerics.DEFAULT_RANK_TOL, reference=1, weights=None):
    """Shorthand for ``build_envelope(sys, compute_deltas(sys, tol, reference, weights))``."""
    return build_envelope(sys, compute_deltas(sys, tol, reference, weights))


def _feedback_maps(env):
    m, p, k = env.m, env.p, len(env.labels)
    m_E, p_E = env.uncompressed_dims
    Ks, K0s, C0s, D0s = [], [], [], []
    for sigma in range(1, env.n_modes + 1):
        K = np.zeros((m_E, p_E))
        K0 = np.zeros((m_E, m))
        C0 = np.zeros((p, p_E))
        K0[:m] = np.eye(m)
        C0[:, :p] = np.eye(p)
        if sigma in env.labels:
            j = env.labels.index(sigma)
            K0[m * (j + 1):m * (j + 2)] = -np.eye(m)
            C0[:, p * (j + 1):p * (j + 2)] = -np.eye(p)
            ri = slice(env.input_offsets[k + 1 + j], env.input_offsets[k + 2 + j])
            ro = slice(env.output_offsets[k + 1 + j], env.output_offsets[k + 2 + j])
            K[ri, ro] = -env.core_matrices[j]
        Ks.append(K)
        K0s.append(K0)
        C0s.append(C0)
        D0s.append(np.zeros((p, m)))
    return FeedbackMaps(tuple(Ks), tuple(K0s), tuple(C0s), tuple(D0s))


def _range_factor(M, tol):
    """``M = F G`` with ``F`` of full column rank (rank decided by `tol`)."""
    if M.size == 0 or not np.any(M):
        return np.zeros((M.shape[0], 0)), np.zeros((0, M.shape[1]))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    k = int(np.sum(s > tol * s[0]))
    return U[:, :k] * s[:k], Vt[:k]


def compress_io(env, maps, tol=numerics.DEFAULT_RANK_TOL):
    """Remove rank deficiency of ``B_E`` and ``C_E``.

    ``B_E = B_hat R_B`` and ``C_E = R_C C_hat`` with full-rank ``B_hat``,
    ``C_hat``.  The compressed envelope has no feedthrough; the feedback
    maps are composed with ``R_B``, ``R_C`` and the old feedthrough moves
    into ``D0``, so the closed loop is unchanged.

    Returns
    -------
    (EnvelopeModel, FeedbackMaps)
    """
    if env.compressed:
        raise InvalidInputError('envelope is already compressed')
    S = env.sys
    B_hat, R_B = _range_factor(S.B, tol)
    R_C, C_hat = _range_factor(S.C.T, tol)
    R_C, C_hat = C_hat.T, R_C.T
    new = EnvelopeModel(
        StateSpaceModel(S.A, B_hat, C_hat), env.core_matrices, env.ranks, env.labels,
        env.input_offsets, env.output_offsets, env.n_modes, env.m, env.p,
        R_B=R_B, R_C=R_C, D_full=S.D)
    Ks, K0s, C0s, D0s = [], [], [], []
    for sigma in range(1, maps.n_modes + 1):
        K, K0, C0, D0 = maps.at(sigma)
        Ks.append(R_B @ K @ R_C)
        K0s.append(R_B @ K0)
        C0s.append(C0 @ R_C)
        D0s.append(D0 + C0 @ S.D @ K0)
    return new, FeedbackMaps(tuple(Ks), tuple(K0s), tuple(C0s), tuple(D0s))


def realize_modes(env, maps):
    """Switched system obtained by closing the envelope loop for every mode.

    Applied to a reduced envelope this yields the reduced switched
    system.  Relies on ``K D_E = 0``, which holds by construction.
    """
    S = env.sys
    modes = []
    for sigma in range(1, maps.n_modes + 1):
        K, K0, C0, D0 = maps.at(sigma)
        modes.append(StateSpaceModel(
            S.A + S.B @ K @ S.C, S.B @ K0, C0 @ S.C, C0 @ S.D @ K0 + D0))
    return SwitchedModel(modes)


def project_envelope(env, P):
    """Envelope with state space projected by the pair `P`; bookkeeping is kept."""
    return EnvelopeModel(
        project(env.sys, P), env.core_matrices, env.ranks, env.labels, env.input_offsets,
        env.output_offsets, env.n_modes, env.m, env.p, env.R_B, env.R_C, env.D_full)
