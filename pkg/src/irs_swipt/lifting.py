"""SDP lifting of the joint beamforming problem and metric evaluation.

The phase vector is lifted through u = [conj(theta); t] with |t| = 1 and
U = u u^H, so that the composite-channel quadratic form becomes linear in U:

    |h_k^H w|^2 = Tr(U L_k W L_k^H) = Tr(W Z_k),   Z_k = L_k^H U L_k,

where L_k stacks diag(h_rk^H) H over the first N rows and h_bk^* as the last
row. EHR channels lift identically through Ltilde_l and X_l. Products of two
matrix variables are handled downstream via the polarization identity

    Tr(A B) = 1/2 ||A+B||_F^2 - 1/2 ||A||_F^2 - 1/2 ||B||_F^2.

Beams lift as W_k = w_k w_k^H and V_l = v_l v_l^H (PSD, rank constraint
relaxed). This module owns both the vector-domain and lifted-domain metric
evaluators; the two must agree on rank-one inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelSet, SystemConfig, equivalent_channel

__all__ = [
    "LiftedChannels",
    "LiftedSolution",
    "Metrics",
    "build_lifted",
    "project_Z",
    "trace_via_frobenius",
    "u_from_theta",
    "theta_from_u",
    "dominant_eigvec",
    "hermitian_part",
    "composite_channels",
    "metrics_from_channels",
    "evaluate_metrics",
    "evaluate_metrics_lifted",
]

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class LiftedChannels:
    """Per-receiver lifted channel maps, (N+1) x M each."""

    L: tuple[np.ndarray, ...]       # one per IDR
    Ltilde: tuple[np.ndarray, ...]  # one per EHR

    @property
    def n_plus_1(self) -> int:
        return self.L[0].shape[0]

    @property
    def M(self) -> int:
        return self.L[0].shape[1]


@dataclass
class LiftedSolution:
    """PSD matrix variables of one iterate, plus its scalar bookkeeping."""

    W: list[np.ndarray]
    V: list[np.ndarray]
    U: np.ndarray
    objective: Optional[float] = None
    penalty: Optional[float] = None


@dataclass(frozen=True)
class Metrics:
    sinr: tuple[float, ...]
    rate: tuple[float, ...]
    harvested: tuple[float, ...]
    sum_rate: float
    total_harvested: float


def _stack_lift(direct: np.ndarray, reflected: np.ndarray, H: np.ndarray) -> np.ndarray:
    # rows 1..N: diag(conj(reflected)) H; last row: conj(direct)
    top = reflected.conj()[:, None] * H
    return np.vstack([top, direct.conj()[None, :]])


def build_lifted(ch: ChannelSet) -> LiftedChannels:
    """Build L_k and Ltilde_l from a channel realization."""
    L = tuple(_stack_lift(hb, hr, ch.H) for hb, hr in zip(ch.h_b, ch.h_r))
    Lt = tuple(_stack_lift(gb, gr, ch.H) for gb, gr in zip(ch.g_b, ch.g_r))
    return LiftedChannels(L=L, Ltilde=Lt)


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def _require_hermitian(A: np.ndarray, name: str, tol: float = 1e-8):
    dev = np.linalg.norm(A - A.conj().T)
    if dev > tol * max(np.linalg.norm(A), 1e-300):
        raise ValueError(f"{name} is not Hermitian (asymmetry {dev:.3e})")


def project_Z(L_k: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Z = L^H U L, symmetrized to suppress numerical asymmetry."""
    if L_k.shape[0] != U.shape[0]:
        raise ValueError(f"dimension mismatch: L is {L_k.shape}, U is {U.shape}")
    _require_hermitian(U, "U")
    return hermitian_part(L_k.conj().T @ U @ L_k)


def trace_via_frobenius(A: np.ndarray, B: np.ndarray) -> float:
    """Tr(AB) for Hermitian A, B via the polarization identity.

    Operands are Frobenius-normalized before the identity is applied; at
    badly mismatched norms the raw form loses the cross term to cancellation
    against the larger square.
    """
    if A.shape != B.shape:
        raise ValueError("shape mismatch")
    _require_hermitian(A, "A")
    _require_hermitian(B, "B")
    a = float(np.linalg.norm(A))
    b = float(np.linalg.norm(B))
    if a == 0.0 or b == 0.0:
        return 0.0
    fs = np.linalg.norm(A / a + B / b) ** 2
    return a * b * (0.5 * fs - 1.0)


def u_from_theta(theta: np.ndarray, t: complex = 1.0 + 0.0j) -> np.ndarray:
    """Lifted phase vector u = [conj(theta); t] for physical coefficients theta."""
    theta = np.asarray(theta, dtype=complex)
    return np.concatenate([theta.conj(), [complex(t)]])


def theta_from_u(u: np.ndarray) -> np.ndarray:
    """Invert u_from_theta: physical coefficients, renormalized to unit modulus.

    The global phase is gauged away by dividing by the dummy entry t, so the
    result is invariant under u -> e^{j phi} u.
    """
    u = np.asarray(u, dtype=complex)
    t = u[-1]
    if abs(t) < 1e-12:
        raise ValueError("dummy entry of u is numerically zero; gauge undefined")
    ratios = u[:-1] / t
    mags = np.abs(ratios)
    if np.any(mags < 1e-12):
        raise ValueError("zero-magnitude phase entry; cannot renormalize")
    return (ratios / mags).conj()


def dominant_eigvec(A: np.ndarray) -> tuple[float, np.ndarray]:
    """(largest eigenvalue, its unit eigenvector) with a deterministic sign gauge.

    The eigenvector is rotated so its first component of non-negligible
    magnitude is real positive; ties across eigenvalues resolve by eigh's
    deterministic ordering.
    """
    vals, vecs = np.linalg.eigh(hermitian_part(A))
    lam = float(vals[-1])
    q = vecs[:, -1]
    nrm = np.linalg.norm(q)
    idx = np.flatnonzero(np.abs(q) > 1e-10 * max(nrm, 1e-300))
    if idx.size:
        q = q * np.exp(-1j * np.angle(q[idx[0]]))
    return lam, q


def composite_channels(lift: LiftedChannels, theta: np.ndarray) -> tuple[list, list]:
    """Composite receive channels at given phases, straight from the lift.

    h = L^H u reproduces equivalent_channel on the originating ChannelSet.
    """
    u = u_from_theta(theta)
    h = [Lk.conj().T @ u for Lk in lift.L]
    g = [Ll.conj().T @ u for Ll in lift.Ltilde]
    return h, g


def metrics_from_channels(h, g, w, v, cfg: SystemConfig) -> Metrics:
    """Physical metrics from composite channels and beam vectors.

    SINR_k excludes energy-beam terms from the interference (the energy
    sequence is known to the IDRs and cancelled). Harvested power at EHR l
    sums the received power of all information and energy beams.
    """
    K, L = cfg.K, cfg.L
    sinr, rate = [], []
    for k in range(K):
        sig = abs(np.vdot(h[k], w[k])) ** 2
        interf = sum(abs(np.vdot(h[k], w[i])) ** 2 for i in range(K) if i != k)
        s = sig / (interf + cfg.sigma2[k])
        sinr.append(s)
        rate.append(math.log2(1.0 + s))
    harvested = []
    for l in range(L):
        p = sum(abs(np.vdot(g[l], w[k])) ** 2 for k in range(K))
        p += sum(abs(np.vdot(g[l], v[lp])) ** 2 for lp in range(L))
        harvested.append(cfg.eta[l] * p)
    return Metrics(
        sinr=tuple(sinr),
        rate=tuple(rate),
        harvested=tuple(harvested),
        sum_rate=float(sum(rate)),
        total_harvested=float(sum(harvested)),
    )


def evaluate_metrics(ch: ChannelSet, w, v, theta: np.ndarray, cfg: SystemConfig) -> Metrics:
    """Physical metrics from a channel realization, beams, and phases."""
    h = [equivalent_channel(hb, hr, ch.H, theta) for hb, hr in zip(ch.h_b, ch.h_r)]
    g = [equivalent_channel(gb, gr, ch.H, theta) for gb, gr in zip(ch.g_b, ch.g_r)]
    return metrics_from_channels(h, g, w, v, cfg)


def lifted_gram_terms(lift: LiftedChannels, sol: LiftedSolution) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw quadratic-form traces of an iterate.

    Returns (A, B, C): A[k, i] = Tr(W_i Z_k); B[k, l] = Tr(W_k X_l);
    C[lp, l] = Tr(V_lp X_l). Tiny negative values from floating point are
    clamped to zero (the exact quantities are non-negative).
    """
    K, L = len(sol.W), len(sol.V)
    Z = [project_Z(lift.L[k], sol.U) for k in range(K)]
    X = [project_Z(lift.Ltilde[l], sol.U) for l in range(L)]
    A = np.empty((K, K))
    for k in range(K):
        for i in range(K):
            A[k, i] = max(0.0, float(np.trace(sol.W[i] @ Z[k]).real))
    B = np.empty((K, L))
    C = np.empty((L, L))
    for l in range(L):
        for k in range(K):
            B[k, l] = max(0.0, float(np.trace(sol.W[k] @ X[l]).real))
        for lp in range(L):
            C[lp, l] = max(0.0, float(np.trace(sol.V[lp] @ X[l]).real))
    return A, B, C


def evaluate_metrics_lifted(lift: LiftedChannels, sol: LiftedSolution, cfg: SystemConfig) -> Metrics:
    """Metrics of a (possibly relaxed) lifted iterate.

    Coincides with evaluate_metrics when all matrices are the rank-one lifts
    of vectors; for higher-rank PSD iterates it is the relaxation value.
    """
    A, B, C = lifted_gram_terms(lift, sol)
    K, L = cfg.K, cfg.L
    sinr, rate = [], []
    for k in range(K):
        interf = float(sum(A[k, i] for i in range(K) if i != k))
        s = A[k, k] / (interf + cfg.sigma2[k])
        sinr.append(s)
        rate.append(math.log2(1.0 + s))
    harvested = [cfg.eta[l] * float(B[:, l].sum() + C[:, l].sum()) for l in range(L)]
    return Metrics(
        sinr=tuple(sinr),
        rate=tuple(rate),
        harvested=tuple(harvested),
        sum_rate=float(sum(rate)),
        total_harvested=float(sum(harvested)),
    )
