"""MM surrogates built at an expansion point of the lifted problem.

All bilinear traces Tr(P Q) pass through the polarization identity; the convex
half 1/2 ||P+Q||_F^2 is linearized for lower bounds, while the subtracted
squares are linearized for upper bounds. Around expansion matrices (P0, Q0)
with G = P0 + Q0 and deltas dP = P - P0, dQ = Q - Q0:

    lower: tilde(P,Q) = Re Tr(G^H (P+Q)) - 1/2||G||^2 - 1/2||P||^2 - 1/2||Q||^2
           Tr(PQ) - tilde = 1/2 ||dP + dQ||^2            (exact remainder)
    upper: hat(P,Q) = 1/2||P+Q||^2 - S1t(P) - S2t(Q)
           with S1t(P) = Re Tr(P0^H P) - 1/2||P0||^2
           hat - Tr(PQ) = 1/2||dP||^2 + 1/2||dQ||^2      (exact remainder)

Both touch at (P0, Q0). The per-user rate term couples these through

    T_k = log2(sigma_k^2 + sum_i tilde_{k,i}) - Rbar_k,

where Rbar_k upper-bounds the interference log by the tangent of log2 at the
expansion interference x0, evaluated at sum_{i != k} hat_{k,i} + sigma_k^2.
-T_k is convex and majorizes the negative true rate, with equality at the
expansion point.

The rank penalty g(U) = ||U||_* - ||U||_2 (zero exactly on rank <= 1 PSD
matrices) is convexified by linearizing the spectral norm at the dominant
eigenvector of the previous iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lifting import (
    LOG2,
    LiftedChannels,
    dominant_eigvec,
    hermitian_part,
    project_Z,
)

__all__ = [
    "IteratePoint",
    "PairBound",
    "RateSurrogate",
    "PenaltyBound",
    "SurrogateDomainError",
    "mm_lower_bound_F",
    "surrogate_A_tilde",
    "surrogate_A_hat",
    "surrogate_rate_terms",
    "rank_penalty",
    "linearized_rank_penalty",
]


class SurrogateDomainError(ValueError):
    """Raised when a candidate point leaves a surrogate's domain (log of <= 0)."""


@dataclass
class IteratePoint:
    """Expansion point of one MM iteration, with cached projections."""

    W0: list[np.ndarray]
    V0: list[np.ndarray]
    U0: np.ndarray
    Z0: list[np.ndarray]
    X0: list[np.ndarray]
    u_max: np.ndarray
    spectral_norm_U0: float

    @classmethod
    def from_matrices(cls, W, V, U, lift: LiftedChannels) -> "IteratePoint":
        U = hermitian_part(np.asarray(U, dtype=complex))
        W = [hermitian_part(np.asarray(w, dtype=complex)) for w in W]
        V = [hermitian_part(np.asarray(v, dtype=complex)) for v in V]
        Z0 = [project_Z(Lk, U) for Lk in lift.L]
        X0 = [project_Z(Ll, U) for Ll in lift.Ltilde]
        lam, q = dominant_eigvec(U)
        return cls(W0=W, V0=V, U0=U, Z0=Z0, X0=X0, u_max=q, spectral_norm_U0=lam)


def _fro2(A: np.ndarray) -> float:
    return float(np.linalg.norm(A) ** 2)


def _retr(G: np.ndarray, X: np.ndarray) -> float:
    return float(np.trace(G.conj().T @ X).real)


@dataclass
class PairBound:
    """Touching lower/upper bounds of Tr(P Q) around (P0, Q0)."""

    P0: np.ndarray
    Q0: np.ndarray
    G: np.ndarray = field(init=False)

    def __post_init__(self):
        self.G = self.P0 + self.Q0

    # F = 1/2||P+Q||^2 linearized at the expansion point (global under-estimator)
    def f_tilde(self, P: np.ndarray, Q: np.ndarray) -> float:
        return _retr(self.G, P + Q) - 0.5 * _fro2(self.G)

    def tilde(self, P: np.ndarray, Q: np.ndarray) -> float:
        return self.f_tilde(P, Q) - 0.5 * _fro2(P) - 0.5 * _fro2(Q)

    def hat(self, P: np.ndarray, Q: np.ndarray) -> float:
        s1 = _retr(self.P0, P) - 0.5 * _fro2(self.P0)
        s2 = _retr(self.Q0, Q) - 0.5 * _fro2(self.Q0)
        return 0.5 * _fro2(P + Q) - s1 - s2

    # coefficient views used by the conic assembly
    @property
    def tilde_const(self) -> float:
        return -0.5 * _fro2(self.G)

    @property
    def hat_const(self) -> float:
        return 0.5 * _fro2(self.P0) + 0.5 * _fro2(self.Q0)


def mm_lower_bound_F(pt: IteratePoint, which: str, *indices: int) -> PairBound:
    """Pair bound for one lifted product term.

    which selects the pairing: "F1" with (k, i) pairs (W_i, Z_k); "F2" with
    (k, l) pairs (W_k, X_l); "F3" with (lp, l) pairs (V_lp, X_l). The returned
    object's f_tilde is the affine under-estimator of 1/2||P+Q||^2.
    """
    if which == "F1":
        k, i = indices
        return PairBound(P0=pt.W0[i], Q0=pt.Z0[k])
    if which == "F2":
        k, l = indices
        return PairBound(P0=pt.W0[k], Q0=pt.X0[l])
    if which == "F3":
        lp, l = indices
        return PairBound(P0=pt.V0[lp], Q0=pt.X0[l])
    raise ValueError(f"unknown pair selector {which!r}")


def surrogate_A_tilde(pt: IteratePoint, k: int, i: int) -> PairBound:
    """Concave touching lower bound of the signal term Tr(W_i Z_k)."""
    return mm_lower_bound_F(pt, "F1", k, i)


def surrogate_A_hat(pt: IteratePoint, k: int, i: int) -> PairBound:
    """Convex touching upper bound of the interference term Tr(W_i Z_k)."""
    return mm_lower_bound_F(pt, "F1", k, i)


@dataclass
class RateSurrogate:
    """Pieces of the per-user rate term T_k at an expansion point."""

    k: int
    sigma2: float
    pairs: list[PairBound]      # index i, bounds of Tr(W_i Z_k)
    x0: float                   # expansion interference + noise
    others: list[int]           # interferer indices (i != k)

    @property
    def rbar_const(self) -> float:
        # tangent of log2 at x0, constant part
        return math.log2(self.x0) - 1.0 / LOG2

    @property
    def rbar_slope(self) -> float:
        return 1.0 / (self.x0 * LOG2)

    def log_argument(self, W, Z_k) -> float:
        return self.sigma2 + sum(self.pairs[i].tilde(W[i], Z_k) for i in range(len(self.pairs)))

    def rbar(self, W, Z_k) -> float:
        acc = self.sigma2 + sum(self.pairs[i].hat(W[i], Z_k) for i in self.others)
        return self.rbar_const + self.rbar_slope * acc

    def value(self, W, Z_k) -> float:
        """T_k at a candidate point; lower-bounds the true rate there."""
        arg = self.log_argument(W, Z_k)
        if arg <= 0:
            raise SurrogateDomainError(
                f"rate surrogate log argument non-positive ({arg:.3e}) for user {self.k}"
            )
        return math.log2(arg) - self.rbar(W, Z_k)


def surrogate_rate_terms(pt: IteratePoint, k: int, sigma2: float) -> RateSurrogate:
    """Build T_k's surrogate around the expansion point.

    Requires positive expansion interference-plus-noise, which sigma2 > 0
    guarantees.
    """
    K = len(pt.W0)
    pairs = [surrogate_A_tilde(pt, k, i) for i in range(K)]
    others = [i for i in range(K) if i != k]
    x0 = sigma2 + sum(_retr(pt.W0[i], pt.Z0[k]) for i in others)
    if x0 <= 0:
        raise SurrogateDomainError(f"expansion interference+noise non-positive for user {k}")
    return RateSurrogate(k=k, sigma2=sigma2, pairs=pairs, x0=x0, others=others)


def rank_penalty(U: np.ndarray) -> float:
    """g(U) = nuclear norm minus spectral norm; zero iff rank(U) <= 1."""
    vals = np.abs(np.linalg.eigvalsh(hermitian_part(U)))
    if vals.size == 0:
        return 0.0
    return float(vals.sum() - vals.max())


@dataclass
class PenaltyBound:
    """Convex touching upper bound of the rank penalty at the previous iterate.

    gtilde(U) = Tr(U) - lam0 - Re Tr(u u^H (U - U0)); on the PSD cone the
    nuclear norm is the trace, and the subtracted Rayleigh quotient never
    exceeds the spectral norm, so gtilde >= g everywhere with equality at U0.
    """

    u_max: np.ndarray
    U0: np.ndarray
    lam0: float

    @property
    def const(self) -> float:
        # -lam0 + u^H U0 u; exactly zero when u_max is U0's top eigenvector
        return -self.lam0 + _retr(np.outer(self.u_max, self.u_max.conj()), self.U0)

    def value(self, U: np.ndarray) -> float:
        ray = float((self.u_max.conj() @ U @ self.u_max).real)
        return float(np.trace(U).real) - ray + self.const

    @property
    def coefficient(self) -> np.ndarray:
        # gradient matrix of the affine part in U: I - u u^H
        n = self.U0.shape[0]
        return np.eye(n) - np.outer(self.u_max, self.u_max.conj())


def linearized_rank_penalty(pt: IteratePoint) -> PenaltyBound:
    return PenaltyBound(u_max=pt.u_max, U0=pt.U0, lam0=pt.spectral_norm_U0)
