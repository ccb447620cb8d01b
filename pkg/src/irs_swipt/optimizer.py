"""Outer algorithms: initialization, the MM loop, Pareto sweep, and baselines.

Every constraint trace in the lifted domain is linear in (W, V) once U is
frozen and linear in U once (W, V) are frozen, so each MM iteration brackets
the joint penalized subproblem with two exact block passes: a beam pass
(inner concave-log SCA over the beam covariances at fixed U) and a phase
pass (one convex solve over U at fixed beams, carrying the linearized rank
penalty). The joint step then moves all blocks together. Each pass is a
touching majorize-minimize step on the same penalized objective, so descent
is tracked on true lifted metrics plus the exact rank gap, never on
surrogate values; candidates that fail to descend are discarded. The block
passes remove the proximal damping the quadratic pair surrogates impose on
any single-subproblem update, which is what lets the stopping rule fire
within the iteration budget.

The rank penalty follows a relaxation-first schedule: the weight starts at
zero, and once the objective stalls it is set relative to the current
objective magnitude and escalated geometrically until the rank gap of U
closes.

Rank-one extraction inverts the lifting (dominant eigenvectors, phase gauge
fixed by the dummy entry); a beam-only re-optimization at the extracted
phases then restores exact constraint feasibility that the spectral
truncation may have nudged. The two baseline schemes share the beam-only
machinery: alternating optimization with SDR phase updates plus Gaussian
randomization, and fixed uniformly random phases.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import conic
from .channel import SystemConfig
from .lifting import (
    LiftedChannels,
    LiftedSolution,
    Metrics,
    composite_channels,
    dominant_eigvec,
    evaluate_metrics_lifted,
    metrics_from_channels,
    project_Z,
    theta_from_u,
    u_from_theta,
)
from .surrogate import IteratePoint, PenaltyBound, rank_penalty

__all__ = [
    "MMConfig",
    "BeamformingSolution",
    "ParetoPoint",
    "OptimizerError",
    "InitInfeasible",
    "SubproblemError",
    "RankExtractionError",
    "RankEscalationExceeded",
    "initialize",
    "mm_solve",
    "extract_rank_one",
    "compute_Emax",
    "pareto_sweep",
    "optimize_beams",
    "baseline_ao_sdr",
    "baseline_random_phase",
    "ao_sdr_emax",
    "random_phase_emax",
]

_FEAS_SLACK = 1e-6  # relative slack of true-constraint checks on extracted points
_FLOOR_MARGIN = 1e-4  # relative floor padding absorbing solver tolerance in exact solves


class OptimizerError(RuntimeError):
    pass


class InitInfeasible(OptimizerError):
    """No feasible starting point exists for this realization."""


class SubproblemError(OptimizerError):
    """A convex subproblem failed (solver breakdown or unexpected infeasibility)."""


class RankExtractionError(OptimizerError):
    """An iterate's spectrum is too far from rank one to invert the lifting."""


class RankEscalationExceeded(OptimizerError):
    """The rank gap of U stayed open through the whole penalty schedule."""


@dataclass
class MMConfig:
    max_iters: int = 50
    obj_rel_tol: float = 1e-4
    rank_tol: float = 1e-4
    # penalty schedule: start at phi_init_factor*|objective|, and on each
    # stalled-but-rank-open segment set phi to at least phi_base_factor times
    # the current objective magnitude, growing by phi_growth per escalation
    phi_init_factor: float = 0.0
    phi_base_factor: float = 1.0
    phi_growth: float = 10.0
    phi_max_escalations: int = 5
    phi_cap: float = 1e8
    init_strategy: str = "align"
    solver_tol: float = conic.DEFAULT_SOLVER_TOL
    polish: bool = True
    block_passes: bool = True
    randomization_draws: int = 100
    max_alternations: int = 10
    max_inner_beam_iters: int = 30

    def validate(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("obj_rel_tol", "rank_tol", "solver_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.phi_growth <= 1:
            raise ValueError("phi_growth must be > 1")
        if self.phi_max_escalations < 0 or self.phi_cap <= 0:
            raise ValueError("invalid penalty schedule")


@dataclass
class BeamformingSolution:
    """Extracted rank-one solution with its achieved physical metrics.

    objective_history holds the true penalized objective after the starting
    point and after every accepted descent step (block passes and joint
    steps), with phi_history giving the penalty weight in force for each
    entry; a weight change inserts one re-based entry. Entries sharing a
    weight are non-increasing up to the descent safeguard. `iterations`
    counts outer iterations, each comprising the passes and one joint step.
    """

    w: list
    v: list
    theta: np.ndarray
    metrics: Metrics
    converged: bool
    iterations: int
    final_rank_gap: float
    objective_history: list = field(default_factory=list)
    phi_history: list = field(default_factory=list)
    lifted: Optional[LiftedSolution] = None
    extraction_fallback: bool = False
    polished: bool = False

    @property
    def total_power(self) -> float:
        acc = sum(float(np.vdot(wk, wk).real) for wk in self.w)
        acc += sum(float(np.vdot(vl, vl).real) for vl in self.v)
        return acc


@dataclass
class ParetoPoint:
    delta: float
    epsilon: float
    sum_rate: float
    total_harvested: float
    solution: Optional[BeamformingSolution]
    status: str = "ok"
    seconds: float = 0.0


# ---------------------------------------------------------------------------
# initialization


def initialize(lift: LiftedChannels, cfg: SystemConfig, rng,
               strategy: str = "align") -> IteratePoint:
    """Feasible starting point for the true constraints with the total-harvest
    floor dropped.

    Phases are argument-aligned element-wise to maximize the strongest IDR's
    composite gain along its best transmit direction; beams come from a
    minimum-power program at those phases; leftover power goes into isotropic
    energy covariances. The construction is deterministic; `rng` is part of
    the interface for alternative strategies and is unused by "align".
    """
    if strategy != "align":
        raise ValueError(f"unknown init strategy {strategy!r}")
    del rng
    k_star = int(np.argmax([np.linalg.norm(Lk) for Lk in lift.L]))
    Lk = lift.L[k_star]
    # best transmit direction for user k_star, then element-wise phase alignment
    _, _, vh = np.linalg.svd(Lk)
    href = vh[0].conj()
    c = Lk @ href
    if abs(c[-1]) > 0:
        href = href * np.exp(-1j * np.angle(c[-1]))
        c = c * np.exp(-1j * np.angle(c[-1]))
    n = lift.n_plus_1 - 1
    theta0 = np.ones(n, dtype=complex)
    for j in range(n):
        if abs(c[j]) > 0:
            theta0[j] = np.exp(-1j * np.angle(c[j]))
    u0 = u_from_theta(theta0)
    U0 = np.outer(u0, u0.conj())

    h, g = composite_channels(lift, theta0)
    # padded floors keep the returned point strictly feasible for the true
    # constraints despite the finite solver tolerance
    floors = cfg.with_overrides(
        Gamma_req=tuple(x * (1 + _FLOOR_MARGIN) for x in cfg.Gamma_req),
        E_min=tuple(x * (1 + _FLOOR_MARGIN) for x in cfg.E_min))
    prob = conic.assemble_beam_step(h, g, floors, None, mode="min_power")
    res = conic.solve(prob, conic.DEFAULT_SOLVER_TOL)
    if res.status == "infeasible":
        raise InitInfeasible("minimum-power program infeasible at aligned phases")
    if res.status != "optimal":
        raise SubproblemError(f"initialization solve failed: {res.status}")
    W = [res.values[f"W{k}"] for k in range(cfg.K)]
    V = [res.values[f"V{l}"] for l in range(cfg.L)]
    used = sum(float(np.trace(m).real) for m in W + V)
    resid = max(cfg.P_max - used, 0.0)
    if cfg.L > 0 and resid > 0:
        bump = resid / (cfg.L * cfg.M)
        V = [v + bump * np.eye(cfg.M) for v in V]
    return IteratePoint.from_matrices(W, V, U0, lift)


# ---------------------------------------------------------------------------
# rank-one extraction


def _dominant_vector(X: np.ndarray) -> tuple[np.ndarray, float]:
    vals = np.linalg.eigvalsh(X)
    lam1 = float(vals[-1])
    lam2 = float(vals[-2]) if vals.size > 1 else 0.0
    ratio = max(lam2, 0.0) / lam1 if lam1 > 0 else 0.0
    lam, q = dominant_eigvec(X)
    return math.sqrt(max(lam, 0.0)) * q, ratio


def extract_rank_one(sol: LiftedSolution, rank_tol: float = 1e-4,
                     p_max: Optional[float] = None) -> tuple[list, list, np.ndarray]:
    """Invert the lifting of a near-rank-one iterate to (w[k], v[l], theta).

    Blocks with trace below 1e-9 of the power scale extract to zero vectors.
    Raises RankExtractionError when lambda2/lambda1 exceeds rank_tol for U or
    any active block, or when the phase gauge is undefined.
    """
    scale = p_max
    if scale is None:
        scale = sum(float(np.trace(m).real) for m in sol.W + sol.V)
        scale = max(scale, 1e-300)
    tiny = 1e-9 * scale

    uvec, ratio_u = _dominant_vector(sol.U)
    if ratio_u > rank_tol:
        raise RankExtractionError(f"U spectrum ratio {ratio_u:.3e} exceeds {rank_tol:g}")
    try:
        theta = theta_from_u(uvec)
    except ValueError as exc:
        raise RankExtractionError(f"phase gauge undefined: {exc}") from exc

    def pull(X: np.ndarray, name: str) -> np.ndarray:
        if float(np.trace(X).real) <= tiny:
            return np.zeros(X.shape[0], dtype=complex)
        vec, ratio = _dominant_vector(X)
        if ratio > rank_tol:
            raise RankExtractionError(f"{name} spectrum ratio {ratio:.3e} exceeds {rank_tol:g}")
        return vec

    w = [pull(Wk, f"W{k}") for k, Wk in enumerate(sol.W)]
    v = [pull(Vl, f"V{l}") for l, Vl in enumerate(sol.V)]
    return w, v, theta


# ---------------------------------------------------------------------------
# beam-only optimization at fixed phases (polish, fallback, baselines)


def _beam_feasible(mets: Metrics, cfg: SystemConfig, epsilon: float, slack: float) -> bool:
    for k in range(cfg.K):
        if mets.sinr[k] < cfg.Gamma_req[k] * (1 - slack):
            return False
    for l in range(cfg.L):
        if mets.harvested[l] < cfg.E_min[l] * (1 - slack):
            return False
    if epsilon > 0 and mets.total_harvested < epsilon * (1 - slack):
        return False
    return True


def optimize_beams(lift: LiftedChannels, cfg: SystemConfig, epsilon: float,
                   theta: np.ndarray, mmcfg: MMConfig, objective: str = "rate",
                   start: Optional[tuple] = None):
    """Optimal beams at fixed phases via the exact-constraint subproblem.

    objective "rate" runs the concave-log SCA to convergence; "eh" is a
    single linear-objective solve. Returns (w, v, metrics) with rank-one
    vectors, or None when the constraint set is infeasible at these phases.
    Raises SubproblemError on solver breakdown and RankExtractionError when
    an optimal beam covariance refuses to extract.
    """
    if objective not in ("eh", "rate"):
        raise ValueError(f"unknown beam objective {objective!r}")
    h, g = composite_channels(lift, theta)
    eps = float(epsilon) if epsilon else 0.0

    # padded floors first: covariances meeting them to solver accuracy still
    # clear the true rows with slack purification cannot spend; padding only
    # shrinks the feasible set, so an infeasible attempt is retried exact
    for margin in (_FLOOR_MARGIN, 0.0):
        fcfg = cfg.with_overrides(
            Gamma_req=tuple(x * (1 + margin) for x in cfg.Gamma_req),
            E_min=tuple(x * (1 + margin) for x in cfg.E_min))
        feps = eps * (1 + margin)
        if objective == "eh":
            prob = conic.assemble_beam_step(h, g, fcfg, None, mode="eh")
            res = conic.solve(prob, mmcfg.solver_tol)
            if res.status == "infeasible":
                continue
            if res.status != "optimal":
                raise SubproblemError(f"beam step failed: {res.status}")
            W = [res.values[f"W{k}"] for k in range(cfg.K)]
            V = [res.values[f"V{l}"] for l in range(cfg.L)]
        else:
            if start is not None:
                w0, v0 = start
                interf = []
                for k in range(cfg.K):
                    acc = sum(abs(np.vdot(h[k], w0[i])) ** 2 for i in range(cfg.K) if i != k)
                    interf.append(float(acc))
            else:
                interf = [0.0] * cfg.K
            prev = None
            W = V = None
            hit_infeasible = False
            for _ in range(mmcfg.max_inner_beam_iters):
                prob = conic.assemble_beam_step(h, g, fcfg, feps, mode="rate",
                                                interference0=interf)
                res = conic.solve(prob, mmcfg.solver_tol)
                if res.status == "infeasible":
                    hit_infeasible = True
                    break
                if res.status != "optimal":
                    raise SubproblemError(f"beam step failed: {res.status}")
                W = [res.values[f"W{k}"] for k in range(cfg.K)]
                V = [res.values[f"V{l}"] for l in range(cfg.L)]
                # true rate of the beam covariances at these phases
                rate = 0.0
                interf = []
                for k in range(cfg.K):
                    sig = float((h[k].conj() @ W[k] @ h[k]).real)
                    itf = sum(float((h[k].conj() @ W[i] @ h[k]).real)
                              for i in range(cfg.K) if i != k)
                    itf = max(itf, 0.0)
                    rate += math.log2(1.0 + max(sig, 0.0) / (itf + cfg.sigma2[k]))
                    interf.append(itf)
                if prev is not None and abs(rate - prev) <= mmcfg.obj_rel_tol * max(abs(prev), 1e-12):
                    break
                prev = rate
            if hit_infeasible or W is None:
                continue

        w, v, mets = _purify_beams(h, g, W, V, cfg, eps)
        if objective == "rate" and any(np.linalg.norm(vl) > 0 for vl in v):
            # energy beams never enter the rate; drop solver residue when the
            # information beams already cover every harvest row
            v0 = [np.zeros(cfg.M, dtype=complex) for _ in v]
            m0 = metrics_from_channels(h, g, w, v0, cfg)
            ok = all(m0.harvested[l] >= cfg.E_min[l] for l in range(cfg.L))
            if ok and (eps <= 0 or m0.total_harvested >= eps):
                v, mets = v0, m0
        return w, v, mets
    return None


def _purify_beams(h, g, W: list, V: list, cfg: SystemConfig,
                  eps: float) -> tuple[list, list, Metrics]:
    """Exact rank-one delivery from optimal beam covariances.

    w_k = W_k h_k / sqrt(h_k^H W_k h_k) keeps every signal power, and by
    Cauchy-Schwarz never raises interference; the stripped residue
    W_k - w_k w_k^H is PSD, so its power (plus all of V) pooled into one
    energy beam along the top eigenvector of the harvest form
    A = sum_l eta_l g_l g_l^H harvests at least what it harvested before.
    Rates and total harvest therefore never drop below the matrix point's.
    Only the per-receiver harvest split can shift; when that breaks an E_min
    row, fall back to beams reproducing the split exactly (residue compressed
    onto the harvest rows' span), then to per-block dominant truncation of V.
    """
    K, L = cfg.K, cfg.L
    spent = min(sum(float(np.trace(m).real) for m in W + V), cfg.P_max)
    w = []
    for k in range(K):
        sig = float((h[k].conj() @ W[k] @ h[k]).real)
        if float(np.trace(W[k]).real) <= 1e-9 * cfg.P_max or sig <= 0:
            w.append(np.zeros(cfg.M, dtype=complex))
        else:
            w.append(W[k] @ h[k] / math.sqrt(sig))
    resid = max(spent - sum(float(np.vdot(wk, wk).real) for wk in w), 0.0)

    A = sum(cfg.eta[l] * np.outer(g[l], g[l].conj()) for l in range(L))
    q = np.linalg.eigh(A)[1][:, -1]
    v_pool = [np.zeros(cfg.M, dtype=complex) for _ in range(L)]
    if L > 0 and resid > 0:
        v_pool[0] = math.sqrt(resid) * q
    v_proj = _residue_split_beams(g, W, w, V, cfg)
    v_trunc = [_dominant_vector(Vl)[0] if float(np.trace(Vl).real) > 1e-9 * cfg.P_max
               else np.zeros(cfg.M, dtype=complex) for Vl in V]

    chosen = None
    for cand in (v_pool, v_proj, v_trunc):
        m = metrics_from_channels(h, g, w, cand, cfg)
        if _beam_feasible(m, cfg, eps, _FEAS_SLACK):
            chosen = (cand, m)
            break
    if chosen is None:
        chosen = (v_proj, metrics_from_channels(h, g, w, v_proj, cfg))
    return w, chosen[0], chosen[1]


def _residue_split_beams(g, W: list, w: list, V: list, cfg: SystemConfig) -> list:
    """Energy beams reproducing the matrix point's harvest split exactly.

    The stripped residue Q = sum_k (W_k - w_k w_k^H) + sum_l V_l holds
    precisely the power each harvest row loses to purification. Compressing
    Q onto span{g_l} leaves every g_l^H Q g_l unchanged while dropping its
    rank to at most L, so its eigendecomposition is deliverable as the L
    available beams without spending more than the residue's own power.
    """
    L, M = cfg.L, cfg.M
    out = [np.zeros(M, dtype=complex) for _ in range(L)]
    if L == 0:
        return out
    Q = sum(W) + sum(V) - sum(np.outer(wk, wk.conj()) for wk in w)
    G = np.stack(list(g), axis=1)
    u_, s_, _ = np.linalg.svd(G, full_matrices=False)
    if s_.size == 0 or s_[0] <= 0:
        return out
    B = u_[:, s_ > 1e-12 * s_[0]]
    S = B.conj().T @ Q @ B
    S = 0.5 * (S + S.conj().T)
    lam, E = np.linalg.eigh(S)
    vecs = B @ E
    # descending eigenvalues into the beam slots; negatives are rounding
    for slot, j in enumerate(np.argsort(lam)[::-1][:L]):
        if lam[j] > 0:
            out[slot] = math.sqrt(lam[j]) * vecs[:, j]
    return out


# ---------------------------------------------------------------------------
# the MM loop


def _lifted_base_objective(lift, cur: LiftedSolution, cfg, mode: str) -> tuple[float, Metrics]:
    mets = evaluate_metrics_lifted(lift, cur, cfg)
    base = -mets.sum_rate if mode == "rate" else -mets.total_harvested
    return base, mets


def _eh_repair(lift, cfg, init: IteratePoint, eps: float, mmcfg: MMConfig) -> IteratePoint:
    """Swap beams for harvest-maximizing ones when the start misses eps."""
    _, uvec = dominant_eigvec(init.U0)
    theta = theta_from_u(uvec)
    h, g = composite_channels(lift, theta)
    prob = conic.assemble_beam_step(h, g, cfg, None, mode="eh")
    res = conic.solve(prob, mmcfg.solver_tol)
    if res.status != "optimal":
        raise InitInfeasible(f"harvest repair failed: {res.status}")
    W = [res.values[f"W{k}"] for k in range(cfg.K)]
    V = [res.values[f"V{l}"] for l in range(cfg.L)]
    pt = IteratePoint.from_matrices(W, V, init.U0, lift)
    cur = LiftedSolution(W=pt.W0, V=pt.V0, U=pt.U0)
    mets = evaluate_metrics_lifted(lift, cur, cfg)
    if mets.total_harvested < eps * (1 - 1e-9):
        raise InitInfeasible(
            f"harvest floor {eps:.3e} W unreachable at the starting phases "
            f"(max {mets.total_harvested:.3e} W)"
        )
    return pt


def _interference_watts(cur: LiftedSolution, Zs: list, K: int) -> list:
    """Per-user interference Tr(W_i Z_k), i != k, in watts at the iterate."""
    out = []
    for k in range(K):
        acc = sum(float(np.trace(cur.W[i] @ Zs[k]).real) for i in range(K) if i != k)
        out.append(max(acc, 0.0))
    return out


def _beam_pass(lift, cfg, eps: float, mmcfg: MMConfig, cur: LiftedSolution,
               mode: str) -> Optional[LiftedSolution]:
    """Exact (W, V) block update at fixed U; None when no candidate solved.

    All rows are linear in the beam covariances once U is frozen, so for
    "eh" one solve is exact; for "rate" only the interference log needs the
    inner tangent loop. Candidate feasibility is true feasibility.
    """
    Zs = [project_Z(Lk, cur.U) for Lk in lift.L]
    if mode == "eh":
        prob = conic.assemble_beam_step_fixed_U(lift, cfg, cur.U, None, mode="eh")
        res = conic.solve(prob, mmcfg.solver_tol)
        if res.status != "optimal":
            return None
        return LiftedSolution(
            W=[res.values[f"W{k}"] for k in range(cfg.K)],
            V=[res.values[f"V{l}"] for l in range(cfg.L)],
            U=cur.U,
        )
    interf = _interference_watts(cur, Zs, cfg.K)
    W = V = None
    prev = None
    for _ in range(mmcfg.max_inner_beam_iters):
        prob = conic.assemble_beam_step_fixed_U(lift, cfg, cur.U,
                                                eps if eps > 0 else None,
                                                mode="rate", interference0=interf)
        res = conic.solve(prob, mmcfg.solver_tol)
        if res.status != "optimal":
            break
        W = [res.values[f"W{k}"] for k in range(cfg.K)]
        V = [res.values[f"V{l}"] for l in range(cfg.L)]
        rate = 0.0
        interf = []
        for k in range(cfg.K):
            sig = max(float(np.trace(W[k] @ Zs[k]).real), 0.0)
            itf = max(sum(float(np.trace(W[i] @ Zs[k]).real)
                          for i in range(cfg.K) if i != k), 0.0)
            rate += math.log2(1.0 + sig / (itf + cfg.sigma2[k]))
            interf.append(itf)
        if prev is not None and abs(rate - prev) <= mmcfg.obj_rel_tol * max(abs(prev), 1e-12):
            break
        prev = rate
    if W is None:
        return None
    return LiftedSolution(W=W, V=V, U=cur.U)


def _trim_energy_noise(lift, cfg, eps: float,
                       cur: LiftedSolution) -> Optional[LiftedSolution]:
    """Zero-V candidate: valid whenever the harvest rows hold without V.

    The sum rate never sees the energy covariances (their interference is
    cancelled), so when the information beams alone cover E_min and the
    total-harvest floor, the solver residue left in V is droppable at
    exactly equal objective. Returns None when V is already zero or is
    actually load-bearing.
    """
    if all(float(np.trace(vl).real) == 0.0 for vl in cur.V):
        return None
    cand = LiftedSolution(W=cur.W, V=[np.zeros_like(vl) for vl in cur.V], U=cur.U)
    mets = evaluate_metrics_lifted(lift, cand, cfg)
    for l in range(cfg.L):
        if mets.harvested[l] < cfg.E_min[l]:
            return None
    if eps > 0 and mets.total_harvested < eps:
        return None
    return cand


def _phase_pass(lift, cfg, eps: float, mmcfg: MMConfig, cur: LiftedSolution,
                Phi: float, mode: str) -> Optional[LiftedSolution]:
    """Exact U block update at fixed beams; None when the solve fails.

    Rows are linear in U at fixed (W, V); the rate objective linearizes only
    the interference log, and the rank penalty enters through its touching
    linearization, so accepting the candidate descends the same penalized
    objective as the joint step.
    """
    pen = None
    if Phi > 0:
        lam, uvec = dominant_eigvec(cur.U)
        pen = PenaltyBound(u_max=uvec, U0=cur.U, lam0=lam)
    if mode == "rate":
        Zs = [project_Z(Lk, cur.U) for Lk in lift.L]
        interf = _interference_watts(cur, Zs, cfg.K)
        prob = conic.assemble_phase_step(lift, cfg, cur.W, cur.V,
                                         eps if eps > 0 else None,
                                         interference0=interf, objective="rate",
                                         penalty=pen, Phi=Phi)
    else:
        prob = conic.assemble_phase_step(lift, cfg, cur.W, cur.V, None,
                                         objective="eh", penalty=pen, Phi=Phi)
    res = conic.solve(prob, mmcfg.solver_tol)
    if res.status != "optimal":
        return None
    return LiftedSolution(W=cur.W, V=cur.V, U=res.values["U"])


def _mm_loop(lift, cfg, eps: float, mmcfg: MMConfig, init: IteratePoint,
             mode: str) -> BeamformingSolution:
    cur = LiftedSolution(W=list(init.W0), V=list(init.V0), U=init.U0)
    base, _ = _lifted_base_objective(lift, cur, cfg, mode)
    Phi = min(mmcfg.phi_init_factor * abs(base), mmcfg.phi_cap)
    f_cur = base + Phi * rank_penalty(cur.U)
    obj_hist = [f_cur]
    phi_hist = [Phi]
    converged = False
    escalations = 0
    iters = 0

    def accept(cand: Optional[LiftedSolution]) -> bool:
        # safeguard every pass on the true penalized objective
        nonlocal cur, base, f_cur
        if cand is None:
            return False
        base_new, _ = _lifted_base_objective(lift, cand, cfg, mode)
        f_new = base_new + Phi * rank_penalty(cand.U)
        if f_new > f_cur + 1e-9 * max(1.0, abs(f_cur)):
            return False
        cur, base, f_cur = cand, base_new, f_new
        obj_hist.append(f_cur)
        phi_hist.append(Phi)
        return True

    while iters < mmcfg.max_iters:
        iters += 1
        f_start = f_cur
        if mmcfg.block_passes:
            accept(_beam_pass(lift, cfg, eps, mmcfg, cur, mode))
            accept(_phase_pass(lift, cfg, eps, mmcfg, cur, Phi, mode))
        pt = IteratePoint.from_matrices(cur.W, cur.V, cur.U, lift)
        try:
            if mode == "rate":
                prob = conic.assemble_P6(lift, pt, cfg, eps if eps > 0 else None, Phi)
            else:
                prob = conic.assemble_P7(lift, pt, cfg, Phi)
        except conic.AssemblyError as exc:
            raise SubproblemError(f"iterate {iters}: {exc}") from exc
        res = conic.solve(prob, mmcfg.solver_tol)
        if res.status != "optimal":
            raise SubproblemError(f"iterate {iters}: subproblem status {res.status}")
        accept(LiftedSolution(
            W=[res.values[f"W{k}"] for k in range(cfg.K)],
            V=[res.values[f"V{l}"] for l in range(cfg.L)],
            U=res.values["U"],
        ))
        if mode == "rate":
            accept(_trim_energy_noise(lift, cfg, eps, cur))
        rel = abs(f_start - f_cur) / max(abs(f_start), 1e-12)
        if rel <= mmcfg.obj_rel_tol:
            gap = rank_penalty(cur.U) / max(float(np.trace(cur.U).real), 1e-300)
            if gap <= mmcfg.rank_tol:
                converged = True
                break
            escalations += 1
            if escalations > mmcfg.phi_max_escalations:
                raise RankEscalationExceeded(
                    f"rank gap {gap:.3e} after {escalations - 1} escalations"
                )
            floor = mmcfg.phi_base_factor * max(abs(base), 1e-30)
            Phi = min(max(floor, Phi * mmcfg.phi_growth), mmcfg.phi_cap)
            f_cur = base + Phi * rank_penalty(cur.U)
            obj_hist.append(f_cur)
            phi_hist.append(Phi)

    final_gap = rank_penalty(cur.U) / max(float(np.trace(cur.U).real), 1e-300)
    w, v, theta, fallback = _extract_with_recovery(lift, cfg, cur, eps, mmcfg, mode)

    polished = False
    mets = metrics_from_channels(*composite_channels(lift, theta), w, v, cfg)
    if mmcfg.polish:
        refit = _try_polish(lift, cfg, eps, theta, w, v, mets, mmcfg, mode)
        if refit is not None:
            w, v, mets = refit
            polished = True

    return BeamformingSolution(
        w=w, v=v, theta=theta, metrics=mets,
        converged=converged, iterations=iters, final_rank_gap=final_gap,
        objective_history=obj_hist, phi_history=phi_hist,
        lifted=cur, extraction_fallback=fallback, polished=polished,
    )


def _extract_with_recovery(lift, cfg, cur: LiftedSolution, eps, mmcfg, mode):
    """Extraction chain, in order: strict spectral inversion; strict with the
    noise-level V zeroed; clean phases plus an exact beam re-solve at them;
    Gaussian rounding of the phases. Only the last randomizes, and only it
    counts as a fallback in the output.

    The beam re-solve leg is the normal path whenever the beam covariances
    sit on a degenerate optimal face (always for the linear harvest
    objective, and for rate whenever active energy covariances spread across
    harvest directions); it is deterministic and loses nothing because the
    purified beams achieve the matrix optimum at those phases.
    """
    if mode == "rate":
        try:
            w, v, theta = extract_rank_one(cur, rank_tol=mmcfg.rank_tol, p_max=cfg.P_max)
            return w, v, theta, False
        except RankExtractionError:
            pass
        # residual energy covariances below the vanishing scale are solver noise
        vtiny = 1e-6 * cfg.P_max
        dropped = LiftedSolution(
            W=cur.W,
            V=[vl if float(np.trace(vl).real) > vtiny else np.zeros_like(vl) for vl in cur.V],
            U=cur.U,
        )
        try:
            w, v, theta = extract_rank_one(dropped, rank_tol=mmcfg.rank_tol, p_max=cfg.P_max)
            return w, v, theta, False
        except RankExtractionError:
            pass
    uvec, ratio_u = _dominant_vector(cur.U)
    if ratio_u <= mmcfg.rank_tol:
        try:
            theta = theta_from_u(uvec)
        except ValueError:
            theta = None
        if theta is not None:
            try:
                out = optimize_beams(lift, cfg, eps, theta, mmcfg, objective=mode)
            except SubproblemError:
                out = None
            if out is not None and _beam_feasible(out[2], cfg, eps, _FEAS_SLACK):
                return out[0], out[1], theta, False
    w, v, theta = _randomized_extraction(lift, cfg, cur, eps, mmcfg, mode)
    return w, v, theta, True


def _try_polish(lift, cfg, eps, theta, w, v, mets, mmcfg, mode):
    """Beam refit at the extracted phases; None when it does not help."""
    try:
        out = optimize_beams(lift, cfg, eps, theta, mmcfg,
                             objective="rate" if mode == "rate" else "eh",
                             start=(w, v))
    except (SubproblemError, RankExtractionError):
        return None
    if out is None:
        return None
    w2, v2, m2 = out
    if not _beam_feasible(m2, cfg, eps, _FEAS_SLACK):
        return None
    if mode == "rate":
        better = m2.sum_rate >= mets.sum_rate - 1e-9 * max(1.0, abs(mets.sum_rate))
    else:
        better = m2.total_harvested >= mets.total_harvested * (1 - 1e-9)
    # prefer the refit whenever the raw extraction is slack-infeasible
    if not _beam_feasible(mets, cfg, eps, _FEAS_SLACK):
        better = True
    return (w2, v2, m2) if better else None


def _randomized_extraction(lift, cfg, sol: LiftedSolution, eps, mmcfg, mode):
    """Gaussian-rounding fallback when spectral extraction fails.

    Phase candidates come from CN(0, U) draws (the dominant direction first);
    beams are re-optimized per surviving candidate. Deterministic by a fixed
    internal seed: the fallback is part of the solve, not an experiment knob.
    """
    _, uvec = dominant_eigvec(sol.U)
    candidates = []
    try:
        candidates.append(theta_from_u(uvec))
    except ValueError:
        pass
    gap = rank_penalty(sol.U) / max(float(np.trace(sol.U).real), 1e-300)
    if gap > mmcfg.rank_tol or not candidates:
        rng = np.random.default_rng(1729)
        vals, vecs = np.linalg.eigh(0.5 * (sol.U + sol.U.conj().T))
        root = vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))
        n1 = sol.U.shape[0]
        for _ in range(mmcfg.randomization_draws):
            z = root @ (rng.standard_normal(n1) + 1j * rng.standard_normal(n1)) / math.sqrt(2)
            try:
                candidates.append(theta_from_u(z))
            except ValueError:
                continue

    best = None
    for theta in candidates:
        try:
            out = optimize_beams(lift, cfg, eps, theta, mmcfg,
                                 objective="rate" if mode == "rate" else "eh")
        except (SubproblemError, RankExtractionError):
            continue
        if out is None:
            continue
        w, v, mets = out
        if not _beam_feasible(mets, cfg, eps, _FEAS_SLACK):
            continue
        score = mets.sum_rate if mode == "rate" else mets.total_harvested
        if best is None or score > best[0]:
            best = (score, w, v, theta)
    if best is None:
        raise RankExtractionError("no feasible rank-one recovery from randomization")
    return best[1], best[2], best[3]


def mm_solve(lift: LiftedChannels, cfg: SystemConfig, epsilon: float,
             mmcfg: Optional[MMConfig] = None,
             init: Optional[IteratePoint] = None) -> BeamformingSolution:
    """Penalized MM over the joint subproblem at one harvest floor epsilon.

    epsilon = 0 drops the total-harvest row entirely. A starting point short
    of the floor is first repaired by harvest-maximizing beams at its phases;
    if even those cannot reach epsilon, InitInfeasible is raised.
    """
    mmcfg = mmcfg if mmcfg is not None else MMConfig()
    mmcfg.validate()
    if init is None:
        init = initialize(lift, cfg, np.random.default_rng(0), mmcfg.init_strategy)
    eps = max(float(epsilon), 0.0) if epsilon is not None else 0.0
    if eps > 0:
        cur = LiftedSolution(W=list(init.W0), V=list(init.V0), U=init.U0)
        mets = evaluate_metrics_lifted(lift, cur, cfg)
        if mets.total_harvested < eps * (1 - 1e-9):
            init = _eh_repair(lift, cfg, init, eps, mmcfg)
    return _mm_loop(lift, cfg, eps, mmcfg, init, mode="rate")


def compute_Emax(lift: LiftedChannels, cfg: SystemConfig,
                 mmcfg: Optional[MMConfig] = None,
                 init: Optional[IteratePoint] = None) -> float:
    """Largest total harvested power under the SINR/E_min/power constraints."""
    return _emax_solution(lift, cfg, mmcfg, init).metrics.total_harvested


def _emax_solution(lift, cfg, mmcfg=None, init=None) -> BeamformingSolution:
    mmcfg = mmcfg if mmcfg is not None else MMConfig()
    mmcfg.validate()
    if init is None:
        init = initialize(lift, cfg, np.random.default_rng(0), mmcfg.init_strategy)
    return _mm_loop(lift, cfg, 0.0, mmcfg, init, mode="eh")


def _rank_one_point(lift: LiftedChannels, bs: BeamformingSolution) -> IteratePoint:
    W = [np.outer(wk, wk.conj()) for wk in bs.w]
    V = [np.outer(vl, vl.conj()) for vl in bs.v]
    u = u_from_theta(bs.theta)
    return IteratePoint.from_matrices(W, V, np.outer(u, u.conj()), lift)


def pareto_sweep(lift: LiftedChannels, cfg: SystemConfig,
                 mmcfg: Optional[MMConfig] = None,
                 deltas: Optional[list] = None) -> list:
    """Rate/harvest trade-off curve: epsilon = delta * E_max per point.

    Solved in descending delta order with warm starts chained from the
    previous point's extraction (each stays feasible as the floor drops,
    starting from the harvest-max solution at delta = 1). Points return in
    ascending delta order; per-delta failures carry a status and NaN metrics.
    """
    mmcfg = mmcfg if mmcfg is not None else MMConfig()
    mmcfg.validate()
    deltas = list(deltas) if deltas is not None else [round(0.1 * i, 1) for i in range(1, 11)]
    if not deltas:
        raise ValueError("deltas must be non-empty")
    for d in deltas:
        if not (0 < d <= 1):
            raise ValueError(f"delta {d} outside (0, 1]")

    init = initialize(lift, cfg, np.random.default_rng(0), mmcfg.init_strategy)
    emax_sol = _mm_loop(lift, cfg, 0.0, mmcfg, init, mode="eh")
    e_max = emax_sol.metrics.total_harvested
    warm = _rank_one_point(lift, emax_sol)

    points = []
    for d in sorted(set(deltas), reverse=True):
        eps = d * e_max
        t0 = time.perf_counter()
        try:
            bs = mm_solve(lift, cfg, eps, mmcfg, warm)
            points.append(ParetoPoint(
                delta=d, epsilon=eps,
                sum_rate=bs.metrics.sum_rate,
                total_harvested=bs.metrics.total_harvested,
                solution=bs, status="ok",
                seconds=time.perf_counter() - t0,
            ))
            warm = _rank_one_point(lift, bs)
        except OptimizerError as exc:
            points.append(ParetoPoint(
                delta=d, epsilon=eps,
                sum_rate=float("nan"), total_harvested=float("nan"),
                solution=None, status=f"failed: {type(exc).__name__}",
                seconds=time.perf_counter() - t0,
            ))
    points.sort(key=lambda p: p.delta)
    return points


# ---------------------------------------------------------------------------
# baseline schemes


def _phase_candidates(Ustar: np.ndarray, rng, draws: int) -> list:
    """Gaussian-randomization phase candidates from a relaxed U."""
    cands = []
    try:
        _, uvec = dominant_eigvec(Ustar)
        cands.append(theta_from_u(uvec))
    except ValueError:
        pass
    vals, vecs = np.linalg.eigh(0.5 * (Ustar + Ustar.conj().T))
    root = vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))
    n1 = Ustar.shape[0]
    for _ in range(draws):
        z = root @ (rng.standard_normal(n1) + 1j * rng.standard_normal(n1)) / math.sqrt(2)
        try:
            cands.append(theta_from_u(z))
        except ValueError:
            continue
    return cands


def _ao_loop(lift, cfg, eps: float, rng, mmcfg: MMConfig, objective: str) -> BeamformingSolution:
    init = initialize(lift, cfg, rng, mmcfg.init_strategy)
    _, uvec = dominant_eigvec(init.U0)
    theta = theta_from_u(uvec)

    def beams_at(th, start=None):
        return optimize_beams(lift, cfg, eps, th, mmcfg, objective=objective, start=start)

    out = beams_at(theta)
    if out is None:
        raise InitInfeasible("beam step infeasible at the starting phases")
    w, v, mets = out

    def score(m: Metrics) -> float:
        return m.sum_rate if objective == "rate" else m.total_harvested

    best = score(mets)
    alt = 0
    stalled = False
    for alt in range(1, mmcfg.max_alternations + 1):
        stalled = False
        # phase SDR at fixed beams, then randomization over the candidates
        Wm = [np.outer(wk, wk.conj()) for wk in w]
        Vm = [np.outer(vl, vl.conj()) for vl in v]
        h, _ = composite_channels(lift, theta)
        interf = [sum(abs(np.vdot(h[k], w[i])) ** 2 for i in range(cfg.K) if i != k)
                  for k in range(cfg.K)]
        prob = conic.assemble_phase_step(lift, cfg, Wm, Vm, eps if eps > 0 else None,
                                         interference0=interf, objective=objective)
        res = conic.solve(prob, mmcfg.solver_tol)
        cand_thetas = [theta]
        if res.status == "optimal":
            cand_thetas += _phase_candidates(res.values["U"], rng,
                                             mmcfg.randomization_draws)
        best_theta, best_m = theta, None
        for th in cand_thetas:
            m = metrics_from_channels(*composite_channels(lift, th), w, v, cfg)
            if not _beam_feasible(m, cfg, eps, _FEAS_SLACK):
                continue
            if best_m is None or score(m) > score(best_m):
                best_theta, best_m = th, m
        if best_m is None:
            stalled = True  # not even the current phases pass: keep them
            best_theta = theta
        theta = best_theta

        out = beams_at(theta, start=(w, v))
        if out is not None:
            w, v, mets = out
        new = score(mets)
        if abs(new - best) <= mmcfg.obj_rel_tol * max(abs(best), 1e-12):
            best = max(best, new)
            break
        best = max(best, new)

    return BeamformingSolution(
        w=w, v=v, theta=theta, metrics=mets,
        converged=not stalled, iterations=alt, final_rank_gap=0.0,
    )


def baseline_ao_sdr(lift: LiftedChannels, cfg: SystemConfig, epsilon: float,
                    rng) -> BeamformingSolution:
    """Alternating optimization: exact beam subproblem at fixed phases, then
    an SDR phase update with Gaussian randomization, best feasible kept."""
    eps = max(float(epsilon), 0.0) if epsilon is not None else 0.0
    return _ao_loop(lift, cfg, eps, rng, MMConfig(), objective="rate")


def ao_sdr_emax(lift: LiftedChannels, cfg: SystemConfig, rng) -> float:
    """The alternating baseline's own harvest ceiling (for its frontier)."""
    return _ao_loop(lift, cfg, 0.0, rng, MMConfig(), objective="eh").metrics.total_harvested


def baseline_random_phase(lift: LiftedChannels, cfg: SystemConfig, epsilon: float,
                          rng) -> BeamformingSolution:
    """Uniformly random fixed phases; beams optimized at those phases."""
    eps = max(float(epsilon), 0.0) if epsilon is not None else 0.0
    n = lift.n_plus_1 - 1
    theta = np.exp(2j * math.pi * rng.random(n))
    mmcfg = MMConfig()
    out = optimize_beams(lift, cfg, eps, theta, mmcfg, objective="rate")
    if out is None:
        raise InitInfeasible("constraints infeasible at the drawn phases")
    w, v, mets = out
    return BeamformingSolution(
        w=w, v=v, theta=theta, metrics=mets,
        converged=True, iterations=1, final_rank_gap=0.0,
    )


def random_phase_emax(lift: LiftedChannels, cfg: SystemConfig, rng) -> float:
    """Harvest ceiling at one uniformly random phase draw (same draw order
    as baseline_random_phase under an identically seeded generator)."""
    n = lift.n_plus_1 - 1
    theta = np.exp(2j * math.pi * rng.random(n))
    out = optimize_beams(lift, cfg, 0.0, theta, MMConfig(), objective="eh")
    if out is None:
        raise InitInfeasible("constraints infeasible at the drawn phases")
    return out[2].total_harvested
