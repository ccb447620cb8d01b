"""Convex subproblem assembly and the solver backend adapter.

The per-iteration problems are described in a small solver-agnostic IR:
Hermitian PSD blocks, projection equalities Z = P^H U P, scalar affine
functionals c + sum Re Tr(G^H X), convex quadratic terms w/2 ||sum X||_F^2,
and negated logs of concave arguments. One adapter maps the IR onto cvxpy
with Clarabel underneath.

Numerical scaling happens here so callers work in physical units throughout:
beam blocks are solved as W/P_max, lifted maps are normalized to unit
Frobenius norm, and noise/harvest rows are rescaled accordingly. The rate
part of the objective is invariant under this scaling (both logs of each
user's term shift by the same constant), so reported objective values are
physical. Scalar constraint rows are additionally normalized by their
coefficient magnitude before hitting the solver.

Two adapter-level reductions keep the canonical form small; neither changes
the reported solution because all objective/constraint values are re-derived
numerically from the returned matrices, never read from solver internals:
  - each lifted quadratic form enters as an auxiliary Hermitian block with a
    single projection equality (dense coupling rows appear once), and
  - every distinct Frobenius-square signature gets one shared epigraph
    variable (exact at the optimum; pressure on each epigraph is one-sided).
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import cvxpy as cp
import numpy as np

from .channel import SystemConfig
from .lifting import LOG2, LiftedChannels, hermitian_part, project_Z
from .surrogate import (
    IteratePoint,
    PairBound,
    PenaltyBound,
    linearized_rank_penalty,
    surrogate_rate_terms,
)

__all__ = [
    "HermitianBlock",
    "AffineExpr",
    "QuadTerm",
    "ProjectionEq",
    "AffineLe",
    "ConcaveGe",
    "NegLogTerm",
    "Objective",
    "ConvexSubproblem",
    "SolveResult",
    "AssemblyError",
    "assemble_P6",
    "assemble_P7",
    "assemble_beam_step",
    "assemble_phase_step",
    "solve",
    "DEFAULT_SOLVER_TOL",
]

DEFAULT_SOLVER_TOL = 1e-8
_EXPANSION_GRACE = 1e-6  # relative slack allowed for the expansion point's own rows


class AssemblyError(RuntimeError):
    """Expansion point infeasible for its own surrogate constraints."""


@dataclass
class HermitianBlock:
    name: str
    dim: int
    psd: bool = True
    unit_diag: bool = False
    scale: float = 1.0  # physical value = scale * solver-space value


@dataclass
class AffineExpr:
    """const + sum_v Re Tr(terms[v]^H X_v), real-valued on Hermitian blocks."""

    const: float = 0.0
    terms: dict = field(default_factory=dict)

    def add(self, var: str, G: np.ndarray, weight: float = 1.0):
        G = np.asarray(G, dtype=complex)
        if var in self.terms:
            self.terms[var] = self.terms[var] + weight * G
        else:
            self.terms[var] = weight * G

    def evaluate(self, values: dict) -> float:
        acc = self.const
        for var, G in self.terms.items():
            acc += float(np.trace(G.conj().T @ values[var]).real)
        return acc

    def coefficient_norm(self) -> float:
        mags = [float(np.linalg.norm(G)) for G in self.terms.values()]
        return max(mags) if mags else 0.0


@dataclass
class QuadTerm:
    """weight * 1/2 * || sum_v X_v ||_F^2 over the named blocks."""

    weight: float
    vars: tuple

    def evaluate(self, values: dict) -> float:
        acc = None
        for v in self.vars:
            acc = values[v] if acc is None else acc + values[v]
        return self.weight * 0.5 * float(np.linalg.norm(acc) ** 2)


@dataclass
class ProjectionEq:
    """values[small] == map^H values[big] map."""

    small: str
    big: str
    map: np.ndarray


@dataclass
class AffineLe:
    name: str
    expr: AffineExpr
    bound: float


@dataclass
class ConcaveGe:
    """affine - sum(quads) >= bound."""

    name: str
    affine: AffineExpr
    quads: list
    bound: float

    def evaluate(self, values: dict) -> float:
        return self.affine.evaluate(values) - sum(q.evaluate(values) for q in self.quads)


@dataclass
class NegLogTerm:
    """Objective term -scale * ln(affine - sum(quads)); argument must stay positive."""

    scale: float
    affine: AffineExpr
    quads: list

    def argument(self, values: dict) -> float:
        return self.affine.evaluate(values) - sum(q.evaluate(values) for q in self.quads)

    def evaluate(self, values: dict) -> float:
        arg = self.argument(values)
        if arg <= 0:
            raise FloatingPointError(f"log argument non-positive ({arg:.3e})")
        return -self.scale * math.log(arg)


@dataclass
class Objective:
    """Minimized: affine + sum(quads) + sum(neglogs)."""

    affine: AffineExpr = field(default_factory=AffineExpr)
    quads: list = field(default_factory=list)
    neglogs: list = field(default_factory=list)

    def evaluate(self, values: dict) -> float:
        acc = self.affine.evaluate(values)
        acc += sum(q.evaluate(values) for q in self.quads)
        acc += sum(t.evaluate(values) for t in self.neglogs)
        return acc


@dataclass
class ConvexSubproblem:
    name: str
    blocks: dict
    projections: list
    affine_le: list
    concave_ge: list
    objective: Objective
    meta: dict = field(default_factory=dict)

    def objective_value(self, values: dict) -> float:
        """Objective at solver-space variable values (epigraph-free)."""
        return self.objective.evaluate(values)

    def constraint_residuals(self, values: dict) -> dict:
        """Positive entries are violations, normalized per row."""
        out = {}
        for c in self.affine_le:
            denom = _row_denom(c.expr, [], c.bound)
            out[c.name] = (c.expr.evaluate(values) - c.bound) / denom
        for c in self.concave_ge:
            denom = _row_denom(c.affine, c.quads, c.bound)
            out[c.name] = (c.bound - c.evaluate(values)) / denom
        for p in self.projections:
            target = p.map.conj().T @ values[p.big] @ p.map
            scale = max(float(np.linalg.norm(target)), 1.0)
            out[f"proj_{p.small}"] = float(np.linalg.norm(values[p.small] - target)) / scale
        for b in self.blocks.values():
            X = values[b.name]
            if b.psd:
                lam_min = float(np.linalg.eigvalsh(hermitian_part(X))[0])
                out[f"psd_{b.name}"] = -lam_min / max(float(np.trace(X).real), 1.0)
            if b.unit_diag:
                out[f"diag_{b.name}"] = float(np.max(np.abs(np.diag(X) - 1.0)))
        return out

    def dump_text(self) -> str:
        """Stable textual dump: dimensions plus coefficient checksums."""
        lines = [f"subproblem {self.name}"]
        for b in self.blocks.values():
            lines.append(
                f"block {b.name} hermitian dim={b.dim} psd={int(b.psd)} "
                f"unit_diag={int(b.unit_diag)} scale={b.scale:.9g}"
            )
        for p in self.projections:
            lines.append(
                f"projection {p.small} = map^H {p.big} map "
                f"shape={p.map.shape[0]}x{p.map.shape[1]} sha={_sha(p.map)}"
            )

        def fmt_affine(a: AffineExpr) -> str:
            items = " ".join(f"{v}:{_sha(G)}" for v, G in sorted(a.terms.items()))
            return f"const={a.const:.9g} {items}".rstrip()

        def fmt_quads(quads) -> str:
            return " ".join(f"({q.weight:.9g},{'+'.join(q.vars)})" for q in quads)

        for c in self.affine_le:
            lines.append(f"affine_le {c.name} bound={c.bound:.9g} {fmt_affine(c.expr)}")
        for c in self.concave_ge:
            lines.append(
                f"concave_ge {c.name} bound={c.bound:.9g} {fmt_affine(c.affine)} "
                f"quads: {fmt_quads(c.quads)}"
            )
        o = self.objective
        lines.append(f"objective affine {fmt_affine(o.affine)}")
        if o.quads:
            lines.append(f"objective quads {fmt_quads(o.quads)}")
        for t in o.neglogs:
            lines.append(
                f"objective neglog scale={t.scale:.9g} {fmt_affine(t.affine)} "
                f"quads: {fmt_quads(t.quads)}"
            )
        return "\n".join(lines) + "\n"


def _sha(arr: np.ndarray) -> str:
    data = np.ascontiguousarray(arr, dtype=complex)
    return hashlib.sha256(data.tobytes()).hexdigest()[:12]


def _row_denom(affine: AffineExpr, quads, bound: float) -> float:
    mags = [abs(bound), affine.coefficient_norm()]
    mags += [abs(q.weight) for q in quads]
    return max(max(mags), 1e-30)


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | numerical-failure
    values: dict  # physical-unit Hermitian matrices by block name
    objective: Optional[float]
    solver_iterations: int
    solve_time: float
    inaccurate: bool = False
    scaled_values: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# scaled views of a physical instance


@dataclass
class _ScaledParts:
    pmax: float
    Lhat: list
    Lthat: list
    shat: list       # sigma2_k / (P_max ||L_k||^2)
    rho: list        # eta_l P_max ||Lt_l||^2: watts per scaled-trace unit
    norm_L2: list
    norm_Lt2: list


def _scaled_parts(lift: LiftedChannels, cfg: SystemConfig) -> _ScaledParts:
    nl2 = [max(float(np.linalg.norm(Lk) ** 2), 1e-300) for Lk in lift.L]
    nt2 = [max(float(np.linalg.norm(Ll) ** 2), 1e-300) for Ll in lift.Ltilde]
    return _ScaledParts(
        pmax=cfg.P_max,
        Lhat=[lift.L[k] / math.sqrt(nl2[k]) for k in range(cfg.K)],
        Lthat=[lift.Ltilde[l] / math.sqrt(nt2[l]) for l in range(cfg.L)],
        shat=[cfg.sigma2[k] / (cfg.P_max * nl2[k]) for k in range(cfg.K)],
        rho=[cfg.eta[l] * cfg.P_max * nt2[l] for l in range(cfg.L)],
        norm_L2=nl2,
        norm_Lt2=nt2,
    )


def _scaled_point(pt: IteratePoint, sp: _ScaledParts) -> IteratePoint:
    Wb = [w / sp.pmax for w in pt.W0]
    Vb = [v / sp.pmax for v in pt.V0]
    Zb = [project_Z(sp.Lhat[k], pt.U0) for k in range(len(sp.Lhat))]
    Xb = [project_Z(sp.Lthat[l], pt.U0) for l in range(len(sp.Lthat))]
    return IteratePoint(
        W0=Wb, V0=Vb, U0=pt.U0, Z0=Zb, X0=Xb,
        u_max=pt.u_max, spectral_norm_U0=pt.spectral_norm_U0,
    )


def _wname(i): return f"W{i}"
def _vname(l): return f"V{l}"
def _zname(k): return f"Z{k}"
def _xname(l): return f"X{l}"


def _base_blocks(cfg: SystemConfig, sp: _ScaledParts, with_u: bool = True) -> dict:
    blocks = {}
    for k in range(cfg.K):
        blocks[_wname(k)] = HermitianBlock(_wname(k), cfg.M, scale=sp.pmax)
    for l in range(cfg.L):
        blocks[_vname(l)] = HermitianBlock(_vname(l), cfg.M, scale=sp.pmax)
    if with_u:
        blocks["U"] = HermitianBlock("U", cfg.N + 1, unit_diag=True)
        for k in range(cfg.K):
            blocks[_zname(k)] = HermitianBlock(_zname(k), cfg.M, scale=sp.pmax * sp.norm_L2[k])
        for l in range(cfg.L):
            blocks[_xname(l)] = HermitianBlock(_xname(l), cfg.M, scale=sp.pmax * sp.norm_Lt2[l])
    return blocks


def _power_row(cfg: SystemConfig) -> AffineLe:
    expr = AffineExpr()
    eye = np.eye(cfg.M)
    for k in range(cfg.K):
        expr.add(_wname(k), eye)
    for l in range(cfg.L):
        expr.add(_vname(l), eye)
    return AffineLe("power", expr, 1.0)


def _sinr_rows(cfg: SystemConfig, spt: IteratePoint, sp: _ScaledParts) -> list:
    """Surrogate SINR rows: tilde_kk / Gamma_k - sum_i hat_ki >= shat_k.

    Rows with Gamma_k = 0 are dropped (vacuously true).
    """
    rows = []
    for k in range(cfg.K):
        gam = cfg.Gamma_req[k]
        if gam <= 0:
            continue
        affine = AffineExpr()
        quads = []
        pb_kk = PairBound(P0=spt.W0[k], Q0=spt.Z0[k])
        affine.add(_wname(k), pb_kk.G, 1.0 / gam)
        affine.add(_zname(k), pb_kk.G, 1.0 / gam)
        affine.const += pb_kk.tilde_const / gam
        quads.append(QuadTerm(1.0 / gam, (_wname(k),)))
        quads.append(QuadTerm(1.0 / gam, (_zname(k),)))
        for i in range(cfg.K):
            if i == k:
                continue
            pb = PairBound(P0=spt.W0[i], Q0=spt.Z0[k])
            # minus hat: -(1/2||W+Z||^2) + S1t + S2t
            affine.add(_wname(i), pb.P0)
            affine.add(_zname(k), pb.Q0)
            affine.const -= pb.hat_const
            quads.append(QuadTerm(1.0, (_wname(i), _zname(k))))
        rows.append(ConcaveGe(f"sinr_{k}", affine, quads, sp.shat[k]))
    return rows


def _eh_tilde_parts(cfg: SystemConfig, spt: IteratePoint, l: int) -> tuple[AffineExpr, list]:
    """Concave lower bound of the scaled received power at EHR l (before rho_l)."""
    affine = AffineExpr()
    quads = []
    for k in range(cfg.K):
        pb = PairBound(P0=spt.W0[k], Q0=spt.X0[l])
        affine.add(_wname(k), pb.G)
        affine.add(_xname(l), pb.G)
        affine.const += pb.tilde_const
        quads.append(QuadTerm(1.0, (_wname(k),)))
        quads.append(QuadTerm(1.0, (_xname(l),)))
    for lp in range(cfg.L):
        pb = PairBound(P0=spt.V0[lp], Q0=spt.X0[l])
        affine.add(_vname(lp), pb.G)
        affine.add(_xname(l), pb.G)
        affine.const += pb.tilde_const
        quads.append(QuadTerm(1.0, (_vname(lp),)))
        quads.append(QuadTerm(1.0, (_xname(l),)))
    return affine, quads


def _scale_row(affine: AffineExpr, quads: list, factor: float) -> tuple[AffineExpr, list]:
    out = AffineExpr(const=affine.const * factor)
    for v, G in affine.terms.items():
        out.add(v, G, factor)
    return out, [QuadTerm(q.weight * factor, q.vars) for q in quads]


def _ehr_min_rows(cfg: SystemConfig, spt: IteratePoint, sp: _ScaledParts) -> list:
    rows = []
    for l in range(cfg.L):
        if cfg.E_min[l] <= 0:
            continue
        affine, quads = _eh_tilde_parts(cfg, spt, l)
        affine, quads = _scale_row(affine, quads, sp.rho[l])
        rows.append(ConcaveGe(f"ehr_min_{l}", affine, quads, cfg.E_min[l]))
    return rows


def _eh_total_row(cfg: SystemConfig, spt: IteratePoint, sp: _ScaledParts, epsilon: float) -> ConcaveGe:
    affine = AffineExpr()
    quads = []
    for l in range(cfg.L):
        a_l, q_l = _eh_tilde_parts(cfg, spt, l)
        a_l, q_l = _scale_row(a_l, q_l, sp.rho[l])
        affine.const += a_l.const
        for v, G in a_l.terms.items():
            affine.add(v, G)
        quads.extend(q_l)
    return ConcaveGe("eh_total", affine, quads, epsilon)


def _rate_objective_terms(cfg: SystemConfig, spt: IteratePoint, sp: _ScaledParts,
                          objective: Objective):
    """Add -sum_k T_k to the objective (log parts plus interference tangents)."""
    for k in range(cfg.K):
        rs = surrogate_rate_terms(spt, k, sp.shat[k])
        # -log2(shat + sum_i tilde_ki)
        affine = AffineExpr(const=rs.sigma2)
        quads = []
        for i in range(cfg.K):
            pb = rs.pairs[i]
            affine.add(_wname(i), pb.G)
            affine.add(_zname(k), pb.G)
            affine.const += pb.tilde_const
            quads.append(QuadTerm(1.0, (_wname(i),)))
        quads.append(QuadTerm(float(cfg.K), (_zname(k),)))
        objective.neglogs.append(NegLogTerm(scale=1.0 / LOG2, affine=affine, quads=quads))
        # + Rbar_k = const + slope * (shat + sum_{i != k} hat_ki)
        objective.affine.const += rs.rbar_const + rs.rbar_slope * rs.sigma2
        for i in rs.others:
            pb = rs.pairs[i]
            objective.affine.add(_wname(i), pb.P0, -rs.rbar_slope)
            objective.affine.add(_zname(k), pb.Q0, -rs.rbar_slope)
            objective.affine.const += rs.rbar_slope * pb.hat_const
            objective.quads.append(QuadTerm(rs.rbar_slope, (_wname(i), _zname(k))))


def _penalty_objective(penalty: PenaltyBound, Phi: float, objective: Objective):
    objective.affine.add("U", penalty.coefficient, Phi)
    objective.affine.const += Phi * penalty.const


def _projections(cfg: SystemConfig, sp: _ScaledParts) -> list:
    proj = [ProjectionEq(_zname(k), "U", sp.Lhat[k]) for k in range(cfg.K)]
    proj += [ProjectionEq(_xname(l), "U", sp.Lthat[l]) for l in range(cfg.L)]
    return proj


def _scaled_point_values(spt: IteratePoint) -> dict:
    vals = {_wname(i): spt.W0[i] for i in range(len(spt.W0))}
    vals.update({_vname(l): spt.V0[l] for l in range(len(spt.V0))})
    vals["U"] = spt.U0
    vals.update({_zname(k): spt.Z0[k] for k in range(len(spt.Z0))})
    vals.update({_xname(l): spt.X0[l] for l in range(len(spt.X0))})
    return vals


def _check_expansion_feasible(prob: ConvexSubproblem, spt: IteratePoint):
    vals = _scaled_point_values(spt)
    names = {c.name for c in prob.affine_le} | {c.name for c in prob.concave_ge}
    res = prob.constraint_residuals(vals)
    bad = {n: r for n, r in res.items() if n in names and r > _EXPANSION_GRACE}
    if bad:
        worst = max(bad, key=bad.get)
        raise AssemblyError(
            f"{prob.name}: expansion point violates its own surrogate constraint "
            f"{worst} by {bad[worst]:.3e} (relative)"
        )


def assemble_P6(lift: LiftedChannels, pt: IteratePoint, cfg: SystemConfig,
                epsilon: Optional[float], Phi: float) -> ConvexSubproblem:
    """Rate-maximization step: minimize -sum_k T_k + Phi*gtilde(U).

    `epsilon` is the total-harvest floor in watts; None or 0 drops that row.
    Inputs are physical; the IR is built in scaled space (see module docs).
    Raises AssemblyError when the expansion point violates its own rows.
    """
    sp = _scaled_parts(lift, cfg)
    spt = _scaled_point(pt, sp)
    blocks = _base_blocks(cfg, sp)
    objective = Objective()
    _rate_objective_terms(cfg, spt, sp, objective)
    _penalty_objective(linearized_rank_penalty(pt), Phi, objective)
    concave = _sinr_rows(cfg, spt, sp) + _ehr_min_rows(cfg, spt, sp)
    if epsilon is not None and epsilon > 0:
        concave.append(_eh_total_row(cfg, spt, sp, epsilon))
    prob = ConvexSubproblem(
        name="P6",
        blocks=blocks,
        projections=_projections(cfg, sp),
        affine_le=[_power_row(cfg)],
        concave_ge=concave,
        objective=objective,
        meta={"pmax": sp.pmax, "epsilon": epsilon, "Phi": Phi},
    )
    _check_expansion_feasible(prob, spt)
    return prob


def assemble_P7(lift: LiftedChannels, pt: IteratePoint, cfg: SystemConfig,
                Phi: float) -> ConvexSubproblem:
    """Harvest-maximization step: minimize -(total EH lower bound) + Phi*gtilde(U)."""
    sp = _scaled_parts(lift, cfg)
    spt = _scaled_point(pt, sp)
    blocks = _base_blocks(cfg, sp)
    objective = Objective()
    for l in range(cfg.L):
        a_l, q_l = _eh_tilde_parts(cfg, spt, l)
        a_l, q_l = _scale_row(a_l, q_l, -sp.rho[l])  # negate: maximization
        objective.affine.const += a_l.const
        for v, G in a_l.terms.items():
            objective.affine.add(v, G)
        # negated concave bound turns its quadratics into convex costs
        objective.quads.extend(QuadTerm(-q.weight, q.vars) for q in q_l)
    _penalty_objective(linearized_rank_penalty(pt), Phi, objective)
    prob = ConvexSubproblem(
        name="P7",
        blocks=blocks,
        projections=_projections(cfg, sp),
        affine_le=[_power_row(cfg)],
        concave_ge=_sinr_rows(cfg, spt, sp) + _ehr_min_rows(cfg, spt, sp),
        objective=objective,
        meta={"pmax": sp.pmax, "Phi": Phi},
    )
    _check_expansion_feasible(prob, spt)
    return prob


def assemble_beam_step(h: list, g: list, cfg: SystemConfig, epsilon: Optional[float],
                       mode: str = "rate", interference0: Optional[list] = None) -> ConvexSubproblem:
    """Beam-only subproblem at fixed phases, on exact composite channels.

    With the phases frozen every quadratic form is linear in (W, V): SINR and
    harvest rows are exact, not surrogate. Modes:
      - "rate": minimize -sum_k T_k with the interference log linearized at
        `interference0[k]` (physical watts, > 0 required);
      - "eh": maximize total harvested power (linear objective);
      - "min_power": minimize total transmit power (initialization step);
        the objective value is in units of P_max.
    """
    Hq = [np.outer(hk, hk.conj()) for hk in h]
    Gq = [np.outer(gl, gl.conj()) for gl in g]
    return _assemble_beam_core(Hq, Gq, cfg, epsilon, mode, interference0, "beam")


def assemble_beam_step_fixed_U(lift: LiftedChannels, cfg: SystemConfig, U: np.ndarray,
                               epsilon: Optional[float], mode: str = "rate",
                               interference0: Optional[list] = None) -> ConvexSubproblem:
    """Beam-only subproblem at a fixed (possibly higher-rank) lifted U.

    All receive quadratic forms become the constants Z_k, X_l, so the rows
    are exact in (W, V) exactly as in the fixed-phase variant; for a rank-one
    U both coincide.
    """
    Zq = [project_Z(Lk, U) for Lk in lift.L]
    Xq = [project_Z(Ll, U) for Ll in lift.Ltilde]
    return _assemble_beam_core(Zq, Xq, cfg, epsilon, mode, interference0, "beam_lifted")


def _assemble_beam_core(Hq: list, Gq: list, cfg: SystemConfig, epsilon: Optional[float],
                        mode: str, interference0: Optional[list],
                        name: str) -> ConvexSubproblem:
    """Shared beam-step assembly over per-receiver Hermitian signal forms.

    Hq[k], Gq[l] are the PSD matrices with |signal|^2 = Tr(Hq W) at IDR k and
    received power Tr(Gq (sum W + sum V)) at EHR l.
    """
    K, L = cfg.K, cfg.L
    nh2 = [max(float(np.trace(Hk).real), 1e-300) for Hk in Hq]
    ng2 = [max(float(np.trace(Gl).real), 1e-300) for Gl in Gq]
    Hh = [Hq[k] / nh2[k] for k in range(K)]
    Gh = [Gq[l] / ng2[l] for l in range(L)]
    shat = [cfg.sigma2[k] / (cfg.P_max * nh2[k]) for k in range(K)]
    rho = [cfg.eta[l] * cfg.P_max * ng2[l] for l in range(L)]

    sp = _ScaledParts(pmax=cfg.P_max, Lhat=[], Lthat=[], shat=shat, rho=rho,
                      norm_L2=nh2, norm_Lt2=ng2)
    blocks = _base_blocks(cfg, sp, with_u=False)
    objective = Objective()

    def eh_expr(l: int) -> AffineExpr:
        e = AffineExpr()
        for k in range(K):
            e.add(_wname(k), Gh[l], rho[l])
        for lp in range(L):
            e.add(_vname(lp), Gh[l], rho[l])
        return e

    concave = []
    for k in range(K):
        gam = cfg.Gamma_req[k]
        if gam <= 0:
            continue
        affine = AffineExpr(const=0.0)
        affine.add(_wname(k), Hh[k], 1.0 / gam)
        for i in range(K):
            if i != k:
                affine.add(_wname(i), Hh[k], -1.0)
        concave.append(ConcaveGe(f"sinr_{k}", affine, [], shat[k]))
    for l in range(L):
        if cfg.E_min[l] > 0:
            concave.append(ConcaveGe(f"ehr_min_{l}", eh_expr(l), [], cfg.E_min[l]))
    if epsilon is not None and epsilon > 0:
        total = AffineExpr()
        for l in range(L):
            e = eh_expr(l)
            for v, G in e.terms.items():
                total.add(v, G)
        concave.append(ConcaveGe("eh_total", total, [], epsilon))

    power = [_power_row(cfg)]
    if mode == "rate":
        if interference0 is None or len(interference0) != K:
            raise ValueError("mode='rate' needs per-user expansion interference")
        for k in range(K):
            affine = AffineExpr(const=shat[k])
            for i in range(K):
                affine.add(_wname(i), Hh[k])
            objective.neglogs.append(NegLogTerm(1.0 / LOG2, affine, []))
            x0 = interference0[k] / (cfg.P_max * nh2[k]) + shat[k]
            if x0 <= 0:
                raise ValueError("expansion interference must keep the log argument positive")
            slope = 1.0 / (x0 * LOG2)
            objective.affine.const += math.log2(x0) - 1.0 / LOG2 + slope * shat[k]
            for i in range(K):
                if i != k:
                    objective.affine.add(_wname(i), Hh[k], slope)
    elif mode == "eh":
        for l in range(L):
            e = eh_expr(l)
            objective.affine.const -= e.const
            for v, G in e.terms.items():
                objective.affine.add(v, -G)
    elif mode == "min_power":
        eye = np.eye(cfg.M)
        for k in range(K):
            objective.affine.add(_wname(k), eye)
        for l in range(L):
            objective.affine.add(_vname(l), eye)
    else:
        raise ValueError(f"unknown beam-step mode {mode!r}")

    return ConvexSubproblem(
        name=f"{name}_{mode}",
        blocks=blocks,
        projections=[],
        affine_le=power,
        concave_ge=concave,
        objective=objective,
        meta={"pmax": cfg.P_max, "epsilon": epsilon, "mode": mode},
    )


def assemble_phase_step(lift: LiftedChannels, cfg: SystemConfig, W_fixed: list,
                        V_fixed: list, epsilon: Optional[float],
                        interference0: Optional[list] = None,
                        objective: str = "rate",
                        penalty: Optional[PenaltyBound] = None,
                        Phi: float = 0.0) -> ConvexSubproblem:
    """Phase-only subproblem at fixed beams: all traces are linear in U.

    With objective="rate" the SCA rate bound is maximized (exact
    signal/interference terms, interference log linearized at
    `interference0[k]` in watts); with objective="eh" the total harvested
    power is maximized (pure linear objective). Constraints are the exact
    SINR/harvest rows either way. The alternating baseline uses it bare and
    recovers rank one by randomization; the penalized descent loop passes a
    linearized rank penalty (`penalty`, weight `Phi`) so the pass descends
    the same penalized objective as the joint step.
    """
    sp = _scaled_parts(lift, cfg)
    K, L = cfg.K, cfg.L
    n1 = cfg.N + 1
    blocks = {"U": HermitianBlock("U", n1, unit_diag=True)}
    Wb = [w / sp.pmax for w in W_fixed]
    Vb = [v / sp.pmax for v in V_fixed]
    # push the fixed beams through the lifted maps: Tr(W Z_k(U)) = Re Tr(M^H U)
    M_rate = [[hermitian_part(sp.Lhat[k] @ Wb[i] @ sp.Lhat[k].conj().T)
               for i in range(K)] for k in range(K)]
    acc = sum(Wb) + sum(Vb)
    M_eh = [hermitian_part(sp.Lthat[l] @ acc @ sp.Lthat[l].conj().T) for l in range(L)]

    obj_mode = objective
    objective = Objective()
    if obj_mode == "rate":
        if interference0 is None or len(interference0) != K:
            raise ValueError("objective='rate' needs per-user expansion interference")
        for k in range(K):
            affine = AffineExpr(const=sp.shat[k])
            for i in range(K):
                affine.add("U", M_rate[k][i])
            objective.neglogs.append(NegLogTerm(1.0 / LOG2, affine, []))
            x0 = interference0[k] / (cfg.P_max * sp.norm_L2[k]) + sp.shat[k]
            if x0 <= 0:
                raise ValueError("expansion interference must keep the log argument positive")
            slope = 1.0 / (x0 * LOG2)
            objective.affine.const += math.log2(x0) - 1.0 / LOG2 + slope * sp.shat[k]
            for i in range(K):
                if i != k:
                    objective.affine.add("U", M_rate[k][i], slope)
    elif obj_mode == "eh":
        for l in range(L):
            objective.affine.add("U", M_eh[l], -sp.rho[l])
    else:
        raise ValueError(f"unknown phase-step objective {obj_mode!r}")
    if penalty is not None and Phi > 0:
        _penalty_objective(penalty, Phi, objective)

    concave = []
    for k in range(K):
        gam = cfg.Gamma_req[k]
        if gam <= 0:
            continue
        affine = AffineExpr()
        affine.add("U", M_rate[k][k], 1.0 / gam)
        for i in range(K):
            if i != k:
                affine.add("U", M_rate[k][i], -1.0)
        concave.append(ConcaveGe(f"sinr_{k}", affine, [], sp.shat[k]))
    for l in range(L):
        if cfg.E_min[l] > 0:
            affine = AffineExpr()
            affine.add("U", M_eh[l], sp.rho[l])
            concave.append(ConcaveGe(f"ehr_min_{l}", affine, [], cfg.E_min[l]))
    if epsilon is not None and epsilon > 0:
        affine = AffineExpr()
        for l in range(L):
            affine.add("U", M_eh[l], sp.rho[l])
        concave.append(ConcaveGe("eh_total", affine, [], epsilon))

    return ConvexSubproblem(
        name="phase_step",
        blocks=blocks,
        projections=[],
        affine_le=[],
        concave_ge=concave,
        objective=objective,
        meta={"pmax": sp.pmax, "epsilon": epsilon},
    )


# ---------------------------------------------------------------------------
# cvxpy / Clarabel adapter


def solve(sp: ConvexSubproblem, tol: float = DEFAULT_SOLVER_TOL) -> SolveResult:
    """Solve one subproblem; statuses: optimal, infeasible, numerical-failure.

    Values are returned in physical units (block scale applied); the reported
    objective is re-evaluated numerically from the returned matrices.
    """
    t_start = time.perf_counter()
    cvars = {b.name: cp.Variable((b.dim, b.dim), hermitian=True, name=b.name)
             for b in sp.blocks.values()}
    cons = []
    for b in sp.blocks.values():
        if b.psd:
            cons.append(cvars[b.name] >> 0)
        if b.unit_diag:
            cons.append(cp.real(cp.diag(cvars[b.name])) == np.ones(b.dim))
    for p in sp.projections:
        cons.append(cvars[p.small] == p.map.conj().T @ cvars[p.big] @ p.map)

    # one epigraph per distinct Frobenius-square signature
    epi: dict[tuple, cp.Variable] = {}

    def epi_for(q: QuadTerm) -> cp.Variable:
        key = tuple(sorted(q.vars))
        if key not in epi:
            t = cp.Variable(name="epi_" + "_".join(key))
            expr = sum(cvars[v] for v in q.vars) if len(q.vars) > 1 else cvars[q.vars[0]]
            cons.append(t >= 0.5 * cp.sum_squares(expr))
            epi[key] = t
        return epi[key]

    def affine_cvx(a: AffineExpr, factor: float = 1.0):
        acc = a.const * factor
        for v, G in a.terms.items():
            acc = acc + cp.real(cp.trace((factor * G).conj().T @ cvars[v]))
        return acc

    for c in sp.affine_le:
        denom = _row_denom(c.expr, [], c.bound)
        cons.append(affine_cvx(c.expr, 1.0 / denom) <= c.bound / denom)
    for c in sp.concave_ge:
        denom = _row_denom(c.affine, c.quads, c.bound)
        lhs = affine_cvx(c.affine, 1.0 / denom)
        for q in c.quads:
            lhs = lhs - (q.weight / denom) * epi_for(q)
        cons.append(lhs >= c.bound / denom)

    # normalize the whole objective so its largest coefficient is O(1); the
    # rate tangents can carry slopes ~ 1/noise that otherwise stall Clarabel
    obj_scale = max(
        [1.0, sp.objective.affine.coefficient_norm()]
        + [abs(q.weight) for q in sp.objective.quads]
    )
    obj = affine_cvx(sp.objective.affine, 1.0 / obj_scale)
    for q in sp.objective.quads:
        obj = obj + (q.weight / obj_scale) * epi_for(q)
    if sp.objective.neglogs:
        # group by scale; stack the concave log arguments (workaround for a
        # cvxpy shape bug when log gets a scalar expression with sum_squares)
        by_scale: dict[float, list] = {}
        for t in sp.objective.neglogs:
            arg = affine_cvx(t.affine)
            for q in t.quads:
                arg = arg - q.weight * epi_for(q)
            by_scale.setdefault(t.scale, []).append(arg)
        for scale, args in by_scale.items():
            obj = obj - (scale / obj_scale) * cp.sum(cp.log(cp.hstack(args)))

    problem = cp.Problem(cp.Minimize(obj), cons)
    failure = None
    for attempt in (0, 1):
        try:
            if attempt == 0:
                problem.solve(
                    solver=cp.CLARABEL,
                    tol_gap_abs=tol,
                    tol_gap_rel=tol,
                    tol_feas=tol,
                    verbose=False,
                )
            else:
                # relaxed retry: accept almost-solved points, flagged below
                problem.solve(
                    solver=cp.CLARABEL,
                    tol_gap_abs=tol * 100,
                    tol_gap_rel=tol * 100,
                    tol_feas=tol * 100,
                    reduced_tol_gap_abs=1e-4,
                    reduced_tol_gap_rel=1e-4,
                    reduced_tol_feas=1e-5,
                    max_iter=400,
                    verbose=False,
                )
            failure = None
        except Exception as exc:  # canonicalization or solver blowup
            failure = exc
            continue
        if problem.status not in (None, "solver_error", "unbounded", "unbounded_inaccurate"):
            break
    if failure is not None:
        return SolveResult(
            status="numerical-failure",
            values={},
            objective=None,
            solver_iterations=0,
            solve_time=time.perf_counter() - t_start,
            residuals={"exception": str(failure)},
        )

    status = problem.status
    inaccurate = status.endswith("inaccurate") or attempt > 0
    elapsed = time.perf_counter() - t_start
    iters = 0
    if problem.solver_stats is not None and problem.solver_stats.num_iters is not None:
        iters = int(problem.solver_stats.num_iters)

    if status in (cp.OPTIMAL, "optimal_inaccurate"):
        scaled = {}
        for b in sp.blocks.values():
            val = cvars[b.name].value
            if val is None:
                return SolveResult("numerical-failure", {}, None, iters, elapsed, inaccurate)
            scaled[b.name] = hermitian_part(np.asarray(val, dtype=complex))
        values = {name: sp.blocks[name].scale * mat for name, mat in scaled.items()}
        try:
            objective = sp.objective_value(scaled)
        except FloatingPointError:
            objective = None
        return SolveResult(
            status="optimal",
            values=values,
            objective=objective,
            solver_iterations=iters,
            solve_time=elapsed,
            inaccurate=inaccurate,
            scaled_values=scaled,
            residuals=sp.constraint_residuals(scaled),
        )
    if status in (cp.INFEASIBLE, "infeasible_inaccurate"):
        return SolveResult("infeasible", {}, None, iters, elapsed, inaccurate)
    return SolveResult("numerical-failure", {}, None, iters, elapsed, inaccurate)
