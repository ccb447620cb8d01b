"""End-to-end behavior of the MM optimizer, extraction, and baselines."""

import dataclasses
import math

import numpy as np
import pytest

from irs_swipt.channel import SystemConfig, generate_channels
from irs_swipt.lifting import (
    LiftedSolution,
    build_lifted,
    evaluate_metrics_lifted,
    u_from_theta,
)
from irs_swipt.optimizer import (
    InitInfeasible,
    MMConfig,
    RankExtractionError,
    baseline_ao_sdr,
    baseline_random_phase,
    compute_Emax,
    extract_rank_one,
    initialize,
    mm_solve,
    pareto_sweep,
)

from conftest import unit_modulus


@pytest.fixture(scope="module")
def small_cfg():
    return SystemConfig(M=3, N=4, K=2, L=2)


@pytest.fixture(scope="module")
def small_lift(small_cfg):
    return build_lifted(generate_channels(small_cfg, 314))


@pytest.fixture(scope="module")
def small_solution(small_lift, small_cfg):
    return mm_solve(small_lift, small_cfg, 0.0)


def _point_metrics(lift, pt, cfg):
    cur = LiftedSolution(W=list(pt.W0), V=list(pt.V0), U=pt.U0)
    return evaluate_metrics_lifted(lift, cur, cfg)


# ---------------------------------------------------------------------------
# configuration guard


def test_mmconfig_validation():
    MMConfig().validate()
    bad = [
        dict(max_iters=0),
        dict(obj_rel_tol=0.0),
        dict(rank_tol=-1.0),
        dict(phi_growth=1.0),
        dict(phi_max_escalations=-1),
        dict(phi_cap=0.0),
        dict(solver_tol=0.0),
    ]
    for kw in bad:
        with pytest.raises(ValueError):
            MMConfig(**kw).validate()


# ---------------------------------------------------------------------------
# initialization


def test_initialize_is_feasible(desk_lift, desk_cfg):
    pt = initialize(desk_lift, desk_cfg, np.random.default_rng(0))
    mets = _point_metrics(desk_lift, pt, desk_cfg)
    for k in range(desk_cfg.K):
        assert mets.sinr[k] >= desk_cfg.Gamma_req[k] * (1 - 1e-6)
    for l in range(desk_cfg.L):
        assert mets.harvested[l] >= desk_cfg.E_min[l] * (1 - 1e-6)
    total = sum(float(np.trace(m).real) for m in list(pt.W0) + list(pt.V0))
    assert total <= desk_cfg.P_max * (1 + 1e-6)


def test_initialize_deterministic(desk_lift, desk_cfg):
    a = initialize(desk_lift, desk_cfg, np.random.default_rng(0))
    b = initialize(desk_lift, desk_cfg, np.random.default_rng(99))
    for x, y in zip(list(a.W0) + list(a.V0), list(b.W0) + list(b.V0)):
        assert np.array_equal(x, y)
    assert np.array_equal(a.U0, b.U0)


def test_initialize_unknown_strategy():
    cfg = SystemConfig(M=2, N=2, K=1, L=1)
    lift = build_lifted(generate_channels(cfg, 1))
    with pytest.raises(ValueError):
        initialize(lift, cfg, np.random.default_rng(0), strategy="bogus")


def test_initialize_without_irs():
    cfg = SystemConfig(M=2, N=0, K=1, L=1)
    lift = build_lifted(generate_channels(cfg, 4))
    pt = initialize(lift, cfg, np.random.default_rng(0))
    assert pt.U0.shape == (1, 1)
    mets = _point_metrics(lift, pt, cfg)
    assert mets.sinr[0] >= cfg.Gamma_req[0] * (1 - 1e-6)


def test_initialize_raises_on_absurd_floor():
    cfg = SystemConfig(M=2, N=2, K=1, L=1, E_min=1e3)
    lift = build_lifted(generate_channels(cfg, 4))
    with pytest.raises(InitInfeasible):
        initialize(lift, cfg, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# rank-one inversion


def test_extract_rank_one_round_trip(rng):
    M, N, K, L = 3, 4, 2, 1
    theta = unit_modulus(rng, N)
    # rotated gauge: dummy coordinate carries a global phase
    u = u_from_theta(theta) * np.exp(1j * 0.7)
    w = [rng.standard_normal(M) + 1j * rng.standard_normal(M) for _ in range(K)]
    v = [rng.standard_normal(M) + 1j * rng.standard_normal(M) for _ in range(L)]
    sol = LiftedSolution(
        W=[np.outer(wk, wk.conj()) for wk in w],
        V=[np.outer(vl, vl.conj()) for vl in v],
        U=np.outer(u, u.conj()))
    w_out, v_out, theta_out = extract_rank_one(sol)
    assert np.allclose(theta_out, theta, atol=1e-9)
    for wk, wo in zip(w, w_out):
        assert np.allclose(np.outer(wo, wo.conj()), np.outer(wk, wk.conj()),
                           atol=1e-9 * np.linalg.norm(wk) ** 2)
    for vl, vo in zip(v, v_out):
        assert np.allclose(np.outer(vo, vo.conj()), np.outer(vl, vl.conj()),
                           atol=1e-9 * np.linalg.norm(vl) ** 2)


def test_extract_rank_one_zero_blocks(rng):
    theta = unit_modulus(rng, 3)
    u = u_from_theta(theta)
    w = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    sol = LiftedSolution(
        W=[np.outer(w, w.conj())],
        V=[np.zeros((2, 2), dtype=complex)],
        U=np.outer(u, u.conj()))
    _, v_out, _ = extract_rank_one(sol)
    assert np.all(v_out[0] == 0)


def test_extract_rank_one_rejects_high_rank(rng):
    theta = unit_modulus(rng, 2)
    u = u_from_theta(theta)
    U1 = np.outer(u, u.conj())
    with pytest.raises(RankExtractionError):
        extract_rank_one(LiftedSolution(W=[np.eye(2, dtype=complex)], V=[],
                                        U=np.eye(3, dtype=complex)))
    with pytest.raises(RankExtractionError):
        extract_rank_one(LiftedSolution(W=[np.eye(2, dtype=complex)], V=[], U=U1))


# ---------------------------------------------------------------------------
# MM solve


def test_mm_solve_converges_and_extracts(small_solution, small_cfg):
    bs = small_solution
    assert bs.converged
    assert bs.iterations <= MMConfig().max_iters
    assert bs.w[0].shape == (small_cfg.M,)
    assert np.allclose(np.abs(bs.theta), 1.0, atol=1e-9)
    assert bs.total_power <= small_cfg.P_max * (1 + 1e-6)
    mets = bs.metrics
    for k in range(small_cfg.K):
        assert mets.sinr[k] >= small_cfg.Gamma_req[k] * (1 - 1e-5)
    for l in range(small_cfg.L):
        assert mets.harvested[l] >= small_cfg.E_min[l] * (1 - 1e-5)
    assert bs.lifted is not None
    assert isinstance(bs.extraction_fallback, bool)


def test_mm_objective_descends_within_each_weight(small_solution):
    bs = small_solution
    assert len(bs.objective_history) == len(bs.phi_history)
    assert len(bs.objective_history) >= 2
    for i in range(1, len(bs.objective_history)):
        if bs.phi_history[i] == bs.phi_history[i - 1]:
            prev = bs.objective_history[i - 1]
            assert bs.objective_history[i] <= prev + 1e-8 * max(1.0, abs(prev))


def test_mm_solve_deterministic(small_lift, small_cfg, small_solution):
    again = mm_solve(small_lift, small_cfg, 0.0)
    assert again.metrics.sum_rate == small_solution.metrics.sum_rate
    assert np.array_equal(again.theta, small_solution.theta)


def test_mm_solve_matches_closed_form_without_irs():
    cfg = SystemConfig(M=2, N=0, K=1, L=1, Gamma_req=0.0, E_min=0.0)
    ch = generate_channels(cfg, 21)
    lift = build_lifted(ch)
    bs = mm_solve(lift, cfg, 0.0)
    best = math.log2(1 + cfg.P_max * np.linalg.norm(ch.h_b[0]) ** 2 / cfg.sigma2[0])
    assert bs.metrics.sum_rate == pytest.approx(best, rel=1e-3)


def test_mm_solve_meets_active_harvest_floor(small_lift, small_cfg, small_solution):
    emax = compute_Emax(small_lift, small_cfg)
    eps = 0.5 * emax
    bs = mm_solve(small_lift, small_cfg, eps)
    assert bs.metrics.total_harvested >= eps * (1 - 1e-6)
    # an active floor can only cost rate
    assert bs.metrics.sum_rate <= small_solution.metrics.sum_rate * (1 + 1e-6)


# ---------------------------------------------------------------------------
# harvest ceiling


def test_emax_scales_quadratically_with_harvest_channels():
    cfg = SystemConfig(M=2, N=3, K=1, L=1, E_min=0.0)
    ch = generate_channels(cfg, 8)
    e1 = compute_Emax(build_lifted(ch), cfg)
    ch2 = dataclasses.replace(ch, g_b=tuple(2.0 * x for x in ch.g_b),
                              g_r=tuple(2.0 * x for x in ch.g_r))
    e2 = compute_Emax(build_lifted(ch2), cfg)
    assert e2 == pytest.approx(4.0 * e1, rel=0.01)


def test_emax_respects_norm_bound():
    cfg = SystemConfig(M=2, N=3, K=1, L=1, E_min=0.0)
    ch = generate_channels(cfg, 8)
    emax = compute_Emax(build_lifted(ch), cfg)
    bound = 0.0
    h2 = np.linalg.norm(ch.H, 2)
    for l in range(cfg.L):
        amp = np.linalg.norm(ch.g_b[l]) + h2 * np.linalg.norm(ch.g_r[l])
        bound += cfg.eta[l] * cfg.P_max * amp ** 2
    assert 0 < emax <= bound * (1 + 1e-6)


# ---------------------------------------------------------------------------
# trade-off sweep


def test_pareto_sweep_structure_and_tradeoff(small_lift, small_cfg):
    deltas = [0.25, 0.5, 0.75]
    pts = pareto_sweep(small_lift, small_cfg, deltas=deltas)
    assert [p.delta for p in pts] == deltas
    assert all(p.status == "ok" for p in pts)
    ratios = [p.epsilon / p.delta for p in pts]
    assert max(ratios) - min(ratios) <= 1e-9 * max(1.0, max(ratios))
    for p in pts:
        assert p.solution.metrics.total_harvested >= p.epsilon * (1 - 1e-6)
        assert p.sum_rate == p.solution.metrics.sum_rate
    for a, b in zip(pts, pts[1:]):
        assert b.sum_rate <= a.sum_rate + 1e-6 * max(1.0, abs(a.sum_rate))
        assert b.total_harvested >= a.total_harvested - 1e-6 * max(
            1.0, a.total_harvested)


# ---------------------------------------------------------------------------
# baselines


def test_baselines_deterministic(small_lift, small_cfg):
    a = baseline_ao_sdr(small_lift, small_cfg, 0.0, np.random.default_rng(42))
    b = baseline_ao_sdr(small_lift, small_cfg, 0.0, np.random.default_rng(42))
    assert a.metrics.sum_rate == b.metrics.sum_rate
    assert np.array_equal(a.theta, b.theta)
    c = baseline_random_phase(small_lift, small_cfg, 0.0,
                              np.random.default_rng(7))
    d = baseline_random_phase(small_lift, small_cfg, 0.0,
                              np.random.default_rng(7))
    assert np.array_equal(c.theta, d.theta)
    assert c.metrics.sum_rate == d.metrics.sum_rate


def test_baselines_feasible(small_lift, small_cfg):
    for bs in (baseline_ao_sdr(small_lift, small_cfg, 0.0,
                               np.random.default_rng(5)),
               baseline_random_phase(small_lift, small_cfg, 0.0,
                                     np.random.default_rng(5))):
        assert np.allclose(np.abs(bs.theta), 1.0, atol=1e-9)
        assert bs.total_power <= small_cfg.P_max * (1 + 1e-6)
        for k in range(small_cfg.K):
            assert bs.metrics.sinr[k] >= small_cfg.Gamma_req[k] * (1 - 1e-5)
        for l in range(small_cfg.L):
            assert bs.metrics.harvested[l] >= small_cfg.E_min[l] * (1 - 1e-5)


def test_all_schemes_agree_without_irs():
    cfg = SystemConfig(M=2, N=0, K=1, L=1)
    lift = build_lifted(generate_channels(cfg, 17))
    r_mm = mm_solve(lift, cfg, 0.0).metrics.sum_rate
    r_ao = baseline_ao_sdr(lift, cfg, 0.0, np.random.default_rng(0)).metrics.sum_rate
    r_rp = baseline_random_phase(lift, cfg, 0.0,
                                 np.random.default_rng(0)).metrics.sum_rate
    assert r_ao == pytest.approx(r_mm, rel=1e-3)
    assert r_rp == pytest.approx(r_mm, rel=1e-3)


def test_random_phase_raises_when_floors_unreachable():
    cfg = SystemConfig(M=2, N=2, K=1, L=1, E_min=1e3)
    lift = build_lifted(generate_channels(cfg, 4))
    with pytest.raises(InitInfeasible):
        baseline_random_phase(lift, cfg, 0.0, np.random.default_rng(0))
