"""Lifted-form identities and the two metric evaluation paths."""

import math

import numpy as np
import pytest

from irs_swipt.channel import ChannelSet, SystemConfig, equivalent_channel, generate_channels
from irs_swipt.lifting import (
    LiftedSolution,
    build_lifted,
    composite_channels,
    dominant_eigvec,
    evaluate_metrics,
    evaluate_metrics_lifted,
    hermitian_part,
    lifted_gram_terms,
    project_Z,
    theta_from_u,
    trace_via_frobenius,
    u_from_theta,
)

from conftest import random_hermitian, random_psd, unit_modulus


def lifted_quadratic(L, u, w):
    """Tr(U L W L^H) for rank-one U = uu^H and W = ww^H."""
    U = np.outer(u, u.conj())
    W = np.outer(w, w.conj())
    return float(np.trace(U @ L @ W @ L.conj().T).real)


# ---------------------------------------------------------------------------
# lifted maps


def test_build_lifted_structure(desk_channels, desk_cfg):
    lift = build_lifted(desk_channels)
    N, M = desk_cfg.N, desk_cfg.M
    assert len(lift.L) == desk_cfg.K and len(lift.Ltilde) == desk_cfg.L
    for k in range(desk_cfg.K):
        Lk = lift.L[k]
        assert Lk.shape == (N + 1, M)
        expected = np.vstack([
            desk_channels.h_r[k].conj()[:, None] * desk_channels.H,
            desk_channels.h_b[k].conj()[None, :],
        ])
        assert np.allclose(Lk, expected, rtol=1e-15, atol=0)


def test_lifted_quadratic_matches_vector_form(rng):
    cfg = SystemConfig(M=2, N=3, K=1, L=1)
    ch = generate_channels(cfg, 3)
    lift = build_lifted(ch)
    for _ in range(50):
        theta = unit_modulus(rng, cfg.N)
        w = rng.normal(size=cfg.M) + 1j * rng.normal(size=cfg.M)
        h = equivalent_channel(ch.h_b[0], ch.h_r[0], ch.H, theta)
        truth = abs(np.vdot(h, w)) ** 2
        lifted = lifted_quadratic(lift.L[0], u_from_theta(theta), w)
        assert lifted == pytest.approx(truth, rel=1e-9)


def test_lifted_quadratic_no_elements(rng):
    cfg = SystemConfig(M=3, N=0, K=1, L=1)
    ch = generate_channels(cfg, 4)
    lift = build_lifted(ch)
    assert lift.L[0].shape == (1, 3)
    assert np.allclose(lift.L[0][0], ch.h_b[0].conj())
    w = rng.normal(size=3) + 1j * rng.normal(size=3)
    truth = abs(np.vdot(ch.h_b[0], w)) ** 2
    lifted = lifted_quadratic(lift.L[0], u_from_theta(np.zeros(0)), w)
    assert lifted == pytest.approx(truth, rel=1e-10)


def test_lifted_quadratic_global_phase_invariant(tiny_lift, rng):
    theta = unit_modulus(rng, 2)
    w = rng.normal(size=2) + 1j * rng.normal(size=2)
    u = u_from_theta(theta)
    base = lifted_quadratic(tiny_lift.L[0], u, w)
    for phi in (0.3, 1.7, -2.4):
        rot = lifted_quadratic(tiny_lift.L[0], np.exp(1j * phi) * u, w)
        assert rot == pytest.approx(base, rel=1e-12)


def test_project_Z_identity_and_zero(desk_lift):
    L0 = desk_lift.L[0]
    n1 = L0.shape[0]
    Z = project_Z(L0, np.eye(n1))
    assert np.allclose(Z, L0.conj().T @ L0, rtol=1e-12, atol=0)
    assert np.allclose(project_Z(L0, np.zeros((n1, n1))), 0.0)


def test_project_Z_rank_one(desk_lift, rng):
    L0 = desk_lift.L[0]
    n1 = L0.shape[0]
    u = unit_modulus(rng, n1)
    Z = project_Z(L0, np.outer(u, u.conj()))
    col = L0.conj().T @ u
    assert np.allclose(Z, np.outer(col, col.conj()), rtol=1e-10, atol=1e-25)
    vals = np.linalg.eigvalsh(Z)
    assert vals[-1] > 0
    assert np.all(np.abs(vals[:-1]) <= 1e-10 * vals[-1])


def test_project_Z_rejects_mismatch_and_non_hermitian(desk_lift):
    with pytest.raises(ValueError):
        project_Z(desk_lift.L[0], np.eye(3))
    n1 = desk_lift.L[0].shape[0]
    skew = np.zeros((n1, n1), dtype=complex)
    skew[0, 1] = 1.0
    with pytest.raises(ValueError):
        project_Z(desk_lift.L[0], skew)


# ---------------------------------------------------------------------------
# trace via Frobenius norms


def test_trace_via_frobenius_identity_cases():
    I2 = np.eye(2)
    assert trace_via_frobenius(I2, I2) == pytest.approx(2.0, rel=1e-12)
    A = np.array([[1.0, 2.0 - 1.0j], [2.0 + 1.0j, -3.0]])
    assert trace_via_frobenius(A, np.zeros((2, 2))) == pytest.approx(0.0, abs=1e-12)


def test_trace_via_frobenius_random_pairs(rng):
    for _ in range(25):
        A = random_hermitian(rng, 4)
        B = random_hermitian(rng, 4)
        truth = float(np.trace(A @ B).real)
        assert trace_via_frobenius(A, B) == pytest.approx(truth, rel=1e-10, abs=1e-12)


def test_trace_via_frobenius_mismatched_scales(rng):
    # the cross term must survive a 10-decade norm gap between operands
    for _ in range(25):
        A = random_hermitian(rng, 4, scale=1.0)
        B = random_hermitian(rng, 4, scale=1e-10)
        truth = float(np.trace(A @ B).real)
        got = trace_via_frobenius(A, B)
        scale = np.linalg.norm(A) * np.linalg.norm(B)
        assert abs(got - truth) <= 1e-12 * scale


def test_trace_via_frobenius_rejects_non_hermitian():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        trace_via_frobenius(A, np.eye(2))
    with pytest.raises(ValueError):
        trace_via_frobenius(np.eye(2), A)
    with pytest.raises(ValueError):
        trace_via_frobenius(np.eye(2), np.eye(3))


# ---------------------------------------------------------------------------
# phase vector round trips


def test_u_round_trip(rng):
    theta = unit_modulus(rng, 6)
    u = u_from_theta(theta)
    assert u.shape == (7,)
    assert np.allclose(theta_from_u(u), theta, rtol=1e-12)
    # gauge: a rotated u recovers the same physical phases
    assert np.allclose(theta_from_u(np.exp(1j * 0.9) * u), theta, rtol=1e-12)


def test_theta_from_u_rejects_zero_dummy():
    with pytest.raises(ValueError):
        theta_from_u(np.array([1.0 + 0j, 0.0]))


def test_dominant_eigvec_gauge(rng):
    X = random_psd(rng, 5)
    lam, q = dominant_eigvec(X)
    vals = np.linalg.eigvalsh(hermitian_part(X))
    assert lam == pytest.approx(float(vals[-1]), rel=1e-12)
    assert np.linalg.norm(q) == pytest.approx(1.0, rel=1e-12)
    assert abs(np.angle(q[np.flatnonzero(np.abs(q) > 1e-10)[0]])) < 1e-10
    # invariant under an input phase rotation of the matrix's eigenvectors
    lam2, q2 = dominant_eigvec(X.copy())
    assert np.allclose(q, q2)


def test_composite_channels_match_equivalent(desk_channels, desk_lift, desk_cfg, rng):
    theta = unit_modulus(rng, desk_cfg.N)
    h, g = composite_channels(desk_lift, theta)
    for k in range(desk_cfg.K):
        ref = equivalent_channel(desk_channels.h_b[k], desk_channels.h_r[k],
                                 desk_channels.H, theta)
        assert np.allclose(h[k], ref, rtol=1e-10, atol=1e-18)
    for l in range(desk_cfg.L):
        ref = equivalent_channel(desk_channels.g_b[l], desk_channels.g_r[l],
                                 desk_channels.H, theta)
        assert np.allclose(g[l], ref, rtol=1e-10, atol=1e-18)


# ---------------------------------------------------------------------------
# metrics, vector path


def _manual_set(h_b, g_b):
    M = len(h_b[0])
    return ChannelSet(
        H=np.zeros((0, M), dtype=complex),
        h_b=tuple(np.asarray(v, dtype=complex) for v in h_b),
        h_r=tuple(np.zeros(0, dtype=complex) for _ in h_b),
        g_b=tuple(np.asarray(v, dtype=complex) for v in g_b),
        g_r=tuple(np.zeros(0, dtype=complex) for _ in g_b),
    )


def test_metrics_single_user_closed_form():
    P = 7.0
    cfg = SystemConfig(M=2, N=0, K=1, L=1, sigma2=1.0, eta=0.5,
                       Gamma_req=0.0, E_min=0.0)
    ch = _manual_set([[1.0, 0.0]], [[0.0, 1.0]])
    w = [np.array([math.sqrt(P), 0.0], dtype=complex)]
    v = [np.zeros(2, dtype=complex)]
    m = evaluate_metrics(ch, w, v, np.zeros(0), cfg)
    assert m.sinr[0] == pytest.approx(P, rel=1e-12)
    assert m.rate[0] == pytest.approx(math.log2(1.0 + P), rel=1e-12)
    assert m.sum_rate == pytest.approx(m.rate[0])


def test_metrics_harvest_closed_form():
    cfg = SystemConfig(M=2, N=0, K=1, L=1, sigma2=1.0, eta=0.5,
                       Gamma_req=0.0, E_min=0.0)
    # g^H w = 2 at the harvester, no energy beams: 0.5 * |2|^2 = 2
    ch = _manual_set([[0.0, 1.0]], [[1.0, 0.0]])
    w = [np.array([2.0, 0.0], dtype=complex)]
    v = [np.zeros(2, dtype=complex)]
    m = evaluate_metrics(ch, w, v, np.zeros(0), cfg)
    assert m.harvested[0] == pytest.approx(2.0, rel=1e-12)
    assert m.total_harvested == pytest.approx(2.0, rel=1e-12)


def test_metrics_two_user_brute_force(desk_channels, desk_cfg, rng):
    w = [rng.normal(size=desk_cfg.M) + 1j * rng.normal(size=desk_cfg.M)
         for _ in range(desk_cfg.K)]
    v = [rng.normal(size=desk_cfg.M) + 1j * rng.normal(size=desk_cfg.M)
         for _ in range(desk_cfg.L)]
    theta = unit_modulus(rng, desk_cfg.N)
    m = evaluate_metrics(desk_channels, w, v, theta, desk_cfg)
    h = [equivalent_channel(desk_channels.h_b[k], desk_channels.h_r[k],
                            desk_channels.H, theta) for k in range(desk_cfg.K)]
    g = [equivalent_channel(desk_channels.g_b[l], desk_channels.g_r[l],
                            desk_channels.H, theta) for l in range(desk_cfg.L)]
    for k in range(desk_cfg.K):
        sig = abs(np.vdot(h[k], w[k])) ** 2
        interf = sum(abs(np.vdot(h[k], w[i])) ** 2
                     for i in range(desk_cfg.K) if i != k)
        sinr = sig / (interf + desk_cfg.sigma2[k])
        assert m.sinr[k] == pytest.approx(sinr, rel=1e-10)
        assert m.rate[k] == pytest.approx(math.log2(1.0 + sinr), rel=1e-10)
    for l in range(desk_cfg.L):
        p = sum(abs(np.vdot(g[l], w[k])) ** 2 for k in range(desk_cfg.K))
        p += sum(abs(np.vdot(g[l], v[lp])) ** 2 for lp in range(desk_cfg.L))
        assert m.harvested[l] == pytest.approx(desk_cfg.eta[l] * p, rel=1e-10)
    assert m.sum_rate == pytest.approx(sum(m.rate), rel=1e-12)
    assert m.total_harvested == pytest.approx(sum(m.harvested), rel=1e-12)


# ---------------------------------------------------------------------------
# metrics, lifted path


def test_lifted_metrics_match_vector_on_rank_one(desk_channels, desk_lift, desk_cfg, rng):
    scale = math.sqrt(desk_cfg.P_max / (desk_cfg.K + desk_cfg.L))
    w = [scale * (rng.normal(size=desk_cfg.M) + 1j * rng.normal(size=desk_cfg.M))
         for _ in range(desk_cfg.K)]
    v = [scale * (rng.normal(size=desk_cfg.M) + 1j * rng.normal(size=desk_cfg.M))
         for _ in range(desk_cfg.L)]
    theta = unit_modulus(rng, desk_cfg.N)
    u = u_from_theta(theta)
    sol = LiftedSolution(
        W=[np.outer(wk, wk.conj()) for wk in w],
        V=[np.outer(vl, vl.conj()) for vl in v],
        U=np.outer(u, u.conj()),
    )
    lifted = evaluate_metrics_lifted(desk_lift, sol, desk_cfg)
    vector = evaluate_metrics(desk_channels, w, v, theta, desk_cfg)
    for k in range(desk_cfg.K):
        assert lifted.sinr[k] == pytest.approx(vector.sinr[k], rel=1e-8)
        assert lifted.rate[k] == pytest.approx(vector.rate[k], rel=1e-8)
    for l in range(desk_cfg.L):
        assert lifted.harvested[l] == pytest.approx(vector.harvested[l], rel=1e-8)
    assert lifted.sum_rate == pytest.approx(vector.sum_rate, rel=1e-8)
    assert lifted.total_harvested == pytest.approx(vector.total_harvested, rel=1e-8)


def test_lifted_metrics_zero_beams(desk_lift, desk_cfg):
    n1 = desk_lift.n_plus_1
    M = desk_cfg.M
    sol = LiftedSolution(
        W=[np.zeros((M, M), dtype=complex) for _ in range(desk_cfg.K)],
        V=[np.zeros((M, M), dtype=complex) for _ in range(desk_cfg.L)],
        U=np.eye(n1, dtype=complex),
    )
    m = evaluate_metrics_lifted(desk_lift, sol, desk_cfg)
    assert m.sinr == (0.0,) * desk_cfg.K
    assert m.sum_rate == 0.0
    assert m.harvested == (0.0,) * desk_cfg.L


def test_lifted_metrics_scaling_linearity(desk_lift, desk_cfg, rng):
    W = [random_psd(rng, desk_cfg.M) for _ in range(desk_cfg.K)]
    V = [random_psd(rng, desk_cfg.M) for _ in range(desk_cfg.L)]
    theta = unit_modulus(rng, desk_cfg.N)
    u = u_from_theta(theta)
    U = np.outer(u, u.conj())
    base = evaluate_metrics_lifted(desk_lift, LiftedSolution(W=W, V=V, U=U), desk_cfg)
    doubled = evaluate_metrics_lifted(
        desk_lift, LiftedSolution(W=[2 * x for x in W], V=V, U=U), desk_cfg)
    # harvested power is affine in the beam Gram matrices
    for l in range(desk_cfg.L):
        with_v = base.harvested[l]
        only_v = evaluate_metrics_lifted(
            desk_lift,
            LiftedSolution(W=[0 * x for x in W], V=V, U=U), desk_cfg).harvested[l]
        w_part = with_v - only_v
        assert doubled.harvested[l] == pytest.approx(only_v + 2 * w_part, rel=1e-9)
    # SINR numerator and interference both double
    A, _, _ = lifted_gram_terms(desk_lift, LiftedSolution(W=W, V=V, U=U))
    for k in range(desk_cfg.K):
        sig = A[k, k]
        interf = sum(A[k, i] for i in range(desk_cfg.K) if i != k)
        expect = 2 * sig / (2 * interf + desk_cfg.sigma2[k])
        assert doubled.sinr[k] == pytest.approx(expect, rel=1e-9)
