"""Channel generation and scenario-config plumbing."""

import math

import numpy as np
import pytest

from irs_swipt.channel import (
    SystemConfig,
    config_from_mapping,
    db_to_linear,
    dbm_to_watts,
    equivalent_channel,
    generate_channels,
    linear_to_db,
    load_system_config,
    path_loss,
    watts_to_dbm,
)

from conftest import unit_modulus


# ---------------------------------------------------------------------------
# unit conversions and path loss


def test_path_loss_reference_distance():
    # exponent is irrelevant at 1 m
    assert path_loss(1.0, 2.2, -30.0) == pytest.approx(1e-3, rel=1e-12)
    assert path_loss(1.0, 3.6, -30.0) == pytest.approx(1e-3, rel=1e-12)


def test_path_loss_known_values():
    # frozen literals recomputed independently from 10^(ref/10) * d^-exp
    assert path_loss(4.0, 2.2, -30.0) == pytest.approx(4.7366142703449935e-05, rel=1e-12)
    assert path_loss(50.0, 3.6, -30.0) == pytest.approx(7.650819998320294e-10, rel=1e-12)
    # coarse magnitudes
    assert path_loss(4.0, 2.2, -30.0) == pytest.approx(4.74e-5, rel=1e-2)
    assert path_loss(50.0, 3.6, -30.0) == pytest.approx(7.6e-10, rel=1e-2)


def test_path_loss_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        path_loss(0.0, 2.2, -30.0)
    with pytest.raises(ValueError):
        path_loss(-1.0, 2.2, -30.0)


def test_dbm_watt_conversions():
    assert dbm_to_watts(40.0) == pytest.approx(10.0, rel=1e-12)
    assert dbm_to_watts(-20.0) == pytest.approx(1e-5, rel=1e-12)
    assert dbm_to_watts(-90.0) == pytest.approx(1e-12, rel=1e-12)
    assert watts_to_dbm(10.0) == pytest.approx(40.0, abs=1e-12)
    for x in (-37.0, 0.0, 13.5):
        assert watts_to_dbm(dbm_to_watts(x)) == pytest.approx(x, abs=1e-10)


def test_db_linear_conversions():
    assert db_to_linear(5.0) == pytest.approx(10.0 ** 0.5, rel=1e-12)
    assert db_to_linear(0.0) == 1.0
    for x in (-3.0, 7.7):
        assert linear_to_db(db_to_linear(x)) == pytest.approx(x, abs=1e-10)


# ---------------------------------------------------------------------------
# SystemConfig


def test_config_defaults_broadcast():
    cfg = SystemConfig()
    assert cfg.M == 4 and cfg.N == 10 and cfg.K == 2 and cfg.L == 2
    assert cfg.P_max == pytest.approx(10.0)
    assert cfg.Gamma_req == (pytest.approx(db_to_linear(5.0)),) * 2
    assert cfg.E_min == (pytest.approx(1e-5),) * 2
    assert cfg.eta == (0.5, 0.5)
    assert cfg.sigma2 == (pytest.approx(1e-12),) * 2


def test_config_scalar_broadcast_and_validation():
    cfg = SystemConfig(K=3, Gamma_req=2.0, sigma2=1e-11)
    assert cfg.Gamma_req == (2.0, 2.0, 2.0)
    assert cfg.sigma2 == (1e-11,) * 3
    with pytest.raises(ValueError):
        SystemConfig(K=2, Gamma_req=(1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        SystemConfig(P_max=0.0)
    with pytest.raises(ValueError):
        SystemConfig(eta=1.5)
    with pytest.raises(ValueError):
        SystemConfig(sigma2=0.0)


def test_with_overrides_rebroadcasts_uniform_tuples():
    cfg = SystemConfig(K=2, L=2)
    out = cfg.with_overrides(K=3, L=1)
    assert out.K == 3 and len(out.Gamma_req) == 3 and len(out.sigma2) == 3
    assert out.L == 1 and len(out.E_min) == 1 and len(out.eta) == 1
    assert set(out.Gamma_req) == set(cfg.Gamma_req)
    # non-uniform per-receiver tuples cannot re-broadcast silently
    mixed = SystemConfig(K=2, Gamma_req=(1.0, 2.0))
    with pytest.raises(ValueError):
        mixed.with_overrides(K=3)
    kept = mixed.with_overrides(N=4)
    assert kept.Gamma_req == (1.0, 2.0)


def test_config_from_mapping_units():
    cfg = config_from_mapping({
        "m": 4, "n": 10, "k": 2, "l": 2,
        "p_max_dbm": 40.0,
        "sigma2_dbm": -90.0,
        "gamma_req_db": 5.0,
        "e_min_dbm": -20.0,
        "eta": 0.5,
    })
    assert cfg.P_max == pytest.approx(10.0, rel=1e-12)
    assert cfg.sigma2[0] == pytest.approx(1e-12, rel=1e-12)
    assert cfg.Gamma_req[0] == pytest.approx(3.1622776601683795, rel=1e-12)
    assert cfg.E_min[0] == pytest.approx(1e-5, rel=1e-12)


def test_load_system_config_yaml(tmp_path):
    p = tmp_path / "scenario.yaml"
    p.write_text(
        "m: 2\nn: 3\nk: 1\nl: 1\np_max_dbm: 30\ngamma_req_db: 0\n"
        "e_min_dbm: -30\nseed: 9\n",
        encoding="utf-8",
    )
    cfg = load_system_config(p)
    assert cfg.M == 2 and cfg.N == 3 and cfg.K == 1 and cfg.L == 1
    assert cfg.P_max == pytest.approx(1.0, rel=1e-12)
    assert cfg.Gamma_req == (1.0,)
    assert cfg.E_min[0] == pytest.approx(1e-6, rel=1e-12)
    assert cfg.seed == 9
    over = load_system_config(p, N=5)
    assert over.N == 5


def test_config_mapping_rejects_unknown_key():
    with pytest.raises(ValueError):
        config_from_mapping({"m": 2, "bogus_key": 1.0})


# ---------------------------------------------------------------------------
# channel realizations


def test_generate_channels_deterministic(desk_cfg):
    a = generate_channels(desk_cfg, 5)
    b = generate_channels(desk_cfg, 5)
    assert np.array_equal(a.H, b.H)
    for x, y in zip(a.h_b + a.h_r + a.g_b + a.g_r,
                    b.h_b + b.h_r + b.g_b + b.g_r):
        assert np.array_equal(x, y)
    c = generate_channels(desk_cfg, 6)
    assert not np.array_equal(a.H, c.H)


def test_generate_channels_dimensions(desk_cfg):
    ch = generate_channels(desk_cfg, 0)
    assert ch.H.shape == (desk_cfg.N, desk_cfg.M)
    assert len(ch.h_b) == desk_cfg.K and ch.h_b[0].shape == (desk_cfg.M,)
    assert len(ch.g_r) == desk_cfg.L and ch.g_r[0].shape == (desk_cfg.N,)


def test_generate_channels_no_elements():
    cfg = SystemConfig(M=3, N=0, K=1, L=1)
    ch = generate_channels(cfg, 1)
    assert ch.H.shape == (0, 3)
    assert ch.h_r[0].shape == (0,)
    assert ch.g_r[0].shape == (0,)


def test_direct_links_unchanged_by_element_count(desk_cfg):
    # named sub-streams: growing the surface must not move the direct draws
    small = generate_channels(desk_cfg, 42)
    big = generate_channels(desk_cfg.with_overrides(N=30), 42)
    for x, y in zip(small.h_b, big.h_b):
        assert np.array_equal(x, y)
    for x, y in zip(small.g_b, big.g_b):
        assert np.array_equal(x, y)


def test_direct_link_variance_matches_path_loss():
    cfg = SystemConfig(M=1, N=0, K=1, L=1)
    samples = np.array([generate_channels(cfg, s).h_b[0][0] for s in range(10_000)])
    target = path_loss(cfg.idr_distance, cfg.pathloss_exp_direct, cfg.pathloss_ref_db)
    emp = float(np.mean(np.abs(samples) ** 2))
    assert emp == pytest.approx(target, rel=0.05)
    # circular symmetry: real/imag parts carry half the power each
    assert float(np.mean(samples.real ** 2)) == pytest.approx(target / 2, rel=0.1)


# ---------------------------------------------------------------------------
# composite channel


def test_equivalent_channel_no_elements():
    h_b = np.array([1.0 + 2.0j, -0.5j])
    h = equivalent_channel(h_b, np.zeros(0), np.zeros((0, 2)), np.zeros(0))
    assert np.array_equal(h, h_b)


def test_equivalent_channel_dead_reflection(rng):
    M, N = 3, 4
    h_b = rng.normal(size=M) + 1j * rng.normal(size=M)
    H = rng.normal(size=(N, M)) + 1j * rng.normal(size=(N, M))
    theta = unit_modulus(rng, N)
    h = equivalent_channel(h_b, np.zeros(N), H, theta)
    assert np.allclose(h, h_b, atol=1e-15)


def test_equivalent_channel_hand_expansion(rng):
    M, N = 2, 2
    h_b = rng.normal(size=M) + 1j * rng.normal(size=M)
    h_r = rng.normal(size=N) + 1j * rng.normal(size=N)
    H = rng.normal(size=(N, M)) + 1j * rng.normal(size=(N, M))
    theta = np.ones(N, dtype=complex)
    h = equivalent_channel(h_b, h_r, H, theta)
    # h^H = h_b^H + sum_n h_r[n]^* H[n, :] entry by entry
    expected_row = h_b.conj().copy()
    for n in range(N):
        expected_row += h_r[n].conjugate() * H[n, :]
    assert np.allclose(h.conj(), expected_row, rtol=1e-12, atol=1e-15)


def test_equivalent_channel_general_theta_oracle(rng):
    M, N = 3, 5
    h_b = rng.normal(size=M) + 1j * rng.normal(size=M)
    h_r = rng.normal(size=N) + 1j * rng.normal(size=N)
    H = rng.normal(size=(N, M)) + 1j * rng.normal(size=(N, M))
    theta = unit_modulus(rng, N)
    h = equivalent_channel(h_b, h_r, H, theta)
    expected_row = h_b.conj() + (h_r.conj() * theta) @ H
    assert np.allclose(h.conj(), expected_row, rtol=1e-12, atol=1e-15)


def test_equivalent_channel_rejects_non_unit_modulus(rng):
    M, N = 2, 2
    h_b = rng.normal(size=M) + 1j * rng.normal(size=M)
    h_r = rng.normal(size=N) + 1j * rng.normal(size=N)
    H = rng.normal(size=(N, M)) + 1j * rng.normal(size=(N, M))
    with pytest.raises(ValueError):
        equivalent_channel(h_b, h_r, H, np.array([2.0, 1.0], dtype=complex))


def test_equivalent_channel_scaling(rng):
    M, N = 3, 4
    h_b = rng.normal(size=M) + 1j * rng.normal(size=M)
    h_r = rng.normal(size=N) + 1j * rng.normal(size=N)
    H = rng.normal(size=(N, M)) + 1j * rng.normal(size=(N, M))
    theta = unit_modulus(rng, N)
    c = 0.37 - 1.2j
    base = equivalent_channel(h_b, h_r, H, theta)
    scaled = equivalent_channel(c * h_b, c * h_r, H, theta)
    assert np.allclose(scaled, c * base, rtol=1e-12, atol=1e-15)


def test_equivalent_channel_global_phase_gauge(rng):
    # rotating every reflection coefficient together with the direct link's
    # dummy phase leaves the composite gain untouched
    M, N = 3, 4
    h_b = rng.normal(size=M) + 1j * rng.normal(size=M)
    h_r = rng.normal(size=N) + 1j * rng.normal(size=N)
    H = rng.normal(size=(N, M)) + 1j * rng.normal(size=(N, M))
    theta = unit_modulus(rng, N)
    w = rng.normal(size=M) + 1j * rng.normal(size=M)
    phi = 1.234
    h = equivalent_channel(h_b, h_r, H, theta)
    h_rot = equivalent_channel(h_b * np.exp(-1j * phi), h_r, H,
                               theta * np.exp(1j * phi))
    assert abs(np.vdot(h_rot, w)) == pytest.approx(abs(np.vdot(h, w)), rel=1e-10)
    assert np.linalg.norm(h_rot) == pytest.approx(np.linalg.norm(h), rel=1e-12)
