"""Shared fixtures: deterministic scenario configs and channel realizations."""

import numpy as np
import pytest

from irs_swipt.channel import SystemConfig, generate_channels
from irs_swipt.lifting import build_lifted


@pytest.fixture(scope="session")
def desk_cfg():
    """Default desk-scale scenario (M=4, N=10, K=2, L=2)."""
    return SystemConfig()


@pytest.fixture(scope="session")
def desk_channels(desk_cfg):
    return generate_channels(desk_cfg, 12345)


@pytest.fixture(scope="session")
def desk_lift(desk_channels):
    return build_lifted(desk_channels)


@pytest.fixture(scope="session")
def tiny_cfg():
    """Smallest nontrivial scenario with the QoS floors switched off."""
    return SystemConfig(M=2, N=2, K=1, L=1, Gamma_req=0.0, E_min=0.0)


@pytest.fixture(scope="session")
def tiny_channels(tiny_cfg):
    return generate_channels(tiny_cfg, 777)


@pytest.fixture(scope="session")
def tiny_lift(tiny_channels):
    return build_lifted(tiny_channels)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)


def random_hermitian(rng, n, scale=1.0):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (A + A.conj().T)


def random_psd(rng, n, rank=None, scale=1.0):
    r = rank if rank is not None else n
    B = rng.normal(size=(n, r)) + 1j * rng.normal(size=(n, r))
    return scale * (B @ B.conj().T) / r


def unit_modulus(rng, n):
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=n))
