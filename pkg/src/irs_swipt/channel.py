"""Scenario configuration and channel generation for the IRS-aided SWIPT downlink.

Geometry: an M-antenna base station (BS) serves K single-antenna information
decoding receivers (IDRs) and L single-antenna energy harvesting receivers
(EHRs), assisted by an N-element reflecting surface. Every link is modeled as
distance-based path loss times Rayleigh small-scale fading, i.e. each entry is
drawn i.i.d. circularly-symmetric complex Gaussian with variance equal to the
link's path-loss gain.

The reflecting surface applies a unit-modulus coefficient theta_n = e^{j b_n}
per element; the composite IDR channel is

    h_k^H = h_bk^H + h_rk^H diag(theta) H

and analogously for EHR channels g_l with (g_bl, g_rl).

Powers in config files are accepted in dBm and converted to watts on load;
all in-memory quantities are SI (watts, meters, linear ratios).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import yaml

__all__ = [
    "SystemConfig",
    "ChannelSet",
    "dbm_to_watts",
    "watts_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "path_loss",
    "generate_channels",
    "equivalent_channel",
    "fields_from_mapping",
    "config_from_mapping",
    "load_system_config",
]


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watts_to_dbm(x_w: float) -> float:
    return 10.0 * math.log10(x_w) + 30.0


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def _as_tuple(value, count: int, name: str) -> tuple[float, ...]:
    """Broadcast a scalar to `count` entries or validate a length-`count` sequence."""
    if np.isscalar(value):
        return (float(value),) * count
    out = tuple(float(v) for v in value)
    if len(out) != count:
        raise ValueError(f"{name}: expected {count} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class SystemConfig:
    """All scenario constants for one simulation setup.

    Per-receiver quantities (Gamma_req, E_min, eta, sigma2) are stored as
    tuples of length K or L; the constructor accepts scalars and broadcasts.
    """

    M: int = 4
    N: int = 10
    K: int = 2
    L: int = 2
    P_max: float = dbm_to_watts(40.0)
    Gamma_req: tuple[float, ...] = ()
    E_min: tuple[float, ...] = ()
    eta: tuple[float, ...] = ()
    sigma2: tuple[float, ...] = ()
    bs_pos: tuple[float, float] = (3.0, 0.0)
    irs_pos: tuple[float, float] = (0.0, 4.0)
    idr_distance: float = 50.0
    ehr_distance: float = 4.0
    pathloss_ref_db: float = -30.0
    pathloss_exp_direct: float = 3.6
    pathloss_exp_bs_irs: float = 2.2
    pathloss_exp_irs_user: float = 2.2
    seed: int = 0

    def __post_init__(self):
        # broadcast scalar per-receiver fields and fill defaults
        gamma = self.Gamma_req if self.Gamma_req != () else db_to_linear(5.0)
        emin = self.E_min if self.E_min != () else dbm_to_watts(-20.0)
        eta = self.eta if self.eta != () else 0.5
        sigma2 = self.sigma2 if self.sigma2 != () else dbm_to_watts(-90.0)
        object.__setattr__(self, "Gamma_req", _as_tuple(gamma, self.K, "Gamma_req"))
        object.__setattr__(self, "E_min", _as_tuple(emin, self.L, "E_min"))
        object.__setattr__(self, "eta", _as_tuple(eta, self.L, "eta"))
        object.__setattr__(self, "sigma2", _as_tuple(sigma2, self.K, "sigma2"))
        self.validate()

    def validate(self):
        if self.M < 1 or self.K < 1 or self.L < 1 or self.N < 0:
            raise ValueError("require M >= 1, K >= 1, L >= 1, N >= 0")
        if not self.P_max > 0:
            raise ValueError("P_max must be positive")
        if any(s <= 0 for s in self.sigma2):
            raise ValueError("sigma2 entries must be positive")
        if any(not (0.0 <= e <= 1.0) for e in self.eta):
            raise ValueError("eta entries must lie in [0, 1]")
        if any(g < 0 for g in self.Gamma_req):
            raise ValueError("Gamma_req entries must be non-negative")
        if any(e < 0 for e in self.E_min):
            raise ValueError("E_min entries must be non-negative")
        if self.idr_distance <= 0 or self.ehr_distance <= 0:
            raise ValueError("user-drop radii must be positive")

    def with_overrides(self, **kwargs) -> "SystemConfig":
        """Return a copy with the given fields replaced (re-validated)."""
        out = dict(kwargs)
        # uniform per-receiver tuples collapse to scalars when K or L changes,
        # so they re-broadcast; non-uniform ones must be overridden explicitly
        for name, count_field in (("Gamma_req", "K"), ("sigma2", "K"),
                                  ("E_min", "L"), ("eta", "L")):
            if name in out:
                continue
            count = out.get(count_field, getattr(self, count_field))
            cur = getattr(self, name)
            if len(cur) != count and len(set(cur)) == 1:
                out[name] = cur[0]
        return replace(self, **out)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of all links.

    H: (N, M) BS to IRS; h_b[k]: (M,) BS to IDR k; h_r[k]: (N,) IRS to IDR k;
    g_b[l]: (M,) BS to EHR l; g_r[l]: (N,) IRS to EHR l.
    """

    H: np.ndarray
    h_b: tuple[np.ndarray, ...]
    h_r: tuple[np.ndarray, ...]
    g_b: tuple[np.ndarray, ...]
    g_r: tuple[np.ndarray, ...]
    idr_pos: tuple[tuple[float, float], ...] = ()
    ehr_pos: tuple[tuple[float, float], ...] = ()

    def check_dims(self, cfg: SystemConfig):
        assert self.H.shape == (cfg.N, cfg.M)
        assert len(self.h_b) == cfg.K and len(self.h_r) == cfg.K
        assert len(self.g_b) == cfg.L and len(self.g_r) == cfg.L
        for v in self.h_b + self.g_b:
            assert v.shape == (cfg.M,)
        for v in self.h_r + self.g_r:
            assert v.shape == (cfg.N,)
        for arr in (self.H, *self.h_b, *self.h_r, *self.g_b, *self.g_r):
            assert np.all(np.isfinite(arr.view(float)))


def path_loss(distance: float, exponent: float, ref_db: float) -> float:
    """Linear power gain 10^(ref_db/10) * distance^(-exponent).

    `distance` in meters; `ref_db` is the gain at 1 m in dB (negative for loss).
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    return 10.0 ** (ref_db / 10.0) * distance ** (-exponent)


def _cscg(rng: np.random.Generator, var: float, shape) -> np.ndarray:
    """Circularly-symmetric complex Gaussian entries with per-entry variance `var`."""
    s = math.sqrt(var / 2.0)
    return rng.normal(0.0, s, shape) + 1j * rng.normal(0.0, s, shape)


def generate_channels(cfg: SystemConfig, rng_stream=None) -> ChannelSet:
    """Draw one channel realization.

    Users drop uniformly on circles around the BS (radius idr_distance or
    ehr_distance). Each link gets an independent named sub-stream spawned from
    the seed so that, e.g., changing N leaves the direct-link draws unchanged.

    `rng_stream` may be a SeedSequence, an int seed, or None (uses cfg.seed).
    """
    if rng_stream is None:
        rng_stream = np.random.SeedSequence(cfg.seed)
    elif isinstance(rng_stream, (int, np.integer)):
        rng_stream = np.random.SeedSequence(int(rng_stream))
    keys = ("positions", "bs_irs", "idr_direct", "idr_irs", "ehr_direct", "ehr_irs")
    streams = {k: np.random.default_rng(s) for k, s in zip(keys, rng_stream.spawn(len(keys)))}

    bs = np.asarray(cfg.bs_pos)
    irs = np.asarray(cfg.irs_pos)
    pos_rng = streams["positions"]
    idr_pos = [bs + cfg.idr_distance * _unit(pos_rng.uniform(0, 2 * math.pi)) for _ in range(cfg.K)]
    ehr_pos = [bs + cfg.ehr_distance * _unit(pos_rng.uniform(0, 2 * math.pi)) for _ in range(cfg.L)]

    d_bs_irs = float(np.linalg.norm(irs - bs))
    g_bs_irs = path_loss(d_bs_irs, cfg.pathloss_exp_bs_irs, cfg.pathloss_ref_db)
    H = _cscg(streams["bs_irs"], g_bs_irs, (cfg.N, cfg.M))

    h_b, h_r = [], []
    for p in idr_pos:
        gd = path_loss(float(np.linalg.norm(p - bs)), cfg.pathloss_exp_direct, cfg.pathloss_ref_db)
        gr = path_loss(float(np.linalg.norm(p - irs)), cfg.pathloss_exp_irs_user, cfg.pathloss_ref_db)
        h_b.append(_cscg(streams["idr_direct"], gd, (cfg.M,)))
        h_r.append(_cscg(streams["idr_irs"], gr, (cfg.N,)))
    g_b, g_r = [], []
    for p in ehr_pos:
        gd = path_loss(float(np.linalg.norm(p - bs)), cfg.pathloss_exp_direct, cfg.pathloss_ref_db)
        gr = path_loss(float(np.linalg.norm(p - irs)), cfg.pathloss_exp_irs_user, cfg.pathloss_ref_db)
        g_b.append(_cscg(streams["ehr_direct"], gd, (cfg.M,)))
        g_r.append(_cscg(streams["ehr_irs"], gr, (cfg.N,)))

    ch = ChannelSet(
        H=H,
        h_b=tuple(h_b),
        h_r=tuple(h_r),
        g_b=tuple(g_b),
        g_r=tuple(g_r),
        idr_pos=tuple((float(p[0]), float(p[1])) for p in idr_pos),
        ehr_pos=tuple((float(p[0]), float(p[1])) for p in ehr_pos),
    )
    ch.check_dims(cfg)
    return ch


def _unit(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def equivalent_channel(h_b: np.ndarray, h_r: np.ndarray, H: np.ndarray,
                       theta: np.ndarray) -> np.ndarray:
    """Composite channel h with h^H = h_b^H + h_r^H diag(theta) H.

    `theta` holds the physical per-element reflection coefficients (unit
    modulus). With N=0 the direct channel is returned unchanged.
    """
    h_b = np.asarray(h_b)
    n = len(theta)
    if n == 0:
        return h_b.copy()
    theta = np.asarray(theta)
    if np.max(np.abs(np.abs(theta) - 1.0)) > 1e-9:
        raise ValueError("theta entries must be unit modulus")
    # h^H row vector, then conjugate back to a column-convention vector
    h_row = h_b.conj() + (h_r.conj() * theta) @ H
    return h_row.conj()


_DBM_KEYS = {"p_max_dbm": "P_max", "e_min_dbm": "E_min", "sigma2_dbm": "sigma2"}
_DB_KEYS = {"gamma_req_db": "Gamma_req"}
_PLAIN_KEYS = {
    "m": "M", "n": "N", "k": "K", "l": "L",
    "p_max_w": "P_max", "gamma_req": "Gamma_req", "e_min_w": "E_min",
    "eta": "eta", "sigma2_w": "sigma2",
    "bs_pos": "bs_pos", "irs_pos": "irs_pos",
    "idr_distance": "idr_distance", "ehr_distance": "ehr_distance",
    "pathloss_ref_db": "pathloss_ref_db",
    "pathloss_exp_direct": "pathloss_exp_direct",
    "pathloss_exp_bs_irs": "pathloss_exp_bs_irs",
    "pathloss_exp_irs_user": "pathloss_exp_irs_user",
    "seed": "seed",
}


def fields_from_mapping(raw: dict, source: str = "<mapping>") -> dict:
    """Convert a flat config mapping to SystemConfig field values (SI units).

    Keys are lowercase; powers may be given in dBm via *_dbm keys (scalar or
    list), SINR targets in dB via gamma_req_db. Unknown keys are rejected.
    """
    if not isinstance(raw, dict):
        raise ValueError(f"{source}: expected a flat key/value mapping")
    fields: dict = {}
    for key, value in raw.items():
        lk = str(key).lower()
        if lk in _DBM_KEYS:
            conv = [dbm_to_watts(float(v)) for v in np.atleast_1d(value)]
            fields[_DBM_KEYS[lk]] = conv[0] if np.isscalar(value) else tuple(conv)
        elif lk in _DB_KEYS:
            conv = [db_to_linear(float(v)) for v in np.atleast_1d(value)]
            fields[_DB_KEYS[lk]] = conv[0] if np.isscalar(value) else tuple(conv)
        elif lk in _PLAIN_KEYS:
            name = _PLAIN_KEYS[lk]
            if name in ("bs_pos", "irs_pos"):
                value = tuple(float(v) for v in value)
            fields[name] = value
        else:
            raise ValueError(f"{source}: unknown config key {key!r}")
    return fields


def config_from_mapping(raw: dict, source: str = "<mapping>", **overrides) -> SystemConfig:
    """Build a SystemConfig from a flat key/value mapping (see
    fields_from_mapping); keyword overrides use SystemConfig field names."""
    fields = fields_from_mapping(raw, source)
    fields.update(overrides)
    return SystemConfig(**fields)


def load_system_config(path, **overrides) -> SystemConfig:
    """Load a SystemConfig from a flat key/value YAML file (see
    config_from_mapping for the accepted keys and unit conventions)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    return config_from_mapping(raw, source=str(path), **overrides)
