"""Monte-Carlo experiment runner, result persistence, and the CLI.

An experiment is a sweep kind plus a scenario, a trial count, and a scheme
list. Supported sweeps:

  figure2  rate/harvest trade-off frontiers: for each curve (one IRS size N)
           and each scheme, epsilon = delta * E_max over a delta grid, where
           E_max is the harvest ceiling the scheme itself can reach;
  figure3  sum rate versus SINR target at epsilon = 0: for each curve (one
           (M, N) pair) the SINR requirement sweeps a dB grid;
  custom   explicit list of scenario-override points with absolute epsilon.

Every (curve, trial) slot draws its channel realization from a sub-seed
derived by counter from the master seed, so results are reproducible bit for
bit regardless of execution order or worker count; channel sub-seeds omit
the curve index so all curves of a trial share one realization family (the
per-link substreams then pair the direct-link draws across IRS sizes). A
slot whose feasible-start construction fails resamples its realization up
to 20 times; the count is recorded on every row of the slot. Scheme-level
failures after that gate become per-row status entries, never resamples and
never dropped rows.

Outputs per run: a row-per-run CSV, a per-sweep-point aggregate CSV (means
and standard errors over status=ok rows, computed from the rounded values
the rows file holds), plot-ready two-column files per curve and scheme, and
a metadata JSON. All numeric data files are deterministic; timestamps,
wall-clock, and per-row solve timings live only in the metadata file.
Emitted numbers are SI/linear (watts, linear SINR ratios) with 12
significant digits; dBm/dB units are accepted in config files only.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import multiprocessing
import sys
import time
from dataclasses import dataclass, field, fields as dc_fields, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .channel import (
    SystemConfig,
    config_from_mapping,
    db_to_linear,
    fields_from_mapping,
    generate_channels,
)
from .lifting import build_lifted
from .optimizer import (
    InitInfeasible,
    MMConfig,
    OptimizerError,
    ao_sdr_emax,
    baseline_ao_sdr,
    baseline_random_phase,
    compute_Emax,
    initialize,
    mm_solve,
    pareto_sweep,
    random_phase_emax,
)

__all__ = [
    "SCHEMES",
    "ConfigError",
    "CustomPoint",
    "ExperimentSpec",
    "ResultRecord",
    "run_experiment",
    "aggregate_records",
    "emit_outputs",
    "phase_grid_oracle",
    "load_experiment_spec",
    "main",
]

SCHEMES = ("proposed", "ao_sdr", "random_phase")
DEFAULT_DELTAS = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_GAMMA_DB = tuple(float(g) for g in range(0, 16, 2))
DEFAULT_N_VALUES = (10, 30)
DEFAULT_M_VALUES = (4, 6)
MAX_RESAMPLES = 20

_NAN = float("nan")


class ConfigError(ValueError):
    """Invalid experiment specification or config file."""


# ---------------------------------------------------------------------------
# experiment specification


@dataclass(frozen=True)
class CustomPoint:
    """One custom sweep point: scenario overrides plus an absolute harvest
    floor in watts (0 drops the floor). Overrides use config-file keys
    (dBm/dB accepted) and may not change the array/receiver counts."""

    label: str
    epsilon_w: float = 0.0
    overrides: tuple = ()  # (key, value) pairs, hashable echo of the mapping

    @staticmethod
    def from_mapping(raw: dict, index: int) -> "CustomPoint":
        raw = dict(raw)
        label = str(raw.pop("label", f"p{index}"))
        eps = float(raw.pop("epsilon_w", 0.0))
        over = raw.pop("overrides", {}) or {}
        if raw:
            raise ConfigError(f"custom point {label!r}: unknown keys {sorted(raw)}")
        return CustomPoint(label=label, epsilon_w=eps,
                           overrides=tuple(sorted(over.items())))


@dataclass(frozen=True)
class Curve:
    label: str
    cfg: SystemConfig


@dataclass
class ExperimentSpec:
    """Everything defining one reproducible experiment.

    `kind` selects the sweep; the grid fields not belonging to the selected
    kind are ignored. Scheme order is canonicalized so sub-seed derivation
    never depends on how the list was written.
    """

    kind: str
    base: SystemConfig = field(default_factory=SystemConfig)
    deltas: tuple = DEFAULT_DELTAS
    n_values: tuple = DEFAULT_N_VALUES
    gamma_db: tuple = DEFAULT_GAMMA_DB
    mn_pairs: tuple = ()
    custom_points: tuple = ()
    trials: int = 100
    schemes: tuple = SCHEMES
    out_dir: str = "results"
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.deltas = tuple(sorted({round(float(d), 12) for d in self.deltas}))
        self.n_values = tuple(sorted({int(n) for n in self.n_values}))
        self.gamma_db = tuple(sorted({float(g) for g in self.gamma_db}))
        self.mn_pairs = tuple((int(m), int(n)) for m, n in self.mn_pairs)
        if self.kind == "figure3" and not self.mn_pairs:
            self.mn_pairs = tuple((m, n) for m in DEFAULT_M_VALUES
                                  for n in DEFAULT_N_VALUES)
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ConfigError(f"unknown schemes: {sorted(unknown)}")
        self.schemes = tuple(s for s in SCHEMES if s in set(self.schemes))
        self.custom_points = tuple(self.custom_points)

    def validate(self):
        if self.kind not in ("figure2", "figure3", "custom"):
            raise ConfigError(f"unknown sweep kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.schemes:
            raise ConfigError(f"schemes must be a non-empty subset of {SCHEMES}")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        if self.kind == "figure2":
            if not self.deltas or not self.n_values:
                raise ConfigError("figure2 needs non-empty delta and N grids")
            if any(not 0 < d <= 1 for d in self.deltas):
                raise ConfigError("deltas must lie in (0, 1]")
            if any(n < 0 for n in self.n_values):
                raise ConfigError("N values must be >= 0")
        elif self.kind == "figure3":
            if not self.gamma_db or not self.mn_pairs:
                raise ConfigError("figure3 needs non-empty SINR and (M, N) grids")
            if any(m < 1 or n < 0 for m, n in self.mn_pairs):
                raise ConfigError("(M, N) pairs need M >= 1, N >= 0")
        else:
            if not self.custom_points:
                raise ConfigError("custom sweep needs at least one point")
            labels = [p.label for p in self.custom_points]
            if len(set(labels)) != len(labels):
                raise ConfigError("custom point labels must be unique")
            for p in self.custom_points:
                if not _safe_label(p.label):
                    raise ConfigError(f"label {p.label!r} not filename-safe")
                if p.epsilon_w < 0:
                    raise ConfigError(f"point {p.label!r}: epsilon_w must be >= 0")
                fields_ = fields_from_mapping(dict(p.overrides), p.label)
                if set(fields_) & {"M", "N", "K", "L"}:
                    raise ConfigError(
                        f"point {p.label!r}: per-point overrides may not change "
                        "array or receiver counts (vary them at scenario level)")

    # -- derived structure ------------------------------------------------

    def curves(self) -> list:
        if self.kind == "figure2":
            return [Curve(f"N{n}", self.base.with_overrides(N=n))
                    for n in self.n_values]
        if self.kind == "figure3":
            return [Curve(f"M{m}N{n}", self.base.with_overrides(M=m, N=n))
                    for m, n in self.mn_pairs]
        return [Curve("custom", self.base)]

    def n_points(self) -> int:
        if self.kind == "figure2":
            return len(self.deltas)
        if self.kind == "figure3":
            return len(self.gamma_db)
        return len(self.custom_points)

    def point_config(self, curve: Curve, point: int) -> tuple:
        """(config, epsilon mode) at one sweep point; epsilon mode is either
        ("delta", d) or ("absolute", watts)."""
        if self.kind == "figure2":
            return curve.cfg, ("delta", self.deltas[point])
        if self.kind == "figure3":
            cfg = curve.cfg.with_overrides(
                Gamma_req=db_to_linear(self.gamma_db[point]))
            return cfg, ("absolute", 0.0)
        p = self.custom_points[point]
        over = fields_from_mapping(dict(p.overrides), p.label)
        cfg = curve.cfg.with_overrides(**over) if over else curve.cfg
        return cfg, ("absolute", p.epsilon_w)

    def gate_config(self, curve: Curve) -> SystemConfig:
        """The slot's feasibility-gate scenario: thresholds at their per-point
        maxima so one resample decision covers the whole sweep."""
        if self.kind == "figure2":
            return curve.cfg
        if self.kind == "figure3":
            return curve.cfg.with_overrides(
                Gamma_req=db_to_linear(max(self.gamma_db)))
        cfgs = [self.point_config(curve, i)[0]
                for i in range(len(self.custom_points))]
        gmax = tuple(max(c.Gamma_req[k] for c in cfgs)
                     for k in range(curve.cfg.K))
        emax = tuple(max(c.E_min[l] for c in cfgs)
                     for l in range(curve.cfg.L))
        return curve.cfg.with_overrides(Gamma_req=gmax, E_min=emax)


def _safe_label(s: str) -> bool:
    return bool(s) and all(c.isalnum() or c in "_-" for c in s)


# ---------------------------------------------------------------------------
# result rows


@dataclass
class ResultRecord:
    """One row per (trial, scheme, sweep point).

    solve_seconds / emax_seconds are kept in memory and emitted through the
    metadata file (the numeric CSVs stay deterministic across reruns); CSV
    parse-back restores them as NaN.
    """

    sweep: str
    curve: str
    scheme: str
    point: int
    trial: int
    delta: float
    epsilon_w: float
    gamma_req: float
    M: int
    N: int
    K: int
    L: int
    p_max_w: float
    status: str
    sum_rate: float
    total_harvested_w: float
    sinr: tuple
    rate_per_idr: tuple
    harvested_per_ehr_w: tuple
    emax_w: float
    converged: bool
    iterations: int
    final_rank_gap: float
    extraction_fallback: bool
    polished: bool
    resamples: int
    solve_seconds: float = _NAN
    emax_seconds: float = _NAN

    def sort_key(self) -> tuple:
        return (self.sweep, self.curve, self.scheme, self.point, self.trial)

    def row_id(self) -> str:
        return f"{self.sweep}/{self.curve}/{self.scheme}/{self.point}/{self.trial}"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


_CSV_COLUMNS = tuple(f.name for f in dc_fields(ResultRecord)
                     if f.name not in ("solve_seconds", "emax_seconds"))
_INT_COLUMNS = {"point", "trial", "M", "N", "K", "L", "iterations", "resamples"}
_BOOL_COLUMNS = {"converged", "extraction_fallback", "polished"}
_LIST_COLUMNS = {"sinr", "rate_per_idr", "harvested_per_ehr_w"}
_STR_COLUMNS = {"sweep", "curve", "scheme", "status"}


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def _round12(x: float) -> float:
    return float(_fmt(x))


def _cell(name: str, value) -> str:
    if name in _STR_COLUMNS:
        return str(value)
    if name in _INT_COLUMNS:
        return str(int(value))
    if name in _BOOL_COLUMNS:
        return "true" if value else "false"
    if name in _LIST_COLUMNS:
        return ";".join(_fmt(v) for v in value)
    return _fmt(value)


def record_to_row(rec: ResultRecord) -> list:
    return [_cell(name, getattr(rec, name)) for name in _CSV_COLUMNS]


def record_from_row(row: dict) -> ResultRecord:
    kw = {}
    for name in _CSV_COLUMNS:
        cell = row[name]
        if name in _STR_COLUMNS:
            kw[name] = cell
        elif name in _INT_COLUMNS:
            kw[name] = int(cell)
        elif name in _BOOL_COLUMNS:
            kw[name] = cell == "true"
        elif name in _LIST_COLUMNS:
            kw[name] = tuple(float(v) for v in cell.split(";")) if cell else ()
        else:
            kw[name] = float(cell)
    return ResultRecord(**kw)


# ---------------------------------------------------------------------------
# running


def _seed_seq(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=tuple(key))


def _channel_seed(master_seed: int, trial: int, resample: int):
    return _seed_seq(master_seed, 1, trial, resample)


def _scheme_rng(spec: ExperimentSpec, ci: int, trial: int, resample: int,
                scheme: str, *extra: int) -> np.random.Generator:
    sid = SCHEMES.index(scheme)
    return np.random.default_rng(
        _seed_seq(spec.master_seed, 2, ci, trial, resample, sid, *extra))


def _metrics_kwargs(bs) -> dict:
    m = bs.metrics
    return dict(
        sum_rate=m.sum_rate, total_harvested_w=m.total_harvested,
        sinr=tuple(m.sinr), rate_per_idr=tuple(m.rate),
        harvested_per_ehr_w=tuple(m.harvested),
        converged=bs.converged, iterations=bs.iterations,
        final_rank_gap=bs.final_rank_gap,
        extraction_fallback=bs.extraction_fallback, polished=bs.polished,
    )


def _nan_metrics_kwargs(cfg: SystemConfig) -> dict:
    return dict(
        sum_rate=_NAN, total_harvested_w=_NAN,
        sinr=(_NAN,) * cfg.K, rate_per_idr=(_NAN,) * cfg.K,
        harvested_per_ehr_w=(_NAN,) * cfg.L,
        converged=False, iterations=0, final_rank_gap=_NAN,
        extraction_fallback=False, polished=False,
    )


def _base_kwargs(spec, curve, scheme, point, trial, resamples,
                 cfg: SystemConfig, delta, epsilon_w, emax_w) -> dict:
    return dict(
        sweep=spec.kind, curve=curve.label, scheme=scheme, point=point,
        trial=trial, delta=delta, epsilon_w=epsilon_w,
        gamma_req=cfg.Gamma_req[0], M=cfg.M, N=cfg.N, K=cfg.K, L=cfg.L,
        p_max_w=cfg.P_max, emax_w=emax_w, resamples=resamples,
    )


def _run_point(run, cfg: SystemConfig, base: dict) -> ResultRecord:
    """Execute one scheme call, timing it; failures become status rows."""
    t0 = time.perf_counter()
    try:
        bs = run()
    except OptimizerError as exc:
        return ResultRecord(status=f"failed: {type(exc).__name__}",
                            solve_seconds=time.perf_counter() - t0,
                            **base, **_nan_metrics_kwargs(cfg))
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        return ResultRecord(status=f"failed: {type(exc).__name__}",
                            solve_seconds=time.perf_counter() - t0,
                            **base, **_nan_metrics_kwargs(cfg))
    return ResultRecord(status="ok", solve_seconds=time.perf_counter() - t0,
                        **base, **_metrics_kwargs(bs))


def _frontier_rows(spec, curve, ci, trial, resamples, lift) -> list:
    """figure2 slot: per scheme, the scheme's own harvest ceiling sets the
    epsilon scale, then one run per delta."""
    rows = []
    cfg = curve.cfg
    deltas = spec.deltas
    for scheme in spec.schemes:
        if scheme == "proposed":
            t0 = time.perf_counter()
            try:
                pts = pareto_sweep(lift, cfg, MMConfig(), list(deltas))
            except OptimizerError as exc:
                # harvest-ceiling presolve failed: the whole frontier is lost
                dt = time.perf_counter() - t0
                for i, d in enumerate(deltas):
                    base = _base_kwargs(spec, curve, scheme, i, trial,
                                        resamples, cfg, d, _NAN, _NAN)
                    rows.append(ResultRecord(
                        status=f"failed: {type(exc).__name__}",
                        emax_seconds=dt, **base, **_nan_metrics_kwargs(cfg)))
                continue
            total = time.perf_counter() - t0
            overhead = total - sum(p.seconds for p in pts)
            oks = [p for p in pts if p.status == "ok"]
            emax_w = oks[0].epsilon / oks[0].delta if oks else _NAN
            for i, p in enumerate(pts):
                base = _base_kwargs(spec, curve, scheme, i, trial, resamples,
                                    cfg, p.delta, p.epsilon, emax_w)
                if p.solution is not None:
                    rows.append(ResultRecord(
                        status=p.status, solve_seconds=p.seconds,
                        emax_seconds=overhead, **base,
                        **_metrics_kwargs(p.solution)))
                else:
                    rows.append(ResultRecord(
                        status=p.status, solve_seconds=p.seconds,
                        emax_seconds=overhead, **base,
                        **_nan_metrics_kwargs(cfg)))
            continue

        # baselines: own ceiling first, then the delta grid at that scale
        t0 = time.perf_counter()
        try:
            if scheme == "ao_sdr":
                emax_w = ao_sdr_emax(lift, cfg,
                                     _scheme_rng(spec, ci, trial, resamples, scheme))
            else:
                emax_w = random_phase_emax(lift, cfg,
                                           _scheme_rng(spec, ci, trial, resamples, scheme))
            emax_err = None
        except OptimizerError as exc:
            emax_w, emax_err = _NAN, exc
        emax_seconds = time.perf_counter() - t0

        for i, d in enumerate(deltas):
            base = _base_kwargs(spec, curve, scheme, i, trial, resamples,
                                cfg, d, d * emax_w, emax_w)
            base["emax_seconds"] = emax_seconds
            if emax_err is not None:
                rows.append(ResultRecord(
                    status=f"failed: {type(emax_err).__name__}",
                    **base, **_nan_metrics_kwargs(cfg)))
                continue
            eps = d * emax_w
            if scheme == "ao_sdr":
                rng = _scheme_rng(spec, ci, trial, resamples, scheme, i)
                rows.append(_run_point(
                    lambda: baseline_ao_sdr(lift, cfg, eps, rng), cfg, base))
            else:
                # same sub-seed at every delta: one phase draw per frontier
                rng = _scheme_rng(spec, ci, trial, resamples, scheme)
                rows.append(_run_point(
                    lambda: baseline_random_phase(lift, cfg, eps, rng), cfg, base))
    return rows


def _gridpoint_rows(spec, curve, ci, trial, resamples, lift) -> list:
    """figure3/custom slot: independent runs per sweep point at absolute
    epsilon (0 for the SINR sweep)."""
    rows = []
    for scheme in spec.schemes:
        for i in range(spec.n_points()):
            cfg, (_, eps) = spec.point_config(curve, i)
            delta = _NAN
            base = _base_kwargs(spec, curve, scheme, i, trial, resamples,
                                cfg, delta, eps, _NAN)
            if scheme == "proposed":
                run = lambda: mm_solve(lift, cfg, eps, MMConfig())
            elif scheme == "ao_sdr":
                rng = _scheme_rng(spec, ci, trial, resamples, scheme, i)
                run = lambda: baseline_ao_sdr(lift, cfg, eps, rng)
            else:
                # same sub-seed across the grid: one phase draw per curve
                rng = _scheme_rng(spec, ci, trial, resamples, scheme)
                run = lambda: baseline_random_phase(lift, cfg, eps, rng)
            rows.append(_run_point(run, cfg, base))
    return rows


def _run_slot(spec: ExperimentSpec, ci: int, trial: int) -> list:
    """All rows of one (curve, trial) slot, with the resample gate."""
    curve = spec.curves()[ci]
    gate_cfg = spec.gate_config(curve)
    lift = None
    resamples = 0
    for resamples in range(MAX_RESAMPLES + 1):
        ch = generate_channels(gate_cfg,
                               _channel_seed(spec.master_seed, trial, resamples))
        cand = build_lifted(ch)
        try:
            initialize(cand, gate_cfg, np.random.default_rng(0))
        except InitInfeasible:
            continue
        except OptimizerError:
            continue
        lift = cand
        break

    if lift is None:
        # slot exhausted: schema-complete failure rows for every run
        rows = []
        for scheme in spec.schemes:
            for i in range(spec.n_points()):
                cfg, (emode, eval_) = spec.point_config(curve, i)
                delta = eval_ if emode == "delta" else _NAN
                eps = _NAN if emode == "delta" else eval_
                base = _base_kwargs(spec, curve, scheme, i, trial,
                                    MAX_RESAMPLES, cfg, delta, eps, _NAN)
                rows.append(ResultRecord(status="failed: InitInfeasible",
                                         **base, **_nan_metrics_kwargs(cfg)))
        return rows

    if spec.kind == "figure2":
        return _frontier_rows(spec, curve, ci, trial, resamples, lift)
    return _gridpoint_rows(spec, curve, ci, trial, resamples, lift)


def run_experiment(spec: ExperimentSpec) -> list:
    """All result rows of an experiment, sorted by deterministic key.

    Slots (one per curve and trial) are independent and individually seeded,
    so any worker count produces the same rows; worker dispatch only changes
    wall-clock. Row count is trials x schemes x sweep points x curves,
    failures included.
    """
    spec.validate()
    units = [(spec, ci, t) for ci in range(len(spec.curves()))
             for t in range(spec.trials)]
    if spec.workers > 1:
        with multiprocessing.Pool(spec.workers) as pool:
            chunks = pool.starmap(_run_slot, units)
    else:
        chunks = [_run_slot(*u) for u in units]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=ResultRecord.sort_key)
    expected = len(spec.curves()) * spec.trials * len(spec.schemes) * spec.n_points()
    if len(records) != expected:
        raise RuntimeError(
            f"row accounting broken: {len(records)} rows, expected {expected}")
    return records


# ---------------------------------------------------------------------------
# aggregation and persistence


_AGG_COLUMNS = (
    "sweep", "curve", "scheme", "point", "delta", "gamma_req",
    "n_rows", "n_ok", "n_converged", "n_fallback",
    "mean_epsilon_w", "mean_sum_rate", "se_sum_rate",
    "mean_total_harvested_w", "se_total_harvested_w",
    "mean_iterations", "mean_final_rank_gap",
)


def _mean_se(values: list) -> tuple:
    if not values:
        return _NAN, _NAN
    arr = np.asarray(values, dtype=float)
    mean = float(np.mean(arr))
    se = float(np.std(arr, ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return mean, se


def aggregate_records(records: list) -> list:
    """Per (curve, scheme, point) mean/standard-error summary as dicts.

    Statistics are taken over status=ok rows of the 12-significant-digit
    values the rows CSV carries, so re-averaging a parsed rows file
    reproduces these numbers; n_rows/n_ok make the selection explicit.
    """
    groups: dict = {}
    for r in records:
        groups.setdefault((r.sweep, r.curve, r.scheme, r.point), []).append(r)
    out = []
    for key in sorted(groups):
        rows = groups[key]
        ok = [r for r in rows if r.ok]
        m_rate, se_rate = _mean_se([_round12(r.sum_rate) for r in ok])
        m_eh, se_eh = _mean_se([_round12(r.total_harvested_w) for r in ok])
        m_eps, _ = _mean_se([_round12(r.epsilon_w) for r in ok])
        m_it, _ = _mean_se([float(r.iterations) for r in ok])
        m_gap, _ = _mean_se([_round12(r.final_rank_gap) for r in ok])
        out.append({
            "sweep": key[0], "curve": key[1], "scheme": key[2], "point": key[3],
            "delta": rows[0].delta, "gamma_req": rows[0].gamma_req,
            "n_rows": len(rows), "n_ok": len(ok),
            "n_converged": sum(1 for r in ok if r.converged),
            "n_fallback": sum(1 for r in ok if r.extraction_fallback),
            "mean_epsilon_w": m_eps,
            "mean_sum_rate": m_rate, "se_sum_rate": se_rate,
            "mean_total_harvested_w": m_eh, "se_total_harvested_w": se_eh,
            "mean_iterations": m_it, "mean_final_rank_gap": m_gap,
        })
    return out


_AGG_INT = {"point", "n_rows", "n_ok", "n_converged", "n_fallback"}
_AGG_STR = {"sweep", "curve", "scheme"}


def _agg_cell(name: str, value) -> str:
    if name in _AGG_STR:
        return str(value)
    if name in _AGG_INT:
        return str(int(value))
    return _fmt(value)


def _write_csv(path: Path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def _plot_lines(spec: ExperimentSpec, group: list) -> tuple:
    """(header, lines) of one curve/scheme plot file; two columns per line."""
    if spec.kind == "figure2":
        header = "# mean_sum_rate mean_total_harvested_w (delta ascending)"
        lines = [f"{_fmt(a['mean_sum_rate'])} {_fmt(a['mean_total_harvested_w'])}"
                 for a in group]
    elif spec.kind == "figure3":
        header = "# gamma_req mean_sum_rate"
        lines = [f"{_fmt(a['gamma_req'])} {_fmt(a['mean_sum_rate'])}"
                 for a in group]
    else:
        header = "# point mean_sum_rate"
        lines = [f"{a['point']} {_fmt(a['mean_sum_rate'])}" for a in group]
    return header, lines


def emit_outputs(records: list, spec: ExperimentSpec,
                 wall_clock_seconds: Optional[float] = None) -> dict:
    """Write runs.csv, aggregate.csv, per-curve plot files, metadata.json.

    Returns {"runs", "aggregate", "plots", "metadata"} paths. Every file but
    metadata.json is deterministic for a given (spec, master seed).
    """
    if not records:
        raise ConfigError("emit_outputs needs at least one record")
    out = Path(spec.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output dir {out}: {exc}") from exc

    records = sorted(records, key=ResultRecord.sort_key)
    runs_path = out / "runs.csv"
    _write_csv(runs_path, _CSV_COLUMNS, [record_to_row(r) for r in records])

    aggs = aggregate_records(records)
    agg_path = out / "aggregate.csv"
    _write_csv(agg_path, _AGG_COLUMNS,
               [[_agg_cell(c, a[c]) for c in _AGG_COLUMNS] for a in aggs])

    plots = []
    by_curve: dict = {}
    for a in aggs:
        by_curve.setdefault((a["curve"], a["scheme"]), []).append(a)
    for (curve, scheme), group in sorted(by_curve.items()):
        group.sort(key=lambda a: a["point"])
        header, lines = _plot_lines(spec, group)
        path = out / f"plot_{spec.kind}_{curve}_{scheme}.dat"
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(header + "\n")
                fh.write("\n".join(lines) + "\n")
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from exc
        plots.append(path)

    meta_path = out / "metadata.json"
    meta = _metadata(records, spec, wall_clock_seconds,
                     [runs_path, agg_path, *plots])
    try:
        with open(meta_path, "w", encoding="utf-8", newline="") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {meta_path}: {exc}") from exc

    return {"runs": runs_path, "aggregate": agg_path,
            "plots": plots, "metadata": meta_path}


def _metadata(records, spec, wall_clock_seconds, files) -> dict:
    import cvxpy

    from . import __version__ as pkg_version

    scenario = asdict(spec.base)
    grids = {"deltas": list(spec.deltas), "n_values": list(spec.n_values),
             "gamma_db": list(spec.gamma_db),
             "mn_pairs": [list(p) for p in spec.mn_pairs],
             "custom_points": [
                 {"label": p.label, "epsilon_w": p.epsilon_w,
                  "overrides": dict(p.overrides)} for p in spec.custom_points]}
    return {
        "kind": spec.kind,
        "generated_utc": datetime.now(timezone.utc).isoformat(),
        "wall_clock_seconds": wall_clock_seconds,
        "master_seed": spec.master_seed,
        "trials": spec.trials,
        "schemes": list(spec.schemes),
        "workers": spec.workers,
        "row_count": len(records),
        "failed_rows": sum(1 for r in records if not r.ok),
        "versions": {"python": sys.version.split()[0],
                     "numpy": np.__version__,
                     "cvxpy": cvxpy.__version__,
                     "irs_swipt": pkg_version},
        "scenario": scenario,
        "grids": grids,
        "files": [f.name for f in files],
        "timings": [{"row": r.row_id(),
                     "solve_seconds": r.solve_seconds,
                     "emax_seconds": r.emax_seconds} for r in records],
    }


# ---------------------------------------------------------------------------
# brute-force oracle (tiny instances)


def phase_grid_oracle(ch, cfg: SystemConfig, grid_points: int = 64) -> tuple:
    """Best single-user rate over an exhaustive per-element phase grid.

    Requires K = 1 with no harvest floors (E_min all zero); there the optimum
    at fixed phases is maximum-ratio transmission at full power, so the
    search reduces to maximizing the composite channel gain over the grid.
    Returns (rate, theta). Grid size grid_points**N is capped at 2**21.
    """
    if cfg.K != 1:
        raise ValueError("oracle covers single-IDR scenarios only")
    if any(e > 0 for e in cfg.E_min):
        raise ValueError("oracle requires E_min = 0")
    n = cfg.N
    if grid_points ** max(n, 1) > 2 ** 21:
        raise ValueError("phase grid too large; reduce N or grid_points")

    c0 = ch.h_b[0].conj()
    if n == 0:
        gain = float(np.vdot(c0, c0).real)
        theta = np.zeros(0, dtype=complex)
    else:
        R = ch.h_r[0].conj()[:, None] * ch.H
        angles = 2.0 * math.pi * np.arange(grid_points) / grid_points
        mesh = np.meshgrid(*([angles] * n), indexing="ij")
        combos = np.stack([m.ravel() for m in mesh], axis=-1)
        phases = np.exp(1j * combos)
        rows = phases @ R + c0
        gains = np.einsum("ij,ij->i", rows, rows.conj()).real
        best = int(np.argmax(gains))
        gain = float(gains[best])
        theta = phases[best]
    rate = math.log2(1.0 + cfg.P_max * gain / cfg.sigma2[0])
    return rate, theta


# ---------------------------------------------------------------------------
# CLI


def load_experiment_spec(kind: str, path=None, **cli) -> ExperimentSpec:
    """Build an ExperimentSpec for one sweep kind from an optional YAML file
    plus CLI overrides (seed/trials/workers/out/schemes)."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
    raw = dict(raw)
    try:
        base = config_from_mapping(raw.pop("scenario", {}) or {},
                                   source=str(path or "<defaults>"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    kwargs: dict = {"kind": kind, "base": base}
    simple = {"trials": int, "seed": int, "workers": int, "out": str}
    for key, conv in simple.items():
        if key in raw:
            kwargs[{"seed": "master_seed", "out": "out_dir"}.get(key, key)] = \
                conv(raw.pop(key))
    if "schemes" in raw:
        kwargs["schemes"] = tuple(raw.pop("schemes"))
    for key, spec_key in (("deltas", "deltas"), ("n_values", "n_values"),
                          ("gamma_db", "gamma_db")):
        if key in raw:
            kwargs[spec_key] = tuple(raw.pop(key))
    if "mn_pairs" in raw:
        kwargs["mn_pairs"] = tuple(tuple(p) for p in raw.pop("mn_pairs"))
    if "points" in raw:
        kwargs["custom_points"] = tuple(
            CustomPoint.from_mapping(p, i) for i, p in enumerate(raw.pop("points")))
    if raw:
        raise ConfigError(f"unknown experiment config keys: {sorted(raw)}")

    for key, spec_key in (("seed", "master_seed"), ("trials", "trials"),
                          ("workers", "workers"), ("out", "out_dir")):
        if cli.get(key) is not None:
            kwargs[spec_key] = cli[key]
    if cli.get("scheme"):
        kwargs["schemes"] = tuple(s.strip() for s in cli["scheme"].split(",") if s.strip())

    try:
        spec = ExperimentSpec(**kwargs)
        spec.validate()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return spec


def _scenario_and_seed(args) -> tuple:
    """(SystemConfig, master seed) for the single-run and oracle commands;
    accepts full experiment configs and reads just the scenario and seed."""
    raw: dict = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{args.config}: expected a mapping at top level")
    try:
        base = config_from_mapping(raw.get("scenario", {}) or {},
                                   source=str(args.config or "<defaults>"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    seed = int(raw.get("seed", 0))
    if args.seed is not None:
        seed = args.seed
    return base, seed


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=str, default=None, help="YAML config file")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--trials", type=int, default=None, help="Monte-Carlo trials")
    p.add_argument("--workers", type=int, default=None, help="worker processes")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--scheme", type=str, default=None,
                   help="comma-separated subset of " + ",".join(SCHEMES))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irs-swipt",
        description="Monte-Carlo experiments for IRS-aided SWIPT beamforming")
    sub = parser.add_subparsers(dest="command", required=True)

    p2 = sub.add_parser("figure2", help="rate/harvest trade-off frontiers")
    p3 = sub.add_parser("figure3", help="sum rate versus SINR target")
    ps = sub.add_parser("single", help="one realization with iterate trace")
    po = sub.add_parser("oracle", help="tiny-instance phase-grid comparison")
    for p in (p2, p3, ps, po):
        _add_common_flags(p)
    ps.add_argument("--delta", type=float, default=None,
                    help="harvest floor as a fraction of E_max (default: none)")
    po.add_argument("--grid", type=int, default=64, help="grid points per element")
    return parser


def _cmd_experiment(kind: str, args) -> int:
    spec = load_experiment_spec(kind, args.config, seed=args.seed,
                                trials=args.trials, workers=args.workers,
                                out=args.out, scheme=args.scheme)
    t0 = time.perf_counter()
    records = run_experiment(spec)
    wall = time.perf_counter() - t0
    files = emit_outputs(records, spec, wall_clock_seconds=wall)
    failed = sum(1 for r in records if not r.ok)
    print(f"{kind}: {len(records)} rows ({failed} failed) in {wall:.1f} s "
          f"-> {files['runs'].parent}")
    if failed == len(records):
        print("error: every run failed", file=sys.stderr)
        return 1
    return 0


def _cmd_single(args) -> int:
    cfg, seed = _scenario_and_seed(args)
    ch = generate_channels(cfg, _channel_seed(seed, 0, 0))
    lift = build_lifted(ch)
    mm = MMConfig()
    eps = 0.0
    if args.delta is not None:
        if not 0 < args.delta <= 1:
            raise ConfigError("--delta must lie in (0, 1]")
        emax = compute_Emax(lift, cfg, mm)
        eps = args.delta * emax
        print(f"E_max = {emax:.6e} W, harvest floor = {eps:.6e} W")
    t0 = time.perf_counter()
    bs = mm_solve(lift, cfg, eps, mm)
    wall = time.perf_counter() - t0

    print(f"scenario: M={cfg.M} N={cfg.N} K={cfg.K} L={cfg.L} "
          f"P_max={cfg.P_max:g} W, seed={seed}")
    print("iterate trace (penalized objective, internal scale):")
    for i, (f, phi) in enumerate(zip(bs.objective_history, bs.phi_history)):
        print(f"  step {i:3d}  phi {phi:10.3e}  objective {f: .9e}")
    print(f"converged={bs.converged} iterations={bs.iterations} "
          f"rank_gap={bs.final_rank_gap:.3e} fallback={bs.extraction_fallback} "
          f"time={wall:.2f} s")
    print(f"sum rate = {bs.metrics.sum_rate:.6f} bits/s/Hz")
    for k, (s, r) in enumerate(zip(bs.metrics.sinr, bs.metrics.rate)):
        print(f"  IDR {k}: SINR {10 * math.log10(max(s, 1e-300)):7.2f} dB, "
              f"rate {r:.6f}")
    for l, e in enumerate(bs.metrics.harvested):
        print(f"  EHR {l}: harvested {e:.6e} W")
    print(f"total harvested = {bs.metrics.total_harvested:.6e} W, "
          f"transmit power = {bs.total_power:.6f} W")
    return 0


def _cmd_oracle(args) -> int:
    base, seed = _scenario_and_seed(args)
    trials = args.trials if args.trials is not None else 20
    cfg = base.with_overrides(M=2, N=2, K=1, L=1, E_min=0.0)
    worst = math.inf
    for i in range(trials):
        ch = generate_channels(cfg, _channel_seed(seed, i, 0))
        lift = build_lifted(ch)
        oracle_rate, _ = phase_grid_oracle(ch, cfg, args.grid)
        bs = mm_solve(lift, cfg, 0.0, MMConfig())
        frac = bs.metrics.sum_rate / oracle_rate
        worst = min(worst, frac)
        print(f"instance {i:3d}: oracle {oracle_rate:9.6f}  "
              f"solver {bs.metrics.sum_rate:9.6f}  ratio {frac:.6f}")
    print(f"worst solver/oracle ratio over {trials} instances: {worst:.6f}")
    if worst < 0.99:
        print("error: solver fell below 99% of the grid oracle", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("figure2", "figure3"):
            return _cmd_experiment(args.command, args)
        if args.command == "single":
            return _cmd_single(args)
        return _cmd_oracle(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
