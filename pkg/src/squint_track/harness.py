"""Monte Carlo experiment runner: planted truths in, CSV metric tables out.

Every trial is a pure function of ``(spec, snr index, antenna index,
trial index)``.  Random streams are derived from the spec seed with
``numpy.random.SeedSequence`` spawn keys that leave out the SNR index, so
all SNR points of one trial share the same truths and the same unit-power
noise realization (common random numbers).  Path gains also ignore the
antenna index.  Rows are sorted before being written, which keeps the CSV
bytes independent of the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .channel import PathParams, SystemConfig, classify, synthesize_pilot_observation
from .downlink import (DownlinkConfig, beam_matrix, estimate_downlink_gain, map_reciprocal,
                       simulate_downlink_rx)
from .ekf import EkfSettings, sweep_snapshots, sweep_thetas, track_doa
from .errors import ConfigError
from .gcs import GcsSettings, track_uplink
from .metrics import channel_mse, match_paths, mse_metrics

log = logging.getLogger(__name__)

STAGES = ("uplink", "downlink", "ekf")
GAIN_STREAM = 4
METRIC_FIELDS = ["experiment", "trial", "snr_db", "m_bs", "metric", "value", "note"]
DIAG_FIELDS = ["experiment", "trial", "snr_db", "m_bs", "iteration", "j_lambda", "k", "lambda",
               "epsilon", "gamma"]
TRAJ_FIELDS = ["experiment", "trial", "snr_db", "m_bs", "uav", "block", "theta_true", "theta_hat",
               "innovation"]


@dataclass
class TruthPolicy:
    """How planted paths are generated.

    ``kind="fixed"`` uses ``paths`` verbatim.  ``kind="random"`` draws
    sin(theta) and Doppler uniformly and rejects draws in which a pair of
    paths is unresolvable.  A pair is resolvable when its sin(theta)
    separation reaches ``min_sep_theta`` or its Doppler separation reaches
    ``min_sep_doppler`` (``separation="either"``), or as required by
    ``"angle"`` / ``"both"``.  Gains are circular Gaussian with unit
    variance, redrawn until every ``|alpha|`` is at least ``min_rel_gain``
    times the largest one; the estimator prunes components below a fixed
    fraction of the strongest, so deeper fades would score the pruning rule
    rather than the tracker.  Set ``min_rel_gain=0`` for unconditioned gains.
    """

    kind: str = "random"
    paths: list[PathParams] = field(default_factory=list)
    min_sep_theta: float | None = None
    min_sep_doppler: float | None = None
    separation: str = "either"
    max_abs_sin: float = 0.9
    max_abs_doppler: float | None = None
    min_rel_gain: float = 0.1
    max_draws: int = 100_000

    def __post_init__(self):
        if self.kind not in ("random", "fixed"):
            raise ConfigError(f"unknown truth policy {self.kind!r}")
        if self.kind == "fixed" and not self.paths:
            raise ConfigError("fixed truth policy needs at least one path")
        if self.separation not in ("either", "angle", "both"):
            raise ConfigError(f"unknown separation rule {self.separation!r}")
        for name in ("min_sep_theta", "min_sep_doppler", "max_abs_doppler"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.max_abs_sin < 1:
            raise ConfigError("max_abs_sin must lie in (0, 1)")
        if not 0 <= self.min_rel_gain < 1:
            raise ConfigError("min_rel_gain must lie in [0, 1)")


@dataclass
class TrajectorySettings:
    n_blocks: int = 100
    rate_per_block: float = 0.001

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ConfigError("trajectory needs at least one block")


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    system: SystemConfig = field(default_factory=SystemConfig)
    downlink: DownlinkConfig = field(default_factory=lambda: DownlinkConfig(60.6e9))
    gcs: GcsSettings = field(default_factory=GcsSettings)
    ekf: EkfSettings = field(default_factory=EkfSettings)
    trajectory: TrajectorySettings = field(default_factory=TrajectorySettings)
    snr_grid_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    antenna_grid: list[int] = field(default_factory=lambda: [128])
    n_trials: int = 1
    seed: int = 0
    k_uavs: int = 4
    truth_policy: TruthPolicy = field(default_factory=TruthPolicy)
    downlink_block: int = 0
    stages: tuple[str, ...] = STAGES

    def __post_init__(self):
        if not self.snr_grid_db or not self.antenna_grid:
            raise ConfigError("SNR and antenna grids must be non-empty")
        if any(isinstance(m, bool) or int(m) != m or m < 1 for m in self.antenna_grid):
            raise ConfigError("antenna grid entries must be positive integers")
        if any(math.isnan(s) for s in self.snr_grid_db):
            raise ConfigError("SNR grid must not contain NaN")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.k_uavs < 1:
            raise ConfigError("k_uavs must be >= 1")
        if not 0 <= self.downlink_block < self.system.l_blocks:
            raise ConfigError("downlink_block must index one of the stacked blocks")
        bad = set(self.stages) - set(STAGES)
        if bad or not self.stages:
            raise ConfigError(f"unknown stages {sorted(bad)}")
        if "downlink" in self.stages and "uplink" not in self.stages:
            raise ConfigError("the downlink stage needs the uplink stage")
        self.stages = tuple(s for s in STAGES if s in self.stages)
        self.snr_grid_db = [float(s) for s in self.snr_grid_db]
        self.antenna_grid = [int(m) for m in self.antenna_grid]


# -- configuration files ---------------------------------------------------

def _build(cls, data: Any, where: str, convert: dict | None = None):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = dict(data)
    for key, fn in (convert or {}).items():
        if key in kwargs:
            kwargs[key] = fn(kwargs[key])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _path_from_json(obj) -> PathParams:
    if not isinstance(obj, dict) or set(obj) != {"alpha", "theta", "f_d"}:
        raise ConfigError("each fixed path needs exactly the keys alpha, theta, f_d")
    alpha = obj["alpha"]
    if isinstance(alpha, (list, tuple)):
        if len(alpha) != 2:
            raise ConfigError("alpha must be [re, im]")
        alpha = complex(alpha[0], alpha[1])
    return PathParams(complex(alpha), float(obj["theta"]), float(obj["f_d"]))


def _snr(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ConfigError(f"bad SNR value {value!r}")
    return float(value)


def spec_from_dict(data: dict) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ConfigError("experiment spec must be a JSON object")
    names = {f.name for f in dataclasses.fields(ExperimentSpec)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}")
    kwargs = dict(data)
    if "system" in kwargs:
        kwargs["system"] = _build(SystemConfig, kwargs["system"], "system",
                                  {"pilot_indices": lambda v: None if v is None else tuple(v)})
    if "downlink" in kwargs:
        kwargs["downlink"] = _build(DownlinkConfig, kwargs["downlink"], "downlink")
    if "gcs" in kwargs:
        kwargs["gcs"] = _build(GcsSettings, kwargs["gcs"], "gcs")
    if "ekf" in kwargs:
        kwargs["ekf"] = _build(EkfSettings, kwargs["ekf"], "ekf")
    if "trajectory" in kwargs:
        kwargs["trajectory"] = _build(TrajectorySettings, kwargs["trajectory"], "trajectory")
    if "truth_policy" in kwargs:
        kwargs["truth_policy"] = _build(
            TruthPolicy, kwargs["truth_policy"], "truth_policy",
            {"paths": lambda v: [_path_from_json(p) for p in v]})
    if "snr_grid_db" in kwargs:
        kwargs["snr_grid_db"] = [_snr(v) for v in kwargs["snr_grid_db"]]
    if "stages" in kwargs:
        kwargs["stages"] = tuple(kwargs["stages"])
    try:
        return ExperimentSpec(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path: str | os.PathLike) -> ExperimentSpec:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return spec_from_dict(data)


# -- scenario generation ---------------------------------------------------

def draw_truths(policy: TruthPolicy, cfg: SystemConfig, k: int, rng: np.random.Generator,
                gain_rng: np.random.Generator | None = None) -> list[PathParams]:
    """Planted paths; gains come from ``gain_rng`` when given, else from ``rng``."""
    if policy.kind == "fixed":
        return list(policy.paths)
    sep_t = policy.min_sep_theta or 3.0 * cfg.angle_cell
    sep_f = policy.min_sep_doppler or 3.0 * cfg.doppler_cell
    f_lim = policy.max_abs_doppler or 0.4 * cfg.doppler_period
    period = cfg.doppler_period
    for _ in range(policy.max_draws):
        s = rng.uniform(-policy.max_abs_sin, policy.max_abs_sin, k)
        f = rng.uniform(-f_lim, f_lim, k)
        ds = np.abs(s[:, None] - s[None, :])
        df = np.abs((f[:, None] - f[None, :] + period / 2) % period - period / 2)
        far_t, far_f = ds >= sep_t, df >= sep_f
        ok = {"either": far_t | far_f, "angle": far_t, "both": far_t & far_f}[policy.separation]
        np.fill_diagonal(ok, True)
        if ok.all():
            break
    else:
        raise ConfigError("could not draw separated truths; relax the separation policy")
    gain_rng = gain_rng or rng
    for _ in range(policy.max_draws):
        alphas = (gain_rng.standard_normal(k) + 1j * gain_rng.standard_normal(k)) / np.sqrt(2.0)
        if np.abs(alphas).min() >= policy.min_rel_gain * np.abs(alphas).max():
            break
    else:
        raise ConfigError("could not draw gains above min_rel_gain")
    return [PathParams(alphas[i], float(np.arcsin(s[i])), float(f[i])) for i in range(k)]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# -- trials ----------------------------------------------------------------

@dataclass
class TrialOutput:
    key: tuple[int, int, int]
    metrics: list[dict] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    trajectory: list[dict] = field(default_factory=list)
    failed: bool = False


def run_trial(spec: ExperimentSpec, snr_idx: int, m_idx: int, trial: int) -> TrialOutput:
    """One Monte Carlo trial; module errors become a ``failed`` row."""
    snr = spec.snr_grid_db[snr_idx]
    m_bs = spec.antenna_grid[m_idx]
    cfg = spec.system.replace(m_bs=m_bs)
    base = {"experiment": spec.name, "trial": trial, "snr_db": snr, "m_bs": m_bs}
    out = TrialOutput((snr_idx, m_idx, trial))
    try:
        _run_stages(spec, cfg, snr, m_idx, trial, base, out)
    except Exception as exc:  # noqa: BLE001 - any module error marks the trial failed
        log.warning("trial %d (snr %s, M %d) failed: %s", trial, snr, m_bs, exc)
        out.metrics = [dict(base, metric="failed", value=1.0, note=f"{type(exc).__name__}: {exc}")]
        out.diagnostics, out.trajectory, out.failed = [], [], True
    return out


def _run_stages(spec, cfg, snr, m_idx, trial, base, out: TrialOutput):
    # gains are shared by every antenna count of a trial so that M comparisons are paired
    gain_rng = _rng(spec.seed, trial, GAIN_STREAM)
    truths = draw_truths(spec.truth_policy, cfg, spec.k_uavs, _rng(spec.seed, m_idx, trial, 0), gain_rng)
    dl_gains = (gain_rng.standard_normal(len(truths))
                + 1j * gain_rng.standard_normal(len(truths))) / np.sqrt(2.0)

    def metric(name, value):
        out.metrics.append(dict(base, metric=name, value=float(value), note=""))

    estimates: list[PathParams] = []
    matches: list[int | None] = [None] * len(truths)
    if "uplink" in spec.stages:
        y = synthesize_pilot_observation(truths, cfg, snr, _rng(spec.seed, m_idx, trial, 1))
        result = track_uplink(y, cfg, spec.gcs)
        estimates = result.paths
        matches = match_paths(truths, estimates, cfg)
        for name, value in mse_metrics(truths, estimates, cfg).items():
            metric(name, value)
        out.diagnostics.extend(dict(base, **row) for row in result.diagnostics.csv_rows())

    if "downlink" in spec.stages:
        value = _downlink_mse(spec, cfg, snr, truths, dl_gains, estimates, matches,
                              _rng(spec.seed, m_idx, trial, 2))
        metric("mse_h_downlink", value)

    if "ekf" in spec.stages:
        ekf_rng = _rng(spec.seed, m_idx, trial, 3)
        traj = spec.trajectory
        for k, truth in enumerate(truths):
            thetas = np.clip(sweep_thetas(truth.theta, traj.rate_per_block, traj.n_blocks),
                             -np.pi / 2 + 1e-3, np.pi / 2 - 1e-3)
            snaps = sweep_snapshots(truth.alpha, thetas, truth.f_d, cfg, snr, ekf_rng)
            j = matches[k]
            init = estimates[j].theta if j is not None else truth.theta + ekf_rng.normal(0.0, 1e-2)
            track = track_doa(snaps, init, cfg, spec.ekf)
            for l, (tt, th, inn) in enumerate(zip(thetas, track.thetas, track.innovation_norms)):
                out.trajectory.append(dict(base, uav=k, block=l, theta_true=float(tt),
                                           theta_hat=float(th), innovation=float(inn)))


def _downlink_mse(spec, cfg, snr, truths, dl_gains, estimates, matches, rng) -> float:
    dl = spec.downlink
    dl_cfg = dl.system(cfg)
    truth_dl = [PathParams(g, t.theta, t.f_d * dl.f_c_dl / cfg.f_c) for g, t in zip(dl_gains, truths)]
    if not estimates:
        return 1.0
    est_dl = [map_reciprocal(p, cfg, dl) for p in estimates]
    beams = beam_matrix(est_dl, cfg, dl)
    # SNR after beamforming: matched beam gain M on a unit-power gain
    noise_var = 0.0 if math.isinf(snr) else cfg.m_bs ** 2 * float(np.mean(np.abs(dl_gains) ** 2)) / 10 ** (snr / 10)
    rx = simulate_downlink_rx(truth_dl, beams, spec.downlink_block, 1.0, noise_var, rng, cfg, dl)
    recovered: list[PathParams] = []
    pairs = []
    for k, j in enumerate(matches):
        if j is None:
            continue
        p = est_dl[j]
        gain = estimate_downlink_gain(rx.summed[k], spec.downlink_block, p.f_d, 1.0,
                                      cfg.n_carriers * cfg.m_bs, cfg)
        pairs.append((k, len(recovered)))
        recovered.append(PathParams(gain, p.theta, p.f_d))
    dl_matches: list[int | None] = [None] * len(truths)
    for k, idx in pairs:
        dl_matches[k] = idx
    return channel_mse(truth_dl, recovered, dl_cfg, dl_matches)


# -- orchestration -----------------------------------------------------------

def worker_count() -> int:
    cap = os.environ.get("SQUINT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, int(cap)) if int(cap) > 0 else n
        except ValueError:
            raise ConfigError(f"SQUINT_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def _run_task(args):
    return run_trial(*args)


@dataclass
class ExperimentResult:
    metrics: list[dict]
    diagnostics: list[dict]
    trajectory: list[dict]
    failed_trials: int

    def mean(self, metric: str, snr_db: float | None = None, m_bs: int | None = None) -> float:
        values = [r["value"] for r in self.metrics if r["metric"] == metric
                  and (snr_db is None or r["snr_db"] == snr_db)
                  and (m_bs is None or r["m_bs"] == m_bs)]
        if not values:
            raise KeyError(f"no rows for {metric} at snr={snr_db}, M={m_bs}")
        return float(np.mean(values))


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> ExperimentResult:
    """Run every (SNR, M, trial) cell of the spec and collect sorted rows."""
    tasks = [(spec, s, m, t)
             for s in range(len(spec.snr_grid_db))
             for m in range(len(spec.antenna_grid))
             for t in range(spec.n_trials)]
    workers = workers or worker_count()
    if workers == 1 or len(tasks) == 1:
        outputs = [_run_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    outputs.sort(key=lambda o: o.key)
    return ExperimentResult(
        metrics=[r for o in outputs for r in o.metrics],
        diagnostics=[r for o in outputs for r in o.diagnostics],
        trajectory=[r for o in outputs for r in o.trajectory],
        failed_trials=sum(o.failed for o in outputs),
    )


def _format(value):
    if isinstance(value, float):
        return repr(value)
    return value


def csv_text(rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _format(row[k]) for k in fields})
    return buf.getvalue()


def write_results(result: ExperimentResult, out_dir: str | os.PathLike) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "metrics.csv": csv_text(result.metrics, METRIC_FIELDS),
        "gcs_diag.csv": csv_text(result.diagnostics, DIAG_FIELDS),
        "ekf_traj.csv": csv_text(result.trajectory, TRAJ_FIELDS),
    }
    paths = {}
    for name, text in files.items():
        path = out / name
        with open(path, "w", newline="") as fh:
            fh.write(text)
        paths[name] = path
    return paths


def classify_command(cfg: SystemConfig, f_d_max: float) -> str:
    """Human-readable selectivity report."""
    result = classify(cfg, f_d_max)
    return "\n".join([
        f"antennas M        : {cfg.m_bs}",
        f"symbol duration   : {cfg.t_s:.6g} s",
        f"max Doppler       : {f_d_max:.6g} Hz",
        f"antenna_ratio     : {result.antenna_ratio:.6g}  ((M-1) d / (c T_s))",
        f"time_ratio        : {result.time_ratio:.6g}  (f_d_max T_s)",
        f"class             : {result.label.value}",
    ])
