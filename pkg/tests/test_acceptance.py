"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL`` line; the lines are also
collected into a summary section at the end of the pytest run.
"""

import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from squint_track import cli
from squint_track.channel import (PathParams, Selectivity, SystemConfig, classify, correlation_closed_form,
                                  normalized_correlation, synthesize_pilot_observation)
from squint_track.downlink import (DownlinkConfig, beam_matrix, estimate_downlink_gain, map_reciprocal,
                                   simulate_downlink_rx)
from squint_track.ekf import EkfSettings, sweep_snapshots, sweep_thetas, track_doa
from squint_track.gcs import Dictionary, GcsSettings, grad_doppler, grad_theta, marginal_cost, track_uplink
from squint_track.harness import TruthPolicy, draw_truths, run_experiment, spec_from_dict
from squint_track.metrics import match_paths


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_gradients():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(50):
        k = int(rng.integers(1, 4))
        cfg = SystemConfig(m_bs=int(rng.integers(2, 17)), l_blocks=int(rng.integers(2, 9)),
                           p_pilots=int(rng.integers(1, 5)))
        truth = Dictionary.build(rng.uniform(-1.2, 1.2, k), rng.uniform(-1800, 1800, k), cfg)
        y = truth.columns @ (rng.normal(size=k) + 1j * rng.normal(size=k))
        y = y + 0.1 * (rng.normal(size=y.size) + 1j * rng.normal(size=y.size))
        thetas = truth.thetas + rng.normal(0, 0.05, k)
        dopplers = truth.dopplers + rng.normal(0, 100, k)
        d = Dictionary.build(thetas, dopplers, cfg)
        w, lam = rng.uniform(0.1, 10, k), float(rng.uniform(0.1, 5))
        analytic = {"theta": grad_theta(y, d, w, lam), "f_d": grad_doppler(y, d, w, lam)}
        for name, h in (("theta", 1e-6), ("f_d", 1e-3)):
            numeric = np.zeros(k)
            for i in range(k):
                vals = []
                for sgn in (1.0, -1.0):
                    th, fd = thetas.copy(), dopplers.copy()
                    (th if name == "theta" else fd)[i] += sgn * h
                    vals.append(marginal_cost(y, Dictionary.build(th, fd, cfg), w, lam))
                numeric[i] = (vals[0] - vals[1]) / (2 * h)
            rel = np.linalg.norm(analytic[name] - numeric) / np.linalg.norm(analytic[name])
            worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-5 and elapsed < 30, f"max relative FD error {worst:.2e} (< 1e-5), {elapsed:.1f} s")


def test_criterion_2_mm_descent():
    worst = -math.inf
    records = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        cfg = SystemConfig(m_bs=32)
        truth = draw_truths(TruthPolicy(), cfg, 3, rng)
        snr = [0.0, 10.0, 20.0, math.inf][seed % 4]
        y = synthesize_pilot_observation(truth, cfg, snr, rng)
        diag = track_uplink(y, cfg).diagnostics
        for rec in diag.records:
            worst = max(worst, rec.j_lambda - rec.j_start)
            records += 1
    report(2, worst <= 1e-9, f"largest per-iteration increase of J_lambda {worst:.2e} over {records} iterations")


def test_criterion_3_noiseless_recovery():
    start = time.perf_counter()
    cfg = SystemConfig(m_bs=32, l_blocks=8, p_pilots=4)
    policy = TruthPolicy()
    successes = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        drawn = draw_truths(policy, cfg, 2, rng)
        phases = np.exp(2j * np.pi * rng.uniform(size=2))
        truth = [PathParams(ph, p.theta, p.f_d) for ph, p in zip(phases, drawn)]
        y = synthesize_pilot_observation(truth, cfg, math.inf)
        result = track_uplink(y, cfg, GcsSettings(k_max=8))
        matches = match_paths(truth, result.paths, cfg)
        ok = len(result.paths) == 2 and None not in matches
        for t, j in zip(truth, matches):
            if j is None:
                continue
            e = result.paths[j]
            ok &= abs(e.theta - t.theta) < 1e-3
            ok &= abs(e.f_d - t.f_d) <= 1e-3 * abs(t.f_d)
            ok &= abs(e.alpha - t.alpha) < 1e-3 * abs(t.alpha)
        successes += bool(ok)
    elapsed = time.perf_counter() - start
    report(3, successes >= 95 and elapsed < 180, f"{successes}/100 seeds recovered exactly, {elapsed:.1f} s")


def test_criterion_4_correlation_oracle():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(100):
        cfg = SystemConfig(m_bs=int(rng.integers(4, 129)), l_blocks=int(rng.integers(1, 33)))
        p1 = PathParams(rng.normal() + 1j * rng.normal(), rng.uniform(-1.5, 1.5), rng.uniform(-4000, 4000))
        p2 = PathParams(rng.normal() + 1j * rng.normal(), rng.uniform(-1.5, 1.5), rng.uniform(-4000, 4000))
        idx = int(rng.integers(0, cfg.n_carriers))
        worst = max(worst, abs(normalized_correlation(p1, p2, idx, cfg) - correlation_closed_form(p1, p2, idx, cfg)))

    big = SystemConfig(m_bs=512, l_blocks=256)
    peak = 0.0
    for _ in range(30):
        s1 = rng.uniform(-0.8, 0.4)
        s2 = s1 + rng.uniform(2, 40) * big.angle_cell
        f1 = rng.uniform(-1500, 0)
        f2 = f1 + rng.uniform(2, 20) * big.doppler_cell
        c = normalized_correlation(PathParams(1, math.asin(s1), f1), PathParams(1, math.asin(s2), f2), 0, big)
        peak = max(peak, c)

    sizes = [(16, 8), (32, 16), (64, 32), (128, 64), (256, 128), (512, 256)]
    pairs = [(PathParams(1, math.asin(s), f), PathParams(1, math.asin(s + ds), f + df))
             for s, ds, f, df in zip(rng.uniform(-0.6, 0.0, 40), rng.uniform(0.05, 0.5, 40),
                                     rng.uniform(-1500, 0, 40), rng.uniform(100, 1500, 40))]
    means = [np.mean([normalized_correlation(a, b, 0, SystemConfig(m_bs=m, l_blocks=l)) for a, b in pairs])
             for m, l in sizes]
    trend = all(b <= a for a, b in zip(means, means[1:]))
    report(4, worst < 1e-10 and peak < 0.05 and trend,
           f"oracle gap {worst:.1e}, max correlation at (512, 256) {peak:.3f}, "
           f"mean correlation by size {[round(float(x), 4) for x in means]}")


def test_criterion_5_downlink():
    cfg = SystemConfig(m_bs=128)
    dl = DownlinkConfig(60.6e9)
    rng = np.random.default_rng(55)
    worst = 0.0
    worst_tracked = 0.0
    for _ in range(10):
        up = PathParams(np.exp(2j * np.pi * rng.uniform()), rng.uniform(-1.2, 1.2), rng.uniform(-1500, 1500))
        gain = complex(rng.normal(), rng.normal())
        l = int(rng.integers(0, cfg.l_blocks))
        down = map_reciprocal(up, cfg, dl)
        truth = PathParams(gain, down.theta, down.f_d)
        norm = cfg.n_carriers * cfg.m_bs
        rx = simulate_downlink_rx([truth], beam_matrix([down], cfg, dl), l, 1.0, 0.0, None, cfg, dl)
        est = estimate_downlink_gain(rx.summed[0], l, down.f_d, 1.0, norm, cfg)
        worst = max(worst, abs(est - gain) / abs(gain))
        # the same loop driven by the noiseless uplink estimate instead of the true uplink path
        tracked = track_uplink(synthesize_pilot_observation([up], cfg, math.inf), cfg).paths[0]
        down_t = map_reciprocal(tracked, cfg, dl)
        rx = simulate_downlink_rx([truth], beam_matrix([down_t], cfg, dl), l, 1.0, 0.0, None, cfg, dl)
        est = estimate_downlink_gain(rx.summed[0], l, down_t.f_d, 1.0, norm, cfg)
        worst_tracked = max(worst_tracked, abs(est - gain) / abs(gain))

    spec = spec_from_dict({"name": "downlink", "snr_grid_db": [20.0], "antenna_grid": [128], "n_trials": 50,
                           "k_uavs": 4, "seed": 5, "stages": ["uplink", "downlink"],
                           "truth_policy": {"separation": "angle"}})
    result = run_experiment(spec)
    mse = result.mean("mse_h_downlink")
    report(5, worst < 1e-10 and worst_tracked < 1e-5 and mse < 1e-2 and result.failed_trials == 0,
           f"noiseless gain error {worst:.1e} (via uplink estimate {worst_tracked:.1e}), "
           f"20 dB K=4 downlink MSE {mse:.2e} over 50 trials")


def test_criterion_6_ekf():
    cfg = SystemConfig(m_bs=128)
    settings = EkfSettings()
    worst_rms, psd_ok = 0.0, True
    for seed in range(20):
        rng = np.random.default_rng(seed)
        theta0 = rng.uniform(-0.8, 0.7)
        truth = sweep_thetas(theta0, 0.001, 100)
        snaps = sweep_snapshots(np.exp(2j * np.pi * rng.uniform()), truth, rng.uniform(-1500, 1500), cfg, 20.0, rng)
        track = track_doa(snaps, theta0 + rng.normal(0, 1e-2), cfg, settings)
        worst_rms = max(worst_rms, float(np.sqrt(np.mean((track.thetas - truth) ** 2))))
        for k in track.covariances:
            psd_ok &= np.allclose(k, k.T, atol=1e-15) and np.linalg.eigvalsh(k).min() >= -1e-12
    report(6, worst_rms < 5e-3 and psd_ok, f"worst RMS tracking error {worst_rms:.2e} rad over 20 seeds, "
                                           f"covariance symmetric PSD: {psd_ok}")


def test_criterion_7_trends():
    spec = spec_from_dict({"name": "trend", "snr_grid_db": [0, 5, 10, 15, 20], "antenna_grid": [16, 32, 128],
                           "n_trials": 50, "k_uavs": 4, "seed": 0, "stages": ["uplink"]})
    result = run_experiment(spec)
    lines, ok = [], result.failed_trials == 0
    for m in spec.antenna_grid:
        for name in ("mse_h", "mse_theta", "mse_fd", "mse_alpha"):
            curve = [result.mean(name, s, m) for s in spec.snr_grid_db]
            mono = all(b <= a for a, b in zip(curve, curve[1:]))
            ok &= mono
            if not mono:
                lines.append(f"{name}@M={m} not monotone {curve}")
    by_m = [result.mean("mse_h", 20.0, m) for m in spec.antenna_grid]
    ok &= all(b < a for a, b in zip(by_m, by_m[1:]))
    report(7, ok, f"mse_h at 20 dB by M {[f'{v:.2e}' for v in by_m]}; " + ("; ".join(lines) or "all SNR curves monotone"))


def test_criterion_8_classification():
    cfg = SystemConfig()
    c = classify(cfg, 6000.0)
    direct = (128 - 1) * (299_792_458.0 / 60e9 / 2) / (299_792_458.0 * (1 / 600e6))
    values_ok = abs(c.antenna_ratio - 0.635) < 1e-3 and abs(c.antenna_ratio - direct) < 1e-12
    values_ok &= abs(c.time_ratio - 1e-5) < 1e-12 and c.label is Selectivity.NONSELECTIVE
    reached = {
        classify(cfg, 6000.0).label,
        classify(cfg.replace(w=2.4e9, t_s=None), 0.0).label,
        classify(cfg, 2.0 / cfg.t_s).label,
        classify(SystemConfig(m_bs=512), 2.0 / cfg.t_s).label,
    }
    report(8, values_ok and reached == set(Selectivity),
           f"antenna_ratio {c.antenna_ratio:.4f}, time_ratio {c.time_ratio:.1e}, classes reached {len(reached)}/4")


def test_criterion_9_determinism(tmp_path, monkeypatch):
    import json

    spec = {"name": "det", "snr_grid_db": [5, 15], "antenna_grid": [16, 32], "n_trials": 3, "k_uavs": 3,
            "seed": 99, "trajectory": {"n_blocks": 20}}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    outs = []
    for threads in ("1", "1", "4"):
        monkeypatch.setenv("SQUINT_THREADS", threads)
        out = tmp_path / f"run{len(outs)}"
        assert cli.main(["sweep", "--config", str(path), "--out", str(out)]) == 0
        outs.append({f: (out / f).read_bytes() for f in ("metrics.csv", "gcs_diag.csv", "ekf_traj.csv")})
    same = outs[0] == outs[1] == outs[2]
    report(9, same, "byte-identical CSV across repeated runs and worker counts 1 and 4")
