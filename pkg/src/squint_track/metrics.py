"""Normalized squared-error metrics between planted and estimated paths."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .channel import PathParams, SystemConfig, pilot_atoms

METRIC_NAMES = ("mse_h", "mse_alpha", "mse_fd", "mse_theta")
MATCH_GATE = 1.0


def match_paths(truth: Sequence[PathParams], estimate: Sequence[PathParams],
                cfg: SystemConfig, gate: float | None = MATCH_GATE) -> list[int | None]:
    """Greedy nearest-neighbour assignment of estimates to truths.

    Distance is Euclidean in ``(sin theta, f_d N_b T_s)`` with the Doppler
    coordinate wrapped to ``[-0.5, 0.5)``.  A pair is only eligible when it
    lies within ``gate`` resolution cells on both axes, so a spurious
    estimate far from a missed path is not credited as its detection.
    Returns, for every truth, the index of its estimate or ``None``.
    """
    matches: list[int | None] = [None] * len(truth)
    if not truth or not estimate:
        return matches
    st = np.sin([p.theta for p in truth])
    se = np.sin([p.theta for p in estimate])
    ft = np.array([p.f_d for p in truth]) * cfg.block_duration
    fe = np.array([p.f_d for p in estimate]) * cfg.block_duration
    dfd = ft[:, None] - fe[None, :]
    dfd = (dfd + 0.5) % 1.0 - 0.5
    dist = np.hypot(st[:, None] - se[None, :], dfd)
    # ties broken by the parameters, not list positions, to stay permutation invariant
    keys = sorted(
        ((dist[i, j], st[i], ft[i], se[j], fe[j], i, j)
         for i in range(len(truth)) for j in range(len(estimate))),
    )
    if gate is None:
        eligible = np.ones_like(dist, dtype=bool)
    else:
        eligible = ((np.abs(st[:, None] - se[None, :]) <= gate * cfg.angle_cell)
                    & (np.abs(dfd) <= gate * cfg.doppler_cell * cfg.block_duration))
    used_t, used_e = set(), set()
    for *_, i, j in keys:
        if i in used_t or j in used_e or not eligible[i, j]:
            continue
        matches[i] = j
        used_t.add(i)
        used_e.add(j)
    return matches


def _block_errors(true: PathParams, est: PathParams, cfg: SystemConfig) -> np.ndarray:
    """Per-block ``||h(l) - h_hat(l)||^2 / ||h(l)||^2`` over all pilot subcarriers."""
    atoms = pilot_atoms([true.theta, est.theta], [true.f_d, est.f_d], cfg)
    h = (atoms[:, 0] * true.alpha).reshape(cfg.p_pilots, cfg.l_blocks, cfg.m_bs)
    h_hat = (atoms[:, 1] * est.alpha).reshape(cfg.p_pilots, cfg.l_blocks, cfg.m_bs)
    num = np.sum(np.abs(h - h_hat) ** 2, axis=(0, 2))
    den = np.sum(np.abs(h) ** 2, axis=(0, 2))
    return num / den


def _rel_sq(true, est) -> float:
    return float(abs(true - est) ** 2 / abs(true) ** 2)


def channel_mse(truth: Sequence[PathParams], estimate: Sequence[PathParams],
                cfg: SystemConfig, matches: list[int | None] | None = None) -> float:
    """Normalized channel error averaged over paths and blocks; misses count 1."""
    if matches is None:
        matches = match_paths(truth, estimate, cfg)
    per_path = [1.0 if j is None else float(np.mean(_block_errors(t, estimate[j], cfg)))
                for t, j in zip(truth, matches)]
    return float(np.mean(per_path))


def mse_metrics(truth: Sequence[PathParams], estimate: Sequence[PathParams],
                cfg: SystemConfig) -> dict[str, float]:
    """Normalized MSEs of channel, gain, Doppler shift and DOA.

    The parameters are constant over the stacked blocks, so averaging the
    parameter errors over blocks is a no-op.  Unmatched truths contribute 1
    to every metric; surplus estimates are ignored.
    """
    if not truth:
        raise ValueError("truth list is empty")
    matches = match_paths(truth, estimate, cfg)
    sums = dict.fromkeys(METRIC_NAMES, 0.0)
    for t, j in zip(truth, matches):
        if j is None:
            for name in METRIC_NAMES:
                sums[name] += 1.0
            continue
        e = estimate[j]
        sums["mse_h"] += float(np.mean(_block_errors(t, e, cfg)))
        sums["mse_alpha"] += _rel_sq(t.alpha, e.alpha)
        sums["mse_fd"] += _rel_sq(t.f_d, e.f_d)
        sums["mse_theta"] += _rel_sq(t.theta, e.theta)
    return {name: value / len(truth) for name, value in sums.items()}
