"""Downlink channel recovery from uplink estimates by reciprocity.

DOA is shared between uplink and downlink and the Doppler shift scales
with the carrier, so only the downlink complex gain has to be trained.
The base station beams one pilot symbol towards every scheduled UAV on all
subcarriers; each UAV sums its received samples over subcarriers and
divides out the known beamforming gain and Doppler phase.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import (PathParams, StackedChannel, SystemConfig, bs_steering, complex_noise,
                      stacked_channel)
from .errors import ConfigError

RECIPROCITY_SPAN = 5e9


@dataclass(frozen=True)
class DownlinkConfig:
    f_c_dl: float

    def __post_init__(self):
        if not np.isfinite(self.f_c_dl) or self.f_c_dl <= 0:
            raise ConfigError(f"f_c_dl must be positive, got {self.f_c_dl!r}")

    def system(self, cfg: SystemConfig) -> SystemConfig:
        """Uplink geometry re-centred on the downlink carrier."""
        if abs(self.f_c_dl - cfg.f_c) > RECIPROCITY_SPAN:
            warnings.warn(
                f"uplink/downlink carriers {abs(self.f_c_dl - cfg.f_c) / 1e9:.1f} GHz apart; "
                "angular reciprocity may not hold", stacklevel=2)
        return cfg.replace(f_c=self.f_c_dl, d=cfg.d, t_s=cfg.t_s)


def map_reciprocal(p_uplink: PathParams, cfg: SystemConfig, dl: DownlinkConfig) -> PathParams:
    """Downlink DOA and Doppler of an uplink path; the gain is left as NaN."""
    return PathParams(complex(np.nan, np.nan), p_uplink.theta, p_uplink.f_d * dl.f_c_dl / cfg.f_c)


def beamforming_vector(paths: Sequence[PathParams], n: int, cfg: SystemConfig,
                       dl: DownlinkConfig) -> np.ndarray:
    """Sum of conjugate downlink steering vectors at subcarrier ``n``."""
    if not paths:
        raise ConfigError("at least one UAV is required")
    dl_cfg = dl.system(cfg)
    return sum(np.conj(bs_steering(p.theta, n * cfg.eta, dl_cfg)) for p in paths)


def beam_matrix(paths: Sequence[PathParams], cfg: SystemConfig, dl: DownlinkConfig) -> np.ndarray:
    """Beamforming vectors for every subcarrier, shape ``(N, M)``."""
    return np.stack([beamforming_vector(paths, n, cfg, dl) for n in range(cfg.n_carriers)])


def downlink_row(p: PathParams, l: int, n: int, cfg: SystemConfig, dl: DownlinkConfig) -> np.ndarray:
    """Downlink channel row ``h^D(l, n)`` of one UAV (length ``M``)."""
    dl_cfg = dl.system(cfg)
    phase = np.exp(-2j * np.pi * p.f_d * l * cfg.block_duration)
    return p.alpha * phase * bs_steering(p.theta, n * cfg.eta, dl_cfg)


@dataclass
class DownlinkRx:
    per_subcarrier: np.ndarray  # (K, N)
    summed: np.ndarray  # (K,)
    interference: np.ndarray  # (K, N), noise-free leakage from the other beams


def simulate_downlink_rx(truth: Sequence[PathParams], beams: np.ndarray, l: int, s: complex,
                         noise_var: float, rng: np.random.Generator | int | None,
                         cfg: SystemConfig, dl: DownlinkConfig,
                         own_beams: np.ndarray | None = None) -> DownlinkRx:
    """Received downlink training samples of every UAV at block ``l``.

    ``beams`` is the ``(N, M)`` output of :func:`beam_matrix`.  The
    interference from beams aimed at other UAVs is simulated exactly; when
    ``own_beams`` (``(K, N, M)``, each UAV's own beam) is given it is also
    reported separately.
    """
    beams = np.asarray(beams)
    if beams.shape != (cfg.n_carriers, cfg.m_bs):
        raise ConfigError(f"beams must have shape {(cfg.n_carriers, cfg.m_bs)}")
    rows = np.stack([
        np.stack([downlink_row(p, l, n, cfg, dl) for n in range(cfg.n_carriers)]) for p in truth
    ])  # (K, N, M)
    clean = np.einsum("knm,nm->kn", rows, beams) * s
    interference = np.zeros_like(clean)
    if own_beams is not None:
        interference = clean - np.einsum("knm,knm->kn", rows, own_beams) * s
    y = clean
    if noise_var > 0:
        y = clean + complex_noise(np.random.default_rng(rng), clean.shape, noise_var)
    return DownlinkRx(y, y.sum(axis=1), interference)


def estimate_downlink_gain(y_l: complex, l: int, f_d_dl: float, s: complex,
                           normalization: float, cfg: SystemConfig) -> complex:
    """Invert the summed training sample for the downlink gain.

    With matched unit-modulus beams the noiseless sum over ``N``
    subcarriers is ``N * M * alpha * exp(-j 2 pi f_d l N_b T_s) * s``, so
    ``normalization`` is normally ``N * M``.
    """
    if s == 0:
        raise ConfigError("training symbol must be non-zero")
    phase = np.exp(-2j * np.pi * f_d_dl * l * cfg.block_duration)
    return complex(y_l / (normalization * phase * s))


def reconstruct_downlink(alpha: complex, theta: float, f_d: float, cfg: SystemConfig,
                         dl: DownlinkConfig, subcarriers: Sequence[int] | None = None
                         ) -> list[StackedChannel]:
    """Stacked downlink channels of one UAV on the given subcarriers."""
    if subcarriers is None:
        subcarriers = cfg.pilot_indices
    dl_cfg = dl.system(cfg)
    p = PathParams(alpha, theta, f_d)
    return [stacked_channel(p, int(n), dl_cfg) for n in subcarriers]
