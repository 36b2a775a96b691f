"""Wideband space-time channel model with Doppler shift and beam squint.

A ULA base station with ``m_bs`` antennas observes ``k`` single-antenna
UAVs over ``l_blocks`` blocks of ``n_block`` OFDM symbols.  The channel of
one UAV at baseband subcarrier offset ``f`` is

    h[l, m] = alpha * exp(-j 2 pi f_d l N_b T_s)
                    * exp(-j 2 pi m d sin(theta) (1 + f / f_c) / lambda_c)

and the stacked (vectorized) channel is flattened block-major, i.e. the
entry for ``(l, m)`` sits at flat index ``l * m_bs + m``.  Pilot
observations concatenate the stacked channels of the pilot subcarriers in
``pilot_indices`` order.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SystemConfig:
    """Array geometry and OFDM/block timing shared by every module.

    ``d`` defaults to half the carrier wavelength and ``t_s`` to ``1 / w``.
    ``pilot_indices`` defaults to a comb of ``p_pilots`` subcarriers spread
    evenly across the band.
    """

    m_bs: int = 128
    d: float | None = None
    f_c: float = 60e9
    w: float = 600e6
    n_carriers: int = 64
    n_block: int = 150_000
    t_s: float | None = None
    l_blocks: int = 8
    p_pilots: int = 4
    pilot_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        for name in ("m_bs", "n_carriers", "n_block", "l_blocks", "p_pilots"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        for name in ("f_c", "w"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be positive and finite, got {value!r}")
        if self.d is None:
            object.__setattr__(self, "d", 0.5 * SPEED_OF_LIGHT / self.f_c)
        if self.t_s is None:
            object.__setattr__(self, "t_s", 1.0 / self.w)
        if not np.isfinite(self.d) or self.d <= 0:
            raise ConfigError(f"d must be positive, got {self.d!r}")
        if not np.isfinite(self.t_s) or self.t_s <= 0:
            raise ConfigError(f"t_s must be positive, got {self.t_s!r}")
        if self.p_pilots > self.n_carriers:
            raise ConfigError("p_pilots cannot exceed n_carriers")
        if self.pilot_indices is None:
            step = self.n_carriers / self.p_pilots
            pilots = tuple(int(math.floor(i * step)) for i in range(self.p_pilots))
        else:
            pilots = tuple(int(p) for p in self.pilot_indices)
        if len(pilots) != self.p_pilots:
            raise ConfigError(f"expected {self.p_pilots} pilot indices, got {len(pilots)}")
        if any(b <= a for a, b in zip(pilots, pilots[1:])):
            raise ConfigError("pilot_indices must be strictly increasing")
        if pilots[0] < 0 or pilots[-1] >= self.n_carriers:
            raise ConfigError("pilot_indices must lie in [0, n_carriers)")
        object.__setattr__(self, "pilot_indices", pilots)

    @property
    def eta(self) -> float:
        """Subcarrier spacing in Hz."""
        return self.w / self.n_carriers

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def block_duration(self) -> float:
        """Duration of one block, ``N_b * T_s``."""
        return self.n_block * self.t_s

    @property
    def pilot_frequencies(self) -> np.ndarray:
        return np.asarray(self.pilot_indices, dtype=float) * self.eta

    @property
    def stacked_length(self) -> int:
        return self.m_bs * self.l_blocks

    @property
    def observation_length(self) -> int:
        return self.m_bs * self.l_blocks * self.p_pilots

    @property
    def doppler_period(self) -> float:
        """Doppler shifts are only identifiable modulo ``1 / (N_b T_s)``."""
        return 1.0 / self.block_duration

    @property
    def angle_cell(self) -> float:
        """Array resolution in the sin(theta) domain, ``lambda_c / (M d)``."""
        return self.wavelength / (self.m_bs * self.d)

    @property
    def doppler_cell(self) -> float:
        """Doppler resolution ``1 / (L N_b T_s)`` in Hz."""
        return 1.0 / (self.l_blocks * self.block_duration)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["pilot_indices"] = list(self.pilot_indices)
        return out


@dataclass(frozen=True)
class PathParams:
    """Gain, direction of arrival and Doppler shift of one LoS path."""

    alpha: complex
    theta: float
    f_d: float

    def __post_init__(self):
        if not np.isfinite(self.theta) or not -np.pi / 2 < self.theta < np.pi / 2:
            raise ConfigError(f"theta must lie in (-pi/2, pi/2), got {self.theta!r}")
        if not np.isfinite(self.f_d):
            raise ConfigError(f"f_d must be finite, got {self.f_d!r}")
        object.__setattr__(self, "alpha", complex(self.alpha))

    @property
    def has_gain(self) -> bool:
        return bool(np.isfinite(self.alpha.real) and np.isfinite(self.alpha.imag))


@dataclass(frozen=True)
class StackedChannel:
    values: np.ndarray
    subcarrier_index: int

    def block(self, l: int, m_bs: int) -> np.ndarray:
        """Antenna slice of block ``l``."""
        return self.values[l * m_bs:(l + 1) * m_bs]


class Selectivity(str, enum.Enum):
    NONSELECTIVE = "nonselective"
    ANTENNA_SELECTIVE = "antenna_selective"
    TIME_SELECTIVE = "time_selective"
    DOUBLY_SELECTIVE = "doubly_selective"


@dataclass(frozen=True)
class SelectivityClass:
    antenna_ratio: float
    time_ratio: float
    threshold: float = 1.0
    label: Selectivity = field(init=False)

    def __post_init__(self):
        antenna = self.antenna_ratio >= self.threshold
        time = self.time_ratio >= self.threshold
        if antenna and time:
            label = Selectivity.DOUBLY_SELECTIVE
        elif antenna:
            label = Selectivity.ANTENNA_SELECTIVE
        elif time:
            label = Selectivity.TIME_SELECTIVE
        else:
            label = Selectivity.NONSELECTIVE
        object.__setattr__(self, "label", label)

    @property
    def raw_ratios(self) -> tuple[float, float]:
        return (self.antenna_ratio, self.time_ratio)


def _check_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ConfigError("theta must be finite")
    if np.any(np.abs(theta) >= np.pi / 2):
        raise ConfigError("theta must lie in the open interval (-pi/2, pi/2)")
    return theta


def spatial_frequency(theta, f, cfg: SystemConfig):
    """Phase slope per antenna, in cycles: ``d sin(theta) (1 + f/f_c) / lambda_c``."""
    return cfg.d * np.sin(theta) * (1.0 + np.asarray(f) / cfg.f_c) / cfg.wavelength


def bs_steering(theta: float, f: float, cfg: SystemConfig) -> np.ndarray:
    """Frequency-dependent BS steering vector ``a(theta, f)`` of length ``m_bs``.

    ``f`` is the baseband offset from the carrier.  Setting ``f = 0``
    recovers the narrowband steering vector.
    """
    theta = float(_check_theta(theta))
    if not np.isfinite(f):
        raise ConfigError("f must be finite")
    if f < 0:
        raise ConfigError("subcarrier offset f must be non-negative")
    m = np.arange(cfg.m_bs)
    return np.exp(-2j * np.pi * m * spatial_frequency(theta, f, cfg))


def doppler_steering(f_d: float, cfg: SystemConfig) -> np.ndarray:
    """Per-block Doppler phase ramp ``b[l] = exp(-j 2 pi f_d l N_b T_s)``."""
    if not np.isfinite(f_d):
        raise ConfigError("f_d must be finite")
    l = np.arange(cfg.l_blocks)
    return np.exp(-2j * np.pi * f_d * l * cfg.block_duration)


def stacked_channel(p: PathParams, p_idx: int, cfg: SystemConfig) -> StackedChannel:
    if not 0 <= p_idx < cfg.n_carriers:
        raise ConfigError(f"subcarrier index {p_idx} outside [0, {cfg.n_carriers})")
    a = bs_steering(p.theta, p_idx * cfg.eta, cfg)
    b = doppler_steering(p.f_d, cfg)
    return StackedChannel(p.alpha * np.kron(b, a), int(p_idx))


def pilot_atoms(thetas, dopplers, cfg: SystemConfig) -> np.ndarray:
    """Unit-gain pilot observations for many paths at once.

    Returns an ``(M*L*P, K)`` matrix whose column ``k`` is the
    concatenation of the stacked channels of path ``k`` over the pilot
    subcarriers.  This is the hot path of the estimator, so it skips the
    per-call validation done by :func:`bs_steering`.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    dopplers = np.atleast_1d(np.asarray(dopplers, dtype=float))
    m = np.arange(cfg.m_bs)
    l = np.arange(cfg.l_blocks)
    nu = spatial_frequency(thetas[None, :], cfg.pilot_frequencies[:, None], cfg)  # (P, K)
    a = np.exp(-2j * np.pi * nu[:, None, :] * m[None, :, None])  # (P, M, K)
    b = np.exp(-2j * np.pi * cfg.block_duration * l[:, None] * dopplers[None, :])  # (L, K)
    atoms = b[None, :, None, :] * a[:, None, :, :]  # (P, L, M, K)
    return atoms.reshape(cfg.observation_length, thetas.size)


def pilot_channel(p: PathParams, cfg: SystemConfig) -> np.ndarray:
    """Concatenated stacked channels of one path over the pilot subcarriers."""
    return np.concatenate([stacked_channel(p, int(i), cfg).values for i in cfg.pilot_indices])


def classify(cfg: SystemConfig, f_d_max: float, threshold: float = 1.0) -> SelectivityClass:
    """Antenna/time selectivity of the channel.

    The antenna ratio is the aperture delay ``(M-1) d / c`` relative to the
    symbol duration; the time ratio is ``f_d_max * T_s``.  A dimension is
    selective when its ratio reaches ``threshold``.
    """
    if not np.isfinite(f_d_max) or f_d_max < 0:
        raise ConfigError("f_d_max must be a non-negative finite number")
    antenna_ratio = (cfg.m_bs - 1) * cfg.d / (SPEED_OF_LIGHT * cfg.t_s)
    time_ratio = f_d_max * cfg.t_s
    return SelectivityClass(antenna_ratio, time_ratio, threshold)


def dirichlet(x, n: int):
    """Normalized Dirichlet kernel magnitude ``|sin(pi n x) / (n sin(pi x))|``."""
    x = np.asarray(x, dtype=float)
    den = n * np.sin(np.pi * x)
    num = np.sin(np.pi * n * x)
    near_int = np.abs(x - np.round(x)) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(near_int, 1.0, np.abs(num / np.where(near_int, 1.0, den)))
    return out if out.ndim else float(out)


def correlation_closed_form(p1: PathParams, p2: PathParams, p_idx: int, cfg: SystemConfig) -> float:
    """Product of the spatial and Doppler Dirichlet kernels."""
    f = p_idx * cfg.eta
    xi = spatial_frequency(p1.theta, f, cfg) - spatial_frequency(p2.theta, f, cfg)
    dop = (p1.f_d - p2.f_d) * cfg.block_duration
    return float(dirichlet(xi, cfg.m_bs) * dirichlet(dop, cfg.l_blocks))


def normalized_correlation(p1: PathParams, p2: PathParams, p_idx: int, cfg: SystemConfig) -> float:
    """``|h1^H h2| / (|h1| |h2|)`` of two stacked channels at one subcarrier."""
    h1 = stacked_channel(p1, p_idx, cfg).values
    h2 = stacked_channel(p2, p_idx, cfg).values
    n1, n2 = np.linalg.norm(h1), np.linalg.norm(h2)
    if n1 == 0 or n2 == 0:
        raise ConfigError("correlation of a zero-norm channel is undefined")
    return float(min(abs(np.vdot(h1, h2)) / (n1 * n2), 1.0))


def noise_variance(signal: np.ndarray, snr_db: float) -> float:
    """Noise variance giving average per-entry signal power / sigma^2 = SNR."""
    if np.isposinf(snr_db):
        return 0.0
    power = float(np.mean(np.abs(signal) ** 2))
    return power / 10.0 ** (snr_db / 10.0)


def complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """Circular complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_pilot_observation(
    truth: Sequence[PathParams],
    cfg: SystemConfig,
    snr_db: float,
    rng_seed: int | np.random.Generator | None = None,
) -> np.ndarray:
    """Noisy stacked uplink pilot observation ``y`` of length ``M*L*P``.

    All pilots are the symbol 1, so the observation is the sum of the
    per-path pilot channels plus circular Gaussian noise.  Pass
    ``snr_db=inf`` to disable noise.
    """
    if len(truth) == 0:
        raise ConfigError("at least one path is required")
    if np.isnan(snr_db):
        raise ConfigError("snr_db must not be NaN")
    alphas = np.array([p.alpha for p in truth])
    atoms = pilot_atoms([p.theta for p in truth], [p.f_d for p in truth], cfg)
    signal = atoms @ alphas
    var = noise_variance(signal, snr_db)
    if var == 0.0:
        return signal
    rng = np.random.default_rng(rng_seed)
    return signal + complex_noise(rng, signal.shape, var)
