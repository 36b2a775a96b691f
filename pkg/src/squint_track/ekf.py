"""DOA tracking from IDFT peak locations with an extended Kalman filter.

For each pilot subcarrier ``p`` the antenna slice of a block is taken to
the angular domain with a unitary IDFT.  A path at DOA ``theta``
concentrates its energy around bin

    q_p = (d M / lambda_c) sin(theta) (1 + f_p / f_c)   (mod M)

so the fractional peak locations of all pilots form a nonlinear
measurement of ``theta``.  The state ``[theta, theta_dot]`` (rad, rad/s)
follows a constant-rate model over one block duration ``N_b T_s``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .channel import SystemConfig, complex_noise, noise_variance, spatial_frequency
from .errors import ConfigError, SingularSystemError

PSD_TOL = 1e-10


def _as_matrix(value) -> np.ndarray:
    return np.array(value, dtype=float).reshape(2, 2)


@dataclass
class EkfSettings:
    """Noise statistics of the tracker.

    ``q_omega`` is the per-block process noise of ``[theta, theta_dot]``;
    ``q_u`` the variance (bins^2) of each peak measurement; ``kappa_0`` the
    prior covariance at the first block.  ``peak_halfwidth`` restricts the
    peak search to bins around the predicted location when set.
    """

    q_omega: tuple = ((1e-8, 0.0), (0.0, 1e-6))
    q_u: float = 0.01
    kappa_0: tuple = ((1e-4, 0.0), (0.0, 100.0))
    peak_halfwidth: int | None = None

    def __post_init__(self):
        q = _as_matrix(self.q_omega)
        k0 = _as_matrix(self.kappa_0)
        for name, mat in (("q_omega", q), ("kappa_0", k0)):
            if not np.allclose(mat, mat.T) or np.linalg.eigvalsh(mat).min() < -PSD_TOL:
                raise ConfigError(f"{name} must be symmetric positive semidefinite")
        if not self.q_u >= 0:
            raise ConfigError("q_u must be non-negative")
        self.q_omega = tuple(map(tuple, q))
        self.kappa_0 = tuple(map(tuple, k0))


@dataclass
class EkfState:
    psi: np.ndarray
    kappa: np.ndarray
    q_omega: np.ndarray
    q_u: float

    @classmethod
    def initial(cls, theta: float, settings: EkfSettings, rate: float = 0.0) -> "EkfState":
        return cls(np.array([theta, rate], dtype=float), _as_matrix(settings.kappa_0),
                   _as_matrix(settings.q_omega), float(settings.q_u))

    @property
    def theta(self) -> float:
        return float(self.psi[0])


@dataclass
class Measurement:
    q_values: np.ndarray
    block_index: int = 0


def _check_covariance(kappa: np.ndarray):
    if not np.allclose(kappa, kappa.T, atol=1e-12, rtol=1e-9):
        raise AssertionError("covariance lost symmetry")
    if np.linalg.eigvalsh(kappa).min() < -PSD_TOL:
        raise AssertionError("covariance lost positive semidefiniteness")


def idft_channel(h: np.ndarray, m_bs: int | None = None) -> np.ndarray:
    """Unitary IDFT, ``h~[q] = sum_m h[m] exp(j 2 pi m q / M) / sqrt(M)``."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 1 or (m_bs is not None and h.size != m_bs):
        raise ConfigError(f"expected a vector of length {m_bs}, got shape {h.shape}")
    return np.fft.ifft(h) * np.sqrt(h.size)


def extract_peak(h_tilde: np.ndarray, center: float | None = None,
                 halfwidth: int | None = None) -> float:
    """Fractional bin of the strongest angular component, in ``[0, M)``.

    The integer argmax of ``|h~|`` is refined by three-point interpolation
    on the complex bins around it (Jacobsen's estimator with Candan's
    ``tan(pi/M) / (pi/M)`` correction, which is unbiased for the
    rectangular aperture).
    """
    h_tilde = np.asarray(h_tilde, dtype=complex)
    power = np.abs(h_tilde) ** 2
    m = power.size
    if not np.any(power > 0):
        raise ConfigError("cannot locate the peak of an all-zero vector")
    if center is not None and halfwidth is not None:
        bins = (int(round(center)) + np.arange(-halfwidth, halfwidth + 1)) % m
        i = int(bins[np.argmax(power[bins])])
    else:
        i = int(np.argmax(power))
    left, mid, right = h_tilde[(i - 1) % m], h_tilde[i], h_tilde[(i + 1) % m]
    den = 2 * mid - left - right
    offset = 0.0
    if m > 2 and den != 0:
        offset = np.tan(np.pi / m) / (np.pi / m) * float(np.real((left - right) / den))
        offset = float(np.clip(offset, -0.5, 0.5))
    return float((i + offset) % m)


def predicted_bins(theta: float, cfg: SystemConfig) -> np.ndarray:
    """Noise-free peak locations of every pilot subcarrier, modulo ``M``."""
    return (cfg.m_bs * spatial_frequency(theta, cfg.pilot_frequencies, cfg)) % cfg.m_bs


def measure(snapshot: np.ndarray, cfg: SystemConfig, block_index: int = 0,
            center_theta: float | None = None, halfwidth: int | None = None) -> Measurement:
    """Peak locations of a ``(P, M)`` per-pilot antenna snapshot."""
    snapshot = np.asarray(snapshot)
    if snapshot.shape != (cfg.p_pilots, cfg.m_bs):
        raise ConfigError(f"snapshot must have shape {(cfg.p_pilots, cfg.m_bs)}")
    centers = predicted_bins(center_theta, cfg) if center_theta is not None else [None] * cfg.p_pilots
    q = [extract_peak(idft_channel(row), c, halfwidth) for row, c in zip(snapshot, centers)]
    return Measurement(np.array(q), block_index)


def transition(cfg: SystemConfig) -> np.ndarray:
    return np.array([[1.0, cfg.block_duration], [0.0, 1.0]])


def predict(state: EkfState, cfg: SystemConfig) -> EkfState:
    phi = transition(cfg)
    kappa = phi @ state.kappa @ phi.T + state.q_omega
    kappa = 0.5 * (kappa + kappa.T)
    _check_covariance(kappa)
    return dataclasses.replace(state, psi=phi @ state.psi, kappa=kappa)


def measurement_jacobian(theta: float, cfg: SystemConfig) -> np.ndarray:
    """``dq_p / d[theta, theta_dot]`` stacked over pilots, shape ``(P, 2)``."""
    slope = cfg.m_bs * cfg.d * np.cos(theta) * (1.0 + cfg.pilot_frequencies / cfg.f_c) / cfg.wavelength
    return np.column_stack([slope, np.zeros_like(slope)])


def wrap_bins(x, m_bs: int):
    return (np.asarray(x) + m_bs / 2) % m_bs - m_bs / 2


def update(state: EkfState, meas: Measurement, cfg: SystemConfig) -> tuple[EkfState, np.ndarray]:
    """Kalman update with the stacked pilot peak measurement.

    Returns the posterior state and the (wrapped) innovation vector.
    """
    q = np.asarray(meas.q_values, dtype=float)
    if q.shape != (cfg.p_pilots,):
        raise ConfigError(f"expected {cfg.p_pilots} peak measurements, got {q.shape}")
    theta = state.theta
    jac = measurement_jacobian(theta, cfg)
    innovation = wrap_bins(q - predicted_bins(theta, cfg), cfg.m_bs)
    r = state.q_u * np.eye(cfg.p_pilots)
    s = jac @ state.kappa @ jac.T + r
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularSystemError("innovation covariance is singular", float(cond))
    gain = np.linalg.solve(s, jac @ state.kappa).T
    psi = state.psi + gain @ innovation
    # Joseph form keeps the posterior symmetric PSD
    i_kh = np.eye(2) - gain @ jac
    kappa = i_kh @ state.kappa @ i_kh.T + gain @ r @ gain.T
    kappa = 0.5 * (kappa + kappa.T)
    _check_covariance(kappa)
    return dataclasses.replace(state, psi=psi, kappa=kappa), innovation


@dataclass
class DoaTrack:
    thetas: np.ndarray
    rates: np.ndarray
    innovation_norms: np.ndarray
    covariances: list[np.ndarray] = field(default_factory=list)


def track_doa(snapshots: np.ndarray, init_theta: float, cfg: SystemConfig,
              settings: EkfSettings | None = None) -> DoaTrack:
    """Track the DOA of one UAV over a ``(blocks, P, M)`` snapshot sequence.

    The first block is updated against the prior directly; every later
    block is predicted one block ahead before its update.
    """
    settings = settings or EkfSettings()
    snapshots = np.asarray(snapshots)
    if snapshots.ndim != 3 or snapshots.shape[0] < 1:
        raise ConfigError("snapshots must have shape (blocks, P, M) with at least one block")
    state = EkfState.initial(init_theta, settings)
    thetas, rates, norms, covs = [], [], [], []
    for l, snap in enumerate(snapshots):
        if l > 0:
            state = predict(state, cfg)
        center = state.theta if settings.peak_halfwidth is not None else None
        meas = measure(snap, cfg, l, center, settings.peak_halfwidth)
        state, innovation = update(state, meas, cfg)
        state.psi[0] = float(np.clip(state.psi[0], -np.pi / 2 + 1e-9, np.pi / 2 - 1e-9))
        thetas.append(state.theta)
        rates.append(float(state.psi[1]))
        norms.append(float(np.linalg.norm(innovation)))
        covs.append(state.kappa.copy())
    return DoaTrack(np.array(thetas), np.array(rates), np.array(norms), covs)


def sweep_thetas(theta_0: float, rate_per_block: float, n_blocks: int) -> np.ndarray:
    return theta_0 + rate_per_block * np.arange(n_blocks)


def sweep_snapshots(alpha: complex, thetas: np.ndarray, f_d: float, cfg: SystemConfig,
                    snr_db: float = np.inf, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Per-block, per-pilot antenna snapshots of one UAV following ``thetas``.

    Noise follows the uplink convention: per-entry signal power over noise
    variance equals the SNR.
    """
    thetas = np.asarray(thetas, dtype=float)
    if np.any(np.abs(thetas) >= np.pi / 2):
        raise ConfigError("trajectory leaves (-pi/2, pi/2)")
    m = np.arange(cfg.m_bs)
    l = np.arange(thetas.size)
    nu = spatial_frequency(thetas[:, None], cfg.pilot_frequencies[None, :], cfg)  # (B, P)
    doppler = np.exp(-2j * np.pi * f_d * l * cfg.block_duration)
    snaps = alpha * doppler[:, None, None] * np.exp(-2j * np.pi * nu[:, :, None] * m)
    var = noise_variance(snaps, snr_db)
    if var > 0:
        snaps = snaps + complex_noise(np.random.default_rng(rng), snaps.shape, var)
    return snaps
