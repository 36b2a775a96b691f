"""Gridless log-sum sparse recovery of (DOA, Doppler, gain) triples.

The uplink pilot observation is modelled as ``y = P(theta, f_d) alpha + w``
where column ``k`` of ``P`` is the unit-gain pilot channel of path ``k``.
The estimator minimizes

    J(theta, f_d, alpha) = sum_k log(|alpha_k|^2 + eps) + lam * ||y - P alpha||^2

by majorization-minimization.  Each iteration fixes the reweighting
``w_k = 1 / (|alpha_k|^2 + eps)``, eliminates ``alpha`` in closed form, takes
an Armijo step on the concentrated cost over the continuous dictionary
parameters, re-solves for ``alpha`` and then prunes negligible or
duplicated components.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import PathParams, SystemConfig, pilot_atoms
from .errors import ConfigError, ModelCollapsedError, SingularSystemError

log = logging.getLogger(__name__)

THETA_LIMIT = np.pi / 2 - 1e-6
SINGULAR_RCOND = 1e-13


@dataclass
class GcsSettings:
    """Tuning constants of the tracker.

    ``None`` defaults are resolved against the system configuration by
    :meth:`resolved`: ``lambda_0`` becomes the observation length,
    ``merge_theta`` half an angular cell (sin domain), ``merge_doppler``
    half a Doppler cell, and ``f_max`` half the Doppler ambiguity period.
    """

    k_max: int = 8
    lambda_0: float | None = None
    lambda_min: float = 1e-2
    lambda_cap: float = 1e12
    epsilon_init: float = 1e-1
    epsilon_min: float = 1e-8
    alpha_min: float = 0.0
    alpha_min_rel: float = 0.05
    gamma_stop: float = 1e-6
    max_iters: int = 200
    merge_theta: float | None = None
    merge_doppler: float | None = None
    f_max: float | None = None
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    max_backtracks: int = 30
    step_theta: float = 0.01
    step_doppler_cells: float = 0.01
    descent_steps: int = 3
    grid_oversample: int = 2
    refine_steps: int = 8

    def __post_init__(self):
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.max_iters < 1 or self.max_backtracks < 1 or self.descent_steps < 1:
            raise ConfigError("iteration counts must be >= 1")
        positive = ("lambda_min", "lambda_cap", "epsilon_init", "epsilon_min", "gamma_stop",
                    "armijo_c", "step_theta", "step_doppler_cells")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("lambda_0", "merge_theta", "merge_doppler", "f_max"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive")
        if self.alpha_min < 0 or self.alpha_min_rel < 0:
            raise ConfigError("alpha_min thresholds must be non-negative")
        if not 0 < self.armijo_shrink < 1:
            raise ConfigError("armijo_shrink must lie in (0, 1)")
        if self.epsilon_min > self.epsilon_init:
            raise ConfigError("epsilon_min must not exceed epsilon_init")

    def resolved(self, cfg: SystemConfig) -> "GcsSettings":
        return dataclasses.replace(
            self,
            lambda_0=self.lambda_0 or float(cfg.observation_length),
            merge_theta=self.merge_theta or 0.5 * cfg.angle_cell,
            merge_doppler=self.merge_doppler or 0.5 * cfg.doppler_cell,
            f_max=self.f_max or 0.5 * cfg.doppler_period,
        )


@dataclass
class Dictionary:
    """Pilot-domain dictionary ``P(theta, f_d)`` and its parameter derivatives."""

    columns: np.ndarray
    thetas: np.ndarray
    dopplers: np.ndarray
    cfg: SystemConfig = field(repr=False)

    @classmethod
    def build(cls, thetas, dopplers, cfg: SystemConfig) -> "Dictionary":
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float)).copy()
        dopplers = np.atleast_1d(np.asarray(dopplers, dtype=float)).copy()
        if thetas.shape != dopplers.shape:
            raise ConfigError("thetas and dopplers must have the same length")
        return cls(pilot_atoms(thetas, dopplers, cfg), thetas, dopplers, cfg)

    @property
    def k(self) -> int:
        return self.thetas.size

    def d_theta(self) -> np.ndarray:
        """Column-wise derivative ``dP[:, k] / d theta_k``."""
        m, _, scale = _flat_axes(self.cfg)
        mult = -2j * np.pi * np.outer(m * scale, np.cos(self.thetas))
        return mult * self.columns

    def d_doppler(self) -> np.ndarray:
        """Column-wise derivative ``dP[:, k] / d f_d,k``."""
        _, l, _ = _flat_axes(self.cfg)
        mult = -2j * np.pi * self.cfg.block_duration * l
        return mult[:, None] * self.columns


@functools.lru_cache(maxsize=64)
def _flat_axes(cfg: SystemConfig):
    """Antenna index, block index and per-entry ``d (1 + f_p/f_c) / lambda_c``
    for each entry of the flattened pilot observation."""
    shape = (cfg.p_pilots, cfg.l_blocks, cfg.m_bs)
    p_idx, l_idx, m_idx = np.indices(shape).reshape(3, -1)
    scale = cfg.d * (1.0 + cfg.pilot_frequencies[p_idx] / cfg.f_c) / cfg.wavelength
    for arr in (m_idx, l_idx, scale):
        arr.setflags(write=False)
    return m_idx.astype(float), l_idx.astype(float), scale


@dataclass
class GcsState:
    alphas: np.ndarray
    thetas: np.ndarray
    dopplers: np.ndarray
    lam: float
    epsilon: float
    iteration: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.alphas.size

    def dictionary(self, cfg: SystemConfig) -> Dictionary:
        return Dictionary.build(self.thetas, self.dopplers, cfg)

    def select(self, keep: np.ndarray) -> "GcsState":
        return dataclasses.replace(
            self,
            alphas=self.alphas[keep],
            thetas=self.thetas[keep],
            dopplers=self.dopplers[keep],
            history=list(self.history),
        )

    def paths(self) -> list[PathParams]:
        return [PathParams(complex(a), float(t), float(f))
                for a, t, f in zip(self.alphas, self.thetas, self.dopplers)]


@dataclass
class IterationRecord:
    iteration: int
    j_start: float
    j_lambda: float
    k: int
    lam: float
    epsilon: float
    gamma: float
    line_search_ok: bool


@dataclass
class GcsDiagnostics:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    init_thetas: np.ndarray | None = None
    init_dopplers: np.ndarray | None = None

    @property
    def history(self) -> list[float]:
        return [r.j_lambda for r in self.records]

    def csv_rows(self) -> list[dict]:
        return [
            {"iteration": r.iteration, "j_lambda": r.j_lambda, "k": r.k,
             "lambda": r.lam, "epsilon": r.epsilon, "gamma": r.gamma}
            for r in self.records
        ]


@dataclass
class UplinkResult:
    paths: list[PathParams]
    channels: np.ndarray
    diagnostics: GcsDiagnostics
    state: GcsState

    def __iter__(self):
        return iter((self.paths, self.channels, self.diagnostics))


def _check_dims(y: np.ndarray, dictionary: Dictionary):
    if y.ndim != 1 or y.shape[0] != dictionary.columns.shape[0]:
        raise ConfigError(
            f"observation length {y.shape} does not match dictionary rows "
            f"{dictionary.columns.shape[0]}")


def objective_j_lambda(y: np.ndarray, state: GcsState, cfg: SystemConfig) -> float:
    """Log-sum penalty plus weighted data misfit at the current state."""
    dictionary = state.dictionary(cfg)
    _check_dims(y, dictionary)
    return _objective(y, dictionary.columns, state.alphas, state.lam, state.epsilon)


def _objective(y, columns, alphas, lam, epsilon) -> float:
    residual = y - columns @ alphas
    penalty = float(np.sum(np.log(np.abs(alphas) ** 2 + epsilon)))
    return penalty + lam * float(np.vdot(residual, residual).real)


def lambda_from_residual(residual_sq: float, settings: GcsSettings, lambda_0: float) -> float:
    if residual_sq <= 0:
        return settings.lambda_cap
    return float(min(max(lambda_0 / residual_sq, settings.lambda_min), settings.lambda_cap))


def update_lambda(y: np.ndarray, state: GcsState, settings: GcsSettings, cfg: SystemConfig) -> float:
    """Data-fit weight ``max(lambda_0 / ||y - P alpha||^2, lambda_min)``.

    A zero residual yields ``settings.lambda_cap``.
    """
    columns = state.dictionary(cfg).columns
    residual = y - columns @ state.alphas
    lambda_0 = settings.lambda_0 or float(cfg.observation_length)
    return lambda_from_residual(float(np.vdot(residual, residual).real), settings, lambda_0)


def surrogate_weights(state: GcsState) -> np.ndarray:
    return 1.0 / (np.abs(state.alphas) ** 2 + state.epsilon)


def _gram_system(columns, y, weights, lam):
    gram = columns.conj().T @ columns
    gram[np.diag_indices_from(gram)] += np.asarray(weights, dtype=float) / lam
    return gram, columns.conj().T @ y


def _solve_gains(columns, y, weights, lam) -> np.ndarray:
    gram, rhs = _gram_system(columns, y, weights, lam)
    try:
        factor = scipy.linalg.cho_factor(gram, check_finite=False)
        alpha = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        pivots = np.abs(np.diag(factor[0])) ** 2
        # a tiny pivot means the factorization only survived through roundoff
        if pivots.min() <= SINGULAR_RCOND * pivots.max():
            alpha = None
    except (np.linalg.LinAlgError, ValueError):
        alpha = None
    if alpha is None or not np.all(np.isfinite(alpha)):
        raise SingularSystemError("regularized Gram matrix is singular", float(np.linalg.cond(gram)))
    return alpha


def optimal_alpha(y: np.ndarray, dictionary: Dictionary, weights, lam: float) -> np.ndarray:
    """Minimizer ``(P^H P + D / lam)^{-1} P^H y`` of the quadratic surrogate."""
    _check_dims(y, dictionary)
    return _solve_gains(dictionary.columns, y, weights, lam)


def surrogate(y, dictionary: Dictionary, alphas, weights, lam) -> float:
    """Quadratic surrogate ``alpha^H D alpha + lam ||y - P alpha||^2``
    without its ``alpha``-independent constant."""
    residual = y - dictionary.columns @ alphas
    quad = float(np.sum(np.asarray(weights) * np.abs(alphas) ** 2))
    return quad + lam * float(np.vdot(residual, residual).real)


def _concentrated(y, columns, weights, lam):
    """Return ``(||r||^2 + sum w |a|^2 / lam, a, r)`` at the optimal gains ``a``.

    The first value equals ``S_1 + ||y||^2``; comparing it directly avoids
    the cancellation in ``-y^H P R P^H y``.
    """
    alpha = _solve_gains(columns, y, weights, lam)
    residual = y - columns @ alpha
    value = float(np.vdot(residual, residual).real) + float(np.sum(weights * np.abs(alpha) ** 2)) / lam
    return value, alpha, residual


def marginal_cost(y: np.ndarray, dictionary: Dictionary, weights, lam: float) -> float:
    """Concentrated cost ``-y^H P (P^H P + D/lam)^{-1} P^H y``."""
    _check_dims(y, dictionary)
    weights = np.asarray(weights, dtype=float)
    value, _, _ = _concentrated(y, dictionary.columns, weights, lam)
    return value - float(np.vdot(y, y).real)


def _gradients(dictionary: Dictionary, alpha, residual):
    # dS1 = -2 Re(r^H dP alpha) with dP touching a single column per parameter
    rc = residual.conj()
    g_theta = -2.0 * np.real((rc @ dictionary.d_theta()) * alpha)
    g_doppler = -2.0 * np.real((rc @ dictionary.d_doppler()) * alpha)
    return g_theta, g_doppler


def grad_theta(y: np.ndarray, dictionary: Dictionary, weights, lam: float) -> np.ndarray:
    """Analytic derivative of :func:`marginal_cost` with respect to each DOA."""
    _check_dims(y, dictionary)
    _, alpha, residual = _concentrated(y, dictionary.columns, np.asarray(weights, float), lam)
    return _gradients(dictionary, alpha, residual)[0]


def grad_doppler(y: np.ndarray, dictionary: Dictionary, weights, lam: float) -> np.ndarray:
    """Analytic derivative of :func:`marginal_cost` with respect to each Doppler shift."""
    _check_dims(y, dictionary)
    _, alpha, residual = _concentrated(y, dictionary.columns, np.asarray(weights, float), lam)
    return _gradients(dictionary, alpha, residual)[1]


def wrap_doppler(f, cfg: SystemConfig):
    """Map Doppler shifts into ``[-period/2, period/2)``; the channel is periodic."""
    period = cfg.doppler_period
    return (np.asarray(f, dtype=float) + period / 2) % period - period / 2


@dataclass
class DescentResult:
    thetas: np.ndarray
    dopplers: np.ndarray
    cost: float
    accepted: bool


def descend(y: np.ndarray, state: GcsState, settings: GcsSettings, cfg: SystemConfig,
            weights: np.ndarray | None = None,
            caps: tuple[float, float] | None = None) -> DescentResult:
    """One Armijo-backtracked step on the concentrated cost over (theta, f_d).

    The search direction is the gradient scaled by a diagonal Gauss-Newton
    curvature, clipped per parameter to ``step_theta`` rad and
    ``step_doppler_cells`` Doppler cells unless ``caps`` (rad, Hz) is
    given.  A failed line search returns the current point with
    ``accepted=False``.
    """
    if weights is None:
        weights = surrogate_weights(state)
    thetas, dopplers = state.thetas, state.dopplers
    dictionary = Dictionary.build(thetas, dopplers, cfg)
    cost, alpha, residual = _concentrated(y, dictionary.columns, weights, state.lam)
    g_t, g_f = _gradients(dictionary, alpha, residual)
    unchanged = DescentResult(thetas.copy(), dopplers.copy(), cost - float(np.vdot(y, y).real), False)
    if not (np.all(np.isfinite(g_t)) and np.all(np.isfinite(g_f))):
        raise ConfigError("non-finite gradient")
    if not (np.any(g_t) or np.any(g_f)):
        unchanged.accepted = True
        return unchanged

    power = np.abs(alpha) ** 2
    h_t = 2.0 * power * np.sum(np.abs(dictionary.d_theta()) ** 2, axis=0)
    h_f = 2.0 * power * np.sum(np.abs(dictionary.d_doppler()) ** 2, axis=0)
    if caps is None:
        caps = (settings.step_theta, settings.step_doppler_cells * cfg.doppler_cell)
    cap_t, cap_f = caps
    dir_t = _scaled_direction(g_t, h_t, cap_t)
    dir_f = _scaled_direction(g_f, h_f, cap_f)
    slope = float(g_t @ dir_t + g_f @ dir_f)
    if slope >= 0:
        return unchanged

    t = 1.0
    for _ in range(settings.max_backtracks):
        new_t = np.clip(thetas + t * dir_t, -THETA_LIMIT, THETA_LIMIT)
        new_f = wrap_doppler(dopplers + t * dir_f, cfg)
        columns = pilot_atoms(new_t, new_f, cfg)
        try:
            new_cost, _, _ = _concentrated(y, columns, weights, state.lam)
        except SingularSystemError:
            new_cost = math.inf
        if new_cost <= cost + settings.armijo_c * t * slope:
            return DescentResult(new_t, new_f, new_cost - float(np.vdot(y, y).real), True)
        t *= settings.armijo_shrink
    return unchanged


def _scaled_direction(grad, curvature, cap):
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where(curvature > 0, -grad / curvature, -np.sign(grad) * cap)
    step = np.where(grad == 0, 0.0, step)
    return np.clip(step, -cap, cap)


def prune_and_merge(state: GcsState, settings: GcsSettings, cfg: SystemConfig | None = None) -> GcsState:
    """Merge near-duplicate components, then drop negligible ones.

    Two components merge when their sin(theta) differ by less than
    ``merge_theta`` and their Doppler shifts (modulo the ambiguity period)
    by less than ``merge_doppler``; the stronger one keeps its location and
    receives the summed gain.  Components with ``|alpha|`` below
    ``max(alpha_min, alpha_min_rel * max|alpha|)`` are then removed.
    """
    alphas = state.alphas.copy()
    thetas, dopplers = state.thetas, state.dopplers
    period = cfg.doppler_period if cfg is not None else None
    alive = np.ones(alphas.size, dtype=bool)
    if settings.merge_theta is not None and settings.merge_doppler is not None:
        order = np.argsort(-np.abs(alphas), kind="stable")
        s = np.sin(thetas)
        for pos, i in enumerate(order):
            if not alive[i]:
                continue
            for j in order[pos + 1:]:
                if not alive[j]:
                    continue
                df = dopplers[i] - dopplers[j]
                if period is not None:
                    df = (df + period / 2) % period - period / 2
                if abs(s[i] - s[j]) < settings.merge_theta and abs(df) < settings.merge_doppler:
                    alphas[i] += alphas[j]
                    alive[j] = False
    mags = np.abs(alphas)
    peak = mags[alive].max() if alive.any() else 0.0
    threshold = max(settings.alpha_min, settings.alpha_min_rel * peak)
    keep = alive & (mags >= threshold) & (mags > 0)
    if not keep.any():
        raise ModelCollapsedError("model collapsed: every component was pruned")
    merged = dataclasses.replace(state, alphas=alphas)
    return merged.select(keep)


def matched_filter_grid(y: np.ndarray, cfg: SystemConfig, n_theta: int, n_doppler: int, f_max: float):
    """Magnitude of ``p(theta, f)^H y`` on a uniform (sin theta, Doppler) grid."""
    sines = -1.0 + (np.arange(n_theta) + 0.5) * (2.0 / n_theta)
    thetas = np.arcsin(sines)
    dopplers = -f_max + np.arange(n_doppler) * (2.0 * f_max / n_doppler)
    cube = y.reshape(cfg.p_pilots, cfg.l_blocks, cfg.m_bs)
    m = np.arange(cfg.m_bs)
    nu = cfg.d * sines[:, None] * (1.0 + cfg.pilot_frequencies[None, :] / cfg.f_c) / cfg.wavelength
    steer = np.exp(2j * np.pi * nu[:, :, None] * m)  # conjugated steering, (T, P, M)
    spatial = np.einsum("tpm,plm->tl", steer, cube)
    l = np.arange(cfg.l_blocks)
    dop = np.exp(2j * np.pi * cfg.block_duration * np.outer(dopplers, l))  # (F, L)
    corr = np.abs(spatial @ dop.T)
    return thetas, dopplers, corr


def _adjacent(i, j, picks, n_doppler) -> bool:
    for pi, pj in picks:
        dj = min((j - pj) % n_doppler, (pj - j) % n_doppler)
        if abs(i - pi) <= 1 and dj <= 1:
            return True
    return False


def initialize(y: np.ndarray, cfg: SystemConfig, settings: GcsSettings) -> GcsState:
    """Matched-filter warm start with successive cancellation.

    ``k_max`` grid atoms are picked one at a time: each pick is the largest
    matched-filter response to the current least-squares residual among
    cells not adjacent to an earlier pick.  After every pick all atoms are
    polished off-grid by a few unweighted descent steps so that grid
    mismatch of strong paths does not mask weak ones.
    """
    settings = settings.resolved(cfg)
    n_theta = max(4 * settings.k_max, settings.grid_oversample * int(math.ceil(2.0 / cfg.angle_cell)))
    n_doppler = max(4 * settings.k_max, settings.grid_oversample * cfg.l_blocks)
    sines = -1.0 + (np.arange(n_theta) + 0.5) * (2.0 / n_theta)
    caps = (0.5 * float(np.max(np.diff(np.arcsin(sines)))), settings.f_max / n_doppler)
    picks: list[tuple[int, int]] = []
    th, fd = np.empty(0), np.empty(0)
    alphas = np.empty(0, dtype=complex)
    residual = y
    for _ in range(settings.k_max):
        thetas, dopplers, corr = matched_filter_grid(residual, cfg, n_theta, n_doppler, settings.f_max)
        for flat in np.argsort(-corr, axis=None, kind="stable"):
            i, j = divmod(int(flat), n_doppler)
            if not _adjacent(i, j, picks, n_doppler):
                picks.append((i, j))
                break
        else:
            break
        th, fd = np.append(th, thetas[i]), np.append(fd, dopplers[j])
        probe = GcsState(np.zeros(th.size, complex), th, fd, 1.0, settings.epsilon_init)
        for _ in range(settings.refine_steps):
            step = descend(y, probe, settings, cfg, np.zeros(th.size), caps)
            if not step.accepted:
                break
            probe.thetas, probe.dopplers = step.thetas, step.dopplers
        th, fd = probe.thetas, probe.dopplers
        columns = pilot_atoms(th, fd, cfg)
        alphas = _solve_gains(columns, y, np.zeros(th.size), 1.0)
        residual = y - columns @ alphas
    lam = lambda_from_residual(float(np.vdot(residual, residual).real), settings, settings.lambda_0)
    return GcsState(alphas, th, fd, lam, settings.epsilon_init)


def reconstruct_pilot_channels(paths, cfg: SystemConfig) -> np.ndarray:
    """Sum of estimated pilot channels, shaped ``(P, M*L)``."""
    if not paths:
        return np.zeros((cfg.p_pilots, cfg.stacked_length), dtype=complex)
    atoms = pilot_atoms([p.theta for p in paths], [p.f_d for p in paths], cfg)
    total = atoms @ np.array([p.alpha for p in paths])
    return total.reshape(cfg.p_pilots, cfg.stacked_length)


def track_uplink(y: np.ndarray, cfg: SystemConfig, settings: GcsSettings | None = None) -> UplinkResult:
    """Estimate the uplink paths from a stacked pilot observation.

    Raises :class:`ModelCollapsedError` when every component is pruned.  A
    run that hits ``max_iters`` returns its final state with
    ``diagnostics.converged = False``.
    """
    settings = (settings or GcsSettings()).resolved(cfg)
    y = np.asarray(y, dtype=complex)
    if y.shape != (cfg.observation_length,):
        raise ConfigError(f"expected observation of length {cfg.observation_length}, got {y.shape}")
    if not np.any(y):
        raise ModelCollapsedError("model collapsed: the observation is identically zero")

    state = initialize(y, cfg, settings)
    diag = GcsDiagnostics(init_thetas=state.thetas.copy(), init_dopplers=state.dopplers.copy())
    state = prune_and_merge(state, settings, cfg)

    for n in range(settings.max_iters):
        weights = surrogate_weights(state)
        columns = pilot_atoms(state.thetas, state.dopplers, cfg)
        j_start = _objective(y, columns, state.alphas, state.lam, state.epsilon)

        ok = True
        work = state
        for _ in range(settings.descent_steps):
            step = descend(y, work, settings, cfg, weights)
            ok = ok and step.accepted
            work = dataclasses.replace(work, thetas=step.thetas, dopplers=step.dopplers)
            if not step.accepted:
                break
        columns = pilot_atoms(work.thetas, work.dopplers, cfg)
        new_alpha = _solve_gains(columns, y, weights, state.lam)
        j_end = _objective(y, columns, new_alpha, state.lam, state.epsilon)
        gamma = float(np.linalg.norm(new_alpha - state.alphas))

        residual = y - columns @ new_alpha
        lam = lambda_from_residual(float(np.vdot(residual, residual).real), settings, settings.lambda_0)
        epsilon = state.epsilon
        if gamma < math.sqrt(epsilon):
            epsilon = max(epsilon / 10.0, settings.epsilon_min)

        diag.records.append(IterationRecord(n, j_start, j_end, state.k, state.lam, state.epsilon, gamma, ok))
        history = state.history + [j_end]
        state = GcsState(new_alpha, work.thetas, work.dopplers, lam, epsilon, n + 1, history)
        k_before = state.k
        state = prune_and_merge(state, settings, cfg)
        diag.iterations = n + 1
        if gamma < settings.gamma_stop and state.k == k_before:
            diag.converged = True
            break
    else:
        log.warning("uplink tracking stopped after %d iterations without converging", settings.max_iters)

    paths = state.paths()
    return UplinkResult(paths, reconstruct_pilot_channels(paths, cfg), diag, state)
