"""Classical sawtooth map ensembles: diffusion moments and phase-space densities.

The rescaled map is ``p' = p + K (theta - pi)``, ``theta' = theta + p'``,
with ``theta`` taken mod ``2 pi``. Momentum is accumulated unwrapped for the
diffusion moments and folded onto ``[-pi, pi)`` only for phase-space plots.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

TWO_PI = 2 * math.pi

# trajectories per RNG stream; fixed so results do not depend on worker count
BLOCK_SIZE = 4096


@dataclass(frozen=True)
class ClassicalState:
    p: float
    theta: float


def wrap_theta(theta):
    return np.mod(theta, TWO_PI)


def wrap_p(p):
    """Fold momentum onto the torus ``[-pi, pi)``."""
    return np.mod(p + math.pi, TWO_PI) - math.pi


def classical_step(state: ClassicalState, K: float) -> ClassicalState:
    p = state.p + K * (state.theta - math.pi)
    theta = math.fmod(state.theta + p, TWO_PI)
    if theta < 0:
        theta += TWO_PI
    if theta >= TWO_PI:
        theta = 0.0
    return ClassicalState(float(wrap_p(p)), theta)


def action_step(n, theta, k: float, T: float):
    """The map in unscaled action-angle form ``n' = n + k (theta - pi)``, ``theta' = theta + T n'``."""
    n = n + k * (theta - math.pi)
    return n, np.mod(theta + T * n, TWO_PI)


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble of ``count`` trajectories started at momentum ``p0``.

    Initial angles are uniform in ``[0, 2 pi)`` unless ``theta0`` pins them;
    ``p0=None`` spreads initial momenta uniformly over the torus instead.
    """

    count: int
    p0: float | None = 0.0
    K: float = 2.0
    t_max: int = 100
    noise_amplitude: float = 0.0
    seed: int = 0
    theta0: float | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")


@dataclass
class EnsembleMoments:
    t: np.ndarray
    m2: np.ndarray
    density: np.ndarray | None = None


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _block_bounds(count: int):
    return [(b, s, min(s + BLOCK_SIZE, count)) for b, s in enumerate(range(0, count, BLOCK_SIZE))]


def _run_block(cfg: EnsembleConfig, block: int, size: int, grid=None, window=None):
    rng = _block_rng(cfg.seed, block)
    if cfg.theta0 is None:
        theta = TWO_PI * rng.random(size)
    else:
        theta = np.full(size, float(cfg.theta0))
    if cfg.p0 is None:
        p = TWO_PI * rng.random(size) - math.pi
    else:
        p = np.full(size, float(cfg.p0))
    start = p.copy()
    K, a = cfg.K, cfg.noise_amplitude
    sums = np.zeros(cfg.t_max + 1)
    hist = None
    if grid is not None:
        hist = np.zeros(grid)
        _accumulate(hist, theta, p, grid, 0, window)
    for t in range(1, cfg.t_max + 1):
        p += K * (theta - math.pi)
        theta += p
        if a > 0:
            p += a * (2 * rng.random(size) - 1)
            theta += a * (2 * rng.random(size) - 1)
        np.mod(theta, TWO_PI, out=theta)
        d = p - start
        sums[t] = d @ d
        if hist is not None:
            _accumulate(hist, theta, p, grid, t, window)
    return sums, hist


def _accumulate(hist, theta, p, grid, t, window):
    if window is None or not window[0] <= t <= window[1]:
        return
    n_theta, n_p = grid
    i = np.minimum((theta / TWO_PI * n_theta).astype(np.int64), n_theta - 1)
    j = np.minimum(((wrap_p(p) + math.pi) / TWO_PI * n_p).astype(np.int64), n_p - 1)
    hist += np.bincount(i * n_p + j, minlength=n_theta * n_p).reshape(grid)


def _run(cfg: EnsembleConfig, grid=None, window=None, jobs: int = 1):
    blocks = _block_bounds(cfg.count)
    work = [(cfg, b, stop - start, grid, window) for b, start, stop in blocks]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(lambda args: _run_block(*args), work))
    else:
        results = [_run_block(*args) for args in work]
    # fixed reduction order keeps the result independent of scheduling
    sums = np.zeros(cfg.t_max + 1)
    hist = None if grid is None else np.zeros(grid)
    for s, h in results:
        sums += s
        if hist is not None:
            hist += h
    return sums, hist


def evolve_ensemble(cfg: EnsembleConfig, jobs: int = 1) -> EnsembleMoments:
    """``<(p_t - p_0)**2>`` for ``t = 0 .. t_max`` on unwrapped momentum.

    With ``noise_amplitude = a > 0`` independent ``U[-a, a]`` kicks are added to
    ``p`` and ``theta`` after every iteration.
    """
    sums, _ = _run(cfg, jobs=jobs)
    return EnsembleMoments(np.arange(cfg.t_max + 1), sums / cfg.count)


def classical_phase_density(
    cfg: EnsembleConfig,
    grid: tuple[int, int] = (128, 128),
    t_window: tuple[int, int] | None = None,
    jobs: int = 1,
) -> np.ndarray:
    """``(n_theta, n_p)`` histogram over all trajectories and all ``t`` in the window, summing to one."""
    n_theta, n_p = grid
    if n_theta < 2 or n_p < 2:
        raise ValueError("density grid needs at least 2 cells per axis")
    lo, hi = t_window if t_window is not None else (cfg.t_max, cfg.t_max)
    if lo > hi or hi < 0 or lo > cfg.t_max:
        raise ValueError(f"empty time window {(lo, hi)} for t_max={cfg.t_max}")
    _, hist = _run(cfg, grid=(n_theta, n_p), window=(lo, hi), jobs=jobs)
    return hist / hist.sum()


def _window(moments: EnsembleMoments, t_min: int, t_max: int):
    if t_min < 1 or t_max <= t_min:
        raise ValueError("need 1 <= t_min < t_max")
    sel = (moments.t >= t_min) & (moments.t <= t_max)
    if sel.sum() < 3:
        raise ValueError("fit window holds fewer than 3 points")
    return moments.t[sel].astype(float), moments.m2[sel]


def fit_power_law(moments: EnsembleMoments, t_min: int, t_max: int) -> tuple[float, float]:
    """``m2 ~ prefactor * t**alpha`` by least squares in log-log over ``[t_min, t_max]``."""
    t, m2 = _window(moments, t_min, t_max)
    if np.any(m2 <= 0):
        raise ValueError("power-law fit window contains m2 <= 0")
    alpha, intercept = np.polyfit(np.log(t), np.log(m2), 1)
    return float(alpha), float(math.exp(intercept))


def fit_diffusion_coefficient(moments: EnsembleMoments, t_min: int, t_max: int) -> float:
    """Slope ``D`` of a straight-line fit ``m2 = D t + c`` over the window."""
    t, m2 = _window(moments, t_min, t_max)
    slope, _ = np.polyfit(t, m2, 1)
    return float(slope)


def random_phase_diffusion(K: float) -> float:
    """``(pi**2 / 3) K**2``, valid for ``K > 1``."""
    return math.pi**2 / 3 * K**2


def slow_diffusion(K: float) -> float:
    """``3.3 K**(5/2)``, the cantori-limited regime ``0 < K < 1``."""
    return 3.3 * K**2.5
