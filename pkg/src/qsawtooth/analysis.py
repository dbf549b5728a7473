"""Fidelity traces, decay-law fits, Husimi distributions and momentum observables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .state import MOMENTUM, QuantumRegister, momentum_values


def fidelity(ideal: QuantumRegister, perturbed: QuantumRegister) -> float:
    """``|<perturbed|ideal>|**2``."""
    if ideal.n_q != perturbed.n_q:
        raise ValueError(f"dimension mismatch: n_q={ideal.n_q} vs n_q={perturbed.n_q}")
    if ideal.basis != perturbed.basis:
        raise ValueError(f"basis mismatch: {ideal.basis} vs {perturbed.basis}")
    return float(abs(np.vdot(perturbed.amplitudes, ideal.amplitudes)) ** 2)


@dataclass
class FidelityTrace:
    t: np.ndarray
    f: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t)
        self.f = np.asarray(self.f, dtype=float)
        if self.t.shape != self.f.shape:
            raise ValueError("t and f must have the same length")

    def __len__(self) -> int:
        return len(self.t)


def fidelity_time(trace: FidelityTrace, c: float = 0.9) -> float:
    """First time ``f`` drops below ``c``; ``inf`` if it never does.

    The crossing is interpolated linearly in ``(t, log f)`` between the two
    bracketing iterations, which is exact for a pure exponential.
    """
    if len(trace) == 0:
        raise ValueError("empty fidelity trace")
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    t, f = trace.t, trace.f
    below = np.flatnonzero(f < c)
    if below.size == 0:
        return math.inf
    i = below[0]
    if i == 0:
        return float(t[0])
    t0, t1 = float(t[i - 1]), float(t[i])
    l0, l1, lc = math.log(f[i - 1]), math.log(max(f[i], 1e-300)), math.log(c)
    return t0 + (t1 - t0) * (l0 - lc) / (l0 - l1)


@dataclass(frozen=True)
class DecayFit:
    model: str
    rate: float
    residuals: dict
    rates: dict
    points: int


def fit_fidelity_decay(
    trace: FidelityTrace, window: tuple[float, float] = (0.5, 0.999)
) -> DecayFit:
    """Compare ``-log f = A t**2`` against ``-log f = B t`` on points with ``f`` in ``window``.

    Both fits pass through the origin (``f(0) = 1``). The model with the
    smaller residual sum of squares wins; its coefficient is ``rate``.
    """
    lo, hi = window
    if lo <= 0:
        raise ValueError("window must keep f > 0 (log undefined)")
    t = trace.t.astype(float)
    f = trace.f
    sel = (f >= lo) & (f <= hi) & (t > 0)
    if sel.sum() < 2:
        raise ValueError(f"only {int(sel.sum())} points with f in {window}; need at least 2")
    t, y = t[sel], -np.log(f[sel])
    residuals = {}
    rates = {}
    for name, x in (("gaussian", t**2), ("exponential", t)):
        coef = float(x @ y / (x @ x))
        rates[name] = coef
        residuals[name] = float(np.sum((y - coef * x) ** 2))
    model = min(residuals, key=residuals.get)
    return DecayFit(model, rates[model], residuals, rates, int(sel.sum()))


def scaling_exponent(x, y) -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``log x`` and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least 3 (x, y) points")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("scaling fit needs positive finite values")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = x.size - 2
    sxx = np.sum((lx - lx.mean()) ** 2)
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else math.nan
    return float(coef[0]), stderr


def median_with_error(values) -> tuple[float, float]:
    """Median and its large-sample standard error ``1.2533 * std / sqrt(k)``."""
    v = np.asarray(values, dtype=float)
    finite = v[np.isfinite(v)]
    med = float(np.median(v))
    if finite.size < 2:
        return med, math.nan
    return med, float(1.2533 * finite.std(ddof=1) / math.sqrt(finite.size))


# -- phase space --------------------------------------------------------------


@dataclass
class HusimiGrid:
    """``values[i, j]`` at ``theta_i = 2 pi i / n_theta``, ``p_j = -pi + 2 pi j / n_p``."""

    values: np.ndarray
    width_p: float
    width_theta: float
    window: tuple[int, int] | None = None
    samples: int = 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def cell_area(self) -> float:
        n_theta, n_p = self.values.shape
        return (2 * math.pi / n_theta) * (2 * math.pi / n_p)

    @property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.values.shape[0]) / self.values.shape[0]

    @property
    def p(self) -> np.ndarray:
        return -np.pi + 2 * np.pi * np.arange(self.values.shape[1]) / self.values.shape[1]

    def probabilities(self) -> np.ndarray:
        """Cell masses, summing to one."""
        return self.values * self.cell_area

    def p_marginal(self) -> np.ndarray:
        return self.probabilities().sum(axis=0)


def coherent_envelope(n_q: int, p_grid: np.ndarray, s: float = 1.0, images: int = 3) -> np.ndarray:
    """Real momentum envelope ``g[j, m]`` of torus coherent states centred at ``p_grid[j]``.

    Periodic images ``|m| <= images`` keep the Gaussian smooth across ``p = +-pi``.
    Rows are normalised to unit norm.
    """
    N = 2**n_q
    T = 2 * math.pi / N
    var = s * T / 2
    p = momentum_values(n_q) * T
    g = np.zeros((len(p_grid), N))
    for m in range(-images, images + 1):
        d = p[None, :] - p_grid[:, None] - 2 * math.pi * m
        g += np.exp(-(d**2) / (4 * var))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g


def _husimi_raw(amps: np.ndarray, n_q: int, n_theta: int, envelope: np.ndarray, chunk: int = 16) -> np.ndarray:
    # sum_n g c_n exp(i n theta_i) only depends on n mod n_theta: fold, then one FFT
    N = 2**n_q
    n = momentum_values(n_q)
    residue = np.mod(n, n_theta)
    n_p = envelope.shape[0]
    out = np.empty((n_theta, n_p))
    for start in range(0, n_p, chunk):
        rows = envelope[start : start + chunk] * amps[None, :]
        if N % n_theta == 0:
            # residues of consecutive n cycle with period n_theta
            shift = residue[0]
            folded = np.roll(rows.reshape(rows.shape[0], N // n_theta, n_theta).sum(axis=1), shift, axis=1)
        else:
            folded = np.zeros((rows.shape[0], n_theta), dtype=np.complex128)
            for r in range(rows.shape[0]):
                folded[r] = np.bincount(residue, rows[r].real, n_theta) + 1j * np.bincount(
                    residue, rows[r].imag, n_theta
                )
        overlaps = np.fft.ifft(folded, axis=1) * n_theta
        out[:, start : start + chunk] = (np.abs(overlaps) ** 2).T
    return out


def husimi(reg: QuantumRegister, grid: tuple[int, int] = (64, 64), s: float = 1.0) -> HusimiGrid:
    """Husimi distribution ``|<theta0, p0|psi>|**2`` on an ``n_theta x n_p`` grid.

    Coherent states have ``Delta p = sqrt(s T / 2)`` and ``Delta theta = Delta p / s``.
    The grid is normalised so that values times cell area sum to one.
    """
    reg.require(MOMENTUM)
    n_theta, n_p = grid
    if n_theta < 1 or n_p < 1:
        raise ValueError("Husimi grid needs positive dimensions")
    env = coherent_envelope(reg.n_q, -np.pi + 2 * np.pi * np.arange(n_p) / n_p, s)
    raw = _husimi_raw(reg.amplitudes, reg.n_q, n_theta, env)
    T = 2 * math.pi / reg.N
    out = HusimiGrid(raw, math.sqrt(s * T / 2), math.sqrt(T / (2 * s)))
    out.values = raw / (raw.sum() * out.cell_area)
    return out


class HusimiAverager:
    """Running arithmetic mean of Husimi grids over a time window.

    Usable directly as an observer of :func:`~qsawtooth.hardware.run_imperfect_evolution`
    (``which`` picks the perturbed or the ideal state).
    """

    def __init__(self, n_q: int, grid=(64, 64), window=(950, 1000), s: float = 1.0, which: str = "perturbed"):
        self.n_q = n_q
        self.grid = tuple(grid)
        self.window = tuple(window)
        if self.window[0] > self.window[1]:
            raise ValueError("empty time window")
        self.s = s
        self.which = which
        n_theta, n_p = self.grid
        self._env = coherent_envelope(n_q, -np.pi + 2 * np.pi * np.arange(n_p) / n_p, s)
        self._sum = np.zeros(self.grid)
        self.count = 0

    def add(self, reg: QuantumRegister) -> None:
        raw = _husimi_raw(reg.amplitudes, self.n_q, self.grid[0], self._env)
        self._sum += raw / raw.sum()
        self.count += 1

    def __call__(self, t: int, perturbed: QuantumRegister, ideal: QuantumRegister) -> None:
        if self.window[0] <= t <= self.window[1]:
            self.add(perturbed if self.which == "perturbed" else ideal)

    def result(self) -> HusimiGrid:
        if self.count == 0:
            raise ValueError("no snapshots fell inside the averaging window")
        T = 2 * math.pi / 2**self.n_q
        out = HusimiGrid(
            self._sum / self.count,
            math.sqrt(self.s * T / 2),
            math.sqrt(T / (2 * self.s)),
            self.window,
            self.count,
        )
        out.values = out.values / out.cell_area
        return out


def momentum_distribution(reg: QuantumRegister) -> np.ndarray:
    reg.require(MOMENTUM)
    return np.abs(reg.amplitudes) ** 2


def quantum_second_moment(reg: QuantumRegister, p0: float, torus: bool = False) -> float:
    """``sum_m |c_m|**2 (n T - p0)**2`` with ``n = m - N/2``.

    With ``torus=True`` the distance ``|n T - p0|`` is taken around the
    circle ``[-pi, pi)``; a uniform distribution then gives ``pi**2 / 3`` for
    every ``p0``.
    """
    prob = momentum_distribution(reg)
    p = momentum_values(reg.n_q) * (2 * math.pi / reg.N)
    d = torus_distance(p, p0) if torus else p - p0
    return float(prob @ d**2)


def participation_ratio(reg: QuantumRegister) -> float:
    """``1 / sum |c_m|**4``: number of momentum states effectively occupied."""
    prob = momentum_distribution(reg)
    return float(1.0 / np.sum(prob**2))


ERGODIC_SECOND_MOMENT = math.pi**2 / 3


def torus_distance(p: np.ndarray, p0: float) -> np.ndarray:
    return np.abs(np.mod(p - p0 + np.pi, 2 * np.pi) - np.pi)


def mass_near(grid: HusimiGrid, p0: float, radius: float = 1.0) -> float:
    """Husimi probability within ``|p - p0| < radius`` (distance taken on the torus)."""
    near = torus_distance(grid.p, p0) < radius
    return float(grid.p_marginal()[near].sum())


def low_density_region(reference: np.ndarray, mass: float = 0.01) -> np.ndarray:
    """Boolean mask of the emptiest cells of ``reference`` jointly holding at most ``mass``."""
    prob = reference / reference.sum()
    order = np.argsort(prob, axis=None, kind="stable")
    cum = np.cumsum(prob.ravel()[order])
    mask = np.zeros(prob.size, dtype=bool)
    mask[order[cum <= mass]] = True
    return mask.reshape(prob.shape)
