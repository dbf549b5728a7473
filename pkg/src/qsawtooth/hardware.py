"""Static-imperfection and noisy-gate error models between perfect gates.

Between consecutive (instantaneous, perfect) gates the register evolves for a
time ``tau_g`` under

    H_s = sum_i delta_i Z_i + sum_<ij> J_ij X_i X_j

with the uniform level spacing removed by its compensation rotation, i.e. set
to zero exactly. Static modes freeze one ``(delta_i, J_ij)`` draw for the whole
run; noisy detuning redraws ``delta_i`` before every gate with ``J = 0``;
random rotation kicks every gate operand about a random Bloch axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

from .analysis import FidelityTrace
from .circuit import Circuit, apply_gate_array, _axis_view
from .lattice import LatticeLayout
from .state import (
    MOMENTUM,
    ExactPropagator,
    QuantumRegister,
    SawtoothParams,
    init_momentum_eigenstate,
)

NONE = "none"
STATIC = "static"
NOISY_DETUNING = "noisy-detuning"
RANDOM_ROTATION = "random-rotation"
MODES = (NONE, STATIC, NOISY_DETUNING, RANDOM_ROTATION)


@dataclass(frozen=True)
class ErrorMode:
    """Which error channel runs between gates, and how strong it is.

    ``epsilon = delta * tau_g`` is the dimensionless strength; ``coupling`` is
    ``J`` in units of ``delta`` (``1.0`` for ``J = delta``, ``0.0`` for ``J = 0``).
    Random rotations use ``epsilon`` directly as the maximal rotation angle.
    """

    kind: str = NONE
    epsilon: float = 0.0
    tau_g: float = 1.0
    coupling: float = 0.0
    all_qubits: bool = False

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown error mode {self.kind!r}; expected one of {MODES}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.tau_g <= 0:
            raise ValueError("tau_g must be > 0")
        if self.coupling < 0:
            raise ValueError("coupling must be >= 0")
        if self.kind == NOISY_DETUNING and self.coupling != 0:
            raise ValueError("noisy detuning runs with J = 0")

    @classmethod
    def static(cls, epsilon: float, coupling: float = 1.0, tau_g: float = 1.0) -> ErrorMode:
        return cls(STATIC, epsilon, tau_g, coupling)

    @classmethod
    def noisy_detuning(cls, epsilon: float, tau_g: float = 1.0) -> ErrorMode:
        return cls(NOISY_DETUNING, epsilon, tau_g)

    @classmethod
    def random_rotation(cls, epsilon: float, all_qubits: bool = False) -> ErrorMode:
        return cls(RANDOM_ROTATION, epsilon, all_qubits=all_qubits)

    @property
    def delta(self) -> float:
        return self.epsilon / self.tau_g

    @property
    def J(self) -> float:
        return self.coupling * self.delta

    @property
    def label(self) -> str:
        if self.kind == STATIC:
            return "static J=delta" if self.coupling == 1.0 else f"static J={self.coupling:g}delta"
        return self.kind


@dataclass(frozen=True)
class DisorderRealization:
    """One frozen draw of detunings and nearest-neighbour couplings."""

    delta_i: np.ndarray
    edges: tuple[tuple[int, int], ...]
    couplings: np.ndarray
    tau_g: float = 1.0
    delta_scale: float = 0.0
    coupling_scale: float = 0.0

    @property
    def n_q(self) -> int:
        return len(self.delta_i)

    @property
    def epsilon(self) -> float:
        return self.delta_scale * self.tau_g


def sample_static(
    delta: float,
    J: float,
    layout: LatticeLayout,
    seed: int | np.random.SeedSequence | np.random.Generator | None = None,
    tau_g: float = 1.0,
) -> DisorderRealization:
    """``delta_i ~ U[-delta/2, delta/2]`` per qubit, ``J_ij ~ U[-J, J]`` per lattice edge."""
    if delta < 0 or J < 0:
        raise ValueError("delta and J must be non-negative")
    rng = np.random.default_rng(seed)
    edges = tuple(layout.edges())
    delta_i = delta * (rng.random(layout.n_q) - 0.5)
    couplings = J * (2 * rng.random(len(edges)) - 1)
    return DisorderRealization(delta_i, edges, couplings, tau_g, delta, J)


def z_signs(n_q: int) -> np.ndarray:
    """``(n_q, 2**n_q)`` eigenvalues of ``Z_i`` on each basis index (+1 for bit 0)."""
    idx = np.arange(2**n_q)
    bits = (idx[None, :] >> np.arange(n_q)[:, None]) & 1
    return 1.0 - 2.0 * bits


def _xx_edges_numpy(flat, masks, c, s):
    idx = np.arange(flat.shape[0])
    for mask, ce, se in zip(masks, c, s):
        flat[:] = ce * flat - 1j * se * flat[idx ^ mask]


if numba is not None:

    @numba.njit(cache=True)
    def _xx_edges(flat, masks, c, s):  # pragma: no cover - compiled
        n, b = flat.shape
        for e in range(masks.shape[0]):
            m = masks[e]
            ce = c[e]
            mis = -1j * s[e]
            for x in range(n):
                y = x ^ m
                if x < y:
                    for k in range(b):
                        u = flat[x, k]
                        v = flat[y, k]
                        flat[x, k] = ce * u + mis * v
                        flat[y, k] = ce * v + mis * u

else:  # pragma: no cover
    _xx_edges = _xx_edges_numpy


class FreeEvolution:
    """``exp(-i H_s tau_g)`` for a frozen realization.

    The detuning part is diagonal and exact. All ``X_i X_j`` terms commute with
    each other, so their product over edges is exact as well; only the split
    between the two parts is approximated, by the symmetric second-order
    product ``Z(tau/2) XX(tau) Z(tau/2)``. With ``J = 0`` the step is exact.
    """

    def __init__(self, disorder: DisorderRealization, n_q: int | None = None, tau_g: float | None = None):
        n_q = disorder.n_q if n_q is None else n_q
        if disorder.n_q != n_q:
            raise ValueError(f"realization has {disorder.n_q} qubits, register has {n_q}")
        for i, j in disorder.edges:
            if max(i, j) >= n_q:
                raise ValueError(f"edge {(i, j)} outside a {n_q}-qubit register")
        tau = disorder.tau_g if tau_g is None else tau_g
        self.n_q = n_q
        zphase = -tau * (disorder.delta_i @ z_signs(n_q))
        active = [(i, j, J) for (i, j), J in zip(disorder.edges, disorder.couplings) if J != 0.0]
        self.masks = np.array([(1 << i) | (1 << j) for i, j, _ in active], dtype=np.int64)
        self.cos = np.array([math.cos(J * tau) for *_, J in active])
        self.sin = np.array([math.sin(J * tau) for *_, J in active])
        if active:
            self.half = np.exp(0.5j * zphase)
            self.full = None
        else:
            self.half = None
            self.full = np.exp(1j * zphase)

    def apply(self, psi: np.ndarray) -> None:
        """In place on ``(2**n_q,)`` or ``(2**n_q, batch)`` arrays."""
        flat = psi.reshape(psi.shape[0], -1)
        if self.full is not None:
            flat *= self.full[:, None]
            return
        flat *= self.half[:, None]
        if flat.flags.c_contiguous:
            _xx_edges(flat, self.masks, self.cos, self.sin)
        else:
            _xx_edges_numpy(flat, self.masks, self.cos, self.sin)
        flat *= self.half[:, None]


def free_evolution_step(
    reg: QuantumRegister, disorder: DisorderRealization, tau_g: float | None = None
) -> QuantumRegister:
    out = reg.copy()
    FreeEvolution(disorder, reg.n_q, tau_g).apply(out.amplitudes)
    return out


def _random_rotation_matrices(rng: np.random.Generator, count: int, max_angle: float) -> np.ndarray:
    """``count`` matrices ``exp(-i a/2 n.sigma)``, ``n`` uniform on the sphere, ``a ~ U[-max, max]``."""
    axes = rng.normal(size=(count, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = max_angle * (2 * rng.random(count) - 1)
    c = np.cos(angles / 2)
    s = np.sin(angles / 2)
    nx, ny, nz = axes.T
    mats = np.empty((count, 2, 2), dtype=np.complex128)
    mats[:, 0, 0] = c - 1j * s * nz
    mats[:, 0, 1] = -1j * s * (nx - 1j * ny)
    mats[:, 1, 0] = -1j * s * (nx + 1j * ny)
    mats[:, 1, 1] = c + 1j * s * nz
    return mats


def _apply_single_qubit(psi: np.ndarray, n_q: int, q: int, mat: np.ndarray) -> None:
    v = _axis_view(psi, n_q, q)
    a = v[:, 0].copy()
    b = v[:, 1].copy()
    v[:, 0] = mat[0, 0] * a + mat[0, 1] * b
    v[:, 1] = mat[1, 0] * a + mat[1, 1] * b


DENSE_MAX_DIM = 1024

Observer = Callable[[int, QuantumRegister, QuantumRegister], None]


@dataclass
class EvolutionResult:
    trace: FidelityTrace
    state: QuantumRegister
    ideal: QuantumRegister
    disorder: DisorderRealization | None = None
    gate_intervals: int = 0
    extras: dict = field(default_factory=dict)


class ImperfectEngine:
    """Runs a routed circuit period by period with one error step per timed gate."""

    def __init__(
        self,
        params: SawtoothParams,
        circuit: Circuit,
        mode: ErrorMode,
        seed=None,
        layout: LatticeLayout | None = None,
    ):
        if circuit.n_q != params.n_q:
            raise ValueError("circuit width does not match params.n_q")
        self.params = params
        self.circuit = circuit
        self.mode = mode
        self.layout = layout or LatticeLayout.for_qubits(params.n_q)
        if self.layout.n_q != params.n_q:
            raise ValueError("layout does not place exactly n_q qubits")
        self.rng = np.random.default_rng(seed)
        self.gates = circuit.gates
        self.timed = [g.takes_time for g in self.gates]
        self.n_intervals = sum(self.timed)
        self.disorder = None
        self._free = None
        if mode.kind == STATIC:
            self.disorder = sample_static(mode.delta, mode.J, self.layout, self.rng, mode.tau_g)
            self._free = FreeEvolution(self.disorder, params.n_q)
        elif mode.kind == NOISY_DETUNING:
            self._z = z_signs(params.n_q)
        elif mode.kind == RANDOM_ROTATION:
            if mode.all_qubits:
                self._targets = [tuple(range(params.n_q)) if t else () for t in self.timed]
            else:
                self._targets = [g.qubits if t else () for g, t in zip(self.gates, self.timed)]
            self._n_kicks = sum(len(t) for t in self._targets)
        self.redraws = 0

    @property
    def deterministic(self) -> bool:
        """True when every period applies the same unitary."""
        return self.mode.kind in (NONE, STATIC)

    def period_matrix(self) -> np.ndarray:
        """Dense unitary of one period; only for deterministic modes."""
        if not self.deterministic:
            raise ValueError(f"{self.mode.kind} draws fresh noise every period")
        U = np.eye(self.params.N, dtype=np.complex128)
        self.period(U)
        return U

    def period(self, psi: np.ndarray) -> None:
        """One map iteration in place."""
        n_q = self.params.n_q
        kind = self.mode.kind
        if kind == NONE:
            for g in self.gates:
                apply_gate_array(psi, g, n_q)
        elif kind == STATIC:
            free = self._free
            for g, timed in zip(self.gates, self.timed):
                apply_gate_array(psi, g, n_q)
                if timed:
                    free.apply(psi)
        elif kind == NOISY_DETUNING:
            delta = self.mode.delta
            draws = delta * (self.rng.random((self.n_intervals, n_q)) - 0.5)
            phases = np.exp(-1j * self.mode.tau_g * (draws @ self._z))
            self.redraws += self.n_intervals
            k = 0
            for g, timed in zip(self.gates, self.timed):
                apply_gate_array(psi, g, n_q)
                if timed:
                    psi *= phases[k]
                    k += 1
        else:
            mats = _random_rotation_matrices(self.rng, self._n_kicks, self.mode.epsilon)
            k = 0
            for g, targets in zip(self.gates, self._targets):
                apply_gate_array(psi, g, n_q)
                for q in targets:
                    _apply_single_qubit(psi, n_q, q, mats[k])
                    k += 1


def run_imperfect_evolution(
    params: SawtoothParams,
    circuit: Circuit,
    mode: ErrorMode,
    t_max: int,
    seed=None,
    observers: Sequence[Observer] = (),
    layout: LatticeLayout | None = None,
    initial: QuantumRegister | None = None,
    stop_below: float | None = None,
    dense: bool | None = None,
) -> EvolutionResult:
    """Evolve the imperfect computer alongside the exact ideal state.

    Observers are called as ``obs(t, perturbed, ideal)`` at ``t = 0`` and after
    every map iteration; they must not modify the registers. With
    ``stop_below`` set, the run ends after the first iteration whose fidelity
    falls below that value.

    Deterministic modes may switch to the dense period unitary: always with
    ``dense=True``, never with ``dense=False``, and by default once a run with
    ``N <= DENSE_MAX_DIM`` has lasted ``N // 4`` iterations, roughly the cost
    of building that matrix.
    """
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    engine = ImperfectEngine(params, circuit, mode, seed, layout)
    if dense and not engine.deterministic:
        raise ValueError(f"dense evolution needs a deterministic mode, not {mode.kind}")
    if dense is None:
        switch_at = params.N // 4 if engine.deterministic and params.N <= DENSE_MAX_DIM else None
    else:
        switch_at = 1 if dense else None
    U = None
    start = initial if initial is not None else init_momentum_eigenstate(params)
    start.require(MOMENTUM)
    psi = start.amplitudes.copy()
    ideal = start.amplitudes.copy()
    exact = ExactPropagator(params)

    ts = [0]
    fs = [1.0]
    reg_eps = QuantumRegister(params.n_q, psi, MOMENTUM)
    reg_ideal = QuantumRegister(params.n_q, ideal, MOMENTUM)
    for obs in observers:
        obs(0, reg_eps, reg_ideal)
    for t in range(1, t_max + 1):
        if U is None and switch_at is not None and t >= switch_at:
            U = engine.period_matrix()
        if U is None:
            engine.period(psi)
        else:
            psi = U @ psi
        ideal = exact.step(ideal)
        f = abs(np.vdot(psi, ideal)) ** 2
        ts.append(t)
        fs.append(float(f))
        if observers:
            reg_eps = QuantumRegister(params.n_q, psi, MOMENTUM)
            reg_ideal = QuantumRegister(params.n_q, ideal, MOMENTUM)
            for obs in observers:
                obs(t, reg_eps, reg_ideal)
        if stop_below is not None and f < stop_below:
            break
    trace = FidelityTrace(
        np.array(ts),
        np.array(fs),
        {"n_q": params.n_q, "epsilon": mode.epsilon, "mode": mode.label, "coupling": mode.coupling},
    )
    return EvolutionResult(
        trace,
        QuantumRegister(params.n_q, psi, MOMENTUM),
        QuantumRegister(params.n_q, ideal, MOMENTUM),
        engine.disorder,
        engine.n_intervals,
        {"redraws": engine.redraws},
    )


def chaotic_time_scale(J: float, n_q: int) -> float:
    """Order-of-magnitude onset ``1 / (J sqrt(n_q))`` of chaos in the hardware Hamiltonian."""
    return math.inf if J == 0 else 1.0 / (J * math.sqrt(n_q))
