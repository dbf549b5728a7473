"""Quantum register and the exact split-operator engine for the sawtooth map.

Index convention shared by every engine in the package:

* momentum basis index ``m`` in ``[0, N)`` carries momentum ``n = m - N/2``;
* angle basis index ``l`` in ``[0, N)`` carries angle ``theta_l = 2*pi*l/N``;
* qubit ``j`` holds bit ``j`` of the basis index (``m = sum_j 2**j b_j``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MOMENTUM = "momentum"
ANGLE = "angle"


class BasisError(ValueError):
    """Raised when a register is handed to an operation in the wrong basis."""


def default_n0(n_q: int) -> int:
    """Initial momentum ``[0.38 N]`` used throughout the phase-space runs."""
    return int(math.floor(0.38 * 2**n_q))


@dataclass(frozen=True)
class SawtoothParams:
    """One quantum sawtooth map instance on the torus ``-pi <= p < pi``.

    ``T = 2*pi/N`` and ``k = K/T`` are derived, so ``k*T == K`` up to rounding.
    ``n0`` defaults to ``[0.38 N]``.
    """

    n_q: int
    K: float = -0.1
    n0: int | None = None

    def __post_init__(self):
        if self.n_q < 1:
            raise ValueError(f"n_q must be >= 1, got {self.n_q}")
        if self.n0 is None:
            object.__setattr__(self, "n0", default_n0(self.n_q))
        half = self.N // 2
        if not -half <= self.n0 < half:
            raise ValueError(f"n0={self.n0} outside [-{half}, {half})")

    @property
    def N(self) -> int:
        return 2**self.n_q

    @property
    def T(self) -> float:
        return 2 * math.pi / self.N

    @property
    def k(self) -> float:
        return self.K / self.T

    @property
    def p0(self) -> float:
        return self.n0 * self.T


@dataclass
class QuantumRegister:
    """State vector of ``2**n_q`` amplitudes tagged with its basis."""

    n_q: int
    amplitudes: np.ndarray
    basis: str = MOMENTUM

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.n_q,):
            raise ValueError(
                f"expected {2**self.n_q} amplitudes for n_q={self.n_q}, got shape {amps.shape}"
            )
        if self.basis not in (MOMENTUM, ANGLE):
            raise ValueError(f"unknown basis {self.basis!r}")
        self.amplitudes = amps

    @property
    def N(self) -> int:
        return 2**self.n_q

    def copy(self) -> QuantumRegister:
        return QuantumRegister(self.n_q, self.amplitudes.copy(), self.basis)

    def require(self, basis: str) -> None:
        if self.basis != basis:
            raise BasisError(f"register is in the {self.basis} basis, expected {basis}")


def momentum_values(n_q: int) -> np.ndarray:
    """Integer momenta ``n = m - N/2`` for every basis index."""
    N = 2**n_q
    return np.arange(N) - N // 2


def angle_values(n_q: int) -> np.ndarray:
    N = 2**n_q
    return 2 * np.pi * np.arange(N) / N


def init_momentum_eigenstate(params: SawtoothParams, n0: int | None = None) -> QuantumRegister:
    n0 = params.n0 if n0 is None else n0
    half = params.N // 2
    if not -half <= n0 < half:
        raise ValueError(f"n0={n0} outside [-{half}, {half})")
    amps = np.zeros(params.N, dtype=np.complex128)
    amps[n0 + half] = 1.0
    return QuantumRegister(params.n_q, amps, MOMENTUM)


def random_register(n_q: int, rng: np.random.Generator | int | None = None) -> QuantumRegister:
    rng = np.random.default_rng(rng)
    amps = rng.normal(size=2**n_q) + 1j * rng.normal(size=2**n_q)
    amps /= np.linalg.norm(amps)
    return QuantumRegister(n_q, amps, MOMENTUM)


def _alternating_sign(N: int) -> np.ndarray:
    return np.where(np.arange(N) % 2 == 0, 1.0, -1.0)


def momentum_to_angle_array(amps: np.ndarray) -> np.ndarray:
    # (-1)**l carries the n = m - N/2 offset on top of the index-based transform
    N = amps.shape[0]
    return np.fft.ifft(amps, norm="ortho") * _alternating_sign(N)


def angle_to_momentum_array(amps: np.ndarray) -> np.ndarray:
    N = amps.shape[0]
    return np.fft.fft(amps * _alternating_sign(N), norm="ortho")


def transform_to_angle(reg: QuantumRegister) -> QuantumRegister:
    """``psi(theta_l) = N**-0.5 * sum_m c_m exp(i n theta_l)``."""
    reg.require(MOMENTUM)
    return QuantumRegister(reg.n_q, momentum_to_angle_array(reg.amplitudes), ANGLE)


def transform_to_momentum(reg: QuantumRegister) -> QuantumRegister:
    reg.require(ANGLE)
    return QuantumRegister(reg.n_q, angle_to_momentum_array(reg.amplitudes), MOMENTUM)


class ExactPropagator:
    """Precomputed phases for repeated application of the one-period operator.

    ``U = exp(-i T n^2 / 2) exp(i k (theta - pi)^2 / 2)``: kick in the angle
    basis, then free rotation in the momentum basis. The ``(-1)**l`` factors of
    the two transforms commute with the kick and cancel, so the inner loop uses
    the plain index FFT.
    """

    def __init__(self, params: SawtoothParams):
        self.params = params
        n = momentum_values(params.n_q)
        theta = angle_values(params.n_q)
        self.rotation = np.exp(-0.5j * params.T * n.astype(float) ** 2)
        self.kick = np.exp(0.5j * params.k * (theta - np.pi) ** 2)

    def step(self, amps: np.ndarray) -> np.ndarray:
        psi = np.fft.ifft(amps, norm="ortho")
        psi *= self.kick
        out = np.fft.fft(psi, norm="ortho")
        out *= self.rotation
        return out

    def step_inverse(self, amps: np.ndarray) -> np.ndarray:
        psi = np.fft.ifft(amps * self.rotation.conj(), norm="ortho")
        psi *= self.kick.conj()
        return np.fft.fft(psi, norm="ortho")

    def evolve(self, amps: np.ndarray, steps: int) -> np.ndarray:
        for _ in range(steps):
            amps = self.step(amps)
        return amps


def exact_map_iteration(
    reg: QuantumRegister, params: SawtoothParams, steps: int = 1
) -> QuantumRegister:
    reg.require(MOMENTUM)
    if reg.n_q != params.n_q:
        raise ValueError(f"register has n_q={reg.n_q}, params have n_q={params.n_q}")
    prop = ExactPropagator(params)
    return QuantumRegister(reg.n_q, prop.evolve(reg.amplitudes, steps), MOMENTUM)


def exact_map_inverse(
    reg: QuantumRegister, params: SawtoothParams, steps: int = 1
) -> QuantumRegister:
    """Undo ``steps`` iterations: conjugate phases applied in reversed order."""
    reg.require(MOMENTUM)
    prop = ExactPropagator(params)
    amps = reg.amplitudes
    for _ in range(steps):
        amps = prop.step_inverse(amps)
    return QuantumRegister(reg.n_q, amps, MOMENTUM)


def _check_compatible(a: QuantumRegister, b: QuantumRegister) -> None:
    if a.n_q != b.n_q:
        raise ValueError(f"dimension mismatch: n_q={a.n_q} vs n_q={b.n_q}")
    if a.basis != b.basis:
        raise BasisError(f"basis mismatch: {a.basis} vs {b.basis}")


def inner_product(a: QuantumRegister, b: QuantumRegister) -> complex:
    """``<a|b>``, conjugate-linear in the first argument."""
    _check_compatible(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def norm(reg: QuantumRegister) -> float:
    return float(np.linalg.norm(reg.amplitudes))


def dense_map_matrix(params: SawtoothParams) -> np.ndarray:
    """Explicit ``N x N`` one-period matrix built from dense transform matrices.

    Independent of the FFT path; meant for small ``n_q`` cross-checks.
    """
    N = params.N
    n = momentum_values(params.n_q)
    theta = angle_values(params.n_q)
    # F[l, m] = <theta_l | n_m>
    F = np.exp(1j * np.outer(theta, n)) / math.sqrt(N)
    U_k = np.diag(np.exp(0.5j * params.k * (theta - np.pi) ** 2))
    U_T = np.diag(np.exp(-0.5j * params.T * n.astype(float) ** 2))
    return U_T @ F.conj().T @ U_k @ F
