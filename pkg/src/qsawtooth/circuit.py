"""Gate-level construction and execution of one sawtooth map period.

Gate angles follow ``Phase(q, phi) = diag(1, exp(i phi))`` on qubit ``q`` and
``ControlledPhase(q1, q2, phi)`` multiplying ``|..1..1..>`` by ``exp(i phi)``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .state import MOMENTUM, QuantumRegister, SawtoothParams

HADAMARD = "H"
PHASE = "PHASE"
CPHASE = "CPHASE"
SWAP = "SWAP"
GLOBAL_PHASE = "GPHASE"
COMPENSATION = "COMP"

_ARITY = {HADAMARD: 1, PHASE: 1, CPHASE: 2, SWAP: 2, GLOBAL_PHASE: 0, COMPENSATION: 1}
_HAS_ANGLE = {PHASE, CPHASE, GLOBAL_PHASE, COMPENSATION}
DIAGONAL_KINDS = frozenset({PHASE, CPHASE, GLOBAL_PHASE, COMPENSATION})
TWO_QUBIT_KINDS = frozenset({CPHASE, SWAP})

_TWO_PI = 2 * math.pi


def wrap_angle(phi: float) -> float:
    """Reduce an angle to ``[-pi, pi]``."""
    return math.remainder(phi, _TWO_PI)


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...] = ()
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        if len(qubits) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {_ARITY[self.kind]} qubits, got {qubits}")
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"repeated qubit in {self.kind}{qubits}")
        if any(q < 0 for q in qubits):
            raise ValueError(f"negative qubit index in {self.kind}{qubits}")
        if self.kind in (CPHASE, SWAP):
            # symmetric two-qubit gates are stored in canonical order
            qubits = tuple(sorted(qubits))
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "angle", float(self.angle))

    @property
    def is_diagonal(self) -> bool:
        return self.kind in DIAGONAL_KINDS

    @property
    def takes_time(self) -> bool:
        """Global phases are bookkeeping and occupy no gate interval."""
        return self.kind != GLOBAL_PHASE

    def adjoint(self) -> Gate:
        if self.kind in (HADAMARD, SWAP):
            return self
        return Gate(self.kind, self.qubits, -self.angle)


def hadamard(q: int) -> Gate:
    return Gate(HADAMARD, (q,))


def phase(q: int, phi: float) -> Gate:
    return Gate(PHASE, (q,), phi)


def controlled_phase(q1: int, q2: int, phi: float) -> Gate:
    return Gate(CPHASE, (q1, q2), phi)


def swap(q1: int, q2: int) -> Gate:
    return Gate(SWAP, (q1, q2))


def global_phase(phi: float) -> Gate:
    return Gate(GLOBAL_PHASE, (), phi)


def compensation_rotation(q: int, phi: float) -> Gate:
    """``exp(i phi sigma_z)`` on qubit ``q``, undoing a uniform level-spacing drift."""
    return Gate(COMPENSATION, (q,), phi)


@dataclass(frozen=True)
class Circuit:
    """Immutable gate list. ``blocks`` names contiguous stages ``(label, start, stop)``."""

    n_q: int
    gates: tuple[Gate, ...]
    blocks: tuple[tuple[str, int, int], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if any(q >= self.n_q for q in g.qubits):
                raise ValueError(f"gate {g} addresses a qubit >= n_q={self.n_q}")

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    @property
    def counts(self) -> Counter:
        return Counter(g.kind for g in self.gates)

    @property
    def gate_count(self) -> int:
        """Gates that occupy a time slot (everything except global phases)."""
        return sum(1 for g in self.gates if g.takes_time)

    @property
    def two_qubit_count(self) -> int:
        return sum(1 for g in self.gates if g.kind in TWO_QUBIT_KINDS)

    @property
    def swap_count(self) -> int:
        return self.counts[SWAP]

    def adjoint(self) -> Circuit:
        return Circuit(self.n_q, tuple(g.adjoint() for g in reversed(self.gates)))

    def __add__(self, other: Circuit) -> Circuit:
        if self.n_q != other.n_q:
            raise ValueError("cannot concatenate circuits of different width")
        shift = len(self.gates)
        blocks = self.blocks + tuple((b, s + shift, e + shift) for b, s, e in other.blocks)
        return Circuit(self.n_q, self.gates + other.gates, blocks)

    def labelled(self, label: str) -> Circuit:
        return Circuit(self.n_q, self.gates, ((label, 0, len(self.gates)),))


# -- construction -------------------------------------------------------------


def build_qft(n_q: int, direction: str = "forward") -> Circuit:
    """Textbook QFT without the final reversal swaps.

    The forward circuit maps ``|x>`` to ``N**-0.5 sum_y exp(2 pi i x y / N)``
    with bit ``b`` of ``y`` left on qubit ``n_q - 1 - b``; that relabeling is
    carried by whatever acts on the output. ``"backward"`` is the exact adjoint.
    """
    if n_q < 1:
        raise ValueError("n_q must be >= 1")
    gates = []
    for j in range(n_q - 1, -1, -1):
        gates.append(hadamard(j))
        for k in range(j - 1, -1, -1):
            gates.append(controlled_phase(k, j, math.pi / 2 ** (j - k)))
    circ = Circuit(n_q, tuple(gates))
    if direction == "forward":
        return circ.labelled("qft")
    if direction == "backward":
        return circ.adjoint().labelled("iqft")
    raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


def build_quadratic_phase(
    n_q: int,
    a: float,
    basis_shift: int = 0,
    qubit_of_bit: Sequence[int] | None = None,
    label: str = "quadratic-phase",
) -> Circuit:
    """Exact circuit for ``diag(exp(i a (x - s)**2))`` over basis index ``x``.

    With ``x = sum_j 2**j b_j`` the exponent splits into one Phase per bit,
    one ControlledPhase per bit pair and a constant, so the gate count is
    ``n_q + n_q (n_q - 1) / 2`` plus one zero-duration global phase.
    ``qubit_of_bit[j]`` names the qubit holding bit ``j`` (identity by default).
    """
    if n_q < 1:
        raise ValueError("n_q must be >= 1")
    qubit_of_bit = list(range(n_q)) if qubit_of_bit is None else list(qubit_of_bit)
    if sorted(qubit_of_bit) != list(range(n_q)):
        raise ValueError("qubit_of_bit must be a permutation of range(n_q)")
    s = int(basis_shift)
    gates = []
    for j in range(n_q):
        coeff = 4**j - 2 * s * 2**j
        gates.append(phase(qubit_of_bit[j], _scaled_angle(a, coeff)))
    for j in range(n_q):
        for jp in range(j + 1, n_q):
            gates.append(
                controlled_phase(qubit_of_bit[j], qubit_of_bit[jp], _scaled_angle(a, 2 * 2 ** (j + jp)))
            )
    gates.append(global_phase(_scaled_angle(a, s * s)))
    return Circuit(n_q, tuple(gates), ((label, 0, len(gates)),))


def _scaled_angle(a: float, integer_coeff: int) -> float:
    # integer coefficients reach 4**(n_q-1); fold before they swamp the mantissa
    return wrap_angle(a * integer_coeff)


def build_map_circuit(params: SawtoothParams) -> Circuit:
    """One period ``U_T U_k`` as QFT -> kick phase -> inverse QFT -> rotation phase.

    Acts on momentum-basis amplitudes and returns momentum-basis amplitudes,
    gate for gate equal to :class:`~qsawtooth.state.ExactPropagator` up to
    rounding. The kick sits on bit-reversed qubits because the QFT output is
    left unreversed. The ``(-1)**l`` sign of the ``n = m - N/2`` convention
    commutes with the kick and cancels between the two transforms, so it
    needs no gates.
    """
    n_q, N = params.n_q, params.N
    reversed_bits = [n_q - 1 - b for b in range(n_q)]
    kick = build_quadratic_phase(
        n_q, params.K * math.pi / N, N // 2, reversed_bits, label="kick"
    )
    rotation = build_quadratic_phase(n_q, -params.T / 2, N // 2, label="rotation")
    return build_qft(n_q, "forward") + kick + build_qft(n_q, "backward") + rotation


def nominal_gate_count(n_q: int) -> int:
    """``3 n_q**2 + n_q``: each quadratic-phase stage budgeted at ``n_q**2`` gates."""
    return 3 * n_q**2 + n_q


def nominal_count(circuit: Circuit) -> int:
    """Count under the budgeting convention of :func:`nominal_gate_count`.

    QFT stages contribute their actual gates, quadratic-phase stages are
    charged ``n_q**2`` regardless of how many gates they really use.
    """
    total = 0
    for label, start, stop in circuit.blocks:
        if label in ("qft", "iqft"):
            total += sum(1 for g in circuit.gates[start:stop] if g.takes_time)
        else:
            total += circuit.n_q**2
    return total


# -- execution ----------------------------------------------------------------


def _axis_view(psi: np.ndarray, n_q: int, q: int) -> np.ndarray:
    return psi.reshape(2 ** (n_q - q - 1), 2, 2**q, -1)


def _pair_view(psi: np.ndarray, n_q: int, q1: int, q2: int) -> np.ndarray:
    lo, hi = sorted((q1, q2))
    return psi.reshape(2 ** (n_q - hi - 1), 2, 2 ** (hi - lo - 1), 2, 2**lo, -1)


_INV_SQRT2 = 1 / math.sqrt(2)


def apply_gate_array(psi: np.ndarray, gate: Gate, n_q: int) -> None:
    """Apply ``gate`` in place to a C-contiguous array of shape ``(2**n_q, ...)``.

    Trailing axes are treated as a batch, so passing an identity matrix builds
    the dense unitary column by column.
    """
    kind = gate.kind
    if any(q >= n_q for q in gate.qubits):
        raise IndexError(f"gate {gate} out of range for n_q={n_q}")
    if kind == PHASE:
        _axis_view(psi, n_q, gate.qubits[0])[:, 1] *= np.exp(1j * gate.angle)
    elif kind == CPHASE:
        _pair_view(psi, n_q, *gate.qubits)[:, 1, :, 1] *= np.exp(1j * gate.angle)
    elif kind == HADAMARD:
        v = _axis_view(psi, n_q, gate.qubits[0])
        a = v[:, 0].copy()
        b = v[:, 1]
        v[:, 0] += b
        v[:, 0] *= _INV_SQRT2
        b -= a
        b *= -_INV_SQRT2
    elif kind == SWAP:
        v = _pair_view(psi, n_q, *gate.qubits)
        tmp = v[:, 0, :, 1].copy()
        v[:, 0, :, 1] = v[:, 1, :, 0]
        v[:, 1, :, 0] = tmp
    elif kind == GLOBAL_PHASE:
        psi *= np.exp(1j * gate.angle)
    elif kind == COMPENSATION:
        v = _axis_view(psi, n_q, gate.qubits[0])
        v[:, 0] *= np.exp(1j * gate.angle)
        v[:, 1] *= np.exp(-1j * gate.angle)
    else:  # pragma: no cover - Gate validates kinds
        raise ValueError(kind)


def apply_gate(reg: QuantumRegister, gate: Gate) -> QuantumRegister:
    out = reg.copy()
    apply_gate_array(out.amplitudes, gate, reg.n_q)
    return out


def apply_gates_array(psi: np.ndarray, gates: Iterable[Gate], n_q: int) -> None:
    for g in gates:
        apply_gate_array(psi, g, n_q)


def apply_circuit(reg: QuantumRegister, circuit: Circuit) -> QuantumRegister:
    if reg.n_q != circuit.n_q:
        raise ValueError(f"register n_q={reg.n_q} does not match circuit n_q={circuit.n_q}")
    out = reg.copy()
    apply_gates_array(out.amplitudes, circuit.gates, circuit.n_q)
    return out


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Dense ``2**n_q x 2**n_q`` matrix of ``circuit`` (small widths only)."""
    N = 2**circuit.n_q
    U = np.eye(N, dtype=np.complex128)
    apply_gates_array(U, circuit.gates, circuit.n_q)
    return U


def run_circuit_iterations(
    reg: QuantumRegister, circuit: Circuit, steps: int
) -> QuantumRegister:
    reg.require(MOMENTUM)
    out = reg.copy()
    for _ in range(steps):
        apply_gates_array(out.amplitudes, circuit.gates, circuit.n_q)
    return out


# -- text dump ----------------------------------------------------------------


def dump_circuit(circuit: Circuit) -> str:
    """One gate per line: ``KIND q1 [q2] [angle as hex float]``.

    The first line is a ``QUBITS n`` header so a dump is self-contained.
    """
    lines = [f"QUBITS {circuit.n_q}"]
    for g in circuit.gates:
        parts = [g.kind, *map(str, g.qubits)]
        if g.kind in _HAS_ANGLE:
            parts.append(float.hex(g.angle))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def load_circuit(text: str) -> Circuit:
    n_q = None
    gates = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        kind, *rest = line.split()
        if kind == "QUBITS":
            n_q = int(rest[0])
            continue
        if kind not in _ARITY:
            raise ValueError(f"line {lineno}: unknown gate kind {kind!r}")
        arity = _ARITY[kind]
        expected = arity + (1 if kind in _HAS_ANGLE else 0)
        if len(rest) != expected:
            raise ValueError(f"line {lineno}: expected {expected} fields after {kind}")
        qubits = tuple(int(x) for x in rest[:arity])
        angle = float.fromhex(rest[arity]) if kind in _HAS_ANGLE else 0.0
        gates.append(Gate(kind, qubits, angle))
    if n_q is None:
        n_q = 1 + max((q for g in gates for q in g.qubits), default=0)
    return Circuit(n_q, tuple(gates))
