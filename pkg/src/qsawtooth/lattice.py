"""Two-dimensional nearest-neighbour qubit lattice and swap-chain routing."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .circuit import CPHASE, SWAP, Circuit, Gate, swap


@dataclass(frozen=True)
class LatticeLayout:
    """Placement of qubits on a ``rows x cols`` grid; empty sites hold no qubit."""

    rows: int
    cols: int
    positions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("lattice needs at least one row and one column")
        positions = tuple((int(r), int(c)) for r, c in self.positions)
        if len(set(positions)) != len(positions):
            raise ValueError("two qubits share a lattice site")
        for r, c in positions:
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise ValueError(f"site {(r, c)} outside {self.rows}x{self.cols} lattice")
        object.__setattr__(self, "positions", positions)

    @classmethod
    def row_major(cls, n_q: int, rows: int, cols: int) -> LatticeLayout:
        if rows * cols < n_q:
            raise ValueError(f"{rows}x{cols} lattice cannot hold {n_q} qubits")
        return cls(rows, cols, tuple(divmod(q, cols) for q in range(n_q)))

    @classmethod
    def for_qubits(cls, n_q: int) -> LatticeLayout:
        """Most nearly square grid around ``sqrt(n_q)``, filled row-major.

        Rows are tried at ``floor`` and ``ceil`` of ``sqrt(n_q)`` with just
        enough columns; ties on ``|rows - cols|`` go to the smaller area, then
        to fewer rows.
        """
        if n_q < 1:
            raise ValueError("n_q must be >= 1")
        root = math.sqrt(n_q)
        candidates = []
        for rows in {max(1, math.floor(root)), math.ceil(root)}:
            cols = math.ceil(n_q / rows)
            candidates.append((abs(rows - cols), rows * cols, rows, cols))
        _, _, rows, cols = min(candidates)
        return cls.row_major(n_q, rows, cols)

    @property
    def n_q(self) -> int:
        return len(self.positions)

    def occupant(self, site: tuple[int, int]) -> int | None:
        return self._site_map().get(site)

    def _site_map(self) -> dict[tuple[int, int], int]:
        cache = self.__dict__.get("_sites")
        if cache is None:
            cache = {pos: q for q, pos in enumerate(self.positions)}
            object.__setattr__(self, "_sites", cache)
        return cache

    def distance(self, q1: int, q2: int) -> int:
        (r1, c1), (r2, c2) = self.positions[q1], self.positions[q2]
        return abs(r1 - r2) + abs(c1 - c2)

    def adjacent(self, q1: int, q2: int) -> bool:
        return self.distance(q1, q2) == 1

    def edges(self) -> list[tuple[int, int]]:
        """Nearest-neighbour qubit pairs ``(i, j)`` with ``i < j``, in site order."""
        out = []
        sites = self._site_map()
        for q, (r, c) in enumerate(self.positions):
            for nb in ((r, c + 1), (r + 1, c)):
                other = sites.get(nb)
                if other is not None:
                    out.append((min(q, other), max(q, other)))
        return sorted(out)


def _walk(start, goal, row_first: bool):
    """Sites visited moving from ``start`` until Manhattan-adjacent to ``goal``."""
    (r, c), (gr, gc) = start, goal
    path = []
    while abs(r - gr) + abs(c - gc) > 1:
        if row_first and r != gr or not row_first and c == gc:
            r += 1 if gr > r else -1
        else:
            c += 1 if gc > c else -1
        path.append((r, c))
    return path


def swap_path(layout: LatticeLayout, q1: int, q2: int) -> list[tuple[int, int]]:
    """Sites ``q2``'s state passes through on its way next to ``q1``.

    Rows are closed first, then columns; if that route crosses an empty site
    the column-first route is used instead (one of the two always avoids the
    ragged last row of a row-major fill).
    """
    start, goal = layout.positions[q2], layout.positions[q1]
    for row_first in (True, False):
        path = _walk(start, goal, row_first)
        if all(layout.occupant(site) is not None for site in path):
            return path
    raise ValueError(f"no occupied route between qubits {q1} and {q2}")


def route(circuit: Circuit, layout: LatticeLayout) -> Circuit:
    """Make every two-qubit gate nearest-neighbour by wrapping it in swap chains.

    The second operand's state is swapped site by site toward the first, the
    gate acts on the now-adjacent pair, and the chain is undone so every qubit
    returns home before the next gate. The routed circuit is the same unitary.
    """
    if layout.n_q < circuit.n_q:
        raise ValueError(
            f"layout places {layout.n_q} qubits but the circuit uses {circuit.n_q}"
        )
    out: list[Gate] = []
    for gate in circuit.gates:
        if gate.kind not in (CPHASE, SWAP) or layout.adjacent(*gate.qubits):
            out.append(gate)
            continue
        q1, q2 = gate.qubits
        path = swap_path(layout, q1, q2)
        chain = []
        here = q2
        for site in path:
            there = layout.occupant(site)
            chain.append(swap(here, there))
            here = there
        out.extend(chain)
        out.append(Gate(gate.kind, (q1, here), gate.angle))
        out.extend(reversed(chain))
    return Circuit(circuit.n_q, tuple(out))


def routing_breakdown(routed: Circuit) -> dict[str, int]:
    """Gate totals of a routed circuit, split into map gates and inserted swaps."""
    counts = routed.counts
    return {
        "total": routed.gate_count,
        "swaps": counts[SWAP],
        "map_gates": routed.gate_count - counts[SWAP],
        "hadamard": counts["H"],
        "phase": counts["PHASE"],
        "controlled_phase": counts[CPHASE],
    }
