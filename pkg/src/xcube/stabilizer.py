"""Binary symplectic algebra for the X-cube stabilizer code.

Pauli operators are stored without phases as two bit-vectors over the edges,
packed into Python integers (bit ``i`` is edge ``i``). Python ints are
arbitrary-width machine-word arrays, so XOR and ``int.bit_count`` give the
product and the popcount parity directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from xcube.lattice import Axis, LatticeGeometry


def _mask(indices: Iterable[int]) -> int:
    m = 0
    for i in indices:
        m ^= 1 << int(i)
    return m


@dataclass(frozen=True)
class PauliOperator:
    """Phase-free Pauli string on ``n`` qubits."""

    n: int
    x: int = 0
    z: int = 0

    @classmethod
    def from_edges(cls, n: int, x_edges: Iterable[int] = (), z_edges: Iterable[int] = ()):
        return cls(n, _mask(x_edges), _mask(z_edges))

    @classmethod
    def identity(cls, n: int):
        return cls(n)

    def __mul__(self, other: "PauliOperator") -> "PauliOperator":
        if self.n != other.n:
            raise ValueError(f"length mismatch: {self.n} vs {other.n}")
        return PauliOperator(self.n, self.x ^ other.x, self.z ^ other.z)

    @property
    def weight(self) -> int:
        return (self.x | self.z).bit_count()

    def support(self) -> list[int]:
        s, out, i = self.x | self.z, [], 0
        while s:
            if s & 1:
                out.append(i)
            s >>= 1
            i += 1
        return out

    def symplectic(self) -> int:
        """(x | z) packed as one 2n-bit integer."""
        return self.x | (self.z << self.n)


def symplectic_product(p: PauliOperator, q: PauliOperator) -> int:
    """0 if ``p`` and ``q`` commute, 1 if they anticommute."""
    if p.n != q.n:
        raise ValueError(f"length mismatch: {p.n} vs {q.n}")
    return ((p.x & q.z).bit_count() + (p.z & q.x).bit_count()) & 1


def _as_int(v) -> int:
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, str):
        return int(v[::-1], 2) if v else 0
    bits = np.asarray(v, dtype=np.uint8).ravel()
    return _mask(np.flatnonzero(bits))


def gf2_rank(vectors) -> int:
    """Rank over GF(2).

    Vectors may be ints (bit i = component i), 0/1 sequences, or bit strings
    (character i = component i).
    """
    pivots: dict[int, int] = {}
    for v in vectors:
        v = _as_int(v)
        while v:
            top = v.bit_length() - 1
            if top not in pivots:
                pivots[top] = v
                break
            v ^= pivots[top]
    return len(pivots)


def gf2_basis(vectors) -> list[int]:
    """Independent vectors spanning the same space, one per pivot bit."""
    pivots: dict[int, int] = {}
    for v in vectors:
        v = _as_int(v)
        while v:
            top = v.bit_length() - 1
            if top not in pivots:
                pivots[top] = v
                break
            v ^= pivots[top]
    return [pivots[k] for k in sorted(pivots)]


@dataclass(frozen=True)
class StabilizerSet:
    geometry: LatticeGeometry
    cube_ops: tuple[PauliOperator, ...]
    # keyed by (vertex, normal); index = 3*vertex + normal
    vertex_ops: tuple[PauliOperator, ...]

    @property
    def n(self) -> int:
        return self.geometry.n_edges

    def generators(self) -> list[PauliOperator]:
        return list(self.cube_ops) + list(self.vertex_ops)

    def vertex_op(self, vertex: int, normal) -> PauliOperator:
        return self.vertex_ops[3 * vertex + int(normal)]


@dataclass(frozen=True)
class Syndrome:
    violated_cubes: frozenset[int] = field(default_factory=frozenset)
    # (vertex, normal) pairs
    violated_vertex_ops: frozenset[tuple[int, Axis]] = field(default_factory=frozenset)

    def __len__(self):
        return len(self.violated_cubes) + len(self.violated_vertex_ops)

    def __xor__(self, other: "Syndrome") -> "Syndrome":
        return Syndrome(
            self.violated_cubes ^ other.violated_cubes,
            self.violated_vertex_ops ^ other.violated_vertex_ops,
        )


def build_stabilizers(geometry: LatticeGeometry) -> StabilizerSet:
    n = geometry.n_edges
    cube_ops = tuple(PauliOperator.from_edges(n, x_edges=row) for row in geometry.cube_edges)
    vertex_ops = tuple(
        PauliOperator.from_edges(n, z_edges=geometry.vertex_plane_edges[v, normal])
        for v in range(geometry.n_vertices)
        for normal in Axis
    )
    return StabilizerSet(geometry, cube_ops, vertex_ops)


def stabilizer_ranks(stabs: StabilizerSet) -> dict[str, int]:
    """Ranks of the X-type, Z-type and full generator sets."""
    rx = gf2_rank(op.x for op in stabs.cube_ops)
    rz = gf2_rank(op.z for op in stabs.vertex_ops)
    return {
        "x_rank": rx,
        "z_rank": rz,
        "rank": gf2_rank(op.symplectic() for op in stabs.generators()),
        "x_constraints": len(stabs.cube_ops) - rx,
        "z_constraints": len(stabs.vertex_ops) - rz,
    }


def degeneracy_exponent(stabs: StabilizerSet) -> int:
    """Number of logical qubits k; the ground space has dimension 2**k."""
    return stabs.n - gf2_rank(op.symplectic() for op in stabs.generators())


def syndrome(p: PauliOperator, stabs: StabilizerSet) -> Syndrome:
    cubes = frozenset(c for c, op in enumerate(stabs.cube_ops) if symplectic_product(p, op))
    verts = frozenset(
        (k // 3, Axis(k % 3))
        for k, op in enumerate(stabs.vertex_ops)
        if symplectic_product(p, op)
    )
    return Syndrome(cubes, verts)


def _chain(geometry: LatticeGeometry, start, steps) -> list[int]:
    """Edges of a lattice path from ``start`` following unit steps like (Axis.X, +1)."""
    pos = list(start)
    edges = []
    for axis, sign in steps:
        if sign > 0:
            edges.append(geometry.edge_index(*pos, axis))
            pos[axis] += 1
        else:
            pos[axis] -= 1
            edges.append(geometry.edge_index(*pos, axis))
    return edges


def mobility_experiments(geometry: LatticeGeometry, length: int = 3) -> dict:
    """Syndromes of the four excitation-creating operators.

    (a) straight sigma-x string (lineon pair), (b) L-shaped sigma-x string
    (extra excitation at the bend), (c) single sigma-z (four cube
    excitations), (d) collinear sigma-z chain (planon pair separation).
    """
    L = geometry.L
    if L < 3:
        raise ValueError("mobility experiments need L >= 3")
    length = min(length, L - 1)
    n = geometry.n_edges
    stabs = build_stabilizers(geometry)
    origin = (0, 0, 0)
    straight = _chain(geometry, origin, [(Axis.X, 1)] * length)
    bent = _chain(geometry, origin, [(Axis.X, 1)] * length + [(Axis.Y, 1)] * length)
    corner_vertex = geometry.vertex_index(length, 0, 0)
    ops = {
        "straight_x_string": PauliOperator.from_edges(n, x_edges=straight),
        "bent_x_string": PauliOperator.from_edges(n, x_edges=bent),
        "single_z": PauliOperator.from_edges(n, z_edges=[geometry.edge_index(0, 0, 0, Axis.Z)]),
        "z_chain": PauliOperator.from_edges(
            n, z_edges=[geometry.edge_index(i, 0, 0, Axis.Z) for i in range(length)]
        ),
    }
    report = {"L": L, "length": length}
    for name, op in ops.items():
        s = syndrome(op, stabs)
        entry = {
            "size": len(s),
            "violated_cubes": sorted(geometry.cube_coords(c) for c in s.violated_cubes),
            "violated_vertex_ops": sorted(
                (geometry.vertex_coords(v), normal.name) for v, normal in s.violated_vertex_ops
            ),
        }
        if name == "bent_x_string":
            entry["at_corner"] = sum(1 for v, _ in s.violated_vertex_ops if v == corner_vertex)
        report[name] = entry
    return report
