"""Periodic L x L x L cubic lattice and its dual.

Qubits sit on edges, Z-type vertex operators on vertices, X-type cube operators
on cubes. A cube also hosts the classical dual spin, and an edge is the centre
of the dual plaquette formed by the four cubes around it.

Conventions
-----------
* an edge is (base vertex, axis): it runs from ``base`` to ``base + axis``;
* a cube is labelled by its minimal corner;
* flat indices are row-major in (x, y, z), with the axis as the fastest index
  for edges: ``edge = ((x*L + y)*L + z)*3 + axis``.
"""

from __future__ import annotations

import enum
from functools import cached_property

import numpy as np


class Axis(enum.IntEnum):
    X = 0
    Y = 1
    Z = 2


_UNIT = np.eye(3, dtype=np.int64)


class InvalidSizeError(ValueError):
    pass


class LatticeGeometry:
    """Index maps and incidence tables for the periodic cubic lattice.

    The incidence tables are plain integer arrays so hot loops can index them
    directly:

    * ``cube_edges``          (L^3, 12)   edges on the 1-skeleton of each cube
    * ``edge_cubes``          (3L^3, 4)   cubes sharing an edge (dual plaquette)
    * ``vertex_plane_edges``  (L^3, 3, 4) edges at a vertex lying in the plane
      with the given normal

    Instances are treated as immutable.
    """

    def __init__(self, L: int):
        if int(L) != L or L < 2:
            raise InvalidSizeError(f"lattice size must be an integer >= 2, got {L!r}")
        self.L = int(L)
        self.n_vertices = self.L**3
        self.n_cubes = self.L**3
        self.n_edges = 3 * self.L**3

    def __repr__(self):
        return f"LatticeGeometry(L={self.L})"

    # -- index maps ---------------------------------------------------------

    def site_index(self, x, y, z) -> int:
        """Flat index of a vertex or cube (both are labelled by a corner)."""
        L = self.L
        return ((x % L) * L + (y % L)) * L + (z % L)

    def site_coords(self, index: int) -> tuple[int, int, int]:
        L = self.L
        if not 0 <= index < self.n_cubes:
            raise IndexError(index)
        return index // (L * L), (index // L) % L, index % L

    vertex_index = site_index
    cube_index = site_index
    vertex_coords = site_coords
    cube_coords = site_coords

    def edge_index(self, x, y, z, axis) -> int:
        return self.site_index(x, y, z) * 3 + int(axis)

    def edge_coords(self, index: int) -> tuple[tuple[int, int, int], Axis]:
        if not 0 <= index < self.n_edges:
            raise IndexError(index)
        return self.site_coords(index // 3), Axis(index % 3)

    # -- incidence ------------------------------------------------------------

    def edges_of_cube(self, cube: int) -> list[int]:
        return self.cube_edges[cube].tolist()

    def vertex_plane_edges_of(self, vertex: int, normal) -> list[int]:
        return self.vertex_plane_edges[vertex, int(normal)].tolist()

    def spins_of_edge(self, edge: int) -> list[int]:
        return self.edge_cubes[edge].tolist()

    @cached_property
    def _coords(self) -> np.ndarray:
        L = self.L
        g = np.indices((L, L, L)).reshape(3, -1).T
        return g.astype(np.int64)

    def _flat(self, pos: np.ndarray) -> np.ndarray:
        L = self.L
        pos = pos % L
        return (pos[..., 0] * L + pos[..., 1]) * L + pos[..., 2]

    @cached_property
    def cube_edges(self) -> np.ndarray:
        corners = self._coords
        cols = []
        for axis in Axis:
            # the two directions transverse to this axis
            a, b = [d for d in range(3) if d != axis]
            for da in (0, 1):
                for db in (0, 1):
                    base = corners + da * _UNIT[a] + db * _UNIT[b]
                    cols.append(self._flat(base) * 3 + axis)
        out = np.stack(cols, axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def edge_cubes(self) -> np.ndarray:
        bases = np.repeat(self._coords, 3, axis=0)
        axes = np.tile(np.arange(3), self.n_vertices)
        out = np.empty((self.n_edges, 4), dtype=np.int64)
        for axis in Axis:
            rows = axes == axis
            a, b = [d for d in range(3) if d != axis]
            k = 0
            for da in (1, 0):
                for db in (1, 0):
                    out[rows, k] = self._flat(bases[rows] - da * _UNIT[a] - db * _UNIT[b])
                    k += 1
        out.setflags(write=False)
        return out

    @cached_property
    def vertex_plane_edges(self) -> np.ndarray:
        v = self._coords
        out = np.empty((self.n_vertices, 3, 4), dtype=np.int64)
        for normal in Axis:
            a, b = [d for d in range(3) if d != normal]
            out[:, normal, 0] = self._flat(v) * 3 + a
            out[:, normal, 1] = self._flat(v - _UNIT[a]) * 3 + a
            out[:, normal, 2] = self._flat(v) * 3 + b
            out[:, normal, 3] = self._flat(v - _UNIT[b]) * 3 + b
        out.setflags(write=False)
        return out

    def translate_edge(self, edge: int, shift) -> int:
        (x, y, z), axis = self.edge_coords(edge)
        return self.edge_index(x + shift[0], y + shift[1], z + shift[2], axis)

    def translate_site(self, site: int, shift) -> int:
        x, y, z = self.site_coords(site)
        return self.site_index(x + shift[0], y + shift[1], z + shift[2])


def build_geometry(L: int) -> LatticeGeometry:
    return LatticeGeometry(L)
