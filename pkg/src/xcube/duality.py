"""Quantum indicators from classical data, and the membrane order parameter.

A membrane A is a set of parallel edges lying in one lattice plane. Under the
duality each sigma^z on an edge becomes the four-spin product of its dual
plaquette; in the product over A every spin covered an even number of times
cancels (s^2 = 1), leaving only the spins at the membrane's corners.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from xcube.lattice import Axis, LatticeGeometry
from xcube.plaquette_mc import ASCENDING, DESCENDING, HysteresisResult, MeasurementSeries


def _axis(value) -> Axis:
    return Axis[value.upper()] if isinstance(value, str) else Axis(value)


def _in_plane_axes(normal: Axis) -> tuple[Axis, Axis]:
    a, b = [ax for ax in Axis if ax != normal]
    return a, b


@dataclass(frozen=True)
class Membrane:
    """Edges parallel to ``normal`` with base in the plane ``normal = plane``.

    ``cells`` are in-plane coordinates, ordered by axis: (y, z) for an X
    normal, (x, z) for Y, (x, y) for Z.
    """

    normal: Axis
    plane: int
    cells: frozenset[tuple[int, int]]

    def __post_init__(self):
        if not self.cells:
            raise ValueError("membrane needs at least one cell")
        object.__setattr__(self, "normal", _axis(self.normal))

    @classmethod
    def rectangle(cls, normal, plane: int, origin: tuple[int, int], size: tuple[int, int]):
        (a0, b0), (na, nb) = origin, size
        cells = frozenset((a0 + i, b0 + j) for i in range(na) for j in range(nb))
        return cls(_axis(normal), plane, cells)

    @classmethod
    def from_dict(cls, spec: dict):
        normal = _axis(spec["normal"])
        cells = frozenset((int(a), int(b)) for a, b in spec["cells"])
        return cls(normal, int(spec["plane"]), cells)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"normal": self.normal.name, "plane": self.plane,
                "cells": [list(c) for c in sorted(self.cells)]}

    def edges(self, geometry: LatticeGeometry) -> list[int]:
        a, b = _in_plane_axes(self.normal)
        out = []
        for ca, cb in sorted(self.cells):
            pos = [0, 0, 0]
            pos[self.normal], pos[a], pos[b] = self.plane, ca, cb
            out.append(geometry.edge_index(*pos, self.normal))
        if len(set(out)) != len(out):
            raise ValueError("membrane cells overlap after wrapping around the lattice")
        return out

    def __or__(self, other: "Membrane") -> "Membrane":
        if (self.normal, self.plane) != (other.normal, other.plane):
            raise ValueError("can only merge membranes in the same plane")
        return Membrane(self.normal, self.plane, self.cells | other.cells)

    def with_cell(self, cell) -> "Membrane":
        return Membrane(self.normal, self.plane, self.cells | {tuple(cell)})

    def without_cell(self, cell) -> "Membrane":
        return Membrane(self.normal, self.plane, self.cells - {tuple(cell)})

    def translated(self, shift: tuple[int, int]) -> "Membrane":
        da, db = shift
        return Membrane(self.normal, self.plane,
                        frozenset((a + da, b + db) for a, b in self.cells))


def corner_set(membrane: Membrane, geometry: LatticeGeometry) -> frozenset[int]:
    """Dual spins (cube indices) covered by an odd number of member plaquettes."""
    counts = Counter()
    for e in membrane.edges(geometry):
        counts.update(geometry.spins_of_edge(e))
    return frozenset(s for s, k in counts.items() if k % 2)


def membrane_identity_check(spins, membrane: Membrane, geometry: LatticeGeometry) -> bool:
    """True iff the product of the member plaquette terms equals the corner product."""
    spins = np.asarray(spins)
    edges = membrane.edges(geometry)
    lhs = int(np.prod(spins[geometry.edge_cubes[edges]], dtype=np.int64))
    corners = sorted(corner_set(membrane, geometry))
    rhs = int(np.prod(spins[corners], dtype=np.int64)) if corners else 1
    return lhs == rhs


def _periodic_gap(values: Iterable[int], L: int) -> int:
    vals = sorted(set(v % L for v in values))
    if len(vals) < 2:
        return L
    return min(min((b - a) % L, (a - b) % L) for i, a in enumerate(vals) for b in vals[i + 1:])


def corners_separated(corners, membrane: Membrane, geometry: LatticeGeometry) -> bool:
    """Distinct corner coordinates along each in-plane axis are at least L/4
    apart (periodic distance)."""
    a, b = _in_plane_axes(membrane.normal)
    coords = [geometry.cube_coords(c) for c in corners]
    need = geometry.L / 4
    return all(_periodic_gap([c[ax] for c in coords], geometry.L) >= need for ax in (a, b))


@dataclass
class OrderParameter:
    value: float
    error: float
    corner_count: int
    m: float = float("nan")
    m_err: float = float("nan")
    separated: bool | None = None

    @property
    def m4(self) -> float:
        return self.m**4

    @property
    def warning(self) -> bool:
        return self.separated is False


def foliated_order_parameter(source, membrane: Membrane, geometry: LatticeGeometry,
                             beta: float | None = None, compare_m4: bool = False,
                             couplings=None) -> OrderParameter:
    """<O_A> from either engine.

    * :class:`MeasurementSeries`: time average of the recorded corner-spin
      product (the series must have been run with the membrane's corner set);
    * :class:`CubicStructureEnsemble`: exact weighted parity over structures,
      needs ``beta``.

    With ``compare_m4`` the corner separation is checked; a violation sets the
    ``warning`` flag instead of raising.
    """
    from xcube.exact import CubicStructureEnsemble, membrane_expectation_exact
    from xcube.plaquette_mc import corner_correlator

    corners = corner_set(membrane, geometry)
    separated = corners_separated(corners, membrane, geometry) if compare_m4 else None
    if isinstance(source, MeasurementSeries):
        value, err = corner_correlator(source, sorted(corners)) if corners else (1.0, 0.0)
        m, m_err = source.m()
        return OrderParameter(value, err, len(corners), m, m_err, separated)
    if isinstance(source, CubicStructureEnsemble):
        if beta is None:
            raise ValueError("exact order parameter needs beta")
        value = membrane_expectation_exact(source, beta, membrane.edges(geometry), couplings)
        return OrderParameter(value, 0.0, len(corners), separated=separated)
    raise TypeError(f"unsupported source {type(source).__name__}")


def ge_from_u(u: float) -> float:
    """Global entanglement 1 - u^2 from the energy per plaquette.

    ``u`` outside [-1, 0] (statistical overshoot) is clamped with a warning.
    """
    if u < -1.0 or u > 0.0:
        warnings.warn(f"u={u} outside [-1, 0]; clamped", RuntimeWarning, stacklevel=2)
        u = min(max(u, -1.0), 0.0)
    return 1.0 - u * u


class SingularParameterError(ValueError):
    pass


def fidelity_from_cv(beta: float, dbeta: float, cv: float) -> float:
    """Second-order fidelity 1 - C_v dbeta^2 / (8 beta^2)."""
    if beta == 0:
        raise SingularParameterError("fidelity from heat capacity is singular at beta = 0")
    return 1.0 - cv * dbeta**2 / (8.0 * beta**2)


def _jump(betas, values):
    """Midpoint of the largest step between neighbouring grid points."""
    d = np.abs(np.diff(values))
    i = int(np.nanargmax(d))
    return float(0.5 * (betas[i] + betas[i + 1])), float(d[i])


def transition_report(result: HysteresisResult, window=(0.48, 0.62), bracket=(0.50, 0.62),
                      dbeta: float = 0.01) -> dict:
    """Summarise the three transition indicators of a hysteresis scan.

    * energy (-> global entanglement) jump on each branch and the largest
      gap between branches;
    * heat-capacity peak (-> fidelity dip);
    * jump of the foliated order parameter, if corners were recorded.
    """
    betas = np.asarray(result.betas, dtype=float)
    tol = 1e-9
    if betas.min() > window[0] + tol or betas.max() < window[1] - tol:
        raise ValueError(f"scan covers [{betas.min()}, {betas.max()}], need {list(window)}")
    lo, hi = bracket
    report: dict = {"L": result.L, "seed": result.seed, "sweeps": result.sweeps,
                    "bc": result.bc, "bracket": list(bracket), "branches": {}}
    ge = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for name in (ASCENDING, DESCENDING):
            pts = result.branches[name]
            u = np.array([p.u for p in pts])
            ge[name] = np.array([ge_from_u(x) for x in u])
            cv = np.array([p.cv for p in pts])
            fid = np.array([fidelity_from_cv(b, dbeta, c) if b > 0 else 1.0
                            for b, c in zip(betas, cv)])
            u_jump, u_size = _jump(betas, u)
            entry = {
                "u_jump_beta": u_jump, "u_jump_size": u_size,
                "ge_jump_beta": _jump(betas, ge[name])[0],
                "ge_jump_size": _jump(betas, ge[name])[1],
                "cv_peak_beta": float(betas[int(np.argmax(cv))]),
                "cv_peak": float(cv.max()),
                "fidelity_min_beta": float(betas[int(np.argmin(fid))]),
                "fidelity_min": float(fid.min()),
            }
            op = np.array([p.op for p in pts])
            if np.isfinite(op).all():
                entry["op_jump_beta"], entry["op_jump_size"] = _jump(betas, op)
            report["branches"][name] = entry
    report["ge_clamped"] = len(caught)
    gap_u = np.abs(result.u(ASCENDING) - result.u(DESCENDING))
    gap_ge = np.abs(ge[ASCENDING] - ge[DESCENDING])
    report["max_u_gap"] = float(gap_u.max())
    report["max_u_gap_beta"] = float(betas[int(np.argmax(gap_u))])
    report["max_ge_gap"] = float(gap_ge.max())
    # ascending branch is the disordered (fracton) side wherever the branches differ
    open_loop = gap_u > 0.1
    report["disordered_ge_higher"] = bool(
        (ge[ASCENDING][open_loop] > ge[DESCENDING][open_loop]).all()) if open_loop.any() else None
    estimates = [e[k] for e in report["branches"].values()
                 for k in ("u_jump_beta", "cv_peak_beta", "op_jump_beta") if k in e]
    report["all_in_bracket"] = bool(all(lo <= x <= hi for x in estimates))
    return report
