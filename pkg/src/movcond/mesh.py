"""Structured slab-in-air quadrilateral mesh.

The conductor slab occupies ``|y| <= d/2`` and the whole z-extent
``[-L, L]``; an air layer of thickness ``air_factor * d`` sits on either side.
Coordinates are stored as ``(y, z)`` pairs, y being the first (horizontal)
axis. Elements are numbered row by row in y, z fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

AIR = 0
CONDUCTOR = 1

_REL_TOL = 1e-9


@dataclass(frozen=True)
class SlabGeometry:
    d: float = 0.5
    air_factor: float = 4.0
    flow_halflength_factor: float = 20.0
    field_halfwidth: float = 0.5

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"slab thickness must be positive, got {self.d}")
        if not self.air_factor > 0:
            raise ValueError(f"air_factor must be positive, got {self.air_factor}")
        if not self.field_halfwidth > 0:
            raise ValueError("field_halfwidth must be positive")
        if not self.flow_halflength_factor > self.field_halfwidth / self.d:
            raise ValueError("applied-field footprint must lie strictly inside the z-extent")

    @property
    def half_length(self) -> float:
        return self.flow_halflength_factor * self.d

    @property
    def air_thickness(self) -> float:
        return self.air_factor * self.d

    @property
    def half_height(self) -> float:
        return 0.5 * self.d + self.air_thickness


@dataclass(frozen=True)
class Discretization:
    """Element counts and y-grading.

    ``grading_ratio`` is the ratio of successive air-row heights, finest row
    at the interface. ``conductor_grading`` does the same inside each half of
    the slab (1.0 keeps the conductor rows uniform). The defaults give the
    5760-element benchmark mesh, refined towards both material lines.
    """

    nz: int = 180
    ny_conductor: int = 16
    ny_air: int = 8
    grading_ratio: float = 1.3
    conductor_grading: float = 1.3

    def __post_init__(self):
        for name, low in (("nz", 2), ("ny_conductor", 2), ("ny_air", 1)):
            if getattr(self, name) < low:
                raise ValueError(f"{name} must be >= {low}, got {getattr(self, name)}")
        if not 1.0 <= self.grading_ratio <= 3.0:
            raise ValueError(f"grading_ratio must lie in [1, 3], got {self.grading_ratio}")
        if not 1.0 <= self.conductor_grading <= 3.0:
            raise ValueError("conductor_grading must lie in [1, 3]")
        if self.conductor_grading != 1.0 and self.ny_conductor % 2:
            raise ValueError("graded conductor needs an even ny_conductor")

    @property
    def ny_total(self) -> int:
        return self.ny_conductor + 2 * self.ny_air

    @property
    def n_elements(self) -> int:
        return self.nz * self.ny_total


@dataclass(frozen=True, eq=False)
class Mesh:
    y_lines: np.ndarray  # (ny + 1,)
    z_lines: np.ndarray  # (nz + 1,)
    conductor_rows: tuple[int, int]  # y-line indices bounding the slab
    nodes: np.ndarray  # (n_nodes, 2) columns (y, z)
    elements: np.ndarray  # (n_elem, 4) counterclockwise from lower-left
    region: np.ndarray  # (n_elem,) AIR | CONDUCTOR
    dlz: np.ndarray  # (n_elem,) element length along z
    interface: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    geometry: SlabGeometry | None = None
    disc: Discretization | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def shape(self) -> tuple[int, int]:
        """Node grid shape ``(ny + 1, nz + 1)``."""
        return len(self.y_lines), len(self.z_lines)

    @property
    def interface_y(self) -> tuple[float, float]:
        j0, j1 = self.conductor_rows
        return float(self.y_lines[j0]), float(self.y_lines[j1])

    @property
    def thickness(self) -> float:
        lo, hi = self.interface_y
        return hi - lo

    def node_id(self, j: int, i: int) -> int:
        return j * len(self.z_lines) + i

    def conductor_nodes(self) -> np.ndarray:
        return np.unique(self.elements[self.region == CONDUCTOR])

    def element_coords(self) -> np.ndarray:
        return self.nodes[self.elements]

    def element_areas(self) -> np.ndarray:
        c = self.element_coords()
        dy = c[:, 1, 0] - c[:, 0, 0]
        dz = c[:, 3, 1] - c[:, 0, 1]
        return dy * dz


def structured_mesh(
    y_lines,
    z_lines,
    conductor_rows: tuple[int, int] | None = None,
    geometry: SlabGeometry | None = None,
    disc: Discretization | None = None,
) -> Mesh:
    """Tensor-product quad mesh; rows ``j0 <= j < j1`` are conductor.

    Without ``conductor_rows`` the whole rectangle is conductor.
    """
    y = np.asarray(y_lines, dtype=float)
    z = np.asarray(z_lines, dtype=float)
    if y.ndim != 1 or z.ndim != 1 or len(y) < 2 or len(z) < 2:
        raise ValueError("need at least two grid lines per direction")
    if np.any(np.diff(y) <= 0) or np.any(np.diff(z) <= 0):
        raise ValueError("grid lines must be strictly increasing")
    ny, nz = len(y) - 1, len(z) - 1
    j0, j1 = conductor_rows if conductor_rows is not None else (0, ny)
    if not 0 <= j0 < j1 <= ny:
        raise ValueError(f"invalid conductor rows {(j0, j1)}")

    nzp = nz + 1
    Y, Z = np.meshgrid(y, z, indexing="ij")
    nodes = np.column_stack([Y.ravel(), Z.ravel()])

    jj, ii = np.meshgrid(np.arange(ny), np.arange(nz), indexing="ij")
    n0 = (jj * nzp + ii).ravel()
    # (y0,z0) -> (y1,z0) -> (y1,z1) -> (y0,z1)
    elements = np.column_stack([n0, n0 + nzp, n0 + nzp + 1, n0 + 1])

    row = jj.ravel()
    region = np.where((row >= j0) & (row < j1), CONDUCTOR, AIR).astype(np.int8)
    dlz = np.diff(z)[ii.ravel()]

    interface = np.concatenate([j0 * nzp + np.arange(nzp), j1 * nzp + np.arange(nzp)])
    grid = np.arange(len(nodes)).reshape(ny + 1, nzp)
    on_edge = np.zeros_like(grid, dtype=bool)
    on_edge[[0, -1], :] = True
    on_edge[:, [0, -1]] = True

    return Mesh(
        y_lines=y,
        z_lines=z,
        conductor_rows=(j0, j1),
        nodes=nodes,
        elements=elements,
        region=region,
        dlz=dlz,
        interface=interface,
        boundary=np.sort(grid[on_edge]),
        geometry=geometry,
        disc=disc,
    )


def graded_heights(total: float, n: int, ratio: float) -> np.ndarray:
    """Heights ``h0 * ratio**k``, ``k = 0..n-1``, summing to ``total``."""
    if ratio == 1.0:
        return np.full(n, total / n)
    h0 = total * (ratio - 1.0) / (ratio**n - 1.0)
    return h0 * ratio ** np.arange(n)


def _y_lines(geom: SlabGeometry, disc: Discretization) -> np.ndarray:
    half = 0.5 * geom.d
    air = graded_heights(geom.air_thickness, disc.ny_air, disc.grading_ratio)
    if disc.conductor_grading == 1.0:
        cond = np.full(disc.ny_conductor, geom.d / disc.ny_conductor)
    else:
        h = graded_heights(half, disc.ny_conductor // 2, disc.conductor_grading)
        cond = np.concatenate([h, h[::-1]])
    heights = np.concatenate([air[::-1], cond, air])
    y = -geom.half_height + np.concatenate([[0.0], np.cumsum(heights)])
    # pin the material lines and outer edges exactly
    j0 = disc.ny_air
    y[0], y[-1] = -geom.half_height, geom.half_height
    y[j0], y[j0 + disc.ny_conductor] = -half, half
    return y


def build_slab_mesh(geom: SlabGeometry, disc: Discretization) -> Mesh:
    y = _y_lines(geom, disc)
    if np.any(np.diff(y) <= _REL_TOL * geom.d):
        raise ValueError("grading produces degenerate elements")
    L = geom.half_length
    z = np.linspace(-L, L, disc.nz + 1)
    j0 = disc.ny_air
    return structured_mesh(y, z, (j0, j0 + disc.ny_conductor), geometry=geom, disc=disc)


def interface_nodes(mesh: Mesh, tol: float | None = None) -> np.ndarray:
    """Nodes lying on the two conductor/air lines, ordered by (line, z)."""
    lo, hi = mesh.interface_y
    if tol is None:
        tol = 1e-9 * mesh.thickness
    y, z = mesh.nodes[:, 0], mesh.nodes[:, 1]
    lower = np.flatnonzero(np.abs(y - lo) <= tol)
    upper = np.flatnonzero(np.abs(y - hi) <= tol)
    lower = lower[np.argsort(z[lower], kind="stable")]
    upper = upper[np.argsort(z[upper], kind="stable")]
    return np.concatenate([lower, upper])


def jacobian_determinants(mesh: Mesh) -> np.ndarray:
    """Corner Jacobian determinants ``(n_elem, 4)`` of the bilinear map."""
    c = mesh.element_coords()
    out = np.empty((len(c), 4))
    for k in range(4):
        a = c[:, (k + 1) % 4] - c[:, k]
        b = c[:, (k - 1) % 4] - c[:, k]
        out[:, k] = 0.25 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    return out


def write_mesh_dump(mesh: Mesh, path: str | Path) -> None:
    """Plain-text listing: ``id y z`` per node, ``id n0 n1 n2 n3 region`` per element."""
    names = {AIR: "air", CONDUCTOR: "conductor"}
    with open(path, "w") as fh:
        fh.write(f"# nodes {mesh.n_nodes}\n")
        for k, (y, z) in enumerate(mesh.nodes):
            fh.write(f"{k} {y:.17g} {z:.17g}\n")
        fh.write(f"# elements {mesh.n_elements}\n")
        for k, (conn, reg) in enumerate(zip(mesh.elements, mesh.region)):
            fh.write(f"{k} {conn[0]} {conn[1]} {conn[2]} {conn[3]} {names[int(reg)]}\n")
