"""Derived fields and error metrics.

``b_x`` and ``div A`` are evaluated at the Gauss points from one shared
gradient table. Nodal values come from area-weighted averaging of element
means. Recovery can be restricted to one material so that fields that jump
numerically across the slab surface are not smeared into the other side.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from pathlib import Path

import numpy as np

from .fem import ElementGeometry, gauss_rule, physical_gradients
from .mesh import AIR, CONDUCTOR, Mesh, interface_nodes
from .schemes import AIR_MATERIAL, Material, SchemeConfig


@dataclass(frozen=True, eq=False)
class FieldSolution:
    mesh: Mesh
    ay: np.ndarray
    az: np.ndarray
    phi: np.ndarray  # NaN outside the conductor
    config: SchemeConfig | None = None
    material: Material = field(default_factory=Material)
    pe: float | None = None
    residual: float = 0.0
    wall_time: float = 0.0

    def __post_init__(self):
        n = self.mesh.n_nodes
        for name in ("ay", "az", "phi"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one value per node")
        if not (np.all(np.isfinite(self.ay)) and np.all(np.isfinite(self.az))):
            raise ValueError("vector potential holds non-finite values")

    def scaled(self, c: float) -> FieldSolution:
        return FieldSolution(
            self.mesh, c * self.ay, c * self.az, c * self.phi, self.config,
            self.material, self.pe, self.residual, self.wall_time,
        )

    def derived(self) -> DerivedFields:
        # cached by hand; the dataclass is frozen
        d = self.__dict__.get("_derived")
        if d is None:
            d = DerivedFields.compute(self)
            object.__setattr__(self, "_derived", d)
        return d


def recover_nodal(mesh: Mesh, values: np.ndarray, mask=None) -> np.ndarray:
    """Area-weighted nodal average of per-element values.

    With ``mask`` only the selected elements contribute; nodes they do not
    touch get NaN.
    """
    values = np.asarray(values, dtype=float)
    area = mesh.element_areas()
    elems = np.arange(mesh.n_elements) if mask is None else np.flatnonzero(mask)
    num = np.zeros(mesh.n_nodes)
    den = np.zeros(mesh.n_nodes)
    wv = area[elems] * values[elems]
    for k in range(4):
        np.add.at(num, mesh.elements[elems, k], wv)
        np.add.at(den, mesh.elements[elems, k], area[elems])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.nan)


def recover_by_region(mesh: Mesh, values: np.ndarray) -> dict[int, np.ndarray]:
    return {reg: recover_nodal(mesh, values, mesh.region == reg) for reg in (AIR, CONDUCTOR)}


def centroid_dz(mesh: Mesh, nodal: np.ndarray, elems=None) -> np.ndarray:
    """z-derivative of a bilinear nodal field at element centroids."""
    elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
    geo = ElementGeometry.build(mesh.element_coords()[elems], [[0.0, 0.0]])
    return np.einsum("ei,ei->e", geo.grads[:, 0, :, 1], nodal[mesh.elements[elems]])


@dataclass(frozen=True, eq=False)
class DerivedFields:
    mesh: Mesh
    points: np.ndarray  # (ne, nq, 2) physical Gauss points
    weights: np.ndarray  # (ne, nq) det J * w
    bx: np.ndarray  # (ne, nq)
    divA: np.ndarray  # (ne, nq)
    mu: np.ndarray  # (ne,)

    @classmethod
    def compute(cls, sol: FieldSolution, order: int = 2) -> DerivedFields:
        mesh = sol.mesh
        rule = gauss_rule(order)
        geo = ElementGeometry.build(mesh.element_coords(), rule.points)
        g = geo.grads  # one gradient table for both quantities
        ay = sol.ay[mesh.elements]
        az = sol.az[mesh.elements]
        dy_ay = np.einsum("eqi,ei->eq", g[..., 0], ay)
        dz_ay = np.einsum("eqi,ei->eq", g[..., 1], ay)
        dy_az = np.einsum("eqi,ei->eq", g[..., 0], az)
        dz_az = np.einsum("eqi,ei->eq", g[..., 1], az)
        mu = np.where(mesh.region == CONDUCTOR, sol.material.mu, AIR_MATERIAL.mu)
        return cls(
            mesh, geo.physical_points(), geo.det * rule.weights,
            dy_az - dz_ay, dy_ay + dz_az, mu,
        )

    @cached_property
    def bx_element(self) -> np.ndarray:
        return (self.weights * self.bx).sum(1) / self.weights.sum(1)

    @cached_property
    def divA_element(self) -> np.ndarray:
        return (self.weights * self.divA).sum(1) / self.weights.sum(1)

    @property
    def hx(self) -> np.ndarray:
        return self.bx / self.mu[:, None]

    @cached_property
    def hx_element(self) -> np.ndarray:
        return self.bx_element / self.mu

    @cached_property
    def bx_nodal(self) -> np.ndarray:
        return recover_nodal(self.mesh, self.bx_element)

    @cached_property
    def divA_nodal(self) -> np.ndarray:
        return recover_nodal(self.mesh, self.divA_element)

    @cached_property
    def bx_nodal_air(self) -> np.ndarray:
        """Recovery from air elements only (NaN inside the slab)."""
        return recover_nodal(self.mesh, self.bx_element, self.mesh.region == AIR)

    @cached_property
    def jy(self) -> np.ndarray:
        return current_density_jy(self, self.mesh)

    @cached_property
    def jy_nodal(self) -> np.ndarray:
        return recover_nodal(self.mesh, self.jy)


def curl_x(sol: FieldSolution, elem: int, xi: float, eta: float) -> float:
    """``dA_z/dy - dA_y/dz`` inside one element."""
    conn = sol.mesh.elements[elem]
    g = physical_gradients(sol.mesh.nodes[conn], xi, eta)
    return float(g[:, 0] @ sol.az[conn] - g[:, 1] @ sol.ay[conn])


def div_A(sol: FieldSolution, elem: int, xi: float, eta: float) -> float:
    conn = sol.mesh.elements[elem]
    g = physical_gradients(sol.mesh.nodes[conn], xi, eta)
    return float(g[:, 0] @ sol.ay[conn] + g[:, 1] @ sol.az[conn])


def current_density_jy(derived: DerivedFields, mesh: Mesh, hx_element=None) -> np.ndarray:
    """Element field ``j_y = dh_x/dz`` from region-wise recovered nodal ``h_x``."""
    hx = derived.hx_element if hx_element is None else np.asarray(hx_element, dtype=float)
    out = np.empty(mesh.n_elements)
    for reg in (AIR, CONDUCTOR):
        mask = mesh.region == reg
        if not np.any(mask):
            continue
        nodal = recover_nodal(mesh, hx, mask)
        out[mask] = centroid_dz(mesh, nodal, np.flatnonzero(mask))
    return out


# -- metrics ---------------------------------------------------------------


def _check_domain(mesh: Mesh, ref) -> None:
    lo = mesh.nodes.min(0)
    hi = mesh.nodes.max(0)
    rlo, rhi = ref.bounds
    tol = 1e-9 * max(1.0, float(np.abs(hi - lo).max()))
    if np.any(np.abs(lo - rlo) > tol) or np.any(np.abs(hi - rhi) > tol):
        raise ValueError("reference does not cover the same domain as the solution")


def _ref_peak(ref) -> float:
    peak = float(ref.peak_bx())
    if not peak > 0:
        raise ValueError("reference field is identically zero")
    return peak


def interface_samples(mesh: Mesh) -> np.ndarray:
    return interface_nodes(mesh)


def peak_interface_error(sol: FieldSolution, ref) -> float:
    """Peak error of the air-side ``b_x`` trace on both slab surfaces, in %.

    Air-side values come from air elements only, on both the solution and
    the reference side.
    """
    mesh = sol.mesh
    _check_domain(mesh, ref)
    nodes = interface_samples(mesh)
    y, z = mesh.nodes[nodes, 0], mesh.nodes[nodes, 1]
    computed = sol.derived().bx_nodal_air[nodes]
    if np.any(np.isnan(computed)):
        raise ValueError("interface nodes without adjacent air elements")
    expected = ref.interface_bx(y, z)
    return float(np.abs(computed - expected).max() / _ref_peak(ref) * 100.0)


def peak_divA_pct(sol: FieldSolution, ref) -> float:
    return float(np.abs(sol.derived().divA).max() / _ref_peak(ref) * 100.0)


def air_current_ratio(derived: DerivedFields, mesh: Mesh) -> float:
    jy = derived.jy
    cond = np.abs(jy[mesh.region == CONDUCTOR]).max(initial=0.0)
    if not cond > 0:
        raise ValueError("no conductor current")
    air = np.abs(jy[mesh.region == AIR]).max(initial=0.0)
    return float(air / cond * 100.0)


def default_oscillation_row(mesh: Mesh) -> int:
    """Element row just above the slab mid-plane."""
    j0, j1 = mesh.conductor_rows
    return j0 + (j1 - j0) // 2


def total_variation(v) -> float:
    return float(np.abs(np.diff(np.asarray(v, dtype=float))).sum())


def oscillation_metric(sol: FieldSolution, ref, row: int | None = None) -> float:
    """``TV(b_x) / TV(b_x,ref) - 1`` along one conductor element row, floored at 0.

    ``b_x`` is the element mean, sampled at the centroids of the row; element
    means keep the odd-even wiggles that nodal averaging would cancel.
    """
    mesh = sol.mesh
    row = default_oscillation_row(mesh) if row is None else row
    j0, j1 = mesh.conductor_rows
    if not j0 <= row < j1:
        raise ValueError(f"row {row} is not a conductor row")
    nz = len(mesh.z_lines) - 1
    elems = np.arange(row * nz, (row + 1) * nz)
    cen = mesh.element_coords()[elems].mean(axis=1)
    computed = sol.derived().bx_element[elems]
    expected = ref.bx(cen[:, 0], cen[:, 1])
    tv_ref = total_variation(expected)
    if tv_ref <= 1e-14 * max(float(np.abs(expected).max()), 1e-300):
        raise ValueError("reference is constant along the sample line")
    return max(total_variation(computed) / tv_ref - 1.0, 0.0)


@dataclass(frozen=True, eq=False)
class SolutionReference:
    """A computed solution used as reference.

    Full-recovery nodal ``b_x`` for interior sampling and an air-side
    recovery for interface traces, both bilinearly interpolated on the
    tensor grid.
    """

    solution: FieldSolution

    @cached_property
    def _interps(self):
        from scipy.interpolate import RegularGridInterpolator

        mesh = self.solution.mesh
        d = self.solution.derived()
        grid = (mesh.y_lines, mesh.z_lines)
        full = d.bx_nodal.reshape(mesh.shape)
        air = d.bx_nodal_air
        side = np.where(np.isnan(air), d.bx_nodal, air).reshape(mesh.shape)
        return RegularGridInterpolator(grid, full), RegularGridInterpolator(grid, side)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        nodes = self.solution.mesh.nodes
        return nodes.min(0), nodes.max(0)

    def _eval(self, which, y, z):
        y, z = np.broadcast_arrays(np.asarray(y, float), np.asarray(z, float))
        pts = np.column_stack([y.ravel(), z.ravel()])
        return self._interps[which](pts).reshape(y.shape)

    def bx(self, y, z) -> np.ndarray:
        return self._eval(0, y, z)

    def interface_bx(self, y, z) -> np.ndarray:
        return self._eval(1, y, z)

    def peak_bx(self) -> float:
        return float(np.abs(self.solution.derived().bx).max())


# -- reports and files -----------------------------------------------------


@dataclass
class CaseReport:
    pe: float
    scheme: str
    alpha: float
    peak_bx_ref: float
    peak_interface_error_pct: float
    peak_divA_pct: float
    air_current_ratio_pct: float
    oscillation_metric: float
    condition_estimate: float = math.nan
    wall_time: float = 0.0
    status: str = "ok"

    def __post_init__(self):
        for name in ("peak_interface_error_pct", "peak_divA_pct", "air_current_ratio_pct"):
            v = getattr(self, name)
            if v < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def failed(cls, pe: float, scheme: str, alpha: float, message: str) -> CaseReport:
        nan = math.nan
        return cls(pe, scheme, alpha, nan, nan, nan, nan, nan, nan, 0.0, f"failed: {message}")

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self, timing: bool = True) -> dict:
        out = asdict(self)
        if not timing:
            out["wall_time"] = 0.0
        return out


def format_value(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_report_csv(reports, path: str | Path, timing: bool = True) -> None:
    """One row per report; columns as in ``CaseReport.columns()``."""
    cols = CaseReport.columns()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in reports:
            row = r.row(timing)
            w.writerow([format_value(row[c]) for c in cols])


FIELD_COLUMNS = ("y", "z", "region", "Ay", "Az", "phi", "bx", "divA", "jy")


def node_region(mesh: Mesh) -> np.ndarray:
    """Per-node label: conductor for nodes touching a conductor element."""
    reg = np.full(mesh.n_nodes, AIR, dtype=np.int8)
    reg[mesh.conductor_nodes()] = CONDUCTOR
    return reg


def write_field_csv(sol: FieldSolution, path: str | Path) -> None:
    """Nodal field dump, columns ``y,z,region,Ay,Az,phi,bx,divA,jy``."""
    mesh = sol.mesh
    d = sol.derived()
    names = {AIR: "air", CONDUCTOR: "conductor"}
    reg = node_region(mesh)
    cols = (d.bx_nodal, d.divA_nodal, d.jy_nodal)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_COLUMNS)
        for k in range(mesh.n_nodes):
            y, z = mesh.nodes[k]
            w.writerow([
                format_value(float(y)), format_value(float(z)), names[int(reg[k])],
                format_value(float(sol.ay[k])), format_value(float(sol.az[k])),
                "" if np.isnan(sol.phi[k]) else format_value(float(sol.phi[k])),
                format_value(float(cols[0][k])), format_value(float(cols[1][k])), format_value(float(cols[2][k])),
            ])


def write_vtk(sol: FieldSolution, path: str | Path) -> None:
    """Legacy ASCII VTK structured grid with nodal point data (x = 0 plane)."""
    mesh = sol.mesh
    d = sol.derived()
    ny1, nz1 = mesh.shape
    # VTK's fastest index is i: put z first so the node order matches
    lines = [
        "# vtk DataFile Version 3.0",
        "moving conductor fields",
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {nz1} {ny1} 1",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"0 {y:.17g} {z:.17g}" for y, z in mesh.nodes]
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    phi = np.nan_to_num(sol.phi, nan=0.0)
    for name, vals in (
        ("Ay", sol.ay), ("Az", sol.az), ("phi", phi), ("bx", d.bx_nodal),
        ("divA", d.divA_nodal), ("jy", d.jy_nodal), ("region", node_region(mesh)),
    ):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [f"{float(v):.17g}" for v in vals]
    Path(path).write_text("\n".join(lines) + "\n")
