"""Reference reaction fields.

Two kinds of reference are provided.

``ModalReference`` solves the reduced field problem directly. With no
current in air, ``h_x`` is uniform there; inside the slab the reaction field
obeys

    -lap(b) + kappa db/dz = -kappa dB_x/dz,        kappa = mu sigma u_z,

with ``b`` equal to the air value ``c`` on the whole slab boundary and
``c`` fixed by zero total flux (``A = 0`` on the outer rectangle). The slab
part is expanded in even y-modes ``cos(k_m y)``, each mode being a 1D
two-point problem solved by central differences on a grid fine enough to
resolve the ``1/kappa`` outflow layer.

``GalerkinReference`` is a fine-mesh Galerkin solution, practical only at
small element Peclet numbers.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded

from .mesh import Discretization, SlabGeometry, build_slab_mesh, structured_mesh
from .postproc import SolutionReference
from .schemes import Material, SchemeConfig, SourceField, Scheme

DEFAULT_ELEMENT_CAP = 2_000_000


class ReferenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ModalReference:
    geometry: SlabGeometry
    kappa: float
    z: np.ndarray  # storage grid
    k: np.ndarray  # (M,) mode wavenumbers
    coeff: np.ndarray  # (M, nz) mode amplitudes on the storage grid
    air_value: float

    def bx(self, y, z) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        y, z = np.broadcast_arrays(y, z)
        out = np.full(y.shape, self.air_value)
        half = 0.5 * self.geometry.d
        inside = np.abs(y) < half
        if np.any(inside):
            yi, zi = y[inside], z[inside]
            pos = np.interp(zi, self.z, np.arange(len(self.z)))
            i0 = np.clip(pos.astype(np.int64), 0, len(self.z) - 2)
            t = pos - i0
            amp = self.coeff[:, i0] * (1.0 - t) + self.coeff[:, i0 + 1] * t  # (M, n)
            out[inside] += np.einsum("mn,mn->n", amp, np.cos(np.outer(self.k, yi)))
        return out

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.geometry
        return (
            np.array([-g.half_height, -g.half_length]),
            np.array([g.half_height, g.half_length]),
        )

    def interface_bx(self, y, z) -> np.ndarray:
        """Air-side trace on the slab surfaces: the uniform air value."""
        y, _ = np.broadcast_arrays(np.asarray(y, float), np.asarray(z, float))
        return np.full(y.shape, self.air_value)

    def peak_bx(self, ny: int = 161) -> float:
        half = 0.5 * self.geometry.d
        y = np.linspace(-half, half, ny)[1:-1]
        modes = np.cos(np.outer(self.k, y))  # (M, ny)
        vals = self.air_value + self.coeff.T @ modes  # (nz, ny)
        return float(max(np.abs(vals).max(), abs(self.air_value)))


def _mode_operator(h: float, kappa: float, k: float, n: int) -> np.ndarray:
    """Banded central-difference matrix of -f'' + kappa f' + k^2 f (interior)."""
    ab = np.empty((3, n))
    ab[0, :] = -1.0 / h**2 + kappa / (2 * h)  # super-diagonal
    ab[1, :] = 2.0 / h**2 + k**2
    ab[2, :] = -1.0 / h**2 - kappa / (2 * h)  # sub-diagonal
    return ab


def modal_reference(
    geometry: SlabGeometry,
    material: Material,
    source: SourceField,
    u_z: float,
    n_modes: int = 800,
    n_store: int = 8001,
    cells_per_layer: float = 2.0,
) -> ModalReference:
    """Semi-analytic reference for the slab at velocity ``u_z``.

    The 1D grid spacing is ``min(1/(cells_per_layer * kappa), L/2000)``.
    """
    d, L, H = geometry.d, geometry.half_length, geometry.half_height
    kappa = material.mu * material.sigma * abs(u_z)
    sign = math.copysign(1.0, u_z) if u_z else 1.0
    h_target = min(1.0 / (cells_per_layer * max(kappa, 1e-300)), L / 2000.0)
    stride = max(1, math.ceil(2 * L / (n_store - 1) / h_target))
    nfine = (n_store - 1) * stride + 1
    zf = np.linspace(-L, L, nfine)
    h = zf[1] - zf[0]
    # cell-difference derivative; a jump in B_x becomes a one-cell pulse
    zmid = 0.5 * (zf[1:] + zf[:-1])
    dB = np.diff(source(zmid)) / h

    m = np.arange(n_modes)
    k = (2 * m + 1) * np.pi / d
    g = 4.0 / ((2 * m + 1) * np.pi) * (-1.0) ** m
    coeff = np.empty((n_modes, n_store))
    flux = 0.0
    for i in range(n_modes):
        ab = _mode_operator(h, sign * kappa, k[i], nfine - 2)
        beta = np.zeros(nfine)
        beta[1:-1] = solve_banded((1, 1), ab, -sign * kappa * g[i] * dB)
        coeff[i] = beta[::stride]
        # int over the slab of cos(k y) is 2 sin(k d/2)/k
        flux += trapezoid(beta, zf) * 2.0 * (-1.0) ** i / k[i]
    air_value = -flux / (4.0 * L * H)
    return ModalReference(geometry, kappa, zf[::stride].copy(), k, coeff, air_value)


class GalerkinReference(SolutionReference):
    """Fine-mesh Galerkin solution evaluated through nodal recovery."""


def reference_refinement(pe: float, max_element_pe: float = 0.5) -> int:
    """z-refinement factor bringing the element Peclet number to the target."""
    if pe <= max_element_pe:
        return 1
    return math.ceil(pe / max_element_pe - 1e-12)


def galerkin_reference(
    geometry: SlabGeometry,
    disc: Discretization,
    material: Material,
    source: SourceField,
    u_z: float,
    y_factor: int = 4,
    max_element_pe: float = 0.5,
    element_cap: int = DEFAULT_ELEMENT_CAP,
) -> GalerkinReference:
    from .solve import solve_case

    mesh0 = build_slab_mesh(geometry, disc)
    pe0 = float(material.mu * material.sigma * abs(u_z) * mesh0.dlz.max() / 2.0)
    rz = reference_refinement(pe0, max_element_pe)
    ry = y_factor if rz > 1 else 1
    fine = Discretization(
        nz=disc.nz * rz,
        ny_conductor=disc.ny_conductor * ry,
        ny_air=disc.ny_air * ry,
        grading_ratio=disc.grading_ratio ** (1.0 / ry),
        conductor_grading=disc.conductor_grading ** (1.0 / ry),
    )
    if fine.n_elements > element_cap:
        raise ReferenceError(
            f"Galerkin reference needs {fine.n_elements} elements (cap {element_cap})"
        )
    mesh = build_slab_mesh(geometry, fine)
    cfg = SchemeConfig(scheme=Scheme.GALERKIN, u_z=u_z)
    return GalerkinReference(solve_case(mesh, material, cfg, source))


# -- disk cache ------------------------------------------------------------


def cache_key(**parts) -> str:
    def norm(v):
        if hasattr(v, "__dataclass_fields__"):
            return {k: norm(x) for k, x in asdict(v).items()}
        if isinstance(v, float):
            return repr(v)
        return v if isinstance(v, (int, str, type(None))) else str(v)

    blob = json.dumps({k: norm(v) for k, v in sorted(parts.items())}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def cached_modal_reference(
    cache_dir: str | Path | None,
    geometry: SlabGeometry,
    material: Material,
    source: SourceField,
    u_z: float,
    n_modes: int = 800,
    n_store: int = 8001,
    generate: bool = True,
) -> ModalReference:
    """``modal_reference`` backed by an ``.npz`` cache keyed on all inputs."""
    if cache_dir is None:
        if not generate:
            raise ReferenceError("no reference cache and generation disabled")
        return modal_reference(geometry, material, source, u_z, n_modes, n_store)
    key = cache_key(
        kind="modal", geometry=geometry, material=material, source=source,
        u_z=u_z, n_modes=n_modes, n_store=n_store,
    )
    path = Path(cache_dir) / f"ref-{key}.npz"
    if path.exists():
        with np.load(path) as data:
            return ModalReference(
                geometry, float(data["kappa"]), data["z"], data["k"], data["coeff"],
                float(data["air_value"]),
            )
    if not generate:
        raise ReferenceError(f"reference {path.name} missing and generation disabled")
    ref = modal_reference(geometry, material, source, u_z, n_modes, n_store)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, kappa=ref.kappa, z=ref.z, k=ref.k, coeff=ref.coeff, air_value=ref.air_value)
    tmp.replace(path)
    return ref


def cached_galerkin_reference(
    cache_dir: str | Path | None,
    geometry: SlabGeometry,
    disc: Discretization,
    material: Material,
    source: SourceField,
    u_z: float,
    y_factor: int = 4,
    max_element_pe: float = 0.5,
    element_cap: int = DEFAULT_ELEMENT_CAP,
    generate: bool = True,
) -> GalerkinReference:
    """``galerkin_reference`` backed by an ``.npz`` cache of the fine solution."""
    from .postproc import FieldSolution

    args = (geometry, disc, material, source, u_z, y_factor, max_element_pe, element_cap)
    if cache_dir is None:
        if not generate:
            raise ReferenceError("no reference cache and generation disabled")
        return galerkin_reference(*args)
    key = cache_key(
        kind="galerkin", geometry=geometry, disc=disc, material=material, source=source,
        u_z=u_z, y_factor=y_factor, max_element_pe=max_element_pe,
    )
    path = Path(cache_dir) / f"ref-{key}.npz"
    if path.exists():
        with np.load(path) as data:
            mesh = structured_mesh(
                data["y_lines"], data["z_lines"], tuple(int(j) for j in data["rows"]),
                geometry=geometry,
            )
            sol = FieldSolution(
                mesh, data["ay"], data["az"], data["phi"],
                SchemeConfig(scheme=Scheme.GALERKIN, u_z=u_z), material,
            )
        return GalerkinReference(sol)
    if not generate:
        raise ReferenceError(f"reference {path.name} missing and generation disabled")
    ref = galerkin_reference(*args)
    sol = ref.solution
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(
        tmp, y_lines=sol.mesh.y_lines, z_lines=sol.mesh.z_lines,
        rows=np.array(sol.mesh.conductor_rows), ay=sol.ay, az=sol.az, phi=sol.phi,
    )
    tmp.replace(path)
    return ref
