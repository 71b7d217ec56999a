"""Global system assembly for the 2D moving-conductor problem.

Unknowns per node are the in-plane vector potential ``(A_y, A_z)``; the
scalar potential ``phi`` lives on conductor nodes only. The conductor moves
with constant velocity ``u_z`` through an applied field ``B_x(z)``.

Three weak forms are available:

* ``GALERKIN``: component Laplacian for the magnetic term, Galerkin weights.
* ``SUPG_GAUGED``: the same Laplacian form with streamline-upwind weights on
  the first-derivative and source terms.
* ``SUPG_GAUGE_FREE``: curl-curl magnetic term (the gauge is not assumed),
  upwind weights as above, plus ``alpha`` times a grad-div term.

Local DOF order within an element is ``(A_y x 4, A_z x 4, phi x 4)``.
Global order is ``[A_y(all nodes), A_z(all nodes), phi(conductor nodes)]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fem import ElementGeometry, gauss_rule, shape_bilinear
from .mesh import CONDUCTOR, Mesh

MU0 = 4e-7 * math.pi

_TAU_SERIES_CUTOFF = 1e-3


@dataclass(frozen=True)
class Material:
    sigma: float = 7.21e6
    mu_r: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("conductivity must be non-negative")
        if not self.mu_r > 0:
            raise ValueError("relative permeability must be positive")

    @property
    def mu(self) -> float:
        return self.mu_r * MU0

    @property
    def nu(self) -> float:
        return 1.0 / self.mu


AIR_MATERIAL = Material(sigma=0.0, mu_r=1.0)


class Profile(str, enum.Enum):
    RECTANGULAR = "rectangular"
    COSINE = "cosine"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class SourceField:
    """Applied field ``B_x(z)``.

    ``cosine`` is ``B0 cos^2(pi (z - z0) / (2 w))`` on ``|z - z0| <= w``;
    ``gaussian`` is ``B0 exp(-((z - z0) / w)^2)`` truncated at ``4 w``.
    """

    kind: Profile = Profile.COSINE
    amplitude: float = 1.0
    halfwidth: float = 0.5
    center: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Profile(self.kind))
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        if not self.halfwidth > 0:
            raise ValueError("halfwidth must be positive")

    @property
    def support(self) -> float:
        """Half-width of the footprint outside of which B_x vanishes."""
        return 4.0 * self.halfwidth if self.kind is Profile.GAUSSIAN else self.halfwidth

    def __call__(self, z) -> np.ndarray:
        s = (np.asarray(z, dtype=float) - self.center) / self.halfwidth
        inside = np.abs(s) <= (4.0 if self.kind is Profile.GAUSSIAN else 1.0)
        if self.kind is Profile.RECTANGULAR:
            val = np.ones_like(s)
        elif self.kind is Profile.COSINE:
            val = np.cos(0.5 * np.pi * s) ** 2
        else:
            val = np.exp(-(s**2))
        return np.where(inside, self.amplitude * val, 0.0)

    def derivative(self, z) -> np.ndarray:
        s = (np.asarray(z, dtype=float) - self.center) / self.halfwidth
        if self.kind is Profile.RECTANGULAR:
            raise ValueError("rectangular profile has no pointwise derivative")
        if self.kind is Profile.COSINE:
            val = -0.5 * np.pi * np.sin(np.pi * s) / self.halfwidth
            return np.where(np.abs(s) <= 1.0, self.amplitude * val, 0.0)
        val = -2.0 * s * np.exp(-(s**2)) / self.halfwidth
        return np.where(np.abs(s) <= 4.0, self.amplitude * val, 0.0)


class Scheme(str, enum.Enum):
    GALERKIN = "galerkin"
    SUPG_GAUGED = "supg-gauged"
    SUPG_GAUGE_FREE = "supg-gauge-free"

    @property
    def gauge_free(self) -> bool:
        return self is Scheme.SUPG_GAUGE_FREE

    @property
    def upwinded(self) -> bool:
        return self is not Scheme.GALERKIN


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selection.

    ``alpha_with_mu`` scales the grad-div term by ``1/mu`` like the
    curl-curl term, so that ``alpha = 1`` reproduces the Laplacian form.
    """

    scheme: Scheme = Scheme.SUPG_GAUGE_FREE
    alpha: float = 0.0
    u_z: float = 0.0
    override_tau: float | None = None
    alpha_with_mu: bool = True
    quad_order: int = 2

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.alpha and not self.scheme.gauge_free:
            raise ValueError("alpha applies to the gauge-free scheme only")
        if not math.isfinite(self.u_z):
            raise ValueError("velocity must be finite")

    def with_velocity(self, u_z: float) -> SchemeConfig:
        return replace(self, u_z=u_z)


# -- stabilization ---------------------------------------------------------


def peclet_element(sigma: float, mu: float, u_z: float, dlz) -> np.ndarray | float:
    """Element Peclet number ``mu sigma |u| dl / 2``."""
    return mu * sigma * abs(u_z) * np.asarray(dlz) / 2.0


def velocity_for_peclet(pe: float, material: Material, dlz: float) -> float:
    """Velocity giving element Peclet number ``pe`` for z-length ``dlz``."""
    if material.sigma == 0:
        raise ValueError("Peclet number cannot be set in a non-conductor")
    return 2.0 * pe / (material.mu * material.sigma * dlz)


def tau(pe):
    """Optimal upwind parameter ``coth(Pe) - 1/Pe`` for ``Pe >= 0``.

    A two-term series is used below ``Pe = 1e-3``.
    """
    pe = np.abs(np.asarray(pe, dtype=float))
    small = pe < _TAU_SERIES_CUTOFF
    safe = np.where(small, 1.0, pe)
    # coth(x) - 1/x written with tanh to stay finite for large x
    exact = 1.0 / np.tanh(safe) - 1.0 / safe
    series = pe / 3.0 - pe**3 / 45.0
    out = np.where(small, series, exact)
    return out if out.ndim else float(out)


def supg_weight_gradient_coefficient(dlz, u_z: float, tau_value) -> np.ndarray | float:
    """Coefficient ``c`` in ``N_s = N_g + c dN_g/dz``."""
    if u_z == 0:
        return np.zeros_like(np.asarray(dlz, dtype=float)) * 0.0
    return np.asarray(tau_value) * np.asarray(dlz) / 2.0 * math.copysign(1.0, u_z)


# -- DOF bookkeeping -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DofMap:
    n_nodes: int
    phi_index: np.ndarray  # node -> phi number, -1 outside the conductor
    ground_node: int

    @classmethod
    def for_mesh(cls, mesh: Mesh) -> DofMap:
        cond = mesh.conductor_nodes()
        if len(cond) == 0:
            raise ValueError("mesh has no conductor nodes")
        phi = np.full(mesh.n_nodes, -1, dtype=np.int64)
        phi[cond] = np.arange(len(cond))
        iface = [n for n in mesh.interface if phi[n] >= 0]
        ground = int(iface[0]) if iface else int(cond[0])
        return cls(mesh.n_nodes, phi, ground)

    @property
    def n_phi(self) -> int:
        return int(np.count_nonzero(self.phi_index >= 0))

    @property
    def size(self) -> int:
        return 2 * self.n_nodes + self.n_phi

    def ay(self, nodes) -> np.ndarray:
        return np.asarray(nodes, dtype=np.int64)

    def az(self, nodes) -> np.ndarray:
        return self.n_nodes + np.asarray(nodes, dtype=np.int64)

    def phi(self, nodes) -> np.ndarray:
        p = self.phi_index[np.asarray(nodes, dtype=np.int64)]
        if np.any(p < 0):
            raise KeyError("scalar potential requested on a non-conductor node")
        return 2 * self.n_nodes + p

    def element_dofs(self, elements: np.ndarray) -> np.ndarray:
        """``(ne, 12)`` global indices; phi slots are -1 where undefined."""
        phi = self.phi_index[elements]
        phi = np.where(phi >= 0, 2 * self.n_nodes + phi, -1)
        return np.concatenate([elements, self.n_nodes + elements, phi], axis=1)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nodal ``(A_y, A_z, phi)``; phi is NaN outside the conductor."""
        n = self.n_nodes
        phi = np.full(n, np.nan)
        mask = self.phi_index >= 0
        phi[mask] = x[2 * n + self.phi_index[mask]]
        return x[:n].copy(), x[n : 2 * n].copy(), phi


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    constrained: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        n = self.dofmap.size
        if self.matrix.shape != (n, n) or self.rhs.shape != (n,):
            raise ValueError("system dimensions do not match the DOF map")


# -- element integrals -----------------------------------------------------


@dataclass(frozen=True)
class _Blocks:
    """Per-element 4x4 integrals, test index first."""

    yy: np.ndarray  # int dNi/dy dNj/dy
    zz: np.ndarray
    yz: np.ndarray  # int dNi/dy dNj/dz
    zy: np.ndarray
    sy: np.ndarray  # int Nsi dNj/dy
    sz: np.ndarray
    src_s: np.ndarray  # int Nsi B
    src_y: np.ndarray  # int dNi/dy B


def _element_blocks(coords, cs, source, order) -> _Blocks:
    rule = gauss_rule(order)
    geo = ElementGeometry.build(coords, rule.points)
    w = geo.det * rule.weights  # (ne, nq)
    g = geo.grads
    gy, gz = g[..., 0], g[..., 1]
    n = shape_bilinear(rule.points[:, 0], rule.points[:, 1])  # (nq, 4)
    ns = n[None] + np.asarray(cs)[:, None, None] * gz  # (ne, nq, 4)
    if source is None:
        b = np.zeros_like(w)
    else:
        b = source(geo.physical_points()[..., 1])

    def mass(a, c):
        return np.einsum("eq,eqi,eqj->eij", w, a, c)

    return _Blocks(
        yy=mass(gy, gy),
        zz=mass(gz, gz),
        yz=mass(gy, gz),
        zy=mass(gz, gy),
        sy=mass(ns, gy),
        sz=mass(ns, gz),
        src_s=np.einsum("eq,eqi,eq->ei", w, ns, b),
        src_y=np.einsum("eq,eqi,eq->ei", w, gy, b),
    )


def element_tau(mesh_dlz, material: Material, config: SchemeConfig):
    if config.override_tau is not None:
        return np.full_like(np.asarray(mesh_dlz, dtype=float), config.override_tau)
    return tau(peclet_element(material.sigma, material.mu, config.u_z, mesh_dlz))


def local_matrices(
    coords,
    material: Material,
    config: SchemeConfig,
    source: Callable | None,
    dlz=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Element matrices ``(ne, 12, 12)`` and load vectors ``(ne, 12)``.

    ``coords`` is ``(ne, 4, 2)`` (or a single ``(4, 2)`` element). With
    ``sigma == 0`` the phi rows and columns are identically zero.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 2:
        coords = coords[None]
    ne = len(coords)
    if dlz is None:
        dlz = coords[:, 3, 1] - coords[:, 0, 1]
    dlz = np.broadcast_to(np.asarray(dlz, dtype=float), (ne,))

    conducting = material.sigma > 0
    if config.scheme.upwinded and conducting:
        cs = supg_weight_gradient_coefficient(dlz, config.u_z, element_tau(dlz, material, config))
    else:
        cs = np.zeros(ne)
    blk = _element_blocks(coords, cs, source if conducting else None, config.quad_order)

    nu = material.nu
    sig, u = material.sigma, config.u_z
    a_scale = config.alpha * (nu if config.alpha_with_mu else 1.0)

    K = np.zeros((ne, 12, 12))
    Y, Z, P = slice(0, 4), slice(4, 8), slice(8, 12)
    if config.scheme.gauge_free:
        K[:, Y, Y] = nu * blk.zz
        K[:, Y, Z] = -nu * blk.zy
        K[:, Z, Y] = -nu * blk.yz
        K[:, Z, Z] = nu * blk.yy
        if a_scale:
            K[:, Y, Y] += a_scale * blk.yy
            K[:, Y, Z] += a_scale * blk.yz
            K[:, Z, Y] += a_scale * blk.zy
            K[:, Z, Z] += a_scale * blk.zz
    else:
        lap = nu * (blk.yy + blk.zz)
        K[:, Y, Y] = lap
        K[:, Z, Z] = lap

    f = np.zeros((ne, 12))
    if conducting:
        # convection -sigma u x curl A, A_y row only
        K[:, Y, Y] += sig * u * blk.sz
        K[:, Y, Z] -= sig * u * blk.sy
        K[:, Y, P] = sig * blk.sy
        K[:, Z, P] = sig * blk.sz
        # current continuity, Galerkin weights
        K[:, P, Y] = sig * u * blk.yz
        K[:, P, Z] = -sig * u * blk.yy
        K[:, P, P] = sig * (blk.yy + blk.zz)
        f[:, Y] = sig * u * blk.src_s
        f[:, P] = sig * u * blk.src_y
    return K, f


# -- global assembly -------------------------------------------------------


def _scatter(mesh: Mesh, dofmap: DofMap, K: np.ndarray, f: np.ndarray, elems: np.ndarray):
    dofs = dofmap.element_dofs(mesh.elements[elems])
    rows = np.broadcast_to(dofs[:, :, None], K.shape)
    cols = np.broadcast_to(dofs[:, None, :], K.shape)
    keep = (rows >= 0) & (cols >= 0)
    fkeep = dofs >= 0
    return rows[keep], cols[keep], K[keep], dofs[fkeep], f[fkeep]


def assemble_raw(
    mesh: Mesh,
    material: Material,
    config: SchemeConfig,
    source: Callable | None,
    air: Material = AIR_MATERIAL,
) -> SparseSystem:
    """Assembled system before any boundary condition or grounding."""
    dofmap = DofMap.for_mesh(mesh)
    coords = mesh.element_coords()
    parts = []
    for mat, mask in ((material, mesh.region == CONDUCTOR), (air, mesh.region != CONDUCTOR)):
        elems = np.flatnonzero(mask)
        if len(elems) == 0:
            continue
        K, f = local_matrices(coords[elems], mat, config, source, mesh.dlz[elems])
        parts.append(_scatter(mesh, dofmap, K, f, elems))
    r = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    v = np.concatenate([p[2] for p in parts])
    n = dofmap.size
    A = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    rhs = np.zeros(n)
    for p in parts:
        np.add.at(rhs, p[3], p[4])
    return SparseSystem(A, rhs, dofmap)


def body_load(
    mesh: Mesh,
    material: Material,
    config: SchemeConfig,
    f_ay: Callable | None = None,
    f_az: Callable | None = None,
    f_phi: Callable | None = None,
) -> np.ndarray:
    """Load vector of volume forcings ``f(y, z)`` for each equation.

    The A-equation forcings use the same (upwind-modified) weights as the
    applied-field source; the phi forcing uses Galerkin weights. Forcings
    act only inside the conductor, except the A forcings which are applied
    everywhere.
    """
    dofmap = DofMap.for_mesh(mesh)
    rule = gauss_rule(config.quad_order)
    geo = ElementGeometry.build(mesh.element_coords(), rule.points)
    w = geo.det * rule.weights
    pts = geo.physical_points()
    yq, zq = pts[..., 0], pts[..., 1]
    n = shape_bilinear(rule.points[:, 0], rule.points[:, 1])
    cond = mesh.region == CONDUCTOR
    cs = np.zeros(mesh.n_elements)
    if config.scheme.upwinded and material.sigma > 0:
        cs[cond] = supg_weight_gradient_coefficient(
            mesh.dlz[cond], config.u_z, element_tau(mesh.dlz[cond], material, config)
        )
    ns = n[None] + cs[:, None, None] * geo.grads[..., 1]
    loc = np.zeros((mesh.n_elements, 12))
    if f_ay is not None:
        loc[:, 0:4] = np.einsum("eq,eqi,eq->ei", w, ns, f_ay(yq, zq))
    if f_az is not None:
        loc[:, 4:8] = np.einsum("eq,eqi,eq->ei", w, ns, f_az(yq, zq))
    if f_phi is not None:
        loc[cond, 8:12] = np.einsum("eq,qi,eq->ei", w[cond], n, f_phi(yq[cond], zq[cond]))
    dofs = dofmap.element_dofs(mesh.elements)
    keep = dofs >= 0
    out = np.zeros(dofmap.size)
    np.add.at(out, dofs[keep], loc[keep])
    return out


def apply_dirichlet(system: SparseSystem, dofs, values=0.0) -> SparseSystem:
    """Replace constrained rows by identity rows with the given values."""
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    n = system.dofmap.size
    if dofs.size and (dofs.min() < 0 or dofs.max() >= n):
        raise KeyError("unknown degree of freedom in Dirichlet set")
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    keep = np.ones(n)
    keep[dofs] = 0.0
    fixed = 1.0 - keep
    A = sp.diags(keep) @ system.matrix + sp.diags(fixed)
    A = sp.csr_matrix(A)
    A.eliminate_zeros()
    A.sort_indices()
    rhs = system.rhs * keep
    rhs[dofs] = values
    constrained = np.union1d(system.constrained, dofs)
    return SparseSystem(A, rhs, system.dofmap, constrained)


def boundary_dofs(mesh: Mesh, dofmap: DofMap) -> np.ndarray:
    b = mesh.boundary
    return np.concatenate([dofmap.ay(b), dofmap.az(b)])


def assemble(
    mesh: Mesh,
    material: Material,
    config: SchemeConfig,
    source: Callable | None,
    air: Material = AIR_MATERIAL,
) -> SparseSystem:
    """System with ``A = 0`` on the outer boundary and one phi node grounded."""
    system = assemble_raw(mesh, material, config, source, air)
    dm = system.dofmap
    fixed = np.concatenate([boundary_dofs(mesh, dm), dm.phi([dm.ground_node])])
    return apply_dirichlet(system, fixed, 0.0)
