"""Manufactured solutions on an all-conductor rectangle.

Forcings are derived symbolically from the strong form of each scheme and
A, phi are prescribed on the whole outer boundary, so no boundary terms
enter the retained rows.
"""

import numpy as np
import pytest
import sympy as sp_
from hypothesis import given, settings
from hypothesis import strategies as st

from movcond.fem import ElementGeometry, gauss_rule, shape_bilinear
from movcond.mesh import structured_mesh
from movcond.schemes import (
    MU0,
    DofMap,
    Material,
    Scheme,
    SchemeConfig,
    SparseSystem,
    apply_dirichlet,
    assemble_raw,
    body_load,
)
from movcond.solve import solve_system

y, z = sp_.symbols("y z")
# mu sigma = 1, so the element Peclet number is u h / 2
MAT = Material(sigma=1.0 / MU0, mu_r=1.0)


def strong_forcings(ay, az, phi, material, config, B):
    nu, sig, u, a = material.nu, material.sigma, config.u_z, config.alpha * material.nu
    bx = sp_.diff(az, y) - sp_.diff(ay, z)
    div = sp_.diff(ay, y) + sp_.diff(az, z)
    if config.scheme.gauge_free:
        dy = sp_.diff(nu * bx, z) - sp_.diff(a * div, y)
        dz = -sp_.diff(nu * bx, y) - sp_.diff(a * div, z)
    else:
        dy = -nu * (sp_.diff(ay, y, 2) + sp_.diff(ay, z, 2))
        dz = -nu * (sp_.diff(az, y, 2) + sp_.diff(az, z, 2))
    f_ay = dy - sig * u * bx + sig * sp_.diff(phi, y) - sig * u * B
    f_az = dz + sig * sp_.diff(phi, z)
    f_phi = -sp_.diff(-sig * u * bx - sig * u * B, y) - sig * (
        sp_.diff(phi, y, 2) + sp_.diff(phi, z, 2)
    )
    return [_vectorize(f) for f in (f_ay, f_az, f_phi)]


def _vectorize(expr):
    f = sp_.lambdify((y, z), expr, "numpy")
    return lambda Y, Z: np.broadcast_to(np.asarray(f(Y, Z), dtype=float), np.shape(Y)) + 0.0


def manufactured_solve(mesh, config, exact, B_expr=sp_.Integer(0)):
    ay, az, phi = exact
    f_ay, f_az, f_phi = strong_forcings(ay, az, phi, MAT, config, B_expr)
    Bf = _vectorize(B_expr)
    source = lambda Zq: Bf(np.zeros_like(Zq), Zq)  # noqa: E731
    raw = assemble_raw(mesh, MAT, config, source)
    rhs = raw.rhs + body_load(mesh, MAT, config, f_ay, f_az, f_phi)
    system = SparseSystem(raw.matrix, rhs, raw.dofmap)
    dm = system.dofmap
    b = mesh.boundary
    Y, Z = mesh.nodes[b, 0], mesh.nodes[b, 1]
    ev = [_vectorize(e) for e in exact]
    dofs = np.concatenate([dm.ay(b), dm.az(b), dm.phi(b)])
    vals = np.concatenate([ev[0](Y, Z), ev[1](Y, Z), ev[2](Y, Z)])
    solved = solve_system(apply_dirichlet(system, dofs, vals))
    return dm.split(solved.x), ev


def l2_errors(mesh, fields, exact_fns, order=4):
    rule = gauss_rule(order)
    geo = ElementGeometry.build(mesh.element_coords(), rule.points)
    w = geo.det * rule.weights
    pts = geo.physical_points()
    N = shape_bilinear(rule.points[:, 0], rule.points[:, 1])
    out = []
    for vals, fn in zip(fields, exact_fns):
        uh = vals[mesh.elements] @ N.T
        e = uh - fn(pts[..., 0], pts[..., 1])
        out.append(float(np.sqrt(np.sum(w * e**2))))
    return out


def uniform(n, m=None, length=1.0):
    m = m or n
    return structured_mesh(np.linspace(0, length, m + 1), np.linspace(0, length, n + 1))


BILINEAR = (
    0.3 + 0.7 * y - 0.4 * z + 1.1 * y * z,
    -0.2 + 0.5 * y + 0.9 * z - 0.6 * y * z,
    0.1 - 0.8 * y + 0.3 * z + 0.5 * y * z,
)

EXACT_CONFIGS = [
    SchemeConfig(Scheme.GALERKIN, u_z=1.3),
    SchemeConfig(Scheme.SUPG_GAUGED, u_z=40.0),
    SchemeConfig(Scheme.SUPG_GAUGE_FREE, u_z=0.7, override_tau=0.0),
    SchemeConfig(Scheme.SUPG_GAUGE_FREE, alpha=0.3, u_z=0.7, override_tau=0.0),
]


@pytest.mark.parametrize("config", EXACT_CONFIGS, ids=lambda c: f"{c.scheme.value}-a{c.alpha}")
def test_bilinear_solution_reproduced_exactly(config):
    mesh = structured_mesh([0, 0.2, 0.5, 1.1], [0, 0.3, 0.4, 0.9, 1.5])
    (ay, az, phi), ev = manufactured_solve(mesh, config, BILINEAR, B_expr=0.4 - 0.7 * z)
    Y, Z = mesh.nodes[:, 0], mesh.nodes[:, 1]
    for got, fn in zip((ay, az, phi), ev):
        np.testing.assert_allclose(got, fn(Y, Z), rtol=0, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(0.05, 1.0), min_size=1, max_size=5),
    st.lists(st.floats(0.05, 1.0), min_size=1, max_size=6),
)
def test_bilinear_exact_on_random_grids(hy, hz):
    mesh = structured_mesh(np.concatenate([[0.0], np.cumsum(hy)]), np.concatenate([[0.0], np.cumsum(hz)]))
    config = SchemeConfig(Scheme.GALERKIN, u_z=0.9)
    (ay, az, phi), ev = manufactured_solve(mesh, config, BILINEAR)
    Y, Z = mesh.nodes[:, 0], mesh.nodes[:, 1]
    for got, fn in zip((ay, az, phi), ev):
        np.testing.assert_allclose(got, fn(Y, Z), rtol=0, atol=1e-10)


SMOOTH = (
    sp_.sin(sp_.pi * y) * sp_.cos(sp_.pi * z),
    sp_.exp(y - z) * sp_.sin(2 * z),
    sp_.cos(sp_.pi * y) * sp_.sin(sp_.pi * z) + y * z,
)


def test_smooth_solution_second_order_in_l2():
    config = SchemeConfig(Scheme.GALERKIN, u_z=1.5)
    errs = []
    for n in (8, 16, 32):
        mesh = uniform(n)
        assert 0.5 * 1.5 / n < 1.0  # element Peclet number below one
        fields, ev = manufactured_solve(mesh, config, SMOOTH, B_expr=sp_.cos(z))
        errs.append(l2_errors(mesh, fields, ev))
    errs = np.array(errs)
    rates = np.log2(errs[:-1] / errs[1:])
    assert np.all(rates > 1.8), rates
    assert np.all(errs[-1] < 2e-3)


def test_smooth_gauge_free_second_order_in_l2():
    config = SchemeConfig(Scheme.SUPG_GAUGE_FREE, alpha=1.0, u_z=1.5, override_tau=0.0)
    errs = []
    for n in (8, 16, 32):
        mesh = uniform(n)
        fields, ev = manufactured_solve(mesh, config, SMOOTH)
        errs.append(l2_errors(mesh, fields, ev))
    errs = np.array(errs)
    assert np.all(np.log2(errs[:-1] / errs[1:]) > 1.8)


def test_forcings_vanish_for_trivial_field():
    zero = (sp_.Integer(0),) * 3
    for cfg in EXACT_CONFIGS:
        for f in strong_forcings(*zero, MAT, cfg, sp_.Integer(0)):
            assert np.all(f(np.linspace(0, 1, 5), np.linspace(0, 1, 5)) == 0)
    assert DofMap.for_mesh(uniform(2)).n_phi == 9
