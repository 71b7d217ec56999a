"""Bilinear isoparametric quadrilateral element.

Reference square ``[-1, 1]^2`` with xi mapped to y and eta mapped to z.
Corner order is counterclockwise from the lower-left corner::

    3 (-1, 1) ---- 2 (1, 1)
       |              |
    0 (-1,-1) ---- 1 (1,-1)

Gradient arrays carry the physical derivative index last: ``[..., 0]`` is
the y-derivative and ``[..., 1]`` the z-derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

XI_CORNERS = np.array([-1.0, 1.0, 1.0, -1.0])
ETA_CORNERS = np.array([-1.0, -1.0, 1.0, 1.0])


class JacobianError(ValueError):
    """Raised for a non-positive Jacobian determinant."""


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,)


def gauss_rule(order: int = 2) -> QuadRule:
    """Tensor Gauss-Legendre rule with ``order`` points per direction."""
    x, w = np.polynomial.legendre.leggauss(order)
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wx, we = np.meshgrid(w, w, indexing="ij")
    return QuadRule(np.column_stack([xi.ravel(), eta.ravel()]), (wx * we).ravel())


def gauss_2x2() -> QuadRule:
    return gauss_rule(2)


def shape_bilinear(xi, eta) -> np.ndarray:
    """N_i = (1 + xi xi_i)(1 + eta eta_i)/4; trailing axis of length 4."""
    xi = np.asarray(xi, dtype=float)[..., None]
    eta = np.asarray(eta, dtype=float)[..., None]
    return 0.25 * (1.0 + xi * XI_CORNERS) * (1.0 + eta * ETA_CORNERS)


def shape_grad_ref(xi, eta) -> np.ndarray:
    """Reference gradients, shape ``(..., 4, 2)`` as (dN/dxi, dN/deta)."""
    xi = np.asarray(xi, dtype=float)[..., None]
    eta = np.asarray(eta, dtype=float)[..., None]
    dxi = 0.25 * XI_CORNERS * (1.0 + eta * ETA_CORNERS)
    deta = 0.25 * ETA_CORNERS * (1.0 + xi * XI_CORNERS)
    return np.stack([dxi, deta], axis=-1)


@dataclass(frozen=True)
class ElementGeometry:
    """Jacobian data of a batch of elements at a set of reference points.

    ``coords`` is ``(n_elem, 4, 2)``; the cached arrays are indexed
    ``(element, point, ...)``.
    """

    coords: np.ndarray
    points: np.ndarray
    jac: np.ndarray  # (ne, nq, 2, 2), jac[..., a, b] = d x_a / d xi_b
    det: np.ndarray  # (ne, nq)
    inv: np.ndarray  # (ne, nq, 2, 2)
    grads: np.ndarray  # (ne, nq, 4, 2)

    @classmethod
    def build(cls, coords, points) -> ElementGeometry:
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 2:
            coords = coords[None]
        points = np.atleast_2d(np.asarray(points, dtype=float))
        dref = shape_grad_ref(points[:, 0], points[:, 1])  # (nq, 4, 2)
        jac = np.einsum("eia,qib->eqab", coords, dref)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        if np.any(det <= 0.0):
            bad = np.argwhere(det <= 0.0)[0]
            raise JacobianError(f"non-positive Jacobian in element {bad[0]} at point {bad[1]}")
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1] / det
        inv[..., 1, 1] = jac[..., 0, 0] / det
        inv[..., 0, 1] = -jac[..., 0, 1] / det
        inv[..., 1, 0] = -jac[..., 1, 0] / det
        # grad N = J^-T grad_ref N
        grads = np.einsum("qib,eqba->eqia", dref, inv)
        return cls(coords, points, jac, det, inv, grads)

    def physical_points(self) -> np.ndarray:
        """Physical coordinates of the reference points, ``(ne, nq, 2)``."""
        n = shape_bilinear(self.points[:, 0], self.points[:, 1])
        return np.einsum("qi,eia->eqa", n, self.coords)


def physical_gradients(coords, xi: float, eta: float) -> np.ndarray:
    """``(4, 2)`` physical gradients of one element at ``(xi, eta)``."""
    geo = ElementGeometry.build(coords, [[xi, eta]])
    return geo.grads[0, 0]
