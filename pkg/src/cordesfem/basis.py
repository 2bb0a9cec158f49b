"""Polynomial bases on the reference triangle (0,0)-(1,0)-(0,1).

Two families are provided: an L2-orthonormal modal basis (Gram-Schmidt via
Cholesky of the monomial mass matrix) used for DG spaces and liftings, and a
Lagrange basis on the principal lattice used for C0 spaces. Both are stored
as coefficient matrices over the monomials, so values and derivatives up to
second order are exact.
"""

from __future__ import annotations

import numpy as np

from .quadrature import triangle_rule


def monomial_exponents(p: int) -> np.ndarray:
    """Exponent pairs (i, j) for all monomials x^i y^j of total degree <= p,
    ordered by total degree, then descending i."""
    exps = []
    for d in range(p + 1):
        for j in range(d + 1):
            exps.append((d - j, j))
    return np.array(exps, dtype=np.int64)


def space_dim(p: int) -> int:
    return (p + 1) * (p + 2) // 2


def _eval_monomials(pts: np.ndarray, exps: np.ndarray, order: int) -> np.ndarray:
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    i = exps[:, 0][None, :].astype(float)
    j = exps[:, 1][None, :].astype(float)

    def pw(base, e):
        # 0^0 = 1, 0^negative = 0 by convention
        out = np.zeros(np.broadcast_shapes(base.shape, e.shape))
        pos = np.broadcast_to(e > -0.5, out.shape)
        be, ee = np.broadcast_to(base, out.shape), np.broadcast_to(e, out.shape)
        out[pos] = be[pos] ** ee[pos]
        return out

    if order == 0:
        return pw(x, i) * pw(y, j)
    if order == 1:
        gx = i * pw(x, i - 1) * pw(y, j)
        gy = j * pw(x, i) * pw(y, j - 1)
        return np.stack([gx, gy], axis=-1)
    if order == 2:
        hxx = i * (i - 1) * pw(x, i - 2) * pw(y, j)
        hxy = i * j * pw(x, i - 1) * pw(y, j - 1)
        hyy = j * (j - 1) * pw(x, i) * pw(y, j - 2)
        h = np.empty(hxx.shape + (2, 2))
        h[..., 0, 0] = hxx
        h[..., 0, 1] = hxy
        h[..., 1, 0] = hxy
        h[..., 1, 1] = hyy
        return h
    raise ValueError(f"derivative order {order} not supported (max 2)")


class RefBasis:
    """Basis phi_l = sum_m C[l, m] * monomial_m on the reference triangle."""

    def __init__(self, p: int, coeffs: np.ndarray):
        self.p = p
        self.exps = monomial_exponents(p)
        self.coeffs = coeffs
        self.n = coeffs.shape[0]

    def eval(self, pts: np.ndarray, order: int = 0) -> np.ndarray:
        """Tabulate at reference points.

        Shapes: order 0 -> (npts, n); order 1 -> (npts, n, 2);
        order 2 -> (npts, n, 2, 2).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        mono = _eval_monomials(pts, self.exps, order)
        return np.einsum("lm,qm...->ql...", self.coeffs, mono)


def ortho_basis(p: int) -> RefBasis:
    """L2(T_ref)-orthonormal basis, lowest mode first."""
    exps = monomial_exponents(p)
    rule = triangle_rule(2 * p)
    mono = _eval_monomials(rule.points, exps, 0)
    mass = np.einsum("q,qa,qb->ab", rule.weights, mono, mono)
    L = np.linalg.cholesky(mass)
    coeffs = np.linalg.inv(L)
    return RefBasis(p, coeffs)


def lagrange_nodes(p: int) -> np.ndarray:
    """Barycentric integer triples (i0, i1, i2), i0+i1+i2 = p, in a fixed
    deterministic order."""
    nodes = []
    for i2 in range(p + 1):
        for i1 in range(p + 1 - i2):
            nodes.append((p - i1 - i2, i1, i2))
    return np.array(nodes, dtype=np.int64)


def lagrange_ref_points(p: int) -> np.ndarray:
    bary = lagrange_nodes(p).astype(float) / p
    # reference vertices: v0=(0,0), v1=(1,0), v2=(0,1)
    return np.column_stack([bary[:, 1], bary[:, 2]])


def lagrange_basis(p: int) -> RefBasis:
    pts = lagrange_ref_points(p)
    exps = monomial_exponents(p)
    V = _eval_monomials(pts, exps, 0)  # (nodes, monomials)
    coeffs = np.linalg.inv(V).T
    return RefBasis(p, coeffs)
