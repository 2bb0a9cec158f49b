"""Bilinear forms, lifting operators and nonlinear residual assembly.

The stabilization form is assembled twice, once from its facewise definition
(volume Hessian terms plus tangential face terms) and once through the
lifted Hessians; their agreement to roundoff is the sharpest internal
consistency check of face terms, liftings and normal conventions.

Lifted quantities are represented by modal coefficients in the orthonormal
degree-q basis per element, so liftings reduce to face integrals against
modal traces and all lifted bilinear forms are products of sparse
coefficient maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import cordes
from .basis import ortho_basis
from .fespace import DiscreteFunction, FESpace, SpaceError
from .mesh import INTERIOR
from .quadrature import segment_rule


@dataclass(frozen=True)
class FormParams:
    theta: float = 0.5
    sigma: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0):
            raise SpaceError("theta must lie in [0, 1]")
        if self.sigma <= 0.0:
            raise SpaceError("sigma must be positive")
        if self.rho < 0.0:
            raise SpaceError("rho must be nonnegative")

    @classmethod
    def defaults(cls, p: int, s: int, theta: float = 0.5) -> "FormParams":
        """sigma = 10 p^2 always; rho = 10 p^4 for DG, 0 for C0-IP."""
        rho = 10.0 * p**4 if s == 0 else 0.0
        return cls(theta=theta, sigma=10.0 * p**2, rho=rho)


def _validate_params(params: FormParams, s: int) -> None:
    if s == 0 and params.rho <= 0.0:
        raise SpaceError("rho must be positive for the DG space (s=0)")


class Operators:
    """All assembled matrices and coefficient maps for one FESpace."""

    def __init__(self, space: FESpace):
        self.space = space
        mesh = space.mesh
        cfg = space.config
        self.nmod = (cfg.q + 1) * (cfg.q + 2) // 2
        self.modal = ortho_basis(cfg.q)

        rule = space.elem_rule
        self.wq = rule.weights
        self.ref_pts = rule.points
        self.B = space.basis.eval(rule.points, 0)  # (nq, nloc)
        Gh = space.basis.eval(rule.points, 1)
        Hh = space.basis.eval(rule.points, 2)
        self.Bm = self.modal.eval(rule.points, 0)  # (nq, nmod)

        iJ = space.invJ
        # physical derivatives of shape functions at element quad points
        self.PG = np.einsum("eki,qlk->eqli", iJ, Gh)
        self.PH = np.einsum("eki,qlkm,emj->eqlij", iJ, Hh, iJ)
        # physical quad points, (ne, nq, 2)
        self.X = space.v0[:, None, :] + np.einsum("eij,qj->eqi", space.J, rule.points)

        self._assemble_volume()
        self._assemble_faces()
        self._assemble_modal_maps()
        self._combine()

    # ------------------------------------------------------------------ volume
    def _assemble_volume(self):
        sp_ = self.space
        w, dJ = self.wq, sp_.detJ
        B, PG, PH = self.B, self.PG, self.PH
        lapl = np.einsum("eqlii->eql", PH)
        loc0 = np.einsum("q,qa,qb->ab", w, B, B)
        M0 = dJ[:, None, None] * loc0[None]
        M1 = np.einsum("e,q,eqai,eqbi->eab", dJ, w, PG, PG)
        M2 = np.einsum("e,q,eqaij,eqbij->eab", dJ, w, PH, PH)
        ML = np.einsum("e,q,eqa,eqb->eab", dJ, w, lapl, lapl)
        self.M0 = self._scatter_elem(M0)
        self.M1 = self._scatter_elem(M1)
        self.M2 = self._scatter_elem(M2)
        self.ML = self._scatter_elem(ML)

    def _scatter_elem(self, local):
        sp_ = self.space
        nloc = sp_.nloc
        rows = np.repeat(sp_.dofmap, nloc, axis=1).ravel()
        cols = np.tile(sp_.dofmap, (1, nloc)).ravel()
        data = local.ravel()
        keep = (rows >= 0) & (cols >= 0)
        return sp.csr_matrix(
            (data[keep], (rows[keep], cols[keep])), shape=(sp_.dim, sp_.dim)
        )

    # ------------------------------------------------------------------- faces
    def _assemble_faces(self):
        sp_ = self.space
        mesh = sp_.mesh
        frule = segment_rule(sp_.config.quad_exactness)
        s1 = frule.points[:, 0]
        self.face_data = []
        trip_jg, trip_jv, trip_sf = [], [], []

        for f in range(mesh.n_faces):
            a, b = mesh.face_verts[f]
            p0, p1 = mesh.vertices[a], mesh.vertices[b]
            length = float(np.hypot(*(p1 - p0)))
            n = mesh.face_normals[f]
            t = np.array([-n[1], n[0]])
            xq = p0[None, :] + s1[:, None] * (p1 - p0)[None, :]
            wq = frule.weights * length
            interior = mesh.face_kind[f] == INTERIOR
            elems = [int(e) for e in mesh.face_elems[f] if e >= 0]

            vals, grads, hess, refs = [], [], [], []
            for e in elems:
                r = sp_.to_reference(e, xq)
                refs.append(r)
                vals.append(sp_.eval_shape(e, r, 0))
                grads.append(sp_.eval_shape(e, r, 1))
                hess.append(sp_.eval_shape(e, r, 2))
            dofs = np.concatenate([sp_.dofmap[e] for e in elems])

            if interior:
                jval = np.concatenate([vals[0], -vals[1]], axis=1)
                jgrad = np.concatenate([grads[0], -grads[1]], axis=1)
                aval = 0.5 * np.concatenate([vals[0], vals[1]], axis=1)
                ahess = 0.5 * np.concatenate([hess[0], hess[1]], axis=1)
            else:
                jval, jgrad = vals[0], grads[0]
                aval, ahess = vals[0], hess[0]

            self.face_data.append(
                dict(
                    elems=elems,
                    dofs=dofs,
                    refs=refs,
                    wq=wq,
                    xq=xq,
                    n=n,
                    t=t,
                    length=length,
                    interior=bool(interior),
                    jval=jval,
                    jgrad=jgrad,
                )
            )

            # jump penalty ingredients (raw, unweighted by sigma/rho)
            if interior:
                loc = (1.0 / length) * np.einsum("q,qai,qbi->ab", wq, jgrad, jgrad)
                trip_jg.append((loc, dofs))
            loc = (1.0 / length**3) * np.einsum("q,qa,qb->ab", wq, jval, jval)
            trip_jv.append((loc, dofs))

            # facewise stabilization terms
            tHn = np.einsum("i,qaij,j->qa", t, ahess, n)
            tj = np.einsum("qai,i->qa", jgrad, t)
            loc = -np.einsum("q,qa,qb->ab", wq, tHn, tj)
            loc = loc + loc.T
            if interior:
                tt = np.einsum("i,qaij,j->qa", t, ahess, t)
                jn = np.einsum("qai,i->qa", jgrad, n)
                l2 = np.einsum("q,qa,qb->ab", wq, tt, jn)
                loc = loc + l2 + l2.T
            trip_sf.append((loc, dofs))

        self.Jgrad = self._scatter_faces(trip_jg)
        self.Jval = self._scatter_faces(trip_jv)
        self.Sface = self._scatter_faces(trip_sf)

    def _scatter_faces(self, triplets):
        dim = self.space.dim
        rows, cols, data = [], [], []
        for loc, dofs in triplets:
            nd = len(dofs)
            r = np.repeat(dofs, nd)
            c = np.tile(dofs, nd)
            rows.append(r)
            cols.append(c)
            data.append(loc.ravel())
        if not rows:
            return sp.csr_matrix((dim, dim))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
        keep = (rows >= 0) & (cols >= 0)
        return sp.csr_matrix(
            (data[keep], (rows[keep], cols[keep])), shape=(dim, dim)
        )

    # -------------------------------------------------------- modal coefficient maps
    def _assemble_modal_maps(self):
        sp_ = self.space
        ne, nloc, nmod = sp_.mesh.n_elements, sp_.nloc, self.nmod
        nrows = ne * nmod

        # broken Hessian maps: modal coefficients of each shape function's
        # physical Hessian components (exact since p - 2 <= q)
        coeff = np.einsum("q,qa,eqlij->eailj", self.wq, self.Bm, self.PH)
        self.D2 = {}
        rows = (np.arange(ne)[:, None, None] * nmod + np.arange(nmod)[None, :, None])
        rows = np.broadcast_to(rows[..., None], (ne, nmod, 1, nloc)).ravel()
        cols = np.broadcast_to(
            sp_.dofmap[:, None, None, :], (ne, nmod, 1, nloc)
        ).ravel()
        for (i, j) in ((0, 0), (0, 1), (1, 1)):
            data = coeff[:, :, i, :, j].reshape(ne, nmod, 1, nloc).ravel()
            keep = cols >= 0
            self.D2[(i, j)] = sp.csr_matrix(
                (data[keep], (rows[keep], cols[keep])), shape=(nrows, sp_.dim)
            )

        # lifting maps R[(i, j)] of the gradient jumps
        trips = {key: ([], [], []) for key in ((0, 0), (0, 1), (1, 0), (1, 1))}
        for fd in self.face_data:
            n = fd["n"]
            wq = fd["wq"]
            cF = 0.5 if fd["interior"] else 1.0
            if fd["interior"]:
                src = fd["jgrad"]  # (nqf, 2*nloc, 2)
            else:
                g = fd["jgrad"]
                src = g - np.einsum("qai,i,j->qaj", g, n, n)  # tangential part
            for side, e in enumerate(fd["elems"]):
                psi = self.modal.eval(fd["refs"][side], 0)  # (nqf, nmod)
                scale = cF / sp_.detJ[e]
                base = e * nmod
                for (i, j), (rr, cc, dd) in trips.items():
                    loc = scale * n[j] * np.einsum(
                        "q,qa,qm->ma", wq, src[:, :, i], psi
                    )
                    rr.append(
                        np.repeat(base + np.arange(nmod), len(fd["dofs"]))
                    )
                    cc.append(np.tile(fd["dofs"], nmod))
                    dd.append(loc.ravel())
        self.R = {}
        for key, (rr, cc, dd) in trips.items():
            rows_ = np.concatenate(rr)
            cols_ = np.concatenate(cc)
            data_ = np.concatenate(dd)
            keep = cols_ >= 0
            self.R[key] = sp.csr_matrix(
                (data_[keep], (rows_[keep], cols_[keep])), shape=(nrows, sp_.dim)
            )

        # diagonal of the modal L2 inner product: int_K psi_a psi_b = detJ_e δ_ab
        self.Wmod = np.repeat(sp_.detJ, nmod)

    def _combine(self):
        D2, R = self.D2, self.R
        self.TrR = (R[(0, 0)] + R[(1, 1)]).tocsr()
        self.Delta_k = (D2[(0, 0)] + D2[(1, 1)] - self.TrR).tocsr()
        H = {
            (0, 0): D2[(0, 0)] - R[(0, 0)],
            (0, 1): D2[(0, 1)] - R[(0, 1)],
            (1, 0): D2[(0, 1)] - R[(1, 0)],
            (1, 1): D2[(1, 1)] - R[(1, 1)],
        }
        self.H = H
        W = sp.diags(self.Wmod)

        def gram(A, B):
            return (A.T @ W @ B).tocsr()

        S = sum(gram(H[k], H[k]) for k in H)
        S = S - gram(self.Delta_k, self.Delta_k)
        S = S + gram(self.TrR, self.TrR)
        S = S - sum(gram(R[k], R[k]) for k in R)
        self.S_lifted = S.tocsr()
        self.S_facewise = (self.M2 - self.ML + self.Sface).tocsr()
        self.norm_gram = (self.M2 + self.M1 + self.M0 + self.Jgrad + self.Jval).tocsr()
        self.jump_gram = (self.Jgrad + self.Jval).tocsr()

    # ------------------------------------------------------------- state fields
    def hessian_at_qp(self, u: DiscreteFunction) -> np.ndarray:
        """Broken Hessian of u at the element quadrature points, (ne, nq, 2, 2)."""
        loc = self.space.local_coeffs(u.coeffs)
        return np.einsum("eqlij,el->eqij", self.PH, loc)

    def penalty_matrix(self, params: FormParams) -> sp.csr_matrix:
        return (params.sigma * self.Jgrad + params.rho * self.Jval).tocsr()


def get_operators(space: FESpace) -> Operators:
    if space._ops is None:
        space._ops = Operators(space)
    return space._ops


# ---------------------------------------------------------------------- public API


def stab_form(space: FESpace, w, v, mode: str = "facewise") -> float:
    """Stabilization bilinear form; mode selects the facewise or the lifted
    formula (they agree to roundoff)."""
    ops = get_operators(space)
    if mode == "facewise":
        A = ops.S_facewise
    elif mode == "lifted":
        A = ops.S_lifted
    else:
        raise SpaceError(f"unknown stabilization mode {mode!r}")
    return float(_vec(w) @ (A @ _vec(v)))


def jump_penalty_form(space: FESpace, w, v, params: FormParams) -> float:
    ops = get_operators(space)
    return float(_vec(w) @ (ops.penalty_matrix(params) @ _vec(v)))


def norm_k(space: FESpace, v) -> float:
    ops = get_operators(space)
    x = _vec(v)
    return float(np.sqrt(max(x @ (ops.norm_gram @ x), 0.0)))


def jump_seminorm(space: FESpace, v) -> float:
    ops = get_operators(space)
    x = _vec(v)
    return float(np.sqrt(max(x @ (ops.jump_gram @ x), 0.0)))


def _vec(v) -> np.ndarray:
    return v.coeffs if isinstance(v, DiscreteFunction) else np.asarray(v, dtype=float)


def nonlinear_residual(
    space: FESpace,
    problem: cordes.ControlProblem,
    u: DiscreteFunction,
    params: FormParams,
) -> np.ndarray:
    """Vector of A_k(u; phi_i) over the global basis."""
    _validate_params(params, space.config.s)
    ops = get_operators(space)
    ne, nq = space.mesh.n_elements, len(ops.wq)
    uH = ops.hessian_at_qp(u)
    g, _, _ = cordes.f_gamma_field(
        problem, ops.X.reshape(-1, 2), uH.reshape(-1, 2, 2)
    )
    g = g.reshape(ne, nq)
    mvec = np.einsum("e,q,eq,qa->ea", space.detJ, ops.wq, g, ops.Bm).ravel()
    lin = (params.theta * ops.S_facewise + ops.penalty_matrix(params)) @ u.coeffs
    return ops.Delta_k.T @ mvec + lin


def frozen_jacobian(
    space: FESpace,
    problem: cordes.ControlProblem,
    u: DiscreteFunction,
    params: FormParams,
) -> sp.csr_matrix:
    """Linearization of the residual with controls frozen at the pointwise
    optimizers of F_gamma at the state u."""
    _validate_params(params, space.config.s)
    ops = get_operators(space)
    ne, nq, nmod = space.mesh.n_elements, len(ops.wq), ops.nmod
    uH = ops.hessian_at_qp(u)
    c = cordes.frozen_coefficients(
        problem, ops.X.reshape(-1, 2), uH.reshape(-1, 2, 2)
    ).reshape(ne, nq, 2, 2)

    N = sp.csr_matrix((space.dim, space.dim))
    for (i, j), mult in (((0, 0), 1.0), ((0, 1), 2.0), ((1, 1), 1.0)):
        # per-element blocks detJ * Bm^T diag(wq * c_ij) Bm
        blocks = np.einsum(
            "e,q,eq,qa,qb->eab", space.detJ, ops.wq, c[:, :, i, j], ops.Bm, ops.Bm
        )
        P = sp.bsr_matrix(
            (blocks, np.arange(ne), np.arange(ne + 1)),
            shape=(ne * nmod, ne * nmod),
        )
        N = N + mult * (ops.Delta_k.T @ (P @ ops.D2[(i, j)]))
    lin = params.theta * ops.S_facewise + ops.penalty_matrix(params)
    return (N + lin).tocsr()


# ------------------------------------------------------------------ lifted fields


@dataclass
class LiftedHessianField:
    """Per-element modal representations of the Hessian, the lifted gradient
    jump, the lifted Hessian and the lifted Laplacian of one function."""

    space: FESpace
    hess: np.ndarray  # (ne, nmod, 2, 2) broken Hessian
    lift: np.ndarray  # (ne, nmod, 2, 2) lifting of the gradient jumps
    modal_degree: int

    @property
    def lifted_hess(self) -> np.ndarray:
        return self.hess - self.lift

    @property
    def lifted_lapl(self) -> np.ndarray:
        return np.einsum("emii->em", self.lifted_hess)

    def eval(self, elem: int, ref_pts: np.ndarray, which: str = "lifted_hess"):
        ops = get_operators(self.space)
        psi = ops.modal.eval(np.atleast_2d(ref_pts), 0)
        field = getattr(self, which)
        return np.einsum("qm,m...->q...", psi, field[elem])


def lifted_hessian(space: FESpace, v: DiscreteFunction) -> LiftedHessianField:
    ops = get_operators(space)
    ne, nmod = space.mesh.n_elements, ops.nmod
    hess = np.zeros((ne, nmod, 2, 2))
    lift = np.zeros((ne, nmod, 2, 2))
    x = _vec(v)
    for (i, j), A in ops.D2.items():
        comp = (A @ x).reshape(ne, nmod)
        hess[:, :, i, j] = comp
        if i != j:
            hess[:, :, j, i] = comp
    for (i, j), A in ops.R.items():
        lift[:, :, i, j] = (A @ x).reshape(ne, nmod)
    return LiftedHessianField(space, hess, lift, space.config.q)
