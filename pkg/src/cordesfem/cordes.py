"""Control sets, coefficient fields and the renormalized inf-sup operator.

Coefficient callables are vectorized: a(x, alpha, beta) maps points of shape
(n, 2) to symmetric matrices of shape (n, 2, 2), f(x, alpha, beta) to shape
(n,). Controls are finite samplings of the compact control spaces; the
inf-sup over the sampled lists is exact, with ties broken by lowest index so
that frozen-control linearizations are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

DIM = 2


class CordesError(ValueError):
    pass


@dataclass(frozen=True)
class ControlSet:
    alphas: Sequence
    betas: Sequence

    def __post_init__(self):
        if len(self.alphas) == 0 or len(self.betas) == 0:
            raise CordesError("control sets must be nonempty")


@dataclass(frozen=True)
class CoefficientField:
    a: Callable  # (x, alpha, beta) -> (n, 2, 2) symmetric
    f: Callable  # (x, alpha, beta) -> (n,)


@dataclass(frozen=True)
class ExactSolution:
    value: Callable  # (n, 2) -> (n,)
    gradient: Callable  # (n, 2) -> (n, 2)
    hessian: Callable  # (n, 2) -> (n, 2, 2)


@dataclass(frozen=True)
class ControlProblem:
    domain: np.ndarray  # convex polygon vertices, counterclockwise
    controls: ControlSet
    coeffs: CoefficientField
    nu: float
    exact: Optional[ExactSolution] = None
    name: str = ""
    notes: str = field(default="", compare=False)

    def __post_init__(self):
        if not (0.0 < self.nu <= 1.0):
            raise CordesError("Cordes parameter nu must lie in (0, 1]")

    def control_pairs(self):
        for ia, alpha in enumerate(self.controls.alphas):
            for ib, beta in enumerate(self.controls.betas):
                yield ia, ib, alpha, beta


@dataclass(frozen=True)
class PointwiseFG:
    value: float
    opt_alpha: int
    opt_beta: int


@dataclass(frozen=True)
class CordesReport:
    nu_est: float
    passed: bool
    worst_point: np.ndarray
    min_eigenvalue: float


def gamma_eval(a: np.ndarray) -> float:
    """Renormalization Tr(a) / |a|^2 with the Frobenius norm."""
    a = np.asarray(a, dtype=float)
    fro2 = float(np.sum(a * a))
    if fro2 == 0.0:
        raise CordesError("gamma undefined for the zero matrix")
    return float(np.trace(a)) / fro2


def _gamma_field(a: np.ndarray) -> np.ndarray:
    fro2 = np.einsum("nij,nij->n", a, a)
    return np.einsum("nii->n", a) / fro2


def verify_ellipticity_cordes(
    problem: ControlProblem, sample_points: np.ndarray, tol: float = 1e-12
) -> CordesReport:
    """Check symmetry, positivity and the Cordes ratio over sampled points
    and all sampled control pairs.

    nu_est is the minimum of (Tr a)^2 / |a|^2 - (d - 1) over the samples;
    the check passes iff nu_est >= problem.nu - tol and all eigenvalues of
    a are positive.
    """
    x = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if len(x) == 0:
        raise CordesError("sample point set must be nonempty")
    nu_est = np.inf
    min_eig = np.inf
    worst = x[0]
    for _, _, alpha, beta in problem.control_pairs():
        a = np.asarray(problem.coeffs.a(x, alpha, beta), dtype=float)
        if not np.allclose(a, np.transpose(a, (0, 2, 1)), atol=1e-12):
            raise CordesError("coefficient matrix a is not symmetric")
        tr = np.einsum("nii->n", a)
        fro2 = np.einsum("nij,nij->n", a, a)
        ratio = tr**2 / fro2 - (DIM - 1)
        eigs = np.linalg.eigvalsh(a)
        i = int(np.argmin(ratio))
        if ratio[i] < nu_est:
            nu_est = float(ratio[i])
            worst = x[i]
        j = int(np.argmin(eigs[:, 0]))
        if eigs[j, 0] < min_eig:
            min_eig = float(eigs[j, 0])
            if eigs[j, 0] <= 0.0:
                worst = x[j]
    passed = (nu_est >= problem.nu - tol) and (min_eig > 0.0)
    return CordesReport(nu_est, passed, worst, min_eig)


def f_gamma_field(
    problem: ControlProblem, x: np.ndarray, M: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized F_gamma over points x (n, 2) with Hessian values M (n, 2, 2).

    Returns (values, opt_alpha, opt_beta); the optimizers realize the exact
    inf over alpha of the sup over beta of gamma * (a : M - f), first index
    winning ties.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    M = np.asarray(M, dtype=float).reshape(len(x), DIM, DIM)
    na, nb = len(problem.controls.alphas), len(problem.controls.betas)
    table = np.empty((na, nb, len(x)))
    for ia, ib, alpha, beta in problem.control_pairs():
        a = np.asarray(problem.coeffs.a(x, alpha, beta), dtype=float)
        f = np.asarray(problem.coeffs.f(x, alpha, beta), dtype=float)
        gamma = _gamma_field(a)
        table[ia, ib] = gamma * (np.einsum("nij,nij->n", a, M) - f)
    ib_opt = np.argmax(table, axis=1)  # (na, n), first max wins
    sup = np.take_along_axis(table, ib_opt[:, None, :], axis=1)[:, 0, :]
    ia_opt = np.argmin(sup, axis=0)  # (n,), first min wins
    values = np.take_along_axis(sup, ia_opt[None, :], axis=0)[0]
    opt_beta = ib_opt[ia_opt, np.arange(len(x))]
    return values, ia_opt, opt_beta


def f_gamma_eval(problem: ControlProblem, x, M) -> PointwiseFG:
    """Pointwise F_gamma with recorded optimal controls."""
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, atol=1e-12):
        raise CordesError("Hessian argument must be symmetric")
    values, ia, ib = f_gamma_field(problem, np.asarray(x).reshape(1, 2), M)
    return PointwiseFG(float(values[0]), int(ia[0]), int(ib[0]))


def f_unrenormalized_field(
    problem: ControlProblem, x: np.ndarray, M: np.ndarray
) -> np.ndarray:
    """Plain inf-sup of (a : M - f), without the gamma renormalization."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    M = np.asarray(M, dtype=float).reshape(len(x), DIM, DIM)
    na, nb = len(problem.controls.alphas), len(problem.controls.betas)
    table = np.empty((na, nb, len(x)))
    for ia, ib, alpha, beta in problem.control_pairs():
        a = np.asarray(problem.coeffs.a(x, alpha, beta), dtype=float)
        f = np.asarray(problem.coeffs.f(x, alpha, beta), dtype=float)
        table[ia, ib] = np.einsum("nij,nij->n", a, M) - f
    return table.max(axis=1).min(axis=0)


def frozen_coefficients(
    problem: ControlProblem, x: np.ndarray, M: np.ndarray
) -> np.ndarray:
    """gamma * a at the optimal controls of F_gamma, per point: (n, 2, 2)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, ia, ib = f_gamma_field(problem, x, M)
    out = np.empty((len(x), DIM, DIM))
    for a_idx in np.unique(ia):
        for b_idx in np.unique(ib):
            mask = (ia == a_idx) & (ib == b_idx)
            if not np.any(mask):
                continue
            alpha = problem.controls.alphas[int(a_idx)]
            beta = problem.controls.betas[int(b_idx)]
            a = np.asarray(problem.coeffs.a(x[mask], alpha, beta), dtype=float)
            out[mask] = _gamma_field(a)[:, None, None] * a
    return out
