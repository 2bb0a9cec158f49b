"""Built-in benchmark problems, all with manufactured exact solutions.

Every registered problem passes the ellipticity/Cordes verification with
its declared nu, and at the exact solution the pointwise inf-sup vanishes
identically, which is the manufactured-solution oracle used by the tests.
"""

from __future__ import annotations

import numpy as np

from .cordes import (
    CoefficientField,
    ControlProblem,
    ControlSet,
    ExactSolution,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _sine_exact() -> ExactSolution:
    pi = np.pi

    def value(x):
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def gradient(x):
        sx, cx = np.sin(pi * x[:, 0]), np.cos(pi * x[:, 0])
        sy, cy = np.sin(pi * x[:, 1]), np.cos(pi * x[:, 1])
        return pi * np.column_stack([cx * sy, sx * cy])

    def hessian(x):
        sx, cx = np.sin(pi * x[:, 0]), np.cos(pi * x[:, 0])
        sy, cy = np.sin(pi * x[:, 1]), np.cos(pi * x[:, 1])
        h = np.empty((len(x), 2, 2))
        h[:, 0, 0] = -(pi**2) * sx * sy
        h[:, 1, 1] = -(pi**2) * sx * sy
        h[:, 0, 1] = pi**2 * cx * cy
        h[:, 1, 0] = h[:, 0, 1]
        return h

    return ExactSolution(value, gradient, hessian)


def _laplacian_exact(x):
    return -2.0 * np.pi**2 * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def _switch_field(x):
    return np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])


def _identity_a(x, alpha, beta):
    out = np.zeros((len(x), 2, 2))
    out[:, 0, 0] = 1.0
    out[:, 1, 1] = 1.0
    return out


def poisson_singleton() -> ControlProblem:
    """Singleton controls, a = I: the scheme reduces to a linear problem."""

    def f(x, alpha, beta):
        return _laplacian_exact(x)

    return ControlProblem(
        domain=UNIT_SQUARE,
        controls=ControlSet(alphas=[0], betas=[0]),
        coeffs=CoefficientField(_identity_a, f),
        nu=1.0,
        exact=_sine_exact(),
        name="poisson_singleton",
        notes="linear reduction; u = sin(pi x) sin(pi y)",
    )


def two_control_switch() -> ControlProblem:
    """Isaacs problem with A = B = {0, 1}, a = I and genuinely switching
    optimal controls: f^(ab) = Lap(u) - (a - b) g with sign-changing g, so
    inf-sup of (a - b) g vanishes identically at the exact solution."""

    def f(x, alpha, beta):
        return _laplacian_exact(x) - (alpha - beta) * _switch_field(x)

    return ControlProblem(
        domain=UNIT_SQUARE,
        controls=ControlSet(alphas=[0, 1], betas=[0, 1]),
        coeffs=CoefficientField(_identity_a, f),
        nu=1.0,
        exact=_sine_exact(),
        name="two_control_switch",
        notes="switching Isaacs benchmark; u = sin(pi x) sin(pi y)",
    )


def rotated_anisotropic(eps: float = 0.1, n_angles: int = 5) -> ControlProblem:
    """Rotation-parameterized anisotropic diffusion R(t)^T diag(1, eps) R(t)
    over a finite angle grid, with a switching source term as above.

    The declared Cordes parameter is nu = 2 eps / (1 + eps^2).
    """
    exact = _sine_exact()
    angles = np.linspace(0.0, np.pi / 2.0, n_angles)
    weights = np.linspace(0.0, 1.0, n_angles)  # includes the 0 and 1 endpoints
    alphas = [(float(t), float(c)) for t, c in zip(angles, weights)]

    def a_of(alpha):
        t, _ = alpha
        R = np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])
        return R.T @ np.diag([1.0, eps]) @ R

    def a(x, alpha, beta):
        return np.broadcast_to(a_of(alpha), (len(x), 2, 2)).copy()

    def f(x, alpha, beta):
        _, c = alpha
        aM = np.einsum("ij,nij->n", a_of(alpha), exact.hessian(x))
        return aM - (c - beta) * _switch_field(x)

    nu = 2.0 * eps / (1.0 + eps**2)
    return ControlProblem(
        domain=UNIT_SQUARE,
        controls=ControlSet(alphas=alphas, betas=[0, 1]),
        coeffs=CoefficientField(a, f),
        nu=nu,
        exact=exact,
        name="rotated_anisotropic",
        notes=f"anisotropy eps={eps}, {n_angles} rotation angles",
    )


_REGISTRY = {
    "poisson_singleton": poisson_singleton,
    "two_control_switch": two_control_switch,
    "rotated_anisotropic": rotated_anisotropic,
}


def registry() -> list[ControlProblem]:
    return [build() for build in _REGISTRY.values()]


def get_problem(name: str) -> ControlProblem:
    try:
        return _REGISTRY[name]()
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise KeyError(f"unknown problem {name!r}; known problems: {known}")
