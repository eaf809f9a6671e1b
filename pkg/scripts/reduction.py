"""
Finite-dimensional model systems and numerical Lyapunov-Schmidt reduction.

A model is a polynomial functional F on R^n with F(0) = 0 and grad F(0) = 0. Its
operator is M(u) = -grad F(u) and its linearization L = -Hess F(0). The kernel of
L carries the neutral modes; the implicit function H eliminates the rest and the
reduced functional f(x) = F(Phi_T x + H(x)) is fitted as a polynomial.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numpy.polynomial import chebyshev
from scipy.linalg import eigh
from sklearn.linear_model import LinearRegression

from .config import (
    FIT_GRID,
    FIT_RESIDUAL_TOL,
    KERNEL_TOL,
    LS_NEWTON_MAX_ITER,
    LS_NEWTON_TOL,
    PARTITION_TOL,
    SYMMETRY_TOL,
    ZERO_TOL,
)
from .errors import (
    ConsistencyError,
    DegreeTooLowError,
    InputError,
    PreconditionError,
    ReductionFailure,
)
from .potential import Polynomial, order_of_integrability
from .sphere import canonical_sign


def quadratic_form_polynomial(matrix):
    """The polynomial u -> 1/2 u^T A u for a symmetric matrix A."""
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    terms = {}
    for i in range(n):
        for j in range(i, n):
            coeff = 0.5 * matrix[i, i] if i == j else matrix[i, j]
            if coeff:
                exps = [0] * n
                exps[i] += 1
                exps[j] += 1
                terms[tuple(exps)] = terms.get(tuple(exps), 0.0) + coeff
    return Polynomial(n, terms)


class ModelSystem:
    """
    Finite-dimensional gradient model.

    Args:
        functional: Polynomial F on R^n with F(0)=0, grad F(0)=0
        linearization: Optional symmetric n x n matrix replacing -Hess F(0).
            The quadratic part of F is then swapped for -1/2 u^T L u so that the
            operator stays a gradient.
        kernel_tol: Eigenvalues with magnitude below this span the kernel
    """

    def __init__(self, functional, linearization=None, kernel_tol=KERNEL_TOL):
        n = functional.dimension
        origin = np.zeros(n)
        if abs(functional(origin)) > ZERO_TOL or np.abs(functional.gradient(origin)).max() > ZERO_TOL:
            raise PreconditionError("F must vanish to first order at the origin")
        if linearization is not None:
            linearization = np.asarray(linearization, dtype=float)
            if linearization.shape != (n, n):
                raise InputError(f"linearization must be {n}x{n}, got {linearization.shape}")
            if np.abs(linearization - linearization.T).max() > SYMMETRY_TOL:
                raise ConsistencyError("linearization override is not symmetric")
            functional = functional - functional.part(2) + quadratic_form_polynomial(-linearization)

        self.F = functional
        self.n = n
        self.kernel_tol = kernel_tol

        L = -functional.hessian(origin)
        if np.abs(L - L.T).max() > SYMMETRY_TOL:
            raise ConsistencyError("Hessian of F at the origin is not symmetric")
        self.L = 0.5 * (L + L.T)

        vals, vecs = eigh(self.L)
        order = np.argsort(-vals, kind="stable")
        self.lambdas = vals[order]
        vecs = vecs[:, order]
        self.eigenvectors = np.column_stack([canonical_sign(v) for v in vecs.T])

        kernel = np.flatnonzero(np.abs(self.lambdas) < kernel_tol)
        self.kernel_indices = kernel
        self.perp_indices = np.flatnonzero(np.abs(self.lambdas) >= kernel_tol)
        self.J = len(kernel)
        self.iota = int(np.sum(self.lambdas >= kernel_tol))
        self.kernel_basis = self.eigenvectors[:, kernel]
        self.perp_basis = self.eigenvectors[:, self.perp_indices]

    @classmethod
    def from_spectrum(cls, lambdas, higher=None):
        """Diagonal model with L = diag(lambdas) plus optional higher-order terms."""
        lambdas = np.asarray(lambdas, dtype=float)
        functional = quadratic_form_polynomial(-np.diag(lambdas))
        if higher is not None:
            functional = functional + higher
        return cls(functional)

    @property
    def has_kernel(self):
        return self.J > 0

    def operator(self, u):
        """M(u) = -grad F(u)."""
        return -self.F.gradient(u)

    def operator_jacobian(self, u):
        return -self.F.hessian(u)

    def kernel_vector(self, x):
        return self.kernel_basis @ np.asarray(x, dtype=float)

    def kernel_coordinates(self, u):
        return self.kernel_basis.T @ np.asarray(u, dtype=float)

    def to_dict(self):
        return {
            "n": self.n,
            "functional": self.F.to_text(),
            "lambdas": [float(v) for v in self.lambdas],
            "J": self.J,
            "iota": self.iota,
            "kernel_basis": self.kernel_basis.T.tolist(),
        }


class Partition(NamedTuple):
    I1: list
    I2: list
    I3: list
    I4: list
    borderline: list

    def label(self, index):
        for name in ("I1", "I2", "I3", "I4"):
            if index in getattr(self, name):
                return name
        raise KeyError(index)


def partition_indices(lambdas, m, tol=PARTITION_TOL, borderline_window=1e-6):
    """
    Split indices by comparing each eigenvalue with m^2/4 and 0.

    I1: lambda > m^2/4, I2: lambda = m^2/4, I3: lambda = 0, I4: the rest. Values whose
    distance to m^2/4 lies in (tol, borderline_window] are listed as borderline.
    """
    if m == 0:
        raise InputError("m must be nonzero")
    quarter = m * m / 4.0
    parts = {"I1": [], "I2": [], "I3": [], "I4": []}
    borderline = []
    for i, lam in enumerate(lambdas):
        gap = lam - quarter
        if abs(gap) <= tol:
            parts["I2"].append(i)
        elif gap > tol:
            parts["I1"].append(i)
        elif abs(lam) <= tol:
            parts["I3"].append(i)
        else:
            parts["I4"].append(i)
        if tol < abs(gap) <= borderline_window:
            borderline.append(i)
    return Partition(parts["I1"], parts["I2"], parts["I3"], parts["I4"], borderline)


class Linearization(NamedTuple):
    lambdas: np.ndarray
    eigenvectors: np.ndarray
    J: int
    iota: int
    no_kernel: bool
    partition: Optional[Partition]


def linearize(model, m=None):
    """Eigen-decomposition of the linearization, with the I1..I4 partition when m is given."""
    partition = None if m is None else partition_indices(model.lambdas, m)
    return Linearization(model.lambdas.copy(), model.eigenvectors.copy(), model.J,
                         model.iota, model.J == 0, partition)


def _solve_implicit(model, x, tol, max_iter):
    """Newton iteration for y with Phi_perp^T M(Phi_T x + Phi_perp y) = 0."""
    u_t = model.kernel_vector(x)
    basis = model.perp_basis
    y = np.zeros(basis.shape[1])
    if basis.shape[1] == 0:
        return np.zeros(model.n), 0.0, 0
    eps = np.finfo(float).eps
    residual = basis.T @ model.operator(u_t)
    for iteration in range(1, max_iter + 1):
        norm = np.linalg.norm(residual)
        if norm <= tol:
            return basis @ y, norm, iteration - 1
        u = u_t + basis @ y
        jac = basis.T @ model.operator_jacobian(u) @ basis
        try:
            delta = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError:
            break
        y = y + delta
        if not np.all(np.isfinite(y)):
            break
        residual = basis.T @ model.operator(u_t + basis @ y)
        if np.linalg.norm(delta) <= 4 * eps * (1 + np.linalg.norm(y)):
            norm = np.linalg.norm(residual)
            # stagnated at rounding level
            scale = 1 + np.abs(model.operator(u_t + basis @ y)).max()
            if norm <= max(tol, 64 * eps * scale):
                return basis @ y, norm, iteration
            break
    else:
        if np.linalg.norm(residual) <= tol:
            return basis @ y, float(np.linalg.norm(residual)), max_iter
    raise ReductionFailure(
        f"Newton for H did not converge at |x| = {np.linalg.norm(x):.3g}",
        usable_radius=None)


def lyapunov_schmidt_H(model, x, tol=LS_NEWTON_TOL, max_iter=LS_NEWTON_MAX_ITER):
    """
    The implicit function H at kernel coordinates x.

    Returns H(x) as an ambient vector in the orthogonal complement of the kernel,
    with |Pi_perp M(Phi_T x + H(x))| <= tol.
    """
    if not model.has_kernel:
        raise InputError("model has no kernel (J = 0)")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.J,):
        raise InputError(f"kernel coordinates must have length {model.J}")
    h, _, _ = _solve_implicit(model, x, tol, max_iter)
    return h


def tangency_defect(model, h=1e-5, tol=LS_NEWTON_TOL):
    """Norm of the central-difference derivative of H at 0 (should vanish)."""
    worst = 0.0
    for j in range(model.J):
        e = np.zeros(model.J)
        e[j] = h
        d = (lyapunov_schmidt_H(model, e, tol) - lyapunov_schmidt_H(model, -e, tol)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(d)))
    return worst


def default_domain_radius(functional):
    """0.5 / (1 + sum |c| prod(e!)) over the cubic terms of F."""
    third = sum(abs(c) * math.prod(math.factorial(e) for e in exps)
                for exps, c in functional.part(3).terms.items())
    return 0.5 / (1.0 + third)


def default_fit_degree(functional):
    nonlinear = [sum(e) for e in functional.terms if sum(e) >= 3]
    return 2 * (min(nonlinear) if nonlinear else 3)


def _monomials(dimension, low, high):
    out = []
    for degree in range(low, high + 1):
        out.extend(_compositions(degree, dimension))
    return out


def _compositions(total, parts):
    if parts == 1:
        return [(total,)]
    rows = []
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            rows.append((first,) + rest)
    return rows


@dataclass
class ReducedFunctional:
    f: Polynomial
    fit_degree: int
    residual_sup: float
    p: int
    f_p: Polynomial
    domain_radius: float
    grid: int
    implicit_residual_sup: float = 0.0
    fit_residual: float = 0.0
    tangency: Optional[float] = None
    kernel_basis: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self):
        return {
            "f": self.f.to_dict(),
            "f_text": self.f.to_text(),
            "p": self.p,
            "f_p": self.f_p.to_dict(),
            "fit_degree": self.fit_degree,
            "domain_radius": self.domain_radius,
            "grid": self.grid,
            "residual_sup": self.residual_sup,
            "implicit_residual_sup": self.implicit_residual_sup,
            "fit_residual": self.fit_residual,
            "tangency": self.tangency,
            "kernel_basis": None if self.kernel_basis is None else self.kernel_basis.T.tolist(),
        }


def reduced_functional(model, fit_degree=None, domain_radius=None, grid=FIT_GRID,
                       tol=FIT_RESIDUAL_TOL, zero_tol=ZERO_TOL, newton_tol=LS_NEWTON_TOL):
    """
    Fit the reduced functional f(x) = F(Phi_T x + H(x)) on a Chebyshev tensor grid.

    Monomials of degree 3..fit_degree are fitted in the scaled variable s = x / rho
    and mapped back. The gradient identity Phi_T^T M(u_T + H) = -grad f is checked at
    every grid point; its sup is `residual_sup`.

    Raises:
        DegreeTooLowError: residual_sup above tol
        IntegrableFunctionalError: every fitted coefficient below zero_tol
    """
    if not model.has_kernel:
        raise InputError("model has no kernel (J = 0); decay is exponential")
    J = model.J
    fit_degree = default_fit_degree(model.F) if fit_degree is None else int(fit_degree)
    if fit_degree < 3:
        raise InputError(f"fit_degree must be >= 3, got {fit_degree}")
    rho = default_domain_radius(model.F) if domain_radius is None else float(domain_radius)

    monomials = _monomials(J, 3, fit_degree)
    if grid ** J < len(monomials):
        raise InputError(
            f"grid {grid}^{J} has fewer points than the {len(monomials)} fitted monomials")

    nodes = chebyshev.chebpts1(grid)
    mesh = np.array(np.meshgrid(*([nodes] * J), indexing="ij")).reshape(J, -1).T

    values, grads_m, implicit = [], [], []
    solved_radius = 0.0
    for s in mesh:
        x = rho * s
        try:
            h, resid, _ = _solve_implicit(model, x, newton_tol, LS_NEWTON_MAX_ITER)
        except ReductionFailure as exc:
            raise ReductionFailure(str(exc), usable_radius=solved_radius) from exc
        solved_radius = max(solved_radius, float(np.linalg.norm(x)))
        u = model.kernel_vector(x) + h
        values.append(model.F(u))
        grads_m.append(model.kernel_basis.T @ model.operator(u))
        implicit.append(resid)
    values = np.array(values)
    grads_m = np.array(grads_m)

    exps = np.array(monomials)
    design = np.prod(mesh[:, None, :] ** exps[None, :, :], axis=2)
    reg = LinearRegression(fit_intercept=False).fit(design, values)
    degrees = exps.sum(axis=1)
    coeffs = reg.coef_ / rho ** degrees
    f = Polynomial.from_arrays(exps, coeffs, dimension=J)

    fit_residual = float(np.abs(design @ reg.coef_ - values).max())
    grad_f = np.array([f.gradient(rho * s) for s in mesh])
    residual_sup = float(np.abs(grads_m + grad_f).max())
    if residual_sup > tol:
        raise DegreeTooLowError(
            f"gradient identity residual {residual_sup:.3e} exceeds {tol:g} with "
            f"fit_degree={fit_degree}; try fit_degree={fit_degree + 2} or a smaller radius",
            residual=residual_sup, suggested_degree=fit_degree + 2)

    p, f_p = order_of_integrability(f, zero_tol)
    return ReducedFunctional(
        f=f,
        fit_degree=fit_degree,
        residual_sup=residual_sup,
        p=p,
        f_p=f_p,
        domain_radius=rho,
        grid=grid,
        implicit_residual_sup=float(max(implicit)),
        fit_residual=fit_residual,
        tangency=tangency_defect(model, tol=newton_tol),
        kernel_basis=model.kernel_basis.copy(),
    )


class DecomposedState(NamedTuple):
    x: np.ndarray
    Hx: np.ndarray
    u_perp: np.ndarray


def decompose_state(model, u, tol=LS_NEWTON_TOL):
    """Split u = u_T + H(u_T) + u_perp with u_T the kernel projection of u."""
    u = np.asarray(u, dtype=float)
    if u.shape != (model.n,):
        raise InputError(f"state must have length {model.n}")
    x = model.kernel_coordinates(u)
    hx = lyapunov_schmidt_H(model, x, tol)
    u_perp = u - model.kernel_vector(x) - hx
    return DecomposedState(x, hx, u_perp)
