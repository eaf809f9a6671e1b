#!/usr/bin/env python3
"""
Tests for model systems and the Lyapunov-Schmidt reduction
"""

import numpy as np
import pytest

from scripts.errors import (
    ConsistencyError,
    DegreeTooLowError,
    InputError,
    IntegrableFunctionalError,
)
from scripts.potential import Polynomial
from scripts.reduction import (
    ModelSystem,
    decompose_state,
    linearize,
    lyapunov_schmidt_H,
    reduced_functional,
    tangency_defect,
)

# F = 1/2 u2^2 + u1^2 u2 + u1^4
F_TEXT = "0.5  0 2\n1.0  2 1\n1.0  4 0\n"


@pytest.fixture
def model():
    return ModelSystem(Polynomial.from_text(F_TEXT))


def test_linearize_kernel(model):
    lin = linearize(model)
    assert np.allclose(lin.lambdas, [0.0, -1.0])
    assert lin.J == 1
    assert np.allclose(model.kernel_basis[:, 0], [1.0, 0.0])
    assert lin.partition is None
    assert not lin.no_kernel


def test_linearize_partition(model):
    lin = linearize(model, m=3.0)
    part = lin.partition
    assert part.I1 == [] and part.I2 == []
    assert part.I3 == [0] and part.I4 == [1]


def test_linearize_partition_all_families():
    lin = linearize(ModelSystem.from_spectrum([2.0, 1.0, 0.0, -1.0]), m=-2.0)
    part = lin.partition
    assert (part.I1, part.I2, part.I3, part.I4) == ([0], [1], [2], [3])
    assert part.borderline == []

    near = linearize(ModelSystem.from_spectrum([1.0 + 1e-8, -1.0]), m=-2.0).partition
    assert near.borderline == [0]


def test_no_kernel():
    lin = linearize(ModelSystem(Polynomial(2, {(2, 0): 0.5, (0, 2): 0.5})))
    assert lin.J == 0
    assert lin.no_kernel


def test_eigenvectors_orthonormal_and_signed():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4))
    sym = a + a.T
    model = ModelSystem(Polynomial(4, {(4, 0, 0, 0): 1.0}), linearization=sym)
    vecs = model.eigenvectors
    assert np.allclose(vecs.T @ vecs, np.eye(4), atol=1e-12)
    assert np.all(np.diff(model.lambdas) <= 0)
    for v in vecs.T:
        first = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
        assert first > 0


def test_asymmetric_override_rejected():
    with pytest.raises(ConsistencyError):
        ModelSystem(Polynomial(2, {(4, 0): 1.0}), linearization=[[0.0, 1.0], [0.0, 0.0]])


def test_lyapunov_schmidt_examples(model):
    assert np.allclose(lyapunov_schmidt_H(model, [0.2]), [0.0, -0.04], atol=1e-15)
    assert np.allclose(lyapunov_schmidt_H(model, [0.0]), [0.0, 0.0])
    h = lyapunov_schmidt_H(model, [0.1])
    assert np.allclose(h, [0.0, -0.01], atol=1e-15)
    u = model.kernel_vector([0.1]) + h
    residual = model.perp_basis.T @ model.operator(u)
    assert np.linalg.norm(residual) < 1e-14


def test_lyapunov_schmidt_rejects_bad_input(model):
    with pytest.raises(InputError):
        lyapunov_schmidt_H(model, [0.1, 0.2])
    no_kernel = ModelSystem(Polynomial(1, {(2,): 0.5}))
    with pytest.raises(InputError):
        lyapunov_schmidt_H(no_kernel, [])


def test_tangency(model):
    assert tangency_defect(model) <= 1e-8


def test_reduced_functional_exact(model):
    reduced = reduced_functional(model, domain_radius=0.3)
    assert reduced.p == 4
    assert reduced.f.coefficient((4,)) == pytest.approx(0.5, abs=1e-10)
    for exps, coeff in reduced.f.terms.items():
        if exps != (4,):
            assert abs(coeff) <= 1e-10
    assert reduced.f_p == Polynomial(1, {(4,): reduced.f.coefficient((4,))})
    assert reduced.residual_sup < 1e-10
    assert reduced.implicit_residual_sup <= 1e-12


def test_reduced_gradient_identity(model):
    x = [0.2]
    u = model.kernel_vector(x) + lyapunov_schmidt_H(model, x)
    projected = model.kernel_basis.T @ model.operator(u)
    assert projected[0] == pytest.approx(-0.016, abs=1e-15)
    reduced = reduced_functional(model, domain_radius=0.3)
    assert reduced.f.gradient(np.array(x))[0] == pytest.approx(0.016, abs=1e-12)


def test_reduced_functional_integrable():
    decoupled = ModelSystem(Polynomial(2, {(0, 2): 0.5}))
    with pytest.raises(IntegrableFunctionalError):
        reduced_functional(decoupled)


def test_reduced_functional_degree_too_low():
    # F = 1/2 u2^2 + u1^2 u2 + u1^3 u2: f(v) has terms up to degree 6 and beyond
    model = ModelSystem(Polynomial(2, {(0, 2): 0.5, (2, 1): 1.0, (3, 1): 1.0}))
    with pytest.raises(DegreeTooLowError) as info:
        reduced_functional(model, fit_degree=3, domain_radius=0.3)
    assert info.value.suggested_degree == 5


def test_reduced_functional_two_dimensional_kernel():
    # F = 1/2 u3^2 + (u1^2 + u2^2) u3 + u1^4 + u2^4, H = -(u1^2 + u2^2) e3
    terms = {(0, 0, 2): 0.5, (2, 0, 1): 1.0, (0, 2, 1): 1.0, (4, 0, 0): 1.0, (0, 4, 0): 1.0}
    model = ModelSystem(Polynomial(3, terms))
    reduced = reduced_functional(model, domain_radius=0.3)
    assert reduced.p == 4
    # f = x1^4 + x2^4 - 1/2 (x1^2 + x2^2)^2 = 1/2 x1^4 - x1^2 x2^2 + 1/2 x2^4
    assert reduced.f_p.coefficient((4, 0)) == pytest.approx(0.5, abs=1e-9)
    assert reduced.f_p.coefficient((2, 2)) == pytest.approx(-1.0, abs=1e-9)
    assert reduced.f_p.coefficient((0, 4)) == pytest.approx(0.5, abs=1e-9)


def test_decompose_state(model):
    x, hx, u_perp = decompose_state(model, np.array([0.2, -0.04]))
    assert np.allclose(x, [0.2]) and np.allclose(hx, [0.0, -0.04])
    assert np.allclose(u_perp, [0.0, 0.0], atol=1e-15)

    u = np.array([0.2, 0.0])
    x, hx, u_perp = decompose_state(model, u)
    assert np.allclose(u_perp, [0.0, 0.04])
    rebuilt = model.kernel_vector(x) + hx + u_perp
    assert np.abs(rebuilt - u).max() <= 1e-14

    x, hx, u_perp = decompose_state(model, np.zeros(2))
    assert not np.any(x) and not np.any(hx) and not np.any(u_perp)
