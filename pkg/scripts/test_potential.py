#!/usr/bin/env python3
"""
Tests for polynomial potentials: jets, homogeneous parts, order of integrability
"""

import math

import numpy as np
import pytest

from scripts.errors import InputError, IntegrableFunctionalError, PreconditionError
from scripts.potential import (
    Polynomial,
    evaluate_jet,
    homogeneous_parts,
    order_of_integrability,
)


X4X8 = Polynomial(2, {(4, 0): 1.0, (0, 8): 1.0})
COUPLED = Polynomial(2, {(4, 0): 1.0, (2, 2): 1.0, (0, 4): 1.0})


def random_polynomial(rng, dimension, degrees):
    terms = {}
    for degree in degrees:
        for _ in range(3):
            cut = np.sort(rng.integers(0, degree + 1, size=dimension - 1))
            exps = np.diff(np.concatenate([[0], cut, [degree]]))
            terms[tuple(int(e) for e in exps)] = rng.normal()
    return Polynomial(dimension, terms)


def test_jet_at_origin():
    jet = evaluate_jet(X4X8, [0.0, 0.0], order=2)
    assert jet.value == 0.0
    assert np.all(jet.gradient == 0.0)
    assert np.all(jet.hessian == 0.0)


def test_jet_values():
    jet = evaluate_jet(X4X8, [1.0, 1.0], order=1)
    assert jet.value == 2.0
    assert np.allclose(jet.gradient, [4.0, 8.0])
    assert jet.hessian is None

    half_v4 = Polynomial(1, {(4,): 0.5})
    jet = evaluate_jet(half_v4, [0.2], order=1)
    assert jet.value == pytest.approx(0.0008, rel=1e-14)
    assert jet.gradient[0] == pytest.approx(0.032, rel=1e-14)

    assert evaluate_jet(X4X8, [1.0, 1.0], order=0).gradient is None


def test_jet_rejects_wrong_dimension():
    with pytest.raises(InputError):
        evaluate_jet(X4X8, [1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        evaluate_jet(X4X8, [1.0, 2.0], order=3)


def test_hessian_symmetric():
    rng = np.random.default_rng(7)
    poly = random_polynomial(rng, 3, [3, 4, 5])
    hess = poly.hessian(rng.normal(size=3))
    assert np.array_equal(hess, hess.T)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(100):
        poly = random_polynomial(rng, 3, [3, 4, 6])
        x = rng.uniform(-1, 1, size=3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        exact = poly.gradient(x) @ direction
        errors = []
        for h in (1e-3, 1e-4):
            fd = (poly(x + h * direction) - poly(x - h * direction)) / (2 * h)
            errors.append(abs(fd - exact))
        if errors[0] < 1e-7:
            continue
        assert math.log10(errors[0] / errors[1]) >= 1.9


def test_euler_identity():
    rng = np.random.default_rng(3)
    for _ in range(100):
        degree = int(rng.integers(3, 7))
        poly = random_polynomial(rng, 3, [degree])
        x = rng.normal(size=3)
        x *= rng.uniform(0.1, 1.0) / np.linalg.norm(x)
        lhs = poly.gradient(x) @ x
        rhs = degree * poly(x)
        scale = max(abs(rhs), np.abs(poly.coefficients).sum() * np.linalg.norm(x) ** degree)
        assert abs(lhs - rhs) <= 1e-12 * scale


def test_homogeneous_parts():
    assert homogeneous_parts(Polynomial.zero(2)).parts == []

    parts = homogeneous_parts(X4X8)
    assert parts.degrees() == [4, 8]
    assert parts.parts[0][1] == Polynomial(2, {(4, 0): 1.0})

    cubic = Polynomial(2, {(3, 0): 1.0, (1, 2): 1.0, (0, 5): 1.0})
    parts = homogeneous_parts(cubic)
    assert parts.degrees() == [3, 5]
    assert parts.parts[0][1] == Polynomial(2, {(3, 0): 1.0, (1, 2): 1.0})
    assert all(part.is_homogeneous() for _, part in parts)


def test_reassembly():
    rng = np.random.default_rng(5)
    poly = random_polynomial(rng, 3, [3, 4, 5, 7])
    rebuilt = homogeneous_parts(poly).reassemble(3)
    assert rebuilt == poly
    for x in rng.uniform(-1, 1, size=(100, 3)):
        value = poly(x)
        total = math.fsum(part(x) for _, part in homogeneous_parts(poly))
        assert abs(total - value) <= 1e-14 * max(1.0, abs(value))


def test_order_of_integrability():
    p, f_p = order_of_integrability(X4X8)
    assert p == 4
    assert f_p == Polynomial(2, {(4, 0): 1.0})

    p, f_p = order_of_integrability(Polynomial(1, {(4,): 0.5}))
    assert (p, f_p) == (4, Polynomial(1, {(4,): 0.5}))

    p, f_p = order_of_integrability(COUPLED)
    assert p == 4 and f_p == COUPLED


def test_order_of_integrability_drops_noise():
    noisy = Polynomial(2, {(3, 0): 1e-15, (0, 3): -2e-13, (4, 0): 1.0, (1, 3): 1e-16})
    p, f_p = order_of_integrability(noisy)
    assert p == 4
    assert f_p == Polynomial(2, {(4, 0): 1.0})


def test_order_of_integrability_errors():
    with pytest.raises(PreconditionError):
        order_of_integrability(Polynomial(2, {(2, 0): 1.0, (4, 0): 1.0}))
    with pytest.raises(IntegrableFunctionalError):
        order_of_integrability(Polynomial(2, {(3, 0): 1e-13}))
    with pytest.raises(IntegrableFunctionalError):
        order_of_integrability(Polynomial.zero(2))


def test_text_format():
    text = X4X8.to_text()
    assert text.splitlines() == ["1.0  4 0", "1.0  0 8"]
    assert Polynomial.from_text(text) == X4X8
    parsed = Polynomial.from_text("# F\n0.5  0 2\n1  2 1\n1  4 0\n")
    assert parsed.coefficient((2, 1)) == 1.0
    assert Polynomial.from_text("", dimension=3) == Polynomial.zero(3)
    with pytest.raises(InputError):
        Polynomial.from_text("1.0  1 2\n1.0  3\n")


def test_immutable_arithmetic():
    a = Polynomial(2, {(4, 0): 1.0})
    b = Polynomial(2, {(4, 0): -1.0, (0, 4): 2.0})
    total = a + b
    assert total == Polynomial(2, {(0, 4): 2.0})
    assert a == Polynomial(2, {(4, 0): 1.0})
    assert (2 * a).coefficient((4, 0)) == 2.0
    assert (a * a).coefficient((8, 0)) == 1.0
    with pytest.raises(InputError):
        a + Polynomial(3, {(1, 1, 1): 1.0})


def test_graded_lex_order():
    poly = Polynomial(2, {(0, 4): 1.0, (3, 0): 1.0, (4, 0): 1.0, (1, 3): 1.0})
    assert list(poly.terms) == [(3, 0), (4, 0), (1, 3), (0, 4)]


def test_evaluate_many_matches_pointwise():
    rng = np.random.default_rng(9)
    poly = random_polynomial(rng, 2, [3, 4])
    points = rng.uniform(-1, 1, size=(20, 2))
    assert np.allclose(poly.evaluate_many(points), [poly(x) for x in points], rtol=1e-13, atol=1e-15)
