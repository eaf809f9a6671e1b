#!/usr/bin/env python3
"""
Tests for the phase operator, the psi basis and the G-form
"""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from scripts.errors import InputError, SpectralIdentityError
from scripts.spectral import (
    PhaseVector,
    SpectralSystem,
    basis_psi,
    build_phase_operator,
    coefficients_frame,
    evolve_coefficients,
    gram_G,
    norm_constants,
    project_coefficients,
    reconstruct,
    verify_spectral_identities,
)

ALL_FAMILIES = SpectralSystem(-2.0, [2.0, 1.0, 0.0, -1.0])


def phase(v, w):
    return PhaseVector(np.atleast_1d(np.asarray(v, dtype=float)),
                       np.atleast_1d(np.asarray(w, dtype=float)))


def test_derived_quantities():
    spec = SpectralSystem(3.0, [0.0, -1.0])
    for i in (0, 1):
        assert spec.gamma_plus[i] + spec.gamma_minus[i] == pytest.approx(3.0, abs=1e-12)
        assert spec.gamma_plus[i] * spec.gamma_minus[i] == pytest.approx(spec.lambdas[i], abs=1e-12)
    assert ALL_FAMILIES.beta[0] == pytest.approx(1.0)
    assert ALL_FAMILIES.J == 1 and ALL_FAMILIES.kernel_indices == [2]
    with pytest.raises(InputError):
        SpectralSystem(0.0, [1.0])


def test_phase_operator_examples():
    spec = SpectralSystem(3.0, [0.0])
    op = build_phase_operator(spec)
    assert np.allclose(op @ np.array([1.0, -1.5]), [0.0, 0.0])
    assert np.allclose(op @ np.array([-1.0, -1.5]), 3 * np.array([-1.0, -1.5]))
    assert np.allclose(op @ np.zeros(2), 0.0)


def test_basis_examples():
    basis = basis_psi(SpectralSystem(3.0, [0.0]))
    assert np.allclose(basis["psi-_1"], [1.0, -1.5])
    assert np.allclose(basis["psi+_1"], [-1.0, -1.5])
    assert basis.upsilon == ["psi-_1"] and basis.upsilon_bar == ["psi+_1"]

    spec = SpectralSystem(2.0, [-3.0])
    assert (spec.gamma_plus[0], spec.gamma_minus[0]) == pytest.approx((3.0, -1.0))
    assert np.allclose(basis_psi(spec)["psi+_1"], [-0.5, -1.0])

    spec = SpectralSystem(-2.0, [2.0])
    basis = basis_psi(spec)
    assert np.allclose(basis["psi1_1"], [0.0, -math.sqrt(2)])
    assert np.allclose(basis["psi2_1"], [-math.sqrt(2), 0.0])

    negative = basis_psi(SpectralSystem(-3.0, [0.0]))
    assert negative.upsilon == ["psi+_1"]


def test_gram_examples():
    spec = SpectralSystem(3.0, [0.0])
    basis = basis_psi(spec)
    assert gram_G(spec, basis["psi-_1"], basis["psi-_1"]) == pytest.approx(1.0, abs=1e-15)
    assert gram_G(spec, basis["psi-_1"], basis["psi+_1"]) == pytest.approx(0.0, abs=1e-15)
    assert gram_G(spec, phase(0, 0), phase(0, 0)) == 0.0
    with pytest.raises(InputError):
        gram_G(spec, np.zeros(3), np.zeros(2))


def test_projection_examples():
    spec = SpectralSystem(3.0, [0.0])
    basis = basis_psi(spec)
    record = project_coefficients(spec, basis, basis["psi-_1"])
    assert record["z_1"] == pytest.approx(1.0)
    assert record["zbar_1"] == pytest.approx(0.0, abs=1e-15)

    record = project_coefficients(spec, basis, 2 * basis["psi+_1"] + 3 * basis["psi-_1"])
    assert record["zbar_1"] == pytest.approx(2.0)
    assert record["z_1"] == pytest.approx(3.0)
    assert np.allclose(record.z, [3.0]) and np.allclose(record.zbar, [2.0])

    record = project_coefficients(spec, basis, np.zeros(2))
    assert not np.any(record.as_array())


def test_identities_pass():
    for spec in (SpectralSystem(3.0, [0.0, -1.0]), ALL_FAMILIES):
        report = verify_spectral_identities(spec, basis_psi(spec), tol=1e-12)
        assert report.passed, report.failures
        report.raise_if_failed()
    relations = {c["relation"] for c in verify_spectral_identities(ALL_FAMILIES, basis_psi(ALL_FAMILIES)).checks}
    assert {"gram", "L psi1", "Ldagger psi2", "L psi3", "Ldagger psi4",
            "L psi+", "Ldagger psi-", "L upsilon", "Ldagger upsilon_bar"} <= relations


def test_identities_detect_corruption():
    spec = SpectralSystem(3.0, [0.0, -1.0])
    corrupted = basis_psi(spec).scaled("psi-_1", 2.0)
    report = verify_spectral_identities(spec, corrupted)
    assert not report.passed
    gram = [c for c in report.checks if c["relation"] == "gram"][0]
    assert gram["violation"] == pytest.approx(3.0)
    assert gram["entry"] == ("psi-_1", "psi-_1")
    with pytest.raises(SpectralIdentityError):
        report.raise_if_failed()


def test_norm_equivalence():
    rng = np.random.default_rng(0)
    spec = ALL_FAMILIES
    c1, c2 = norm_constants(spec)
    assert 0 < c1 <= c2
    for _ in range(100):
        a = rng.normal(size=2 * spec.n)
        g_norm = math.sqrt(gram_G(spec, a, a))
        assert c1 * np.linalg.norm(a) <= g_norm * (1 + 1e-12)
        assert g_norm <= c2 * np.linalg.norm(a) * (1 + 1e-12)


def test_reconstruction():
    rng = np.random.default_rng(1)
    spec = SpectralSystem(1.5, [3.0, 0.5625, 0.0, 0.0, -2.0])
    basis = basis_psi(spec)
    for _ in range(100):
        q = rng.normal(size=2 * spec.n)
        record = project_coefficients(spec, basis, q)
        assert np.abs(reconstruct(basis, record) - q).max() <= 1e-10


def test_linear_flow_decouples():
    rng = np.random.default_rng(2)
    spec = ALL_FAMILIES
    basis = basis_psi(spec)
    op = build_phase_operator(spec)
    for _ in range(10):
        q0 = rng.normal(size=2 * spec.n)
        t = rng.uniform(0.1, 3.0)
        exact = project_coefficients(spec, basis, expm(op * t) @ q0)
        evolved = evolve_coefficients(spec, project_coefficients(spec, basis, q0), t)
        assert np.allclose(evolved.as_array(), exact.as_array(), rtol=1e-9, atol=1e-9)


def test_coefficient_frame_columns():
    spec = ALL_FAMILIES
    basis = basis_psi(spec)
    records = [project_coefficients(spec, basis, np.ones(8)) for _ in range(3)]
    frame = coefficients_frame([0.0, 1.0, 2.0], records)
    assert list(frame.columns[:3]) == ["t", "z_1", "zbar_1"]
    assert {"xi_1_1", "xi_1_2", "xi_2_3", "xi_2_4", "xi+_4", "xi-_4"} <= set(frame.columns)
