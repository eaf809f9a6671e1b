"""
Phase-space machinery for the second-order (elliptic) mode equations.

Everything is expressed in the eigenbasis of the linearization, where L = diag(lambda).
A phase vector q = (v, w) stacks the state v and the shifted velocity w = v' - m v / 2
into one array of length 2n; the first n entries are v.
"""

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
import pandas as pd

from .config import PARTITION_TOL
from .errors import InputError, SpectralIdentityError
from .reduction import partition_indices


class PhaseVector(NamedTuple):
    v: np.ndarray
    w: np.ndarray

    def as_array(self):
        return np.concatenate([np.asarray(self.v, dtype=float), np.asarray(self.w, dtype=float)])

    @classmethod
    def from_array(cls, q):
        q = np.asarray(q, dtype=float)
        n = len(q) // 2
        return cls(q[:n].copy(), q[n:].copy())

    @classmethod
    def from_state(cls, u, u_dot, m):
        """q(u) = (u, u' - m u / 2)."""
        u = np.asarray(u, dtype=float)
        return cls(u.copy(), np.asarray(u_dot, dtype=float) - 0.5 * m * u)


class SpectralSystem:
    """
    Constant m, eigenvalues lambda_i and everything derived from them.

    Args:
        m: Nonzero real constant of the elliptic equation u'' - m u' + M(u) = N
        lambdas: Eigenvalues of the linearization, sorted descending
        eigenvectors: Optional n x n matrix of eigenvectors (columns) for moving
            between ambient and eigen coordinates; identity when omitted
        tol: Tolerance for the partition (resonance and kernel detection)
    """

    def __init__(self, m, lambdas, eigenvectors=None, tol=PARTITION_TOL):
        if m == 0:
            raise InputError("m must be nonzero")
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.ndim != 1 or len(lambdas) == 0:
            raise InputError("lambdas must be a nonempty list")
        self.m = float(m)
        self.lambdas = lambdas
        self.n = len(lambdas)
        self.eigenvectors = np.eye(self.n) if eigenvectors is None else np.asarray(eigenvectors, dtype=float)
        self.partition = partition_indices(lambdas, m, tol)
        quarter = self.m ** 2 / 4.0

        self.gamma_plus = np.full(self.n, np.nan)
        self.gamma_minus = np.full(self.n, np.nan)
        self.beta = np.full(self.n, np.nan)
        for i in self.partition.I3 + self.partition.I4:
            root = math.sqrt(quarter - lambdas[i])
            self.gamma_plus[i] = self.m / 2 + root
            self.gamma_minus[i] = self.m / 2 - root
        for i in self.partition.I1:
            self.beta[i] = math.sqrt(lambdas[i] - quarter)

        self.kernel_indices = list(self.partition.I3)
        self.J = len(self.kernel_indices)
        self.iota = int(np.sum(lambdas > tol))

    @classmethod
    def from_model(cls, model, m):
        return cls(m, model.lambdas, model.eigenvectors)

    @property
    def borderline(self):
        return list(self.partition.borderline)

    def to_eigen(self, q_ambient):
        """Ambient phase array (u, w) to eigen coordinates."""
        q = np.asarray(q_ambient, dtype=float)
        n = self.n
        return np.concatenate([self.eigenvectors.T @ q[:n], self.eigenvectors.T @ q[n:]])

    def to_ambient(self, q_eigen):
        q = np.asarray(q_eigen, dtype=float)
        n = self.n
        return np.concatenate([self.eigenvectors @ q[:n], self.eigenvectors @ q[n:]])

    def gram_weights(self):
        """Diagonal of the G-form in eigen coordinates (v block, then w block)."""
        m2 = self.m ** 2
        v_weights = m2 / 4.0 - self.lambdas
        for i in self.partition.I1:
            v_weights[i] += 2.0 * self.beta[i] ** 2
        for i in self.partition.I2:
            v_weights[i] += 1.0
        return (2.0 / m2) * np.concatenate([v_weights, np.ones(self.n)])

    def characteristic_rates(self):
        """All decay/growth rates a linear mode can show: gamma_i^+-, plus m/2 for I1 and I2."""
        rates = []
        for i in self.partition.I3 + self.partition.I4:
            rates.extend([self.gamma_plus[i], self.gamma_minus[i]])
        if self.partition.I1 or self.partition.I2:
            rates.append(self.m / 2)
        return sorted(set(float(r) for r in rates))

    def to_dict(self):
        def clean(arr):
            return [None if np.isnan(a) else float(a) for a in arr]
        return {
            "m": self.m,
            "lambdas": [float(l) for l in self.lambdas],
            "partition": {name: list(getattr(self.partition, name))
                          for name in ("I1", "I2", "I3", "I4")},
            "borderline": self.borderline,
            "gamma_plus": clean(self.gamma_plus),
            "gamma_minus": clean(self.gamma_minus),
            "beta": clean(self.beta),
            "J": self.J,
            "iota": self.iota,
        }


def build_phase_operator(spec):
    """Matrix of L(v, w) = (m v/2 + w, -L v + m^2 v/4 + m w/2) in eigen coordinates."""
    n, m = spec.n, spec.m
    top = np.hstack([0.5 * m * np.eye(n), np.eye(n)])
    bottom = np.hstack([np.diag(m * m / 4.0 - spec.lambdas), 0.5 * m * np.eye(n)])
    return np.vstack([top, bottom])


def adjoint_operator(spec):
    """G-adjoint of the phase operator: G^{-1} L^T G."""
    weights = spec.gram_weights()
    op = build_phase_operator(spec)
    return (op.T * weights[None, :]) / weights[:, None]


def _as_phase(spec, a):
    arr = a.as_array() if isinstance(a, PhaseVector) else np.asarray(a, dtype=float)
    if arr.shape != (2 * spec.n,):
        raise InputError(f"phase vector has shape {arr.shape}, expected ({2 * spec.n},)")
    return arr


def gram_G(spec, a, b):
    """The bilinear form G(a; b) in eigen coordinates."""
    a = _as_phase(spec, a)
    b = _as_phase(spec, b)
    return float(math.fsum(spec.gram_weights() * a * b))


def norm_constants(spec):
    """(c1, c2) with c1 |a| <= |a|_G <= c2 |a| for every phase vector a."""
    weights = spec.gram_weights()
    return float(math.sqrt(weights.min())), float(math.sqrt(weights.max()))


@dataclass
class PsiBasis:
    labels: List[str]
    vectors: np.ndarray  # columns, eigen coordinates
    upsilon: List[str] = field(default_factory=list)
    upsilon_bar: List[str] = field(default_factory=list)

    def __getitem__(self, label):
        return self.vectors[:, self.labels.index(label)]

    def scaled(self, label, factor):
        vectors = self.vectors.copy()
        vectors[:, self.labels.index(label)] *= factor
        return PsiBasis(list(self.labels), vectors, list(self.upsilon), list(self.upsilon_bar))


def basis_psi(spec):
    """
    The G-orthonormal eigenbasis of the phase operator.

    Labels (1-based mode numbers): psi1_i/psi2_i for I1, psi3_i/psi4_i for I2 and
    psi+_i/psi-_i for I3 and I4. For the kernel modes, upsilon_j is psi-_{iota+j}
    when m > 0 and psi+_{iota+j} when m < 0; upsilon_bar_j is the other one.
    """
    n, m = spec.n, spec.m
    labels, columns = [], []

    def add(label, v, w):
        labels.append(label)
        columns.append(np.concatenate([v, w]))

    root_half = m / math.sqrt(2.0)
    for i in range(n):
        phi = np.zeros(n)
        phi[i] = 1.0
        tag = i + 1
        if i in spec.partition.I1:
            add(f"psi1_{tag}", 0 * phi, root_half * phi)
            add(f"psi2_{tag}", root_half / spec.beta[i] * phi, 0 * phi)
        elif i in spec.partition.I2:
            add(f"psi3_{tag}", 0 * phi, root_half * phi)
            add(f"psi4_{tag}", root_half * phi, 0 * phi)
        else:
            for sign, gamma in (("+", spec.gamma_plus[i]), ("-", spec.gamma_minus[i])):
                add(f"psi{sign}_{tag}", m / (m - 2.0 * gamma) * phi, -0.5 * m * phi)

    upsilon, upsilon_bar = [], []
    for i in spec.kernel_indices:
        neutral, other = ("-", "+") if m > 0 else ("+", "-")
        upsilon.append(f"psi{neutral}_{i + 1}")
        upsilon_bar.append(f"psi{other}_{i + 1}")
    return PsiBasis(labels, np.column_stack(columns), upsilon, upsilon_bar)


def _coefficient_label(psi_label, basis):
    if psi_label in basis.upsilon:
        return f"z_{basis.upsilon.index(psi_label) + 1}"
    if psi_label in basis.upsilon_bar:
        return f"zbar_{basis.upsilon_bar.index(psi_label) + 1}"
    kind, tag = psi_label[3:].split("_")
    if kind in ("+", "-"):
        return f"xi{kind}_{tag}"
    return f"xi_{tag}_{kind}"


def mode_rates(spec, basis):
    """Linear rate of every basis vector: gamma for psi+- and m/2 for the I1 and I2 pairs."""
    rates = {}
    for label in basis.labels:
        kind, tag = label[3:].split("_")
        i = int(tag) - 1
        if kind == "+":
            rates[label] = float(spec.gamma_plus[i])
        elif kind == "-":
            rates[label] = float(spec.gamma_minus[i])
        else:
            rates[label] = spec.m / 2
    return rates


def coefficient_names(basis):
    """Coefficient name (z_j, zbar_j, xi...) of every basis vector."""
    return {label: _coefficient_label(label, basis) for label in basis.labels}


@dataclass
class CoefficientRecord:
    """Mode coefficients G(q, psi) keyed by psi label."""
    values: dict
    basis_labels: List[str]
    names: dict

    @property
    def z(self):
        return np.array([self.values[l] for l in self.basis_labels if self.names[l].startswith("z_")])

    @property
    def zbar(self):
        return np.array([self.values[l] for l in self.basis_labels if self.names[l].startswith("zbar_")])

    def __getitem__(self, name):
        for label, coeff_name in self.names.items():
            if coeff_name == name or label == name:
                return self.values[label]
        raise KeyError(name)

    def as_array(self):
        return np.array([self.values[l] for l in self.basis_labels])

    def columns(self):
        """Ordered (name, value) pairs: z's, then zbar's, then the remaining xi's."""
        named = [(self.names[l], self.values[l]) for l in self.basis_labels]
        z = [item for item in named if item[0].startswith("z_")]
        zbar = [item for item in named if item[0].startswith("zbar_")]
        rest = [item for item in named if item[0].startswith("xi")]
        return z + zbar + rest


def project_coefficients(spec, basis, q):
    """Coefficients of q (eigen coordinates) along every basis vector, via G."""
    q = _as_phase(spec, q)
    weights = spec.gram_weights()
    coeffs = basis.vectors.T @ (weights * q)
    values = {label: float(c) for label, c in zip(basis.labels, coeffs)}
    names = coefficient_names(basis)
    return CoefficientRecord(values, list(basis.labels), names)


def reconstruct(basis, record):
    return basis.vectors @ record.as_array()


def evolve_coefficients(spec, record, t):
    """
    Closed-form solution of the projected linear flow q' = Lq after time t.

    psi+- modes grow like exp(gamma t); I1 pairs rotate by beta t under the envelope
    exp(m t / 2); I2 pairs form a Jordan block.
    """
    m = spec.m
    envelope = math.exp(0.5 * m * t)
    values = dict(record.values)
    for i in range(spec.n):
        tag = i + 1
        if i in spec.partition.I1:
            a, b = record.values[f"psi1_{tag}"], record.values[f"psi2_{tag}"]
            c, s = math.cos(spec.beta[i] * t), math.sin(spec.beta[i] * t)
            values[f"psi1_{tag}"] = envelope * (c * a - s * b)
            values[f"psi2_{tag}"] = envelope * (s * a + c * b)
        elif i in spec.partition.I2:
            a, b = record.values[f"psi3_{tag}"], record.values[f"psi4_{tag}"]
            values[f"psi3_{tag}"] = envelope * a
            values[f"psi4_{tag}"] = envelope * (b + t * a)
        else:
            values[f"psi+_{tag}"] = math.exp(spec.gamma_plus[i] * t) * record.values[f"psi+_{tag}"]
            values[f"psi-_{tag}"] = math.exp(spec.gamma_minus[i] * t) * record.values[f"psi-_{tag}"]
    return CoefficientRecord(values, list(record.basis_labels), dict(record.names))


@dataclass
class SpectralReport:
    tol: float
    checks: list = field(default_factory=list)

    def add(self, relation, violation, entry=None):
        self.checks.append({"relation": relation, "violation": float(violation), "entry": entry})

    @property
    def max_violation(self):
        return max((c["violation"] for c in self.checks), default=0.0)

    @property
    def failures(self):
        return [c for c in self.checks if c["violation"] > self.tol]

    @property
    def passed(self):
        return not self.failures

    def raise_if_failed(self):
        if self.failures:
            worst = max(self.failures, key=lambda c: c["violation"])
            raise SpectralIdentityError(
                f"{worst['relation']} violated by {worst['violation']:.3e} at {worst['entry']}",
                failures=self.failures)

    def to_dict(self):
        return {"tol": self.tol, "passed": self.passed,
                "max_violation": self.max_violation, "checks": self.checks}


def verify_spectral_identities(spec, basis, tol=1e-12):
    """
    Check G-orthonormality and the action of L and its G-adjoint on the basis.

    Returns a SpectralReport; call raise_if_failed() to turn violations into an error.
    """
    report = SpectralReport(tol)
    weights = spec.gram_weights()
    gram = basis.vectors.T @ (weights[:, None] * basis.vectors)
    deviation = np.abs(gram - np.eye(len(basis.labels)))
    r, c = np.unravel_index(np.argmax(deviation), deviation.shape)
    report.add("gram", deviation[r, c], (basis.labels[r], basis.labels[c]))

    op = build_phase_operator(spec)
    adj = adjoint_operator(spec)
    m = spec.m

    def check(name, operator, label, expected):
        residual = operator @ basis[label] - expected
        report.add(name, np.abs(residual).max(), label)

    for i in range(spec.n):
        tag = i + 1
        if i in spec.partition.I1:
            b = spec.beta[i]
            p1, p2 = basis[f"psi1_{tag}"], basis[f"psi2_{tag}"]
            check("L psi1", op, f"psi1_{tag}", m / 2 * p1 + b * p2)
            check("L psi2", op, f"psi2_{tag}", m / 2 * p2 - b * p1)
            check("Ldagger psi1", adj, f"psi1_{tag}", m / 2 * p1 - b * p2)
            check("Ldagger psi2", adj, f"psi2_{tag}", m / 2 * p2 + b * p1)
        elif i in spec.partition.I2:
            p3, p4 = basis[f"psi3_{tag}"], basis[f"psi4_{tag}"]
            check("L psi3", op, f"psi3_{tag}", m / 2 * p3 + p4)
            check("L psi4", op, f"psi4_{tag}", m / 2 * p4)
            check("Ldagger psi3", adj, f"psi3_{tag}", m / 2 * p3)
            check("Ldagger psi4", adj, f"psi4_{tag}", m / 2 * p4 + p3)
        else:
            for sign, gamma in (("+", spec.gamma_plus[i]), ("-", spec.gamma_minus[i])):
                label = f"psi{sign}_{tag}"
                check(f"L psi{sign}", op, label, gamma * basis[label])
                check(f"Ldagger psi{sign}", adj, label, gamma * basis[label])

    for label in basis.upsilon:
        check("L upsilon", op, label, 0 * basis[label])
        check("Ldagger upsilon", adj, label, 0 * basis[label])
    for label in basis.upsilon_bar:
        check("L upsilon_bar", op, label, m * basis[label])
        check("Ldagger upsilon_bar", adj, label, m * basis[label])
    return report


def coefficients_frame(times, records):
    """Coefficient records as a DataFrame with columns t, z_*, zbar_*, xi_*."""
    rows = []
    for t, record in zip(times, records):
        row = {"t": float(t)}
        row.update(dict(record.columns()))
        rows.append(row)
    return pd.DataFrame(rows)
