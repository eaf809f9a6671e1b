"""
Multivariate polynomial potentials: exact jets, homogeneous decomposition and
the order of integrability.

Rounding contract: every term c * x^e is evaluated in double precision and the
terms are added with math.fsum, so a value (or a gradient/Hessian entry) carries
at most one rounding per term plus one final rounding.
"""

import math
from typing import NamedTuple, Optional

import numpy as np

from .config import ZERO_TOL
from .errors import InputError, IntegrableFunctionalError, PreconditionError


def _grlex_key(exponents):
    # degree ascending, then exponents descending
    return (sum(exponents), tuple(-e for e in exponents))


class Jet(NamedTuple):
    value: float
    gradient: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None


class Polynomial:
    """Immutable sparse polynomial in J real variables.

    Args:
        dimension: Number of variables J (positive)
        terms: Mapping from exponent tuples (length J) to coefficients.
            Zero coefficients are dropped; repeated exponents are not possible.
    """

    def __init__(self, dimension, terms=None):
        dimension = int(dimension)
        if dimension < 1:
            raise InputError(f"dimension must be positive, got {dimension}")
        clean = {}
        for exponents, coeff in (terms or {}).items():
            exponents = tuple(int(e) for e in exponents)
            if len(exponents) != dimension:
                raise InputError(
                    f"exponent {exponents} has length {len(exponents)}, expected {dimension}")
            if any(e < 0 for e in exponents):
                raise InputError(f"negative exponent in {exponents}")
            coeff = float(coeff)
            if coeff != 0.0:
                clean[exponents] = coeff
        self._dimension = dimension
        self._terms = dict(sorted(clean.items(), key=lambda item: _grlex_key(item[0])))
        if self._terms:
            self._exps = np.array(list(self._terms.keys()), dtype=np.int64)
            self._coeffs = np.array(list(self._terms.values()), dtype=float)
        else:
            self._exps = np.zeros((0, dimension), dtype=np.int64)
            self._coeffs = np.zeros(0)
        self._grad_tables = None
        self._hess_tables = None

    # --- construction helpers ---

    @classmethod
    def zero(cls, dimension):
        return cls(dimension, {})

    @classmethod
    def monomial(cls, dimension, exponents, coeff=1.0):
        return cls(dimension, {tuple(exponents): coeff})

    @classmethod
    def from_arrays(cls, exponents, coeffs, dimension=None):
        exponents = np.asarray(exponents, dtype=np.int64)
        if dimension is None:
            dimension = exponents.shape[1]
        terms = {}
        for row, c in zip(exponents, coeffs):
            key = tuple(int(e) for e in row)
            terms[key] = terms.get(key, 0.0) + float(c)
        return cls(dimension, terms)

    @classmethod
    def from_text(cls, text, dimension=None):
        """
        Parse the one-term-per-line format `coeff  e1 e2 ... eJ`.

        Blank lines and lines starting with '#' are skipped. The dimension is
        taken from the first term unless given (it must be given for the zero
        polynomial).
        """
        terms = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            try:
                coeff = float(fields[0])
                exponents = tuple(int(f) for f in fields[1:])
            except ValueError as exc:
                raise InputError(f"line {lineno}: cannot parse term '{raw.strip()}'") from exc
            if dimension is None:
                dimension = len(exponents)
            if len(exponents) != dimension:
                raise InputError(
                    f"line {lineno}: expected {dimension} exponents, got {len(exponents)}")
            terms[exponents] = terms.get(exponents, 0.0) + coeff
        if dimension is None:
            raise InputError("empty polynomial text needs an explicit dimension")
        return cls(dimension, terms)

    def to_text(self):
        lines = []
        for exponents, coeff in self._terms.items():
            lines.append(f"{coeff!r}  " + " ".join(str(e) for e in exponents))
        return "\n".join(lines)

    def to_dict(self):
        return {
            "dimension": self._dimension,
            "terms": [[coeff, list(exponents)] for exponents, coeff in self._terms.items()],
        }

    # --- accessors ---

    @property
    def dimension(self):
        return self._dimension

    @property
    def terms(self):
        return dict(self._terms)

    @property
    def exponents(self):
        return self._exps.copy()

    @property
    def coefficients(self):
        return self._coeffs.copy()

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        return (isinstance(other, Polynomial)
                and self._dimension == other._dimension
                and self._terms == other._terms)

    def __hash__(self):
        return hash((self._dimension, tuple(self._terms.items())))

    def __repr__(self):
        if not self._terms:
            return f"Polynomial({self._dimension}, 0)"
        body = " + ".join(
            f"{c:g}*" + "*".join(f"x{i + 1}^{e}" for i, e in enumerate(exps) if e)
            if any(exps) else f"{c:g}"
            for exps, c in self._terms.items())
        return f"Polynomial({self._dimension}, {body})"

    def coefficient(self, exponents):
        return self._terms.get(tuple(exponents), 0.0)

    def degree(self):
        """Total degree; -1 for the zero polynomial."""
        if not self._terms:
            return -1
        return int(self._exps.sum(axis=1).max())

    def min_degree(self):
        if not self._terms:
            return -1
        return int(self._exps.sum(axis=1).min())

    def is_homogeneous(self):
        if not self._terms:
            return True
        degrees = self._exps.sum(axis=1)
        return bool(np.all(degrees == degrees[0]))

    def max_abs_coefficient(self):
        return float(np.abs(self._coeffs).max()) if self._terms else 0.0

    # --- arithmetic (new values only) ---

    def _check_same(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        if other._dimension != self._dimension:
            raise InputError(
                f"dimension mismatch: {self._dimension} vs {other._dimension}")
        return None

    def __add__(self, other):
        if self._check_same(other) is NotImplemented:
            return NotImplemented
        terms = dict(self._terms)
        for exponents, coeff in other._terms.items():
            terms[exponents] = terms.get(exponents, 0.0) + coeff
        return Polynomial(self._dimension, terms)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        if self._check_same(other) is NotImplemented:
            return NotImplemented
        return self + (-other)

    def scale(self, factor):
        factor = float(factor)
        return Polynomial(self._dimension, {e: factor * c for e, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(other)
        if self._check_same(other) is NotImplemented:
            return NotImplemented
        terms = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return Polynomial(self._dimension, terms)

    __rmul__ = __mul__

    def part(self, degree):
        """Homogeneous part of the given total degree."""
        return Polynomial(self._dimension,
                          {e: c for e, c in self._terms.items() if sum(e) == degree})

    def truncate(self, max_degree):
        return Polynomial(self._dimension,
                          {e: c for e, c in self._terms.items() if sum(e) <= max_degree})

    def drop_small(self, tol):
        return Polynomial(self._dimension,
                          {e: c for e, c in self._terms.items() if abs(c) > tol})

    def partial(self, index):
        """Partial derivative with respect to variable `index` (0-based)."""
        terms = {}
        for exponents, coeff in self._terms.items():
            if exponents[index]:
                lowered = list(exponents)
                lowered[index] -= 1
                terms[tuple(lowered)] = coeff * exponents[index]
        return Polynomial(self._dimension, terms)

    # --- evaluation ---

    def _check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self._dimension,):
            raise InputError(
                f"point has shape {x.shape}, expected ({self._dimension},)")
        return x

    @staticmethod
    def _fsum_terms(exps, coeffs, x):
        if len(coeffs) == 0:
            return 0.0
        monomials = np.prod(x[None, :] ** exps, axis=1)
        return math.fsum(coeffs * monomials)

    def _tables(self):
        if self._grad_tables is None:
            grad = []
            for i in range(self._dimension):
                d = self.partial(i)
                grad.append((d._exps, d._coeffs, d))
            hess = {}
            for i in range(self._dimension):
                di = grad[i][2]
                for j in range(i, self._dimension):
                    dij = di.partial(j)
                    hess[(i, j)] = (dij._exps, dij._coeffs)
            self._grad_tables = grad
            self._hess_tables = hess
        return self._grad_tables, self._hess_tables

    def __call__(self, x):
        x = self._check_point(x)
        return self._fsum_terms(self._exps, self._coeffs, x)

    def gradient(self, x):
        x = self._check_point(x)
        grad, _ = self._tables()
        return np.array([self._fsum_terms(e, c, x) for e, c, _ in grad])

    def hessian(self, x):
        x = self._check_point(x)
        _, hess = self._tables()
        n = self._dimension
        out = np.zeros((n, n))
        for (i, j), (e, c) in hess.items():
            out[i, j] = out[j, i] = self._fsum_terms(e, c, x)
        return out

    def evaluate_many(self, points):
        """Vectorized evaluation at the rows of `points` (plain summation, no fsum)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self._dimension:
            raise InputError(
                f"points have {points.shape[1]} columns, expected {self._dimension}")
        if not self._terms:
            return np.zeros(points.shape[0])
        monomials = np.prod(points[:, None, :] ** self._exps[None, :, :], axis=2)
        return monomials @ self._coeffs

    def gradient_many(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        grad, _ = self._tables()
        return np.stack([d.evaluate_many(points) for _, _, d in grad], axis=1)

    def hessian_many(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        grad, _ = self._tables()
        n = self._dimension
        out = np.zeros((points.shape[0], n, n))
        for i in range(n):
            di = grad[i][2]
            for j in range(i, n):
                out[:, i, j] = out[:, j, i] = di.partial(j).evaluate_many(points)
        return out


def evaluate_jet(poly, x, order=1):
    """
    Value, gradient and Hessian of a polynomial at a point.

    Args:
        poly: Polynomial
        x: Point of length J
        order: 0 (value), 1 (value and gradient) or 2 (value, gradient, Hessian)

    Returns:
        Jet with the requested entries; unrequested entries are None
    """
    if order not in (0, 1, 2):
        raise InputError(f"order must be 0, 1 or 2, got {order}")
    value = poly(x)
    gradient = poly.gradient(x) if order >= 1 else None
    hessian = poly.hessian(x) if order >= 2 else None
    return Jet(value, gradient, hessian)


class HomogeneousDecomposition(NamedTuple):
    parts: list

    def degrees(self):
        return [degree for degree, _ in self.parts]

    def reassemble(self, dimension):
        total = Polynomial.zero(dimension)
        for _, part in self.parts:
            total = total + part
        return total

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)


def homogeneous_parts(poly):
    """Group the terms of `poly` by total degree, lowest degree first."""
    grouped = {}
    for exponents, coeff in poly.terms.items():
        grouped.setdefault(sum(exponents), {})[exponents] = coeff
    return HomogeneousDecomposition(
        [(degree, Polynomial(poly.dimension, grouped[degree])) for degree in sorted(grouped)])


def order_of_integrability(poly, zero_tol=ZERO_TOL):
    """
    Order of integrability p and the leading homogeneous part f_p.

    Args:
        poly: Reduced functional (or any potential) with f(0)=0, grad f(0)=0, Hess f(0)=0
        zero_tol: Coefficients with magnitude <= zero_tol count as zero

    Returns:
        (p, f_p) with sub-tolerance coefficients removed from f_p
    """
    for degree, part in homogeneous_parts(poly):
        if degree <= 2 and part.max_abs_coefficient() > zero_tol:
            raise PreconditionError(
                f"degree-{degree} part has coefficient {part.max_abs_coefficient():.3e} "
                f"above zero_tol={zero_tol:g}; expand about a critical point with "
                f"vanishing Hessian")
    for degree, part in homogeneous_parts(poly):
        if degree < 3:
            continue
        leading = part.drop_small(zero_tol)
        if leading:
            return degree, leading
    raise IntegrableFunctionalError(
        "every part of degree >= 3 is below zero_tol: the functional is constant "
        "to the resolved order (integrable case, decay is exponential)")
