"""
Critical points of the leading homogeneous part f_p restricted to the unit sphere.

The catalog produced here (critical points, critical values, Morse data) feeds the
Adams-Simon check, the predicted rate beta and the trajectory classifier.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import null_space
from scipy.spatial.distance import pdist
from scipy.stats import norm, qmc
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from .config import (
    ANGLE_DEDUP,
    AS_VALUE_TOL,
    DESCENT_MAX_ITER,
    GRAD_TOL,
    HESSIAN_ZERO_TOL,
    LOJ_FLAT_TOL,
    LOJ_RADIUS,
    LOJ_SAMPLES,
    MANIFOLD_SHARE,
    MANIFOLD_SPREAD,
    MULTISTART_FACTOR,
    NEWTON_MAX_ITER,
    NEWTON_STEP_TOL,
    VALUE_CLUSTER_TOL,
)
from .errors import DegenerateFitError, InputError, PreconditionError, SearchFailure

UNIT_TOL = 1e-10


@dataclass(frozen=True)
class SphericalCritical:
    theta: np.ndarray
    value: float
    grad_residual: float
    morse_signature: tuple
    cluster_id: int

    def to_dict(self):
        return {
            "theta": [float(t) for t in self.theta],
            "value": float(self.value),
            "grad_residual": float(self.grad_residual),
            "morse_signature": list(self.morse_signature),
            "cluster_id": int(self.cluster_id),
        }


@dataclass(frozen=True)
class CriticalManifold:
    """A value cluster whose points fill a positive-dimensional set."""
    value: float
    cluster_id: int
    samples: np.ndarray
    spread: float

    def to_dict(self):
        return {
            "value": float(self.value),
            "cluster_id": int(self.cluster_id),
            "n_samples": int(len(self.samples)),
            "spread": float(self.spread),
            "samples": [[float(t) for t in s] for s in self.samples],
        }


@dataclass
class CriticalCatalog:
    p: int
    points: List[SphericalCritical]
    values: List[float]
    min_gap: Optional[float]
    manifolds: List[CriticalManifold] = field(default_factory=list)
    cluster_tol: float = VALUE_CLUSTER_TOL
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points) + sum(len(m.samples) for m in self.manifolds)

    def all_thetas(self):
        """Every cataloged direction, manifold samples included."""
        rows = [pt.theta for pt in self.points]
        for manifold in self.manifolds:
            rows.extend(manifold.samples)
        if not rows:
            return np.zeros((0, 0))
        return np.array(rows)

    def all_values(self):
        vals = [pt.value for pt in self.points]
        for manifold in self.manifolds:
            vals.extend([manifold.value] * len(manifold.samples))
        return np.array(vals)

    def zero_value_thetas(self, value_tol=AS_VALUE_TOL):
        thetas = self.all_thetas()
        if len(thetas) == 0:
            return thetas
        return thetas[np.abs(self.all_values()) <= value_tol]

    def nearest(self, theta):
        """Index into `points` of the cataloged point closest to theta (None if no points)."""
        if not self.points:
            return None
        theta = np.asarray(theta, dtype=float)
        dists = [angular_distance(theta, pt.theta) for pt in self.points]
        return int(np.argmin(dists))

    def to_dict(self):
        return {
            "p": self.p,
            "values": [float(v) for v in self.values],
            "min_gap": None if self.min_gap is None else float(self.min_gap),
            "cluster_tol": self.cluster_tol,
            "points": [pt.to_dict() for pt in self.points],
            "manifolds": [m.to_dict() for m in self.manifolds],
            "diagnostics": self.diagnostics,
        }


def angular_distance(a, b):
    """Great-circle distance between unit vectors."""
    chord = np.linalg.norm(np.asarray(a) - np.asarray(b))
    return 2.0 * math.asin(min(1.0, chord / 2.0))


def canonical_sign(theta):
    """Flip theta so that its first nonzero component is positive."""
    theta = np.asarray(theta, dtype=float)
    nonzero = np.flatnonzero(np.abs(theta) > 1e-12)
    if len(nonzero) and theta[nonzero[0]] < 0:
        return -theta
    return theta


def _check_leading(f_p):
    if not f_p:
        raise PreconditionError("f_p is identically zero")
    if not f_p.is_homogeneous():
        raise PreconditionError("f_p must be homogeneous")
    p = f_p.degree()
    if p < 3:
        raise PreconditionError(f"f_p must have degree >= 3, got {p}")
    return p


def spherical_gradient(f_p, theta):
    """
    Tangential gradient of f_p restricted to the sphere at theta.

    Returns grad f_p(theta) - p f_p(theta) theta, which is orthogonal to theta by the
    Euler identity.
    """
    theta = np.asarray(theta, dtype=float)
    if abs(np.linalg.norm(theta) - 1.0) > UNIT_TOL:
        raise InputError(f"theta must be a unit vector, |theta| = {np.linalg.norm(theta)!r}")
    p = f_p.degree()
    return f_p.gradient(theta) - p * f_p(theta) * theta


def tangential_hessian(f_p, theta):
    """Hessian of f_p on the sphere, expressed in an orthonormal tangent basis."""
    theta = np.asarray(theta, dtype=float)
    p = f_p.degree()
    basis = null_space(theta[None, :])
    return basis.T @ f_p.hessian(theta) @ basis - p * f_p(theta) * np.eye(basis.shape[1])


def morse_signature(f_p, theta, zero_tol=HESSIAN_ZERO_TOL):
    if len(theta) == 1:
        return (0, 0, 0)
    eig = np.linalg.eigvalsh(tangential_hessian(f_p, theta))
    return (int(np.sum(eig < -zero_tol)),
            int(np.sum(np.abs(eig) <= zero_tol)),
            int(np.sum(eig > zero_tol)))


def _normalize_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _batch_spherical_gradient(f_p, p, thetas):
    vals = f_p.evaluate_many(thetas)
    grads = f_p.gradient_many(thetas)
    return vals, grads - p * vals[:, None] * thetas


def _batch_descent(f_p, p, thetas, sign, max_iter=DESCENT_MAX_ITER, stop_tol=1e-4):
    """Projected gradient descent (sign=+1) or ascent (sign=-1) with Armijo backtracking."""
    thetas = thetas.copy()
    step = np.full(len(thetas), 1.0 / max(1.0, p * np.abs(f_p.coefficients).sum()))
    for _ in range(max_iter):
        vals, sgrad = _batch_spherical_gradient(f_p, p, thetas)
        gnorm2 = np.sum(sgrad ** 2, axis=1)
        active = gnorm2 > stop_tol ** 2
        if not np.any(active):
            break
        pending = active.copy()
        for _ in range(40):
            if not np.any(pending):
                break
            idx = np.flatnonzero(pending)
            trial = _normalize_rows(thetas[idx] - sign * step[idx, None] * sgrad[idx])
            decrease = sign * (f_p.evaluate_many(trial) - vals[idx])
            ok = decrease <= -1e-4 * step[idx] * gnorm2[idx]
            thetas[idx[ok]] = trial[ok]
            step[idx[ok]] *= 2.0
            step[idx[~ok]] *= 0.5
            pending[idx[ok]] = False
    return thetas


def _batch_newton(f_p, p, thetas, max_iter=NEWTON_MAX_ITER, step_tol=NEWTON_STEP_TOL):
    """Tangential Newton iteration with the normalization retraction.

    The Newton direction solves the bordered system
        [H_t  theta] [d ]   [-g]
        [theta^T  0] [mu] = [ 0]
    so that d stays tangent; singular Hessians are handled by pseudo-inverse.
    """
    thetas = thetas.copy()
    n, dim = thetas.shape
    active = np.ones(n, dtype=bool)
    eye = np.eye(dim)
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        th = thetas[idx]
        vals, sgrad = _batch_spherical_gradient(f_p, p, th)
        proj = eye[None] - th[:, :, None] * th[:, None, :]
        hess = proj @ f_p.hessian_many(th) @ proj - p * vals[:, None, None] * proj
        bordered = np.zeros((len(idx), dim + 1, dim + 1))
        bordered[:, :dim, :dim] = hess
        bordered[:, :dim, dim] = th
        bordered[:, dim, :dim] = th
        rhs = np.zeros((len(idx), dim + 1))
        rhs[:, :dim] = -sgrad
        sol = np.einsum("nij,nj->ni", np.linalg.pinv(bordered, rcond=1e-14), rhs)
        step = sol[:, :dim]
        length = np.linalg.norm(step, axis=1)
        # keep each update inside a half-radian ball
        scale = np.minimum(1.0, 0.5 / np.maximum(length, 1e-300))
        thetas[idx] = _normalize_rows(th + scale[:, None] * step)
        active[idx[length < step_tol]] = False
    return thetas


def _sobol_directions(dimension, n_starts, seed):
    sampler = qmc.Sobol(d=dimension, scramble=True, seed=seed)
    points = sampler.random_base2(m=max(1, math.ceil(math.log2(n_starts))))[:n_starts]
    gauss = norm.ppf(np.clip(points, 1e-12, 1 - 1e-12))
    gauss[np.linalg.norm(gauss, axis=1) < 1e-12] = 1.0
    return _normalize_rows(gauss)


def _dedupe(thetas, radius):
    chord = 2.0 * math.sin(radius / 2.0)
    kept = []
    for theta in thetas:
        if not kept or np.min(np.linalg.norm(np.asarray(kept) - theta, axis=1)) >= chord:
            kept.append(theta)
    return kept


def _cluster_values(values, tol):
    """Single-linkage clustering of sorted values; returns cluster labels in value order."""
    order = np.argsort(values, kind="stable")
    labels = np.empty(len(values), dtype=int)
    current = 0
    for rank, i in enumerate(order):
        if rank and values[i] - values[order[rank - 1]] > tol:
            current += 1
        labels[i] = current
    return labels


def find_critical_points(f_p, n_starts=None, seed=0, tol=GRAD_TOL,
                         dedup_radius=ANGLE_DEDUP, cluster_tol=VALUE_CLUSTER_TOL):
    """
    Multistart search for the critical points of f_p on the unit sphere.

    Every start runs projected descent, projected ascent and a direct tangential
    Newton iteration; all three are polished by Newton. Antipodes are always
    added (for odd p the value flips sign).

    Args:
        f_p: Homogeneous polynomial of degree p >= 3
        n_starts: Number of Sobol directions (default 64 * J)
        seed: Seed of the scrambled Sobol sequence
        tol: Accepted spherical gradient residual

    Returns:
        CriticalCatalog sorted by (value, theta)
    """
    p = _check_leading(f_p)
    dim = f_p.dimension
    if n_starts is None:
        n_starts = MULTISTART_FACTOR * dim

    if dim == 1:
        candidates = np.array([[1.0], [-1.0]])
        n_runs = 2
    else:
        if n_starts < 1:
            raise InputError("n_starts must be positive")
        starts = _sobol_directions(dim, n_starts, seed)
        runs = [
            _batch_newton(f_p, p, _batch_descent(f_p, p, starts, +1.0)),
            _batch_newton(f_p, p, _batch_descent(f_p, p, starts, -1.0)),
            _batch_newton(f_p, p, starts),
        ]
        candidates = np.vstack(runs)
        n_runs = len(candidates)

    residuals = np.array([np.linalg.norm(spherical_gradient(f_p, c)) for c in candidates])
    converged = candidates[residuals <= tol]
    if len(converged) == 0:
        raise SearchFailure(
            f"none of {n_runs} multistart runs reached |grad| <= {tol:g}",
            diagnostics={"n_runs": n_runs, "best_residual": float(residuals.min()),
                         "seed": seed})

    distinct = _dedupe(converged, dedup_radius)
    with_antipodes = _dedupe(distinct + [-t for t in distinct], dedup_radius)
    # antipodes must pass the same residual test
    with_antipodes = [t for t in with_antipodes
                      if np.linalg.norm(spherical_gradient(f_p, t)) <= tol]

    thetas = np.array(with_antipodes)
    values = np.array([f_p(t) for t in thetas])
    labels = _cluster_values(values, cluster_tol)

    points, manifolds, catalog_values = [], [], []
    for cluster in range(labels.max() + 1):
        members = np.flatnonzero(labels == cluster)
        value = float(np.mean(values[members]))
        catalog_values.append(value)
        member_thetas = thetas[members]
        spread = 0.0
        if len(members) > 1:
            spread = 2.0 * math.asin(min(1.0, pdist(member_thetas).max() / 2.0))
        if dim > 1 and len(members) >= MANIFOLD_SHARE * len(converged) and spread > MANIFOLD_SPREAD:
            order = sorted(range(len(members)), key=lambda k: tuple(member_thetas[k]))
            manifolds.append(CriticalManifold(value, cluster, member_thetas[order], spread))
            continue
        for i in members:
            theta = thetas[i]
            points.append(SphericalCritical(
                theta=theta,
                value=float(values[i]),
                grad_residual=float(np.linalg.norm(spherical_gradient(f_p, theta))),
                morse_signature=morse_signature(f_p, theta),
                cluster_id=int(cluster),
            ))

    points.sort(key=lambda pt: (pt.value, tuple(pt.theta)))
    gaps = np.diff(catalog_values)
    return CriticalCatalog(
        p=p,
        points=points,
        values=catalog_values,
        min_gap=float(gaps.min()) if len(gaps) else None,
        manifolds=manifolds,
        cluster_tol=cluster_tol,
        diagnostics={"n_starts": int(n_starts), "n_runs": int(n_runs),
                     "n_converged": int(len(converged)), "seed": seed, "tol": tol},
    )


@dataclass(frozen=True)
class AdamsSimonVerdict:
    kind: str  # "Positivity", "NonNegativityOnly" or "Fails"
    witness: Optional[np.ndarray]
    value: float
    scaled_by: Optional[float] = None

    def to_dict(self):
        return {
            "kind": self.kind,
            "witness": None if self.witness is None else [float(t) for t in self.witness],
            "value": float(self.value),
            "m": self.scaled_by,
        }


def adams_simon_check(f_p, catalog, m=None, value_tol=AS_VALUE_TOL):
    """
    Adams-Simon positivity / non-negativity of f_p (parabolic) or m^-1 f_p (elliptic).

    The witness is the cataloged direction with the largest (scaled) value; ties go to
    the direction whose first nonzero component is positive.
    """
    thetas = catalog.all_thetas()
    if len(thetas) == 0:
        raise InputError("empty critical catalog")
    if m is not None and m == 0:
        raise InputError("m must be nonzero")
    factor = 1.0 if m is None else 1.0 / m
    scaled = factor * np.array([f_p(t) for t in thetas])
    best = scaled.max()
    ties = [thetas[i] for i in np.flatnonzero(scaled >= best - value_tol)]
    ties.sort(key=lambda t: (tuple(canonical_sign(t)) != tuple(t), tuple(-np.asarray(t))))
    witness = ties[0]
    if best > value_tol:
        kind = "Positivity"
    elif best >= -value_tol:
        kind = "NonNegativityOnly"
    else:
        kind = "Fails"
        witness = None
    return AdamsSimonVerdict(kind, witness, float(best), m)


def slow_decay_admissible(verdict):
    """False when non-negativity fails, in which case every decaying solution decays exponentially."""
    return verdict.kind != "Fails"


def predicted_beta(p, alpha0):
    """Limit of t^(1/(p-2)) |z(t)| in the first case of the dichotomy: (alpha0 p (p-2))^(-1/(p-2))."""
    if p < 3:
        raise InputError(f"p must be >= 3, got {p}")
    if not alpha0 > 0:
        raise InputError(f"alpha0 must be positive, got {alpha0}")
    return (alpha0 * p * (p - 2)) ** (-1.0 / (p - 2))


@dataclass(frozen=True)
class LojasiewiczFit:
    c1: float
    rho1: float
    fit_r2: float
    n_used: int

    def to_dict(self):
        return {"c1": self.c1, "rho1": self.rho1, "fit_r2": self.fit_r2, "n_used": self.n_used}


def lojasiewicz_fit(f_p, theta_star, n_samples=LOJ_SAMPLES, radius=LOJ_RADIUS, seed=0):
    """
    Fit |grad f_p-hat(theta)| ~ c1 |f_p-hat(theta) - f_p-hat(theta*)|^rho1 near theta*.

    Samples are placed along random tangent directions at log-uniform angles in
    [radius/100, radius].
    """
    center = np.asarray(getattr(theta_star, "theta", theta_star), dtype=float)
    if abs(np.linalg.norm(center) - 1.0) > UNIT_TOL:
        raise InputError("theta_star must be a unit vector")
    if f_p.dimension < 2:
        raise DegenerateFitError("the sphere S^0 has no tangent directions")
    rng = np.random.default_rng(seed)
    value_star = f_p(center)

    directions = rng.normal(size=(n_samples, f_p.dimension))
    directions -= (directions @ center)[:, None] * center[None, :]
    directions = _normalize_rows(directions)
    angles = np.exp(rng.uniform(math.log(radius / 100.0), math.log(radius), size=n_samples))
    samples = np.cos(angles)[:, None] * center[None, :] + np.sin(angles)[:, None] * directions
    samples = _normalize_rows(samples)

    gaps = np.array([abs(f_p(s) - value_star) for s in samples])
    slopes = np.array([np.linalg.norm(spherical_gradient(f_p, s)) for s in samples])
    keep = (gaps > LOJ_FLAT_TOL) & (slopes > 0)
    if keep.sum() < 3:
        raise DegenerateFitError(
            f"f_p is flat around theta* (only {int(keep.sum())} samples above {LOJ_FLAT_TOL:g})")

    x = np.log(gaps[keep]).reshape(-1, 1)
    y = np.log(slopes[keep])
    model = LinearRegression().fit(x, y)
    r2 = r2_score(y, model.predict(x))
    return LojasiewiczFit(float(math.exp(model.intercept_)), float(model.coef_[0]),
                          float(r2), int(keep.sum()))
