"""
Long-horizon adaptive integration of the model dynamics.

integrate_ode is a Dormand-Prince 5(4) pair (first same as last) with a
proportional-integral step controller and the standard fourth-order continuous
extension for output on a log-spaced schedule. The three model flows are thin
layers on top of it:

    gradient_flow    z' = -grad f(z) + G(z)
    parabolic_flow   u' = M(u) + N2(u)
    elliptic_flow    q' = L q + E(q),  q = (u, u' - m u / 2)
"""

import copy
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from .config import (
    ABS_TOL,
    CHART,
    ESCAPE_FACTOR,
    FLOOR_TOL,
    MAX_STEPS,
    N_LINEAR,
    OUTPUT_RATIO,
    PARTITION_TOL,
    PERTURBATION_EPSILON,
    REL_TOL,
    T_LINEAR,
)
from .errors import ConfigError, InputError
from .potential import order_of_integrability
from .spectral import (
    SpectralSystem,
    basis_psi,
    build_phase_operator,
    mode_rates,
    project_coefficients,
)
from .sphere import angular_distance, spherical_gradient

TERMINATIONS = ("horizon", "floor", "step_failure", "escaped")


@dataclass
class IntegratorConfig:
    t_end: float
    rel_tol: float = REL_TOL
    abs_tol: float = ABS_TOL
    output_ratio: float = OUTPUT_RATIO
    t_linear: float = T_LINEAR
    n_linear: int = N_LINEAR
    max_steps: int = MAX_STEPS
    chart: str = CHART
    floor_tol: float = FLOOR_TOL
    escape_factor: float = ESCAPE_FACTOR
    max_step: float = math.inf

    def __post_init__(self):
        if not self.rel_tol > 0 or not self.abs_tol > 0:
            raise ConfigError("rel_tol and abs_tol must be positive")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if not self.output_ratio > 1:
            raise ConfigError(f"output_ratio must exceed 1, got {self.output_ratio}")
        if self.chart not in ("cartesian", "sigma_theta"):
            raise ConfigError(f"unknown chart '{self.chart}'")
        if self.n_linear < 1 or self.t_linear <= 0:
            raise ConfigError("linear output phase needs t_linear > 0 and n_linear >= 1")
        if self.escape_factor <= 1:
            raise ConfigError("escape_factor must exceed 1")

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return IntegratorConfig(**values)

    def to_dict(self):
        out = asdict(self)
        if math.isinf(out["max_step"]):
            out["max_step"] = None
        return out


def output_schedule(cfg, t0=0.0):
    """Global output grid (linear up to t_linear, then geometric) restricted to [t0, t_end]."""
    t_lin = min(cfg.t_linear, cfg.t_end)
    times = list(np.linspace(0.0, t_lin, cfg.n_linear + 1))
    t = cfg.t_linear
    while t < cfg.t_end:
        t *= cfg.output_ratio
        times.append(min(t, cfg.t_end))
    grid = np.array(sorted(set(times)))
    grid = grid[(grid > t0) & (grid <= cfg.t_end)]
    return np.concatenate([[t0], grid])


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray
    step_sizes: np.ndarray
    error_estimates: np.ndarray
    termination: str
    stats: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    modes: Optional[np.ndarray] = None
    mode_labels: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self):
        return self.states[-1]

    def norms(self):
        return np.linalg.norm(self.states, axis=1)


# Dormand-Prince 5(4) tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension
D = np.array([-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
              -10690763975 / 1880347072, 701980252875 / 199316789632,
              -1453857185 / 822651844, 69997945 / 29380423])

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
BETA_PI = 0.04
ALPHA_PI = 0.2 - 0.75 * BETA_PI


def _error_norm(vec, y, y_new, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    return math.sqrt(np.mean((vec / scale) ** 2))


def _initial_step(field_fn, y0, f0, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = math.sqrt(np.mean((y0 / scale) ** 2))
    d1 = math.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = field_fn(y0 + h0 * f0)
    d2 = math.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, cfg.max_step)


def _dense(y_old, y_new, k, h, theta):
    ydiff = y_new - y_old
    bspl = h * k[0] - ydiff
    rc4 = ydiff - h * k[6] - bspl
    rc5 = h * (D @ k)
    theta1 = 1.0 - theta
    return y_old + theta * (ydiff + theta1 * (bspl + theta * (rc4 + theta1 * rc5)))


def integrate_ode(field_fn, y0, cfg, t0=0.0, monitor=None):
    """
    Integrate the autonomous system y' = field_fn(y) from t0 to cfg.t_end.

    Args:
        field_fn: Map from state (1-D array) to derivative
        y0: Initial state
        cfg: IntegratorConfig
        t0: Initial time; output times are the global schedule restricted to [t0, t_end]
        monitor: Optional map state -> size used for the floor and escape tests
            (Euclidean norm by default)

    Returns:
        Trajectory; termination is one of horizon, floor, step_failure, escaped.
        Partial trajectories are returned, never raised.
    """
    y = np.array(y0, dtype=float)
    if y.ndim != 1:
        raise InputError("initial state must be a 1-D vector")
    size = monitor or np.linalg.norm
    f = np.asarray(field_fn(y), dtype=float)
    if not np.all(np.isfinite(f)):
        raise InputError("field is not finite at the initial state")

    schedule = output_schedule(cfg, t0)
    size0 = size(y)
    # a state starting below the floor (e.g. the origin) is followed to the horizon
    watch = size0 >= cfg.floor_tol

    times, states, steps, errors = [t0], [y.copy()], [0.0], [0.0]
    stats = {"n_steps": 0, "n_accepted": 0, "n_rejected": 0, "n_evals": 1}
    next_out = 1
    t = t0
    h = _initial_step(field_fn, y, f, cfg)
    stats["n_evals"] += 1
    err_old = 1e-4
    rejected_last = False
    termination = "horizon"

    k = np.zeros((7, len(y)))
    while t < cfg.t_end:
        if stats["n_steps"] >= cfg.max_steps:
            termination = "step_failure"
            stats["reason"] = "max_steps"
            break
        h = min(h, cfg.t_end - t, cfg.max_step)
        if h <= 16 * np.finfo(float).eps * max(1.0, abs(t)):
            termination = "step_failure"
            stats["reason"] = "step size underflow"
            break
        stats["n_steps"] += 1

        k[0] = f
        for s in range(1, 7):
            ys = y + h * np.dot(A[s], k[:s])
            k[s] = field_fn(ys)
        stats["n_evals"] += 6
        y_new = y + h * np.dot(B[:6], k[:6])
        if not np.all(np.isfinite(y_new)) or not np.all(np.isfinite(k[6])):
            h *= 0.25
            stats["n_rejected"] += 1
            rejected_last = True
            continue
        err = _error_norm(h * (E @ k), y, y_new, cfg)

        if err <= 1.0:
            t_new = t + h
            while next_out < len(schedule) and schedule[next_out] <= t_new * (1 + 1e-15):
                t_out = schedule[next_out]
                theta = min(1.0, (t_out - t) / h)
                y_out = y_new.copy() if theta >= 1.0 else _dense(y, y_new, k, h, theta)
                times.append(t_out)
                states.append(y_out)
                steps.append(h)
                errors.append(err)
                next_out += 1
            stats["n_accepted"] += 1
            y, f, t = y_new, k[6].copy(), t_new

            if watch:
                current = size(y)
                stopped = None
                if current < cfg.floor_tol:
                    stopped = "floor"
                elif current > cfg.escape_factor * size0:
                    stopped = "escaped"
                if stopped:
                    if times[-1] < t:
                        times.append(t)
                        states.append(y.copy())
                        steps.append(h)
                        errors.append(err)
                    termination = stopped
                    break

            fac = SAFETY * max(err, 1e-10) ** (-ALPHA_PI) * err_old ** BETA_PI
            fac = min(FAC_MAX, max(FAC_MIN, fac))
            if rejected_last:
                fac = min(1.0, fac)
            h *= fac
            err_old = max(err, 1e-4)
            rejected_last = False
        else:
            stats["n_rejected"] += 1
            h *= max(FAC_MIN, SAFETY * err ** (-ALPHA_PI))
            rejected_last = True

    states = np.array(states)
    derivatives = np.array([field_fn(s) for s in states])
    stats["n_evals"] += len(states)
    return Trajectory(
        times=np.array(times),
        states=states,
        derivatives=derivatives,
        step_sizes=np.array(steps),
        error_estimates=np.array(errors),
        termination=termination,
        stats=stats,
        meta={"t0": t0, "config": cfg.to_dict()},
    )


class Perturbation:
    """
    State-dependent perturbation G(z) = c |z|^(p - eps) e(z) with |G| <= c |z|^(p - eps).

    Args:
        amplitude: c >= 0
        epsilon: eps in (0, 1/2)
        direction: "fixed" (unit vector `vector`, default e_1) or "seeded"
            (e(z) = normalize(A z/|z| + b) with A, b drawn from `seed`)
    """

    def __init__(self, amplitude, epsilon=PERTURBATION_EPSILON, direction="fixed", vector=None, seed=0):
        if not 0.0 < epsilon < 0.5:
            raise ConfigError(f"perturbation epsilon must lie in (0, 1/2), got {epsilon}")
        if amplitude < 0:
            raise ConfigError("perturbation amplitude must be non-negative")
        if direction not in ("fixed", "seeded"):
            raise ConfigError(f"unknown perturbation direction '{direction}'")
        self.amplitude = float(amplitude)
        self.epsilon = float(epsilon)
        self.direction = direction
        self.vector = None if vector is None else np.asarray(vector, dtype=float)
        self.seed = seed
        self._dimension = None
        self._matrix = None
        self._offset = None

    def bind(self, dimension, p):
        """Copy of this perturbation with the dimension and the exponent p - eps fixed."""
        bound = copy.copy(self)
        bound._dimension = dimension
        bound.p = p
        if self.direction == "fixed":
            vec = np.zeros(dimension) if self.vector is None else self.vector.copy()
            if self.vector is None:
                vec[0] = 1.0
            if vec.shape != (dimension,) or np.linalg.norm(vec) == 0:
                raise ConfigError("fixed perturbation vector must be a nonzero vector of the flow's dimension")
            bound.vector = vec / np.linalg.norm(vec)
        else:
            rng = np.random.default_rng(self.seed)
            bound._matrix = rng.normal(size=(dimension, dimension))
            bound._offset = rng.normal(size=dimension)
        return bound

    def unit_field(self, z):
        if self.direction == "fixed":
            return self.vector
        r = np.linalg.norm(z)
        e = self._matrix @ (z / r) + self._offset
        return e / np.linalg.norm(e)

    def __call__(self, z):
        r = np.linalg.norm(z)
        if r == 0.0 or self.amplitude == 0.0:
            return np.zeros_like(z)
        return self.amplitude * r ** (self.p - self.epsilon) * self.unit_field(z)

    def to_dict(self):
        return {"amplitude": self.amplitude, "epsilon": self.epsilon,
                "direction": self.direction, "seed": self.seed,
                "vector": None if self.vector is None else self.vector.tolist()}


def gradient_flow(f, perturbation, z0, cfg, t0=0.0):
    """
    Integrate z' = -grad f(z) + G(z).

    In the sigma_theta chart the state is (sigma, theta) with sigma = |z|^-(p-2):
        sigma' = (p-2) r^(1-p) <D, theta>,   theta' = -P_theta D / r,   D = grad f - G
    and the result is mapped back to z.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (f.dimension,):
        raise InputError(f"z0 must have length {f.dimension}")
    p, f_p = order_of_integrability(f)
    if perturbation is not None:
        perturbation = perturbation.bind(f.dimension, p)

    def cartesian(z):
        g = -f.gradient(z)
        if perturbation is not None:
            g = g + perturbation(z)
        return g

    meta = {"kind": "gradient", "p": p, "f": f.to_text(),
            "perturbation": None if perturbation is None else perturbation.to_dict()}

    if cfg.chart == "cartesian" or np.linalg.norm(z0) == 0.0:
        traj = integrate_ode(cartesian, z0, cfg, t0=t0)
        traj.meta.update(meta, chart="cartesian")
        return traj

    def polar(y):
        sigma, theta = y[0], y[1:]
        theta = theta / np.linalg.norm(theta)
        r = sigma ** (-1.0 / (p - 2))
        drive = -cartesian(r * theta)
        d_sigma = (p - 2) * r ** (1 - p) * (drive @ theta)
        d_theta = -(drive - (drive @ theta) * theta) / r
        return np.concatenate([[d_sigma], d_theta])

    def radius(y):
        return y[0] ** (-1.0 / (p - 2)) if y[0] > 0 else math.inf

    r0 = np.linalg.norm(z0)
    y0 = np.concatenate([[r0 ** (-(p - 2))], z0 / r0])
    traj = integrate_ode(polar, y0, cfg, t0=t0, monitor=radius)
    sigma = traj.states[:, 0]
    theta = traj.states[:, 1:] / np.linalg.norm(traj.states[:, 1:], axis=1, keepdims=True)
    z = sigma[:, None] ** (-1.0 / (p - 2)) * theta
    traj.meta["chart_states"] = traj.states
    traj.states = z
    traj.derivatives = np.array([cartesian(s) for s in z])
    traj.meta.update(meta, chart="sigma_theta")
    return traj


class StructuredNonlinearity:
    """
    Nonlinearity b(u) * M(u) + a(u) * u' (componentwise).

    Every prefactor polynomial must vanish at the origin, so the product vanishes
    at least quadratically.
    """

    def __init__(self, prefactors=None, velocity_prefactors=None):
        self.prefactors = list(prefactors or [])
        self.velocity_prefactors = list(velocity_prefactors or [])
        for poly in self.prefactors + self.velocity_prefactors:
            if poly and poly.min_degree() < 1:
                raise ConfigError("nonlinearity prefactors must vanish at the origin")

    @property
    def uses_velocity(self):
        return bool(self.velocity_prefactors)

    def check_dimension(self, n):
        for group in (self.prefactors, self.velocity_prefactors):
            if group and len(group) != n:
                raise ConfigError(f"nonlinearity needs {n} prefactors, got {len(group)}")
            if any(poly.dimension != n for poly in group):
                raise ConfigError("nonlinearity prefactor dimension mismatch")

    def __call__(self, u, m_of_u, u_dot=None):
        out = np.zeros_like(u)
        if self.prefactors:
            out += np.array([b(u) for b in self.prefactors]) * m_of_u
        if self.velocity_prefactors and u_dot is not None:
            out += np.array([a(u) for a in self.velocity_prefactors]) * u_dot
        return out

    def to_dict(self):
        return {"prefactors": [poly.to_text() for poly in self.prefactors],
                "velocity_prefactors": [poly.to_text() for poly in self.velocity_prefactors]}


def parabolic_flow(model, nonlinearity_extra, u0, cfg, t0=0.0):
    """Integrate u' = M(u) + N2(u); modes xi_i = <u, phi_i> are attached to the trajectory."""
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (model.n,):
        raise InputError(f"u0 must have length {model.n}")
    if nonlinearity_extra is not None:
        if nonlinearity_extra.uses_velocity:
            raise ConfigError("parabolic nonlinearity cannot depend on u'")
        nonlinearity_extra.check_dimension(model.n)

    def rhs(u):
        m_of_u = model.operator(u)
        if nonlinearity_extra is None:
            return m_of_u
        return m_of_u + nonlinearity_extra(u, m_of_u)

    traj = integrate_ode(rhs, u0, cfg, t0=t0)
    traj.modes = traj.states @ model.eigenvectors
    traj.mode_labels = [f"xi_{i + 1}" for i in range(model.n)]
    traj.meta.update(kind="parabolic", lambdas=model.lambdas.tolist(), J=model.J)
    return traj


def elliptic_flow(model, m, u0, v0, cfg, nonlinearity=None, projection="full",
                  slaving_iterations=8, t0=0.0):
    """
    Integrate u'' - m u' + M(u) = N1(u, u') as q' = L q + E(q), q = (u, u' - m u / 2).

    projection="full" integrates q directly; generic data then excites growing modes
    and escape is an expected outcome. projection="stable" integrates only the
    coefficients of non-growing basis vectors and slaves every growing coefficient c_U
    to -A_UU^{-1} E_U(q) (the bounded solution to leading order). The part of the
    initial data dropped by the projection is recorded as meta["projection_defect"].

    States are stored in ambient coordinates (u, w); mode coefficients G(q, psi) are
    attached as trajectory modes.
    """
    if projection not in ("full", "stable"):
        raise ConfigError(f"unknown projection '{projection}'")
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if u0.shape != (model.n,) or v0.shape != (model.n,):
        raise InputError(f"u0 and v0 must have length {model.n}")
    if nonlinearity is not None:
        nonlinearity.check_dimension(model.n)

    spec = SpectralSystem.from_model(model, m)
    basis = basis_psi(spec)
    phase_op = build_phase_operator(spec)
    weights = spec.gram_weights()
    n = model.n
    phi = model.eigenvectors
    lambdas = model.lambdas

    def forcing(q_eig):
        """E(q) in eigen coordinates: (0, N1 - (M(u) - L u))."""
        v, w = q_eig[:n], q_eig[n:]
        u = phi @ v
        m_of_u = model.operator(u)
        e1 = -(m_of_u - model.L @ u)
        if nonlinearity is not None:
            u_dot = phi @ (w + 0.5 * m * v)
            e1 = e1 + nonlinearity(u, m_of_u, u_dot)
        return np.concatenate([np.zeros(n), phi.T @ e1])

    q0_eig = np.concatenate([phi.T @ u0, phi.T @ (v0 - 0.5 * m * u0)])
    meta = {"kind": "elliptic", "m": float(m), "projection": projection,
            "spectrum": spec.to_dict()}

    if projection == "full":
        def rhs(q):
            return phase_op @ q + forcing(q)
        traj = integrate_ode(rhs, q0_eig, cfg, t0=t0)
        eig_states = traj.states
        meta["projection_defect"] = 0.0
    else:
        rates = mode_rates(spec, basis)
        unstable = [label for label in basis.labels if rates[label] > PARTITION_TOL]
        u_idx = [basis.labels.index(l) for l in unstable]
        s_idx = [i for i in range(len(basis.labels)) if i not in u_idx]
        b_s = basis.vectors[:, s_idx]
        b_u = basis.vectors[:, u_idx]
        a_full = basis.vectors.T @ (weights[:, None] * (phase_op @ basis.vectors))
        a_ss = a_full[np.ix_(s_idx, s_idx)]
        a_uu_inv = np.linalg.inv(a_full[np.ix_(u_idx, u_idx)]) if u_idx else np.zeros((0, 0))

        def slave(c_s):
            base = b_s @ c_s
            c_u = np.zeros(len(u_idx))
            if not u_idx:
                return base, c_u
            for _ in range(slaving_iterations):
                q = base + b_u @ c_u
                c_u = -a_uu_inv @ (b_u.T @ (weights * forcing(q)))
            return base + b_u @ c_u, c_u

        def rhs(c_s):
            q, _ = slave(c_s)
            return a_ss @ c_s + b_s.T @ (weights * forcing(q))

        c0 = basis.vectors.T @ (weights * q0_eig)
        c_s0 = c0[s_idx]
        _, c_u_slaved = slave(c_s0)
        defect = c0[u_idx] - c_u_slaved
        traj = integrate_ode(rhs, c_s0, cfg, t0=t0,
                             monitor=lambda c: np.linalg.norm(slave(c)[0]))
        eig_states = np.array([slave(c)[0] for c in traj.states])
        traj.meta["stable_coefficients"] = traj.states
        meta["projection_defect"] = float(np.sqrt(np.sum(defect ** 2)))
        meta["unstable_modes"] = unstable
        traj.derivatives = np.array([phase_op @ q + forcing(q) for q in eig_states])
        traj.derivatives = np.array([spec.to_ambient(d) for d in traj.derivatives])

    if projection == "full":
        traj.derivatives = np.array([spec.to_ambient(d) for d in traj.derivatives])
    records = [project_coefficients(spec, basis, q) for q in eig_states]
    traj.states = np.array([spec.to_ambient(q) for q in eig_states])
    if records:
        columns = records[0].columns()
        traj.mode_labels = [name for name, _ in columns]
        traj.modes = np.array([[value for _, value in rec.columns()] for rec in records])
    traj.meta.update(meta)
    traj.meta["lambdas"] = lambdas.tolist()
    return traj


@dataclass
class PolarSeries:
    times: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    fhat: np.ndarray
    grad_norm: np.ndarray
    arc_length: np.ndarray
    t_pow_r: np.ndarray
    p: int
    truncated: bool = False

    def __len__(self):
        return len(self.times)

    def to_frame(self):
        data = {"t": self.times, "r": self.r}
        for j in range(self.theta.shape[1]):
            data[f"theta_{j + 1}"] = self.theta[:, j]
        data["fhat"] = self.fhat
        data["grad_norm"] = self.grad_norm
        data["arc_length"] = self.arc_length
        data["t_pow_r"] = self.t_pow_r
        return pd.DataFrame(data)


def polar_track(traj, p, f_p, floor_tol=FLOOR_TOL, coords=None):
    """
    Polar view z = r theta of a trajectory (or of the given neutral coordinates).

    The series stops before the first sample with r < floor_tol and is then flagged
    as truncated. Arc length is the cumulative great-circle distance between
    consecutive directions.
    """
    z = traj.states if coords is None else np.asarray(coords, dtype=float)
    times = np.asarray(traj.times, dtype=float)
    r = np.linalg.norm(z, axis=1)
    below = np.flatnonzero(r < floor_tol)
    truncated = bool(len(below))
    keep = below[0] if truncated else len(r)
    times, z, r = times[:keep], z[:keep], r[:keep]

    theta = z / r[:, None] if len(r) else np.zeros((0, z.shape[1]))
    fhat = np.array([f_p(th) for th in theta])
    grad_norm = np.array([np.linalg.norm(spherical_gradient(f_p, th)) for th in theta])
    steps = [angular_distance(a, b) for a, b in zip(theta[:-1], theta[1:])]
    arc = np.concatenate([[0.0], np.cumsum(steps)]) if len(theta) else np.zeros(0)
    t_pow_r = times ** (1.0 / (p - 2)) * r
    return PolarSeries(times, r, theta, fhat, grad_norm, arc, t_pow_r, p, truncated)


def trajectory_frame(traj, polar=None, prefix="z"):
    """Trajectory (plus optional polar columns) as a DataFrame ready for CSV."""
    data = {"t": traj.times}
    for j in range(traj.states.shape[1]):
        data[f"{prefix}_{j + 1}"] = traj.states[:, j]
    if traj.modes is not None:
        for j, label in enumerate(traj.mode_labels):
            data[label] = traj.modes[:, j]
    frame = pd.DataFrame(data)
    if polar is not None:
        extra = polar.to_frame().drop(columns=["t"])
        extra.index = range(len(extra))
        frame = frame.iloc[:len(extra)].join(extra)
    return frame
