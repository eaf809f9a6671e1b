"""
Verdicts on trajectories: exponential or algebraic decay, the two cases of the
gradient-flow dichotomy, fast-decay cases of the elliptic mode equations,
Merle-Zaag dominance, neutral-mode residuals and secant arc length.

Every threshold is a finite-data decision and is recorded in the reports.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from .config import (
    AS_VALUE_TOL,
    CROSSCHECK_TOL,
    DIST_TOL,
    FLOOR_TOL,
    FREQUENCY_TOL,
    GROWTH_FACTOR,
    MIN_DECADES,
    MIN_TAIL_SAMPLES,
    MZ_RATIO_TOL,
    PARTITION_TOL,
    PLATEAU_TOL,
    R2_EXPONENTIAL,
    RATE_TOL,
    REPORT_SCHEMA_VERSION,
    RESIDUAL_EPSILON,
    SECANT_STALL_RATIO,
    TAIL_FRACTION,
    VALUE_TOL,
)
from .errors import ConfigError, InconclusiveError, InputError
from .integrate import polar_track
from .potential import order_of_integrability
from .spectral import SpectralSystem, basis_psi, coefficient_names, mode_rates
from .sphere import angular_distance, canonical_sign, find_critical_points
from .utils import format_value, tail_statistics, to_builtin

VERDICTS = ("Exponential", "AlgebraicCase1", "AlgebraicCase2", "Inconclusive")


@dataclass
class ClassifierConfig:
    tail_fraction: float = TAIL_FRACTION
    min_tail_samples: int = MIN_TAIL_SAMPLES
    r2_exponential: float = R2_EXPONENTIAL
    plateau_tol: float = PLATEAU_TOL
    growth_factor: float = GROWTH_FACTOR
    crosscheck_tol: float = CROSSCHECK_TOL
    value_tol: float = VALUE_TOL
    dist_tol: float = DIST_TOL
    min_decades: float = MIN_DECADES
    rate_tol: float = RATE_TOL
    frequency_tol: float = FREQUENCY_TOL
    mz_ratio_tol: float = MZ_RATIO_TOL
    secant_stall_ratio: float = SECANT_STALL_RATIO
    floor_tol: float = FLOOR_TOL
    epsilon: float = RESIDUAL_EPSILON

    def __post_init__(self):
        if not 0 < self.tail_fraction <= 1:
            raise ConfigError(f"tail_fraction must lie in (0, 1], got {self.tail_fraction}")
        if self.min_tail_samples < 3:
            raise ConfigError("min_tail_samples must be at least 3")
        if not 0 < self.r2_exponential <= 1:
            raise ConfigError("r2_exponential must lie in (0, 1]")
        if self.growth_factor <= 1:
            raise ConfigError("growth_factor must exceed 1")
        for name in ("plateau_tol", "crosscheck_tol", "value_tol", "dist_tol", "rate_tol",
                     "frequency_tol", "mz_ratio_tol", "floor_tol", "epsilon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return ClassifierConfig(**values)

    def to_dict(self):
        return asdict(self)


class LinearFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    sse: float


def _linear_fit(features, target):
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    model = LinearRegression().fit(features, target)
    predicted = model.predict(features)
    return LinearFit(float(model.coef_[0]), float(model.intercept_),
                     float(r2_score(target, predicted)),
                     float(np.sum((target - predicted) ** 2)))


def _tail_slice(n, cfg):
    size = max(int(math.ceil(cfg.tail_fraction * n)), cfg.min_tail_samples)
    return slice(max(0, n - size), n)


class ExponentialFit(NamedTuple):
    rate: float
    intercept: float
    r2: float
    t_start: float
    t_stop: float
    n_used: int

    def to_dict(self):
        return self._asdict()


def detect_exponential(traj, tail_fraction=None, cfg=None, norms=None):
    """
    Log-linear fit of |z| against t on the tail window.

    Args:
        traj: Trajectory
        tail_fraction: Overrides cfg.tail_fraction
        cfg: ClassifierConfig
        norms: Optional per-sample sizes replacing the Euclidean norm of the states

    Returns:
        ExponentialFit when R^2 >= r2_exponential and the slope is <= -10 / t_end,
        otherwise None (algebraic candidates show log-log linearity instead)

    Raises:
        InconclusiveError: fewer than min_tail_samples samples above floor_tol
    """
    cfg = cfg or ClassifierConfig()
    if tail_fraction is not None:
        cfg = cfg.replace(tail_fraction=tail_fraction)
    sizes = np.linalg.norm(traj.states, axis=1) if norms is None else np.asarray(norms, dtype=float)
    keep = sizes > cfg.floor_tol
    times, sizes = np.asarray(traj.times)[keep], sizes[keep]
    if len(times) < cfg.min_tail_samples:
        raise InconclusiveError(
            f"{len(times)} samples above floor_tol, {cfg.min_tail_samples} needed for a rate fit")
    window = _tail_slice(len(times), cfg)
    t, log_size = times[window], np.log(sizes[window])
    fit = _linear_fit(t, log_size)
    t_end = float(traj.times[-1])
    if fit.r2 >= cfg.r2_exponential and fit.slope <= -10.0 / t_end:
        return ExponentialFit(fit.slope, fit.intercept, fit.r2, float(t[0]), float(t[-1]), len(t))
    return None


@dataclass
class RateReport:
    verdict: str
    gamma: Optional[float] = None
    beta: Optional[float] = None
    theta_star: Optional[np.ndarray] = None
    alpha0: Optional[float] = None
    accumulation: list = field(default_factory=list)
    max_distance: Optional[float] = None
    reason: Optional[str] = None
    evidence: dict = field(default_factory=dict)

    @property
    def conclusive(self):
        return self.verdict != "Inconclusive"

    def describe(self):
        if self.verdict == "Exponential":
            return f"Exponential decay, rate {format_value(self.gamma)}"
        if self.verdict == "AlgebraicCase1":
            theta = ", ".join(format_value(t) for t in self.theta_star)
            return (f"Case 1: beta = {format_value(self.beta)}, theta* = ({theta}), "
                    f"alpha0 = {format_value(self.alpha0)}")
        if self.verdict == "AlgebraicCase2":
            return (f"Case 2: t^(1/(p-2)) r grows, secant within "
                    f"{format_value(self.max_distance)} of the zero-value critical set")
        return f"Inconclusive: {self.reason}"

    def to_dict(self):
        return to_builtin({
            "schema_version": REPORT_SCHEMA_VERSION,
            "verdict": self.verdict,
            "gamma": self.gamma,
            "beta": self.beta,
            "theta_star": self.theta_star,
            "alpha0": self.alpha0,
            "accumulation": self.accumulation,
            "max_distance": self.max_distance,
            "reason": self.reason,
            "evidence": self.evidence,
        })


def _nearest_critical(catalog, theta):
    thetas = catalog.all_thetas()
    values = catalog.all_values()
    distances = np.array([angular_distance(theta, t) for t in thetas])
    index = int(np.argmin(distances))
    return index, thetas[index], float(values[index]), float(distances[index])


def _decades(times):
    positive = times[times > 0]
    if len(positive) == 0:
        return 0.0
    return math.log10(times[-1] / max(positive[0], 1.0)) if times[-1] > 1.0 else 0.0


def dichotomy_verdict(polar, p, catalog, cfg=None):
    """
    Case 1 / Case 2 decision on the polar series of a non-exponential trajectory.

    Case 1: y = t^(1/(p-2)) r has relative oscillation <= plateau_tol over the last
    decade; beta is its mean there and theta* the nearest catalog point, whose value
    must match beta^-(p-2) / (p(p-2)) within crosscheck_tol (relative) while f_p(theta)
    approaches it within value_tol.

    Case 2: y is monotone over the last two decades and grows by at least
    growth_factor; the secant stays within dist_tol of the zero-value critical
    points over the last decade.

    Anything else is Inconclusive with an extension hint.
    """
    cfg = cfg or ClassifierConfig()
    if catalog is None or len(catalog) == 0:
        raise InputError("empty critical catalog")
    times = np.asarray(polar.times, dtype=float)
    if len(times) == 0:
        return RateReport("Inconclusive", reason="empty polar series")
    y = np.asarray(polar.t_pow_r, dtype=float)
    t_last = times[-1]
    decades = _decades(times)
    evidence = {"p": p, "t_end": t_last, "decades": decades, "truncated": polar.truncated}
    if decades < cfg.min_decades:
        return RateReport("Inconclusive", evidence=evidence,
                          reason=f"series spans {decades:.2f} decades, {cfg.min_decades:g} "
                                 f"needed; extend t_end")

    last = times >= t_last / 10
    plateau = tail_statistics(y[last])
    evidence["plateau"] = plateau
    evidence["grad_liminf"] = float(np.min(polar.grad_norm[last]))
    evidence["plateau_window"] = [float(times[last][0]), float(t_last)]

    if plateau["oscillation"] <= cfg.plateau_tol:
        beta = plateau["mean"]
        alpha_beta = beta ** (-(p - 2)) / (p * (p - 2))
        index, theta_star, alpha0, distance = _nearest_critical(catalog, polar.theta[-1])
        crosscheck = abs(alpha0 - alpha_beta) / max(abs(alpha0), 1e-300)
        fhat_gap = abs(polar.fhat[-1] - alpha0) / max(abs(alpha0), 1e-300)
        evidence.update(alpha_from_beta=alpha_beta, crosscheck=crosscheck,
                        fhat_gap=fhat_gap, theta_star_index=index, theta_distance=distance)
        if crosscheck > cfg.crosscheck_tol:
            return RateReport("Inconclusive", beta=beta, evidence=evidence,
                              reason=f"plateau found but alpha0 = {alpha0:.6g} disagrees with "
                                     f"beta^-(p-2)/(p(p-2)) = {alpha_beta:.6g}; extend t_end")
        if fhat_gap > cfg.value_tol:
            return RateReport("Inconclusive", beta=beta, evidence=evidence,
                              reason="f_p(theta) has not settled on the critical value; extend t_end")
        return RateReport("AlgebraicCase1", beta=beta, theta_star=theta_star, alpha0=alpha0,
                          evidence=evidence)

    window = times >= t_last / 100
    y2 = y[window]
    monotone = bool(np.all(np.diff(y2) >= -1e-12 * np.abs(y2[:-1])))
    growth = float(y2[-1] / y2[0]) if y2[0] > 0 else math.inf
    evidence.update(monotone=monotone, growth=growth)
    if monotone and growth >= cfg.growth_factor:
        zero_set = catalog.zero_value_thetas(AS_VALUE_TOL)
        if len(zero_set) == 0:
            return RateReport("Inconclusive", evidence=evidence,
                              reason="y grows but f_p has no zero-value critical point")
        tail_thetas = polar.theta[last]
        distances = np.array([[angular_distance(th, c) for c in zero_set] for th in tail_thetas])
        nearest = distances.min(axis=1)
        max_distance = float(nearest.max())
        evidence.update(final_distance=float(nearest[-1]),
                        distance_decreasing=bool(nearest[-1] <= nearest[0]))
        accumulation = [zero_set[i] for i in sorted(set(distances.argmin(axis=1)))]
        if max_distance <= cfg.dist_tol:
            return RateReport("AlgebraicCase2", accumulation=accumulation,
                              max_distance=max_distance, evidence=evidence)
        return RateReport("Inconclusive", accumulation=accumulation, max_distance=max_distance,
                          evidence=evidence,
                          reason=f"secant stays {max_distance:.3g} from the zero-value critical "
                                 f"set; extend t_end")

    return RateReport("Inconclusive", evidence=evidence,
                      reason=f"no plateau (oscillation {plateau['oscillation']:.3g}) and no "
                             f"sustained growth (factor {growth:.3g}); extend t_end")


class EnergyLimit(NamedTuple):
    value: float
    spread: float
    nearest_critical_value: Optional[float]

    def to_dict(self):
        return self._asdict()


def energy_limit(states, f, p, catalog=None, tail_fraction=TAIL_FRACTION):
    """Tail of |z|^-p f(z); it converges to a non-negative critical value of f_p."""
    states = np.asarray(states, dtype=float)
    radii = np.linalg.norm(states, axis=1)
    states, radii = states[radii > 0], radii[radii > 0]
    if len(states) == 0:
        raise InputError("no nonzero state to normalize")
    normalized = f.evaluate_many(states) / radii ** p
    tail = normalized[-max(1, int(math.ceil(tail_fraction * len(normalized)))):]
    nearest = None
    if catalog is not None and len(catalog):
        values = np.asarray(catalog.values, dtype=float)
        nearest = float(values[np.argmin(np.abs(values - normalized[-1]))])
    return EnergyLimit(float(normalized[-1]), float(tail.max() - tail.min()), nearest)


class ControlSeries(NamedTuple):
    times: np.ndarray
    g: np.ndarray
    tail_monotone: bool

    def to_dict(self):
        return {"g_final": float(self.g[-1]), "tail_monotone": self.tail_monotone}


def control_function(polar, theta_star, f_p):
    """g(t) = r(t) + f_p(theta(t)) - f_p(theta*), with its monotonicity over the last decade."""
    theta_star = np.asarray(theta_star, dtype=float)
    g = polar.r + polar.fhat - f_p(theta_star)
    times = np.asarray(polar.times)
    tail = g[times >= times[-1] / 10]
    monotone = bool(np.all(np.diff(tail) <= 1e-12 * np.abs(tail[:-1]) + 1e-15))
    return ControlSeries(times, g, monotone)


class MzVerdict(NamedTuple):
    kind: str  # NeutralDominant, StableDominant or Undetermined
    neutral_ratio: np.ndarray
    stable_ratio: np.ndarray
    bounded: Optional[bool]
    evidence: dict

    def to_dict(self):
        return to_builtin({"kind": self.kind, "bounded": self.bounded,
                           "neutral_ratio_final": self.neutral_ratio[-1],
                           "stable_ratio_final": self.stable_ratio[-1],
                           "evidence": self.evidence})


def _ratio(numerator, denominator):
    out = np.full(len(numerator), np.inf)
    positive = denominator > 0
    out[positive] = numerator[positive] / denominator[positive]
    out[~positive & (numerator == 0)] = 0.0
    return out


def merle_zaag_classify(times, x_plus, x_zero, x_minus, b, ratio_tol=MZ_RATIO_TOL,
                        tail_fraction=TAIL_FRACTION):
    """
    Decide which Merle-Zaag alternative the three series follow.

    NeutralDominant: (X+ + X-) / X0 ends below ratio_tol and does not increase
    over the tail. StableDominant: (X+ + X0) / X- does, and in addition
    exp((b - delta) t) (X+ + X0 + X-) stays bounded on the tail (delta = b / 4;
    bounded means its log-slope is at most delta / 2). Otherwise Undetermined.
    """
    times = np.asarray(times, dtype=float)
    series = [np.asarray(x, dtype=float) for x in (x_plus, x_zero, x_minus)]
    if any(len(x) != len(times) for x in series):
        raise InputError("X+, X0, X- and the time grid must have equal length")
    if len(times) < 3:
        raise InputError("at least three samples are needed")
    if not b > 0:
        raise InputError(f"b must be positive, got {b}")
    x_p, x_0, x_m = series
    if any(np.any(x < 0) for x in series):
        raise InputError("series must be non-negative")
    total = x_p + x_0 + x_m
    if np.any(total <= 0):
        raise InputError("X+ + X0 + X- must be positive at every sample")

    neutral = _ratio(x_p + x_m, x_0)
    stable = _ratio(x_p + x_0, x_m)
    start = len(times) - max(3, int(math.ceil(tail_fraction * len(times))))
    evidence = {"tail_start": float(times[start]), "ratio_tol": ratio_tol, "b": b}

    def settles(ratio):
        return bool(ratio[-1] < ratio_tol and ratio[-1] <= ratio[start])

    if settles(neutral):
        return MzVerdict("NeutralDominant", neutral, stable, None, evidence)
    if settles(stable):
        delta = b / 4
        log_h = (b - delta) * times[start:] + np.log(total[start:])
        slope = _linear_fit(times[start:], log_h).slope
        bounded = bool(slope <= delta / 2)
        evidence.update(delta=delta, weighted_log_slope=slope)
        if bounded:
            return MzVerdict("StableDominant", neutral, stable, True, evidence)
        return MzVerdict("Undetermined", neutral, stable, False, evidence)
    return MzVerdict("Undetermined", neutral, stable, None, evidence)


class ModeSplit(NamedTuple):
    times: np.ndarray
    x_plus: np.ndarray
    x_zero: np.ndarray
    x_minus: np.ndarray
    b: float

    def classify(self, ratio_tol=MZ_RATIO_TOL, tail_fraction=TAIL_FRACTION):
        return merle_zaag_classify(self.times, self.x_plus, self.x_zero, self.x_minus, self.b,
                                   ratio_tol, tail_fraction)


def _phase_coefficients(traj, spec, basis):
    """Per-sample G-coefficients along the basis, from ambient phase states."""
    weights = spec.gram_weights()
    q_eig = np.array([spec.to_eigen(s) for s in traj.states])
    return q_eig, q_eig @ (weights[:, None] * basis.vectors)


def mode_split(traj, model, m=None, tol=PARTITION_TOL):
    """
    Unstable / neutral / stable norms X+, X0, X- of a model trajectory.

    Parabolic runs (m None) split the modes xi_i by the sign of lambda_i; elliptic
    runs split the G-coefficients by the sign of their linear rate, with the z_j as
    the neutral part. b is the smallest nonzero |rate|.
    """
    if m is None:
        modes = traj.modes if traj.modes is not None else traj.states @ model.eigenvectors
        rates = np.asarray(model.lambdas, dtype=float)
        neutral = np.abs(rates) < tol
    else:
        spec = SpectralSystem.from_model(model, m)
        basis = basis_psi(spec)
        _, modes = _phase_coefficients(traj, spec, basis)
        by_label = mode_rates(spec, basis)
        rates = np.array([by_label[label] for label in basis.labels])
        neutral = np.array([label in basis.upsilon for label in basis.labels])
    plus = ~neutral & (rates > 0)
    minus = ~neutral & (rates < 0)
    gaps = np.abs(rates[~neutral])
    gaps = gaps[gaps > tol]
    if len(gaps) == 0:
        raise InputError("the linearization has no nonzero rate; b is undefined")

    def norm(mask):
        return np.sqrt(np.sum(modes[:, mask] ** 2, axis=1)) if mask.any() else np.zeros(len(modes))

    return ModeSplit(np.asarray(traj.times), norm(plus), norm(neutral), norm(minus),
                     float(gaps.min()))


@dataclass
class FastDecayCase:
    case: Optional[int]
    rate: Optional[float] = None
    model: Optional[str] = None
    r2: Optional[float] = None
    matched: List[str] = field(default_factory=list)
    frequency: Optional[float] = None
    frequency_target: Optional[float] = None
    direction: Optional[np.ndarray] = None
    mismatch: bool = False
    reason: Optional[str] = None
    evidence: dict = field(default_factory=dict)

    def to_dict(self):
        return to_builtin(asdict(self))


def fast_decay_case(traj, spec, basis=None, cfg=None):
    """
    Identify which fast-decay case an exponentially decaying elliptic solution is in.

    The G-norm N of the phase state is fitted on the tail with two models:
    log N = a + gamma t (exponential) and log N - log t = a + gamma t + c/t + d/t^2
    (resonant); the smaller residual wins. gamma is matched against {gamma+-_i}
    over I3 and I4, and m/2 when I1 or I2 is nonempty. A match to m/2 is case 2
    (resonant model) or case 3 (oscillation, frequency fitted from the unwrapped
    angle of the dominant I1 pair); a match to some gamma+-_i is case 1.
    """
    cfg = cfg or ClassifierConfig()
    basis = basis or basis_psi(spec)
    weights = spec.gram_weights()
    q_eig, coeffs = _phase_coefficients(traj, spec, basis)
    g_norm = np.sqrt(np.sum(weights * q_eig ** 2, axis=1))

    exp_fit = detect_exponential(traj, cfg=cfg, norms=g_norm)
    if exp_fit is None:
        return FastDecayCase(None, reason="decay is not exponential")

    keep = (g_norm > cfg.floor_tol) & (np.asarray(traj.times) > 0)
    times, sizes, coeffs = np.asarray(traj.times)[keep], g_norm[keep], coeffs[keep]
    window = _tail_slice(len(times), cfg)
    t, log_n = times[window], np.log(sizes[window])
    plain = _linear_fit(t, log_n)
    resonant_fit = _linear_fit(np.column_stack([t, 1.0 / t, 1.0 / t ** 2]), log_n - np.log(t))
    resonant = resonant_fit.sse < plain.sse
    chosen = resonant_fit if resonant else plain
    rate = chosen.slope

    candidates = {}
    part = spec.partition
    for i in part.I3 + part.I4:
        candidates[f"gamma+_{i + 1}"] = float(spec.gamma_plus[i])
        candidates[f"gamma-_{i + 1}"] = float(spec.gamma_minus[i])
    if part.I1 or part.I2:
        candidates["m/2"] = spec.m / 2
    matched = sorted((name for name, value in candidates.items() if abs(rate - value) <= cfg.rate_tol),
                     key=lambda name: abs(rate - candidates[name]))
    envelope = np.exp(spec.m * t / 2)
    evidence = {
        "exponential_r2": plain.r2,
        "resonant_r2": resonant_fit.r2,
        "detected_rate": exp_fit.rate,
        "window": [float(t[0]), float(t[-1])],
        "candidates": candidates,
        "plateau_resonant": tail_statistics(sizes[window] / (t * envelope))["oscillation"],
        "plateau_oscillatory": tail_statistics(sizes[window] / envelope)["oscillation"],
    }
    u = traj.states[-1, :spec.n]
    direction = canonical_sign(u / np.linalg.norm(u)) if np.linalg.norm(u) > 0 else None
    result = FastDecayCase(None, rate=rate, model="resonant" if resonant else "exponential",
                           r2=chosen.r2, matched=matched, direction=direction, evidence=evidence)

    if not matched:
        result.mismatch = True
        result.reason = (f"fitted rate {rate:.6g} matches no characteristic rate within "
                         f"{cfg.rate_tol:g}; possible nonlinear contamination, extend the horizon")
        return result

    if "m/2" not in matched:
        result.case = 1
        return result

    if resonant:
        result.case = 2
        return result

    result.case = 3
    names = coefficient_names(basis)
    pairs = []
    for i in part.I1:
        first = basis.labels.index(f"psi1_{i + 1}")
        second = basis.labels.index(f"psi2_{i + 1}")
        amplitude = np.hypot(coeffs[window, first], coeffs[window, second]).mean()
        pairs.append((amplitude, i, first, second))
    if pairs:
        _, i, first, second = max(pairs)
        angle = np.unwrap(np.arctan2(coeffs[window, second], coeffs[window, first]))
        result.frequency = abs(_linear_fit(t, angle).slope)
        result.frequency_target = float(spec.beta[i])
        evidence["frequency_pair"] = [names[basis.labels[first]], names[basis.labels[second]]]
        evidence["frequency_match"] = abs(result.frequency - result.frequency_target) <= cfg.frequency_tol
    return result


def _centered_differences(times, values):
    """Three-point derivative on a non-uniform grid; NaN at both ends."""
    out = np.full(values.shape, np.nan)
    h_minus = times[1:-1] - times[:-2]
    h_plus = times[2:] - times[1:-1]
    forward = values[2:] - values[1:-1]
    backward = values[1:-1] - values[:-2]
    out[1:-1] = ((h_minus ** 2)[:, None] * forward + (h_plus ** 2)[:, None] * backward) / \
        (h_plus * h_minus * (h_plus + h_minus))[:, None]
    return out


@dataclass
class NeutralResidual:
    times: np.ndarray
    ratio: np.ndarray
    sup_ratio: float
    decade_sups: List[float]
    non_increasing: Optional[bool]
    exponent: float
    flagged: bool
    truncated: bool

    def to_dict(self):
        return to_builtin({
            "sup_ratio": self.sup_ratio,
            "decade_sups": self.decade_sups,
            "non_increasing": self.non_increasing,
            "exponent": self.exponent,
            "flagged": self.flagged,
            "truncated": self.truncated,
        })


def neutral_mode_residual(traj, reduced, mode="parabolic", m=None, model=None,
                          epsilon=RESIDUAL_EPSILON, derivative="field",
                          floor_tol=FLOOR_TOL, tail_fraction=TAIL_FRACTION):
    """
    |x' + s grad f(x)| / |x|^(p - eps/2) along the neutral coordinates of a run.

    Parabolic runs use x = kernel coordinates of u (s = 1); elliptic runs use
    z_j = G(q, upsilon_j) (s = 1/m). Without a model the states themselves are the
    neutral coordinates. Derivatives are the recorded field values, or centered
    differences on the output grid with derivative="differences".

    Returns:
        NeutralResidual with the tail sup, the sups over the last three decades
        (newest first) and whether they are non-increasing; eps > 1 is flagged as
        outside the validated range.
    """
    f = getattr(reduced, "f", reduced)
    p = getattr(reduced, "p", None) or order_of_integrability(f)[0]
    times = np.asarray(traj.times, dtype=float)
    if mode == "parabolic":
        scale = 1.0
        if model is None:
            x, dx = traj.states, traj.derivatives
        else:
            x, dx = traj.states @ model.kernel_basis, traj.derivatives @ model.kernel_basis
    elif mode == "elliptic":
        if m is None or model is None:
            raise ConfigError("elliptic residuals need the model and m")
        spec = SpectralSystem.from_model(model, m)
        basis = basis_psi(spec)
        weights = spec.gram_weights()
        upsilon = np.column_stack([basis[label] for label in basis.upsilon])
        project = weights[:, None] * upsilon
        x = np.array([spec.to_eigen(s) for s in traj.states]) @ project
        dx = np.array([spec.to_eigen(d) for d in traj.derivatives]) @ project
        scale = 1.0 / m
    else:
        raise ConfigError(f"unknown residual mode '{mode}'")
    if x.shape[1] != f.dimension:
        raise InputError(f"neutral coordinates have dimension {x.shape[1]}, f has {f.dimension}")

    if derivative == "differences":
        dx = _centered_differences(times, x)
    elif derivative != "field":
        raise ConfigError(f"unknown derivative source '{derivative}'")

    sizes = np.linalg.norm(x, axis=1)
    below = np.flatnonzero(sizes < floor_tol)
    truncated = bool(len(below))
    end = below[0] if truncated else len(times)
    usable = np.arange(end)
    usable = usable[np.all(np.isfinite(dx[usable]), axis=1) & (sizes[usable] > 0)]

    exponent = p - epsilon / 2
    residual = np.linalg.norm(dx[usable] + scale * f.gradient_many(x[usable]), axis=1)
    ratio = residual / sizes[usable] ** exponent
    t_used = times[usable]
    if len(ratio) == 0:
        raise InconclusiveError("no neutral coordinate above floor_tol")

    tail = ratio[-max(1, int(math.ceil(tail_fraction * len(ratio)))):]
    t_last = t_used[-1]
    decade_sups = []
    for k in range(3):
        window = (t_used <= t_last / 10 ** k) & (t_used > t_last / 10 ** (k + 1))
        if window.any():
            decade_sups.append(float(ratio[window].max()))
    non_increasing = None
    if len(decade_sups) == 3:
        non_increasing = bool(decade_sups[0] <= decade_sups[1] * (1 + 1e-12)
                              and decade_sups[1] <= decade_sups[2] * (1 + 1e-12))
    return NeutralResidual(t_used, ratio, float(tail.max()), decade_sups, non_increasing,
                           exponent, epsilon > 1, truncated)


@dataclass
class SecantLength:
    total: float
    times: np.ndarray
    tail_profile: np.ndarray
    decade_increments: List[float]
    converging: Optional[bool]

    def remaining_after(self, tau):
        return float(np.interp(tau, self.times, self.tail_profile))

    def to_dict(self):
        return to_builtin({"total": self.total, "decade_increments": self.decade_increments,
                           "converging": self.converging})


def secant_arclength(polar, stall_ratio=SECANT_STALL_RATIO):
    """
    Total great-circle length of theta(t) and the length still to come after each time.

    The secant is flagged as not converging when the length accrued over the last
    decade is at least stall_ratio times the length of the decade before.
    """
    times = np.asarray(polar.times, dtype=float)
    arc = np.asarray(polar.arc_length, dtype=float)
    if len(times) == 0:
        raise InputError("empty polar series")
    total = float(arc[-1])
    tail_profile = total - arc
    t_last = times[-1]
    increments = []
    converging = None
    if len(times) > 1 and t_last / 100 >= times[times > 0][0]:
        marks = [np.interp(t_last / 10 ** k, times, arc) for k in (0, 1, 2)]
        increments = [float(marks[0] - marks[1]), float(marks[1] - marks[2])]
        converging = bool(increments[0] <= 1e-14 or increments[0] < stall_ratio * increments[1])
    return SecantLength(total, times, tail_profile, increments, converging)


def classify_trajectory(traj, f, catalog=None, cfg=None, seed=0, coords=None):
    """
    Full verdict for a gradient-flow (or neutral-coordinate) trajectory.

    Exponential decay is tested first; otherwise the polar series goes through
    dichotomy_verdict and the report collects the normalized-energy limit, the
    secant length and (Case 1) the control function as evidence.
    """
    cfg = cfg or ClassifierConfig()
    if traj.termination in ("escaped", "step_failure"):
        return RateReport("Inconclusive", reason=f"trajectory terminated early: {traj.termination}",
                          evidence={"stats": traj.stats})
    sizes = None if coords is None else np.linalg.norm(coords, axis=1)
    try:
        exp_fit = detect_exponential(traj, cfg=cfg, norms=sizes)
    except InconclusiveError as exc:
        return RateReport("Inconclusive", reason=str(exc))
    if exp_fit is not None:
        return RateReport("Exponential", gamma=exp_fit.rate, evidence={"fit": exp_fit.to_dict()})

    if f is None:
        return RateReport("Inconclusive", reason="decay is not exponential and no functional was given")
    p, f_p = order_of_integrability(f)
    if catalog is None:
        catalog = find_critical_points(f_p, seed=seed)
    polar = polar_track(traj, p, f_p, cfg.floor_tol, coords=coords)
    report = dichotomy_verdict(polar, p, catalog, cfg)
    states = traj.states if coords is None else coords
    report.evidence["energy_limit"] = energy_limit(states[:len(polar)], f, p, catalog).to_dict()
    report.evidence["secant"] = secant_arclength(polar, cfg.secant_stall_ratio).to_dict()
    if report.verdict == "AlgebraicCase1":
        report.evidence["control"] = control_function(polar, report.theta_star, f_p).to_dict()
    return report
