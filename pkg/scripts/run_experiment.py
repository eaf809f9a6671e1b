#!/usr/bin/env python3
"""
Command line entry point: run one experiment from a JSON config and write its
artifacts (report JSON, CSV series, manifest) to an output directory.

Usage:
    python -m scripts.run_experiment flow --config configs/x4x8_case1.json
    python -m scripts.run_experiment sweep --config configs/sweep_x4x8.json --out runs/sweep
    python -m scripts.run_experiment verify-spectral --config configs/spectral_all_families.json

Exit status: 0 success, 2 configuration error (nothing written), 3 numerical
failure, 4 at least one inconclusive verdict.
"""

import argparse
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .classify import (
    classify_trajectory,
    fast_decay_case,
    mode_split,
    neutral_mode_residual,
)
from .config import DEFAULT_OUT_DIR
from .errors import ConfigError, DegenerateFitError, InputError, SlowDecayError
from .integrate import (
    Trajectory,
    elliptic_flow,
    gradient_flow,
    parabolic_flow,
    polar_track,
    trajectory_frame,
)
from .potential import order_of_integrability
from .reduction import reduced_functional
from .run_config import KINDS, apply_overrides, load_run_config
from .spectral import SpectralSystem, basis_psi, norm_constants, verify_spectral_identities
from .sphere import (
    adams_simon_check,
    find_critical_points,
    lojasiewicz_fit,
    predicted_beta,
    slow_decay_admissible,
)
from .utils import (
    ProgressClock,
    banner,
    export_csv,
    export_json,
    format_value,
    log,
    set_quiet,
    write_manifest,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4


@dataclass
class Outcome:
    """Files to write plus the verdicts that decide the exit status."""
    json_files: dict = field(default_factory=dict)
    csv_files: dict = field(default_factory=dict)
    extra_artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    inconclusive: bool = False
    failed: bool = False


class Timer:
    def __init__(self, timings, phase):
        self.timings = timings
        self.phase = phase

    def __enter__(self):
        self.start = time.time()
        return self

    def __exit__(self, *exc):
        self.timings[self.phase] = round(time.time() - self.start, 6)
        return False


def _catalog(cfg, f_p):
    return find_critical_points(f_p, n_starts=cfg.search.get("n_starts"), seed=cfg.seed)


def _perturbation(cfg):
    pert = cfg.perturbation
    if pert is not None and "seed" not in cfg.raw.get("perturbation", {}):
        pert.seed = cfg.seed
    return pert


def show_report(report, title="CLASSIFICATION RESULT"):
    """
    Print a verdict the way the search scripts print their hits.

    Args:
        report: RateReport
        title: Banner text
    """
    banner(title)
    log(f"Verdict: {report.verdict}")
    log(f"   {report.describe()}")
    evidence = report.evidence
    if "plateau" in evidence:
        plateau = evidence["plateau"]
        log(f"   Last decade: mean {format_value(plateau['mean'])}, "
            f"oscillation {format_value(plateau['oscillation'])}")
    if "energy_limit" in evidence:
        log(f"   |z|^-p f(z) -> {format_value(evidence['energy_limit']['value'])}")
    if "secant" in evidence:
        log(f"   Secant length: {format_value(evidence['secant']['total'])}")
    log("-" * 40)


def critical_summary(f_p, p, catalog, m=None, seed=0):
    """Catalog plus Adams-Simon verdict, predicted beta and Lojasiewicz fits per point."""
    verdict = adams_simon_check(f_p, catalog, m=m)
    points = []
    for index, pt in enumerate(catalog.points):
        entry = pt.to_dict()
        entry["index"] = index
        scaled = pt.value if m is None else pt.value / m
        entry["predicted_beta"] = predicted_beta(p, scaled) if scaled > 0 else None
        try:
            entry["lojasiewicz"] = lojasiewicz_fit(f_p, pt.theta, seed=seed).to_dict()
        except (DegenerateFitError, InputError) as exc:
            entry["lojasiewicz"] = {"error": str(exc)}
        points.append(entry)
    return {
        "p": p,
        "f_p": f_p.to_text(),
        "catalog": catalog.to_dict(),
        "points": points,
        "adams_simon": verdict.to_dict(),
        "slow_decay_admissible": slow_decay_admissible(verdict),
    }


def points_frame(catalog):
    rows = []
    for index, pt in enumerate(catalog.points):
        row = {"index": index}
        for j, t in enumerate(pt.theta):
            row[f"theta_{j + 1}"] = float(t)
        row["value"] = float(pt.value)
        row["grad_residual"] = float(pt.grad_residual)
        row["morse_signature"] = "/".join(str(s) for s in pt.morse_signature)
        rows.append(row)
    return pd.DataFrame(rows)


def run_reduce(cfg):
    out = Outcome()
    log("STEP: Lyapunov-Schmidt reduction...")
    with Timer(out.timings, "reduce"):
        reduced = reduced_functional(cfg.model, **cfg.reduction)
    log(f"Reduced functional: f = {reduced.f.to_text().strip()}  (p = {reduced.p})")
    with Timer(out.timings, "critical"):
        catalog = _catalog(cfg, reduced.f_p)
    out.json_files["reduced.json"] = {
        "kind": "reduce",
        "model": cfg.model.to_dict(),
        "reduced": reduced.to_dict(),
        "critical": critical_summary(reduced.f_p, reduced.p, catalog, seed=cfg.seed),
    }
    return out


def run_critical(cfg):
    out = Outcome()
    p, f_p = order_of_integrability(cfg.f)
    log(f"STEP: Critical points of f_{p} on the unit sphere...")
    with Timer(out.timings, "critical"):
        catalog = _catalog(cfg, f_p)
        m = cfg.elliptic.get("m")
        summary = critical_summary(f_p, p, catalog, m=m, seed=cfg.seed)
    log(f"Found {len(catalog.points)} isolated points, {len(catalog.manifolds)} manifolds; "
        f"Adams-Simon: {summary['adams_simon']['kind']}")
    out.json_files["critical.json"] = {"kind": "critical", **summary}
    out.csv_files["critical_points.csv"] = points_frame(catalog)
    return out


def _trajectory_summary(traj):
    meta = {k: v for k, v in traj.meta.items() if k not in ("chart_states", "stable_coefficients")}
    return {"termination": traj.termination, "stats": traj.stats, "samples": len(traj),
            "t_final": float(traj.times[-1]), "meta": meta}


def run_flow(cfg):
    out = Outcome()
    p, f_p = order_of_integrability(cfg.f)
    log(f"STEP: Gradient flow to t = {cfg.integrator.t_end:g} (p = {p})...")
    with Timer(out.timings, "integrate"):
        traj = gradient_flow(cfg.f, _perturbation(cfg), cfg.initial["z0"], cfg.integrator)
    log(f"Termination: {traj.termination} after {traj.stats.get('n_steps')} steps")
    with Timer(out.timings, "classify"):
        catalog = _catalog(cfg, f_p)
        report = classify_trajectory(traj, cfg.f, catalog, cfg.classifier, seed=cfg.seed)
        polar = polar_track(traj, p, f_p, cfg.classifier.floor_tol)
    show_report(report)
    out.inconclusive = not report.conclusive
    out.json_files["report.json"] = {"kind": "flow", "report": report.to_dict(),
                                     "trajectory": _trajectory_summary(traj)}
    out.csv_files["trajectory.csv"] = trajectory_frame(traj, polar)
    return out


def _residual_options(cfg):
    options = {"derivative": cfg.residual.get("derivative", "field")}
    if "epsilon" in cfg.residual:
        options["epsilon"] = cfg.residual["epsilon"]
    return options


def _neutral_analysis(cfg, traj, coords, f_eff, m=None):
    """Verdict on the neutral coordinates, residual against the reduced flow and Merle-Zaag split."""
    reduced = reduced_functional(cfg.model, **cfg.reduction)
    f_eff = reduced.f if f_eff is None else f_eff(reduced)
    catalog = _catalog(cfg, order_of_integrability(f_eff)[1])
    report = classify_trajectory(traj, f_eff, catalog, cfg.classifier, seed=cfg.seed,
                                 coords=coords)
    mode = "parabolic" if m is None else "elliptic"
    residual = neutral_mode_residual(traj, reduced, mode=mode, m=m, model=cfg.model,
                                     floor_tol=cfg.classifier.floor_tol, **_residual_options(cfg))
    split = mode_split(traj, cfg.model, m=m).classify(cfg.classifier.mz_ratio_tol,
                                                      cfg.classifier.tail_fraction)
    return {
        "reduced": reduced.to_dict(),
        "neutral_report": report,
        "residual": residual.to_dict(),
        "merle_zaag": split.to_dict(),
        "adams_simon": adams_simon_check(reduced.f_p, catalog, m=m).to_dict(),
    }


def run_elliptic(cfg):
    out = Outcome()
    m = cfg.elliptic["m"]
    log(f"STEP: Elliptic flow, m = {m:g}, projection = {cfg.elliptic['projection']}...")
    with Timer(out.timings, "integrate"):
        traj = elliptic_flow(cfg.model, m, cfg.initial["u0"], cfg.initial["v0"], cfg.integrator,
                             nonlinearity=cfg.nonlinearity,
                             projection=cfg.elliptic["projection"],
                             slaving_iterations=cfg.elliptic["slaving_iterations"])
    log(f"Termination: {traj.termination}; projection defect "
        f"{format_value(traj.meta.get('projection_defect'))}")
    result = {"kind": "elliptic", "trajectory": _trajectory_summary(traj)}
    if cfg.nonlinearity is not None:
        result["nonlinearity"] = cfg.nonlinearity.to_dict()
    with Timer(out.timings, "classify"):
        report = classify_trajectory(traj, None, cfg=cfg.classifier, seed=cfg.seed)
        # neutral coordinates z_j = G(q, upsilon_j); empty without a kernel
        neutral = [j for j, label in enumerate(traj.mode_labels) if label.startswith("z_")]
        if report.verdict == "Exponential":
            spec = SpectralSystem.from_model(cfg.model, m)
            result["fast_decay"] = fast_decay_case(traj, spec, cfg=cfg.classifier).to_dict()
        elif neutral and traj.termination not in ("escaped", "step_failure"):
            coords = traj.modes[:, neutral]
            analysis = _neutral_analysis(cfg, traj, coords,
                                         lambda reduced: reduced.f.scale(1.0 / m), m=m)
            report = analysis.pop("neutral_report")
            result.update(analysis)
    show_report(report)
    out.inconclusive = not report.conclusive
    result["report"] = report.to_dict()
    out.json_files["report.json"] = result
    out.csv_files["trajectory.csv"] = trajectory_frame(traj, prefix="q")
    return out


def run_parabolic(cfg):
    out = Outcome()
    log(f"STEP: Parabolic flow to t = {cfg.integrator.t_end:g}...")
    with Timer(out.timings, "integrate"):
        traj = parabolic_flow(cfg.model, cfg.nonlinearity, cfg.initial["u0"], cfg.integrator)
    log(f"Termination: {traj.termination} after {traj.stats.get('n_steps')} steps")
    result = {"kind": "parabolic", "trajectory": _trajectory_summary(traj)}
    if cfg.nonlinearity is not None:
        result["nonlinearity"] = cfg.nonlinearity.to_dict()
    with Timer(out.timings, "classify"):
        report = classify_trajectory(traj, None, cfg=cfg.classifier, seed=cfg.seed)
        if (report.verdict != "Exponential" and cfg.model.has_kernel
                and traj.termination not in ("escaped", "step_failure")):
            coords = traj.states @ cfg.model.kernel_basis
            analysis = _neutral_analysis(cfg, traj, coords, None)
            report = analysis.pop("neutral_report")
            result.update(analysis)
    show_report(report)
    out.inconclusive = not report.conclusive
    result["report"] = report.to_dict()
    out.json_files["report.json"] = result
    out.csv_files["trajectory.csv"] = trajectory_frame(traj, prefix="u")
    return out


def load_trajectory_csv(path, f):
    """
    Read a recorded run (columns t, z_1..z_n) back into a Trajectory.

    Derivatives are taken as -grad f at the recorded states.
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    columns = [f"z_{j + 1}" for j in range(f.dimension)]
    missing = [c for c in ["t"] + columns if c not in frame.columns]
    if missing:
        raise ConfigError(f"{path}: missing columns {', '.join(missing)}")
    times = frame["t"].to_numpy(dtype=float)
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise InputError(f"{path}: times must be strictly increasing")
    states = frame[columns].to_numpy(dtype=float)
    return Trajectory(
        times=times,
        states=states,
        derivatives=-f.gradient_many(states),
        step_sizes=np.diff(times),
        error_estimates=np.zeros(max(len(times) - 1, 0)),
        termination="horizon",
        meta={"kind": "recorded", "source": os.path.basename(path)},
    )


def run_classify(cfg):
    out = Outcome()
    p, f_p = order_of_integrability(cfg.f)
    traj = load_trajectory_csv(cfg.trajectory, cfg.f)
    log(f"STEP: Classifying {len(traj)} recorded samples (p = {p})...")
    with Timer(out.timings, "classify"):
        report = classify_trajectory(traj, cfg.f, _catalog(cfg, f_p), cfg.classifier,
                                     seed=cfg.seed)
    show_report(report)
    out.inconclusive = not report.conclusive
    out.json_files["report.json"] = {"kind": "classify", "report": report.to_dict(),
                                     "samples": len(traj)}
    return out


def sweep_initial_conditions(cfg):
    """Listed initial conditions, a circle of radius r (J = 2) or seeded directions."""
    sweep = cfg.sweep
    if "initial_conditions" in sweep:
        return [np.asarray(z, dtype=float) for z in sweep["initial_conditions"]]
    count = sweep.get("count", 0)
    n = cfg.f.dimension
    radius = float(sweep.get("radius", 0.3))
    center = sweep.get("center", np.zeros(n))
    if n == 2:
        angles = 2 * math.pi * np.arange(count) / max(count, 1)
        return [center + radius * np.array([math.cos(a), math.sin(a)]) for a in angles]
    rng = np.random.default_rng(cfg.seed)
    directions = rng.normal(size=(count, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return [center + radius * d for d in directions]


def _sweep_task(index, z0, f, perturbation, integrator, classifier, catalog, seed, task_dir):
    """One sweep member; module level so worker processes can unpickle it."""
    row = {"index": index}
    for j, value in enumerate(z0):
        row[f"z0_{j + 1}"] = float(value)
    try:
        traj = gradient_flow(f, perturbation, z0, integrator)
        report = classify_trajectory(traj, f, catalog, classifier, seed=seed)
    except SlowDecayError as exc:
        row.update(verdict="Failed", error=f"{type(exc).__name__}: {exc}")
        report = None
    else:
        basin = None if report.theta_star is None else catalog.nearest(report.theta_star)
        row.update(verdict=report.verdict, termination=traj.termination, basin=basin,
                   beta=report.beta, gamma=report.gamma, alpha0=report.alpha0,
                   max_distance=report.max_distance)
    export_json({"row": row, "report": None if report is None else report.to_dict()},
                os.path.join(task_dir, f"task_{index:04d}.json"))
    return row


def run_sweep(cfg, out_dir):
    out = Outcome()
    initial = sweep_initial_conditions(cfg)
    p, f_p = order_of_integrability(cfg.f)
    log(f"STEP: Sweep of {len(initial)} initial conditions (p = {p})...")
    with Timer(out.timings, "critical"):
        catalog = _catalog(cfg, f_p)
    task_dir = os.path.join(out_dir, "tasks")
    os.makedirs(task_dir, exist_ok=True)
    pert = _perturbation(cfg)
    args = [(i, z0, cfg.f, pert, cfg.integrator, cfg.classifier, catalog, cfg.seed, task_dir)
            for i, z0 in enumerate(initial)]
    rows = []
    clock = ProgressClock(len(args))
    parallelism = int(cfg.sweep.get("parallelism", 1))
    with Timer(out.timings, "sweep"):
        if parallelism > 1 and len(args) > 1:
            with ProcessPoolExecutor(max_workers=parallelism) as pool:
                futures = [pool.submit(_sweep_task, *a) for a in args]
                for future in as_completed(futures):
                    rows.append(future.result())
                    log(clock.line(len(rows)))
        else:
            for a in args:
                rows.append(_sweep_task(*a))
                log(clock.line(len(rows)))
    rows.sort(key=lambda row: row["index"])

    verdicts = {}
    basins = {}
    for row in rows:
        verdicts[row["verdict"]] = verdicts.get(row["verdict"], 0) + 1
        if row.get("basin") is not None:
            key = str(row["basin"])
            basins.setdefault(key, {"theta": catalog.points[row["basin"]].theta,
                                    "value": catalog.points[row["basin"]].value, "count": 0})
            basins[key]["count"] += 1
    banner("SWEEP SUMMARY")
    for verdict, count in sorted(verdicts.items()):
        log(f"   {verdict}: {count}")

    out.failed = verdicts.get("Failed", 0) > 0
    out.inconclusive = verdicts.get("Inconclusive", 0) > 0
    out.extra_artifacts = [os.path.join("tasks", f"task_{row['index']:04d}.json") for row in rows]
    out.json_files["sweep.json"] = {"kind": "sweep", "size": len(rows), "verdicts": verdicts,
                                    "basins": basins, "catalog": catalog.to_dict(), "rows": rows}
    out.csv_files["sweep.csv"] = pd.DataFrame(rows)
    return out


def run_verify_spectral(cfg):
    out = Outcome()
    m = float(cfg.spectral["m"])
    tol = float(cfg.spectral.get("tol", 1e-12))
    log(f"STEP: Spectral identities for m = {m:g}, lambdas = {cfg.spectral['lambdas'].tolist()}...")
    with Timer(out.timings, "verify"):
        spec = SpectralSystem(m, cfg.spectral["lambdas"])
        basis = basis_psi(spec)
        report = verify_spectral_identities(spec, basis, tol=tol)
    c1, c2 = norm_constants(spec)
    log(f"{len(report.checks)} relations checked; max violation "
        f"{format_value(report.max_violation)} ({'passed' if report.passed else 'FAILED'})")
    out.failed = not report.passed
    out.json_files["spectral.json"] = {
        "kind": "verify-spectral",
        "spectrum": spec.to_dict(),
        "basis": list(basis.labels),
        "upsilon": list(basis.upsilon),
        "norm_constants": {"c1": c1, "c2": c2},
        "report": report.to_dict(),
    }
    return out


RUNNERS = {
    "reduce": run_reduce,
    "critical": run_critical,
    "flow": run_flow,
    "elliptic": run_elliptic,
    "parabolic": run_parabolic,
    "classify": run_classify,
    "sweep": run_sweep,
    "verify-spectral": run_verify_spectral,
}


def build_parser():
    parser = argparse.ArgumentParser(
        description="Slowly converging gradient flows: reduction, critical points, flows and rate classification")
    parser.add_argument("command", choices=KINDS, help="Experiment to run")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="Artifact directory (default runs/<config name>)")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--t-end", type=float, default=None, dest="t_end",
                        help="Override the integration horizon")
    parser.add_argument("--quiet", action="store_true", help="Suppress progress output")
    return parser


def write_artifacts(out_dir, outcome):
    os.makedirs(out_dir, exist_ok=True)
    written = list(outcome.extra_artifacts)
    for name, data in sorted(outcome.json_files.items()):
        export_json(data, os.path.join(out_dir, name))
        written.append(name)
    for name, frame in sorted(outcome.csv_files.items()):
        export_csv(frame, os.path.join(out_dir, name))
        written.append(name)
    return written


def main(argv=None):
    args = build_parser().parse_args(argv)
    set_quiet(args.quiet)

    try:
        cfg = load_run_config(args.config, kind=args.command)
        apply_overrides(cfg, seed=args.seed, t_end=args.t_end, out=args.out)
    except ConfigError as exc:
        log(f"Configuration error: {exc}")
        if exc.unknown_keys:
            log(f"   Unknown keys: {', '.join(exc.unknown_keys)}")
        return EXIT_CONFIG

    stem = os.path.splitext(os.path.basename(args.config))[0]
    out_dir = cfg.out or os.path.join(DEFAULT_OUT_DIR, stem)
    banner(f"{cfg.kind.upper()}  ({stem}, seed {cfg.seed})")

    try:
        if cfg.kind == "sweep":
            outcome = run_sweep(cfg, out_dir)
        else:
            outcome = RUNNERS[cfg.kind](cfg)
    except ConfigError as exc:
        log(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except SlowDecayError as exc:
        log(f"Error: {type(exc).__name__}: {exc}")
        outcome = Outcome(failed=True)
        outcome.json_files["error.json"] = {"kind": cfg.kind, "error": type(exc).__name__,
                                            "message": str(exc)}

    artifacts = write_artifacts(out_dir, outcome)
    manifest = write_manifest(out_dir, cfg.kind, cfg.digest(), cfg.seed, outcome.timings,
                              artifacts, cfg.overrides)
    log(f"\nArtifacts written to {out_dir} ({len(artifacts)} files, manifest {os.path.basename(manifest)})")

    if outcome.failed:
        return EXIT_NUMERICAL
    if outcome.inconclusive:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
