"""
JSON run configurations: strict key checking, construction of the systems they
describe and command-line overrides.

Every problem is reported as ConfigError before anything is written to disk.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classify import ClassifierConfig
from .config import DEFAULT_SEED, MAX_SWEEP_SIZE
from .errors import ConfigError, InputError
from .integrate import IntegratorConfig, Perturbation, StructuredNonlinearity
from .potential import Polynomial
from .reduction import ModelSystem
from .utils import config_hash

KINDS = ("reduce", "critical", "flow", "elliptic", "parabolic", "classify", "sweep",
         "verify-spectral")

SECTION_KEYS = {
    "": {"kind", "system", "integrator", "classifier", "seed", "out", "initial",
         "perturbation", "elliptic", "reduction", "search", "sweep", "spectral", "residual",
         "trajectory", "nonlinearity"},
    "system": {"f", "f_file", "model", "model_file", "lambdas", "dimension"},
    "integrator": set(IntegratorConfig.__dataclass_fields__),
    "classifier": set(ClassifierConfig.__dataclass_fields__),
    "initial": {"z0", "u0", "v0"},
    "perturbation": {"amplitude", "epsilon", "direction", "vector", "seed"},
    "elliptic": {"m", "projection", "slaving_iterations"},
    "reduction": {"fit_degree", "domain_radius", "grid"},
    "search": {"n_starts"},
    "sweep": {"count", "radius", "center", "initial_conditions", "parallelism"},
    "spectral": {"m", "lambdas", "tol"},
    "residual": {"epsilon", "derivative"},
    "nonlinearity": {"prefactors", "velocity_prefactors"},
}

# keys each experiment cannot run without (section, key)
REQUIRED = {
    "reduce": [("system", "model")],
    "critical": [("system", "f")],
    "flow": [("system", "f"), ("initial", "z0"), ("integrator", "t_end")],
    "elliptic": [("system", "model"), ("initial", "u0"), ("initial", "v0"),
                 ("elliptic", "m"), ("integrator", "t_end")],
    "parabolic": [("system", "model"), ("initial", "u0"), ("integrator", "t_end")],
    "classify": [("system", "f"), ("", "trajectory")],
    "sweep": [("system", "f"), ("integrator", "t_end")],
    "verify-spectral": [("spectral", "m"), ("spectral", "lambdas")],
}


def _check_keys(section, values):
    if not isinstance(values, dict):
        raise ConfigError(f"section '{section}' must be an object")
    unknown = sorted(set(values) - SECTION_KEYS[section])
    if unknown:
        where = f"section '{section}'" if section else "top level"
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}", unknown_keys=unknown)


def _polynomial(text, label, dimension=None):
    if isinstance(text, list):
        text = "\n".join(text)
    if not isinstance(text, str):
        raise ConfigError(f"{label} must be polynomial text or a list of term lines")
    try:
        return Polynomial.from_text(text, dimension)
    except InputError as exc:
        raise ConfigError(f"{label}: {exc}") from exc


def _vector(values, label, length=None):
    try:
        vec = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{label} must be a list of numbers") from exc
    if vec.ndim != 1 or (length is not None and len(vec) != length):
        expected = f" of length {length}" if length is not None else ""
        raise ConfigError(f"{label} must be a flat list{expected}")
    if not np.all(np.isfinite(vec)):
        raise ConfigError(f"{label} must be finite")
    return vec


@dataclass
class RunConfig:
    kind: str
    raw: dict
    base_dir: str = "."
    seed: int = DEFAULT_SEED
    out: Optional[str] = None
    f: Optional[Polynomial] = None
    model: Optional[ModelSystem] = None
    integrator: Optional[IntegratorConfig] = None
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    perturbation: Optional[Perturbation] = None
    nonlinearity: Optional[StructuredNonlinearity] = None
    initial: dict = field(default_factory=dict)
    elliptic: dict = field(default_factory=dict)
    reduction: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    spectral: dict = field(default_factory=dict)
    residual: dict = field(default_factory=dict)
    trajectory: Optional[str] = None
    overrides: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    @property
    def dimension(self):
        if self.f is not None:
            return self.f.dimension
        return None if self.model is None else self.model.n

    def digest(self):
        """Hash of the config as written plus the content of any referenced file."""
        if not self.files:
            return config_hash(self.raw)
        return config_hash({"config": self.raw, "files": self.files})


def _read_text(path, base_dir, label):
    full = path if os.path.isabs(path) else os.path.join(base_dir, path)
    if not os.path.isfile(full):
        raise ConfigError(f"{label}: file not found: {full}")
    with open(full, "r", encoding="utf-8") as f:
        return f.read()


def parse_run_config(data, kind=None, base_dir="."):
    """
    Validate a parsed JSON config and build the objects it describes.

    Args:
        data: Parsed JSON object
        kind: Subcommand; must agree with data["kind"] when both are given
        base_dir: Directory against which relative file references resolve

    Returns:
        RunConfig

    Raises:
        ConfigError: unknown keys (listed), missing keys, bad values, missing files
    """
    _check_keys("", data)
    for section in SECTION_KEYS:
        if section and section in data:
            _check_keys(section, data[section])

    declared = data.get("kind")
    if declared is not None and declared not in KINDS:
        raise ConfigError(f"unknown experiment kind '{declared}'")
    if kind is not None and declared is not None and kind != declared:
        raise ConfigError(f"config is for '{declared}', not '{kind}'")
    kind = kind or declared
    if kind is None:
        raise ConfigError("experiment kind missing")

    sections = {name: dict(data.get(name, {})) for name in SECTION_KEYS if name}
    for section, key in REQUIRED[kind]:
        present = key in data if not section else key in sections[section]
        if section == "system" and key in ("f", "model"):
            present = present or f"{key}_file" in sections["system"]
            if key == "model":
                present = present or "lambdas" in sections["system"]
        if not present:
            where = f"{section}.{key}" if section else key
            raise ConfigError(f"'{kind}' needs {where}")

    cfg = RunConfig(kind=kind, raw=data, base_dir=base_dir)
    seed = data.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    cfg.seed = seed
    cfg.out = data.get("out")

    system = sections["system"]
    dimension = system.get("dimension")
    for key in ("f", "model"):
        if f"{key}_file" in system:
            system[key] = cfg.files[key] = _read_text(system[f"{key}_file"], base_dir,
                                                      f"system.{key}_file")
    if "f" in system:
        cfg.f = _polynomial(system["f"], "system.f", dimension)
    if "model" in system or "lambdas" in system:
        try:
            if "lambdas" in system:
                higher = _polynomial(system["model"], "system.model", len(system["lambdas"])) \
                    if "model" in system else None
                cfg.model = ModelSystem.from_spectrum(_vector(system["lambdas"], "system.lambdas"),
                                                      higher)
            else:
                cfg.model = ModelSystem(_polynomial(system["model"], "system.model", dimension))
        except ConfigError:
            raise
        except InputError as exc:
            raise ConfigError(f"system.model: {exc}") from exc

    try:
        if "t_end" in sections["integrator"]:
            cfg.integrator = IntegratorConfig(**sections["integrator"])
        cfg.classifier = ClassifierConfig(**sections["classifier"])
        if sections["perturbation"]:
            cfg.perturbation = Perturbation(**sections["perturbation"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

    n = cfg.dimension
    initial = sections["initial"]
    if "z0" in initial:
        cfg.initial["z0"] = _vector(initial["z0"], "initial.z0", n)
    for key in ("u0", "v0"):
        if key in initial:
            cfg.initial[key] = _vector(initial[key], f"initial.{key}", n)

    nonlinearity = sections["nonlinearity"]
    if nonlinearity:
        if cfg.model is None:
            raise ConfigError("nonlinearity needs a model system")
        groups = {}
        for key in ("prefactors", "velocity_prefactors"):
            entries = nonlinearity.get(key, [])
            if not isinstance(entries, list):
                raise ConfigError(f"nonlinearity.{key} must be a list with one polynomial per component")
            groups[key] = [_polynomial(text, f"nonlinearity.{key}[{i}]", n)
                           for i, text in enumerate(entries)]
        cfg.nonlinearity = StructuredNonlinearity(**groups)
        cfg.nonlinearity.check_dimension(n)
        if kind == "parabolic" and cfg.nonlinearity.uses_velocity:
            raise ConfigError("parabolic flows take no velocity_prefactors")

    elliptic = sections["elliptic"]
    if elliptic:
        if not elliptic.get("m"):
            raise ConfigError("elliptic.m must be a nonzero number")
        if elliptic.get("projection", "stable") not in ("full", "stable"):
            raise ConfigError(f"unknown projection '{elliptic['projection']}'")
        cfg.elliptic = {"m": float(elliptic["m"]),
                        "projection": elliptic.get("projection", "stable"),
                        "slaving_iterations": int(elliptic.get("slaving_iterations", 8))}

    cfg.reduction = sections["reduction"]
    cfg.search = sections["search"]
    cfg.residual = sections["residual"]
    if cfg.residual.get("derivative", "field") not in ("field", "differences"):
        raise ConfigError(f"unknown derivative source '{cfg.residual['derivative']}'")

    sweep = sections["sweep"]
    if kind == "sweep":
        count = sweep.get("count", 0)
        listed = sweep.get("initial_conditions")
        size = len(listed) if listed is not None else count
        if not isinstance(size, int) or size < 0:
            raise ConfigError("sweep.count must be a non-negative integer")
        if size > MAX_SWEEP_SIZE:
            raise ConfigError(f"sweep of {size} tasks exceeds the limit of {MAX_SWEEP_SIZE}")
        if listed is not None:
            sweep["initial_conditions"] = [_vector(z, "sweep.initial_conditions", n) for z in listed]
        if "center" in sweep:
            sweep["center"] = _vector(sweep["center"], "sweep.center", n)
        if sweep.get("parallelism", 1) < 1:
            raise ConfigError("sweep.parallelism must be at least 1")
    cfg.sweep = sweep

    spectral = sections["spectral"]
    if spectral:
        if not spectral.get("m"):
            raise ConfigError("spectral.m must be a nonzero number")
        spectral["lambdas"] = _vector(spectral.get("lambdas", []), "spectral.lambdas")
    cfg.spectral = spectral

    if "trajectory" in data:
        full = data["trajectory"]
        full = full if os.path.isabs(full) else os.path.join(base_dir, full)
        if not os.path.isfile(full):
            raise ConfigError(f"trajectory: file not found: {full}")
        cfg.trajectory = full
    return cfg


def load_run_config(path, kind=None):
    """Read and validate a JSON run configuration file."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_run_config(data, kind, os.path.dirname(os.path.abspath(path)))


def apply_overrides(cfg, seed=None, t_end=None, out=None):
    """
    Apply command line overrides to a validated config.

    Returns:
        Dictionary of the overrides actually applied (recorded in the manifest)
    """
    applied = {}
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = applied["seed"] = int(seed)
    if t_end is not None:
        if cfg.integrator is None:
            raise ConfigError(f"--t-end has no effect on '{cfg.kind}'")
        cfg.integrator = cfg.integrator.replace(t_end=float(t_end))
        applied["t_end"] = float(t_end)
    if out is not None:
        cfg.out = applied["out"] = out
    cfg.overrides = applied
    return applied
