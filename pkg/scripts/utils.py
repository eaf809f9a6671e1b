"""
Helpers shared by the experiment runner: console output, JSON/CSV export,
hashing and run manifests.
"""

import hashlib
import json
import math
import os
import platform
import time
from datetime import datetime

import numpy as np
import pandas as pd

_QUIET = False


def set_quiet(quiet):
    global _QUIET
    _QUIET = bool(quiet)


def log(message=""):
    """Console progress line; silent under --quiet."""
    if not _QUIET:
        print(message)


def banner(title, width=60):
    log("\n" + "=" * width)
    log(title)
    log("=" * width)


def to_builtin(value):
    """
    Convert results to a JSON serializable structure.

    numpy scalars and arrays become floats/ints/lists, tuples become lists and
    non-finite floats become None (NaN) or the strings "inf"/"-inf".

    Args:
        value: Any nesting of dicts, lists, tuples, numpy values and objects with to_dict()

    Returns:
        Plain Python structure
    """
    if hasattr(value, "to_dict") and not isinstance(value, (pd.DataFrame, pd.Series)):
        return to_builtin(value.to_dict())
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_builtin(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def canonical_json(data):
    return json.dumps(to_builtin(data), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(data):
    """sha256 of the canonical JSON form; stable under key reordering."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def export_json(data, path):
    """
    Write data as indented JSON with sorted keys.

    Args:
        data: Report structure (converted with to_builtin)
        path: Output file

    Returns:
        The path written
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_builtin(data), f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return path


def export_csv(frame, path):
    """Write a DataFrame with shortest round-trip float formatting."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    out = frame.copy()
    for column in out.columns:
        if pd.api.types.is_float_dtype(out[column]):
            out[column] = [repr(float(v)) for v in out[column]]
    out.to_csv(path, index=False)
    return path


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions():
    import scipy
    import sklearn
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_manifest(out_dir, command, config_digest, seed, timings, artifacts, overrides=None):
    """
    Write manifest.json listing every artifact with its content hash.

    Args:
        out_dir: Artifact directory
        command: Subcommand that produced the run
        config_digest: config_hash of the validated run config
        seed: Seed actually used
        timings: Dict of phase -> seconds
        artifacts: Paths (relative to out_dir) of the files written
        overrides: Command line overrides applied after validation

    Returns:
        Path of the manifest
    """
    manifest = {
        "command": command,
        "config_hash": config_digest,
        "seed": seed,
        "overrides": overrides or {},
        "created": datetime.now().strftime("%Y%m%d_%H%M%S"),
        "versions": package_versions(),
        "timings": timings,
        "artifacts": [
            {"path": name, "sha256": file_sha256(os.path.join(out_dir, name))}
            for name in sorted(artifacts)
        ],
    }
    return export_json(manifest, os.path.join(out_dir, "manifest.json"))


def tail_statistics(values):
    """
    Summary statistics of a series.

    Args:
        values: Sequence of reals

    Returns:
        Dictionary with max, min, mean, median, total and relative oscillation
        (max - min) / |mean|
    """
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return {"max": 0.0, "min": 0.0, "mean": 0.0, "median": 0.0, "total": 0,
                "oscillation": math.inf}
    mean = float(np.mean(values))
    spread = float(values.max() - values.min())
    return {
        "max": float(values.max()),
        "min": float(values.min()),
        "mean": mean,
        "median": float(np.median(values)),
        "total": int(len(values)),
        "oscillation": spread / abs(mean) if mean else math.inf,
    }


def format_value(value):
    if value is None:
        return "-"
    return f"{float(value):.6g}"


class ProgressClock:
    """Elapsed time and ETA for batch runs."""

    def __init__(self, total):
        self.total = total
        self.start = time.time()

    def elapsed(self):
        return time.time() - self.start

    def eta_seconds(self, done):
        if done <= 0:
            return None
        return self.elapsed() / done * (self.total - done)

    def line(self, done):
        progress = 100.0 * done / self.total if self.total else 100.0
        text = f"Processed: {done}/{self.total} ({progress:.1f}%)"
        eta = self.eta_seconds(done)
        if eta is not None and done < self.total:
            text += f" - estimated time remaining: {eta / 60:.1f} minutes"
        return text
