import json
from pathlib import Path

import numpy as np
import pandas as pd

SCHEMA_VERSION = 1


def convert_numpy(X):
    if isinstance(X, (pd.DataFrame, pd.Series)):
        return X.values
    else:
        return np.asarray(X)


def convert_queries(queries):
    """Normalise a list of (p, x) pairs to (float, tuple of floats)."""
    out = []
    for p, x in queries:
        x = np.atleast_1d(convert_numpy(x)).astype(float).reshape(-1)
        out.append((float(p), tuple(x.tolist())))
    return out


def query_label(query):
    p, x = query
    return "p={:g},x=({})".format(p, ",".join("{:g}".format(v) for v in x))


def trial_seed(base_seed: int, trial_index: int, *keys: int) -> np.random.SeedSequence:
    """Independent stream for one trial, fixed by (base_seed, trial_index, *keys)."""
    entropy = [int(base_seed), int(trial_index)] + [int(k) for k in keys]
    if min(entropy) < 0:
        raise ValueError("Seeds and trial indices must be non-negative.")
    return np.random.SeedSequence(entropy)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError("Object of type {} is not JSON serializable".format(type(obj).__name__))


def dumps_json(obj) -> str:
    """Deterministic JSON text: sorted keys, fixed indentation."""
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(obj, path):
    with open(path, "w") as f:
        f.write(dumps_json(obj))


def write_csv(frame: pd.DataFrame, path, metadata: dict = None):
    """CSV with an optional metadata header of '#'-prefixed JSON lines."""
    with open(path, "w") as f:
        if metadata is not None:
            header = json.dumps(metadata, sort_keys=True, default=_json_default)
            f.write("# {}\n".format(header))
        frame.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")


def read_csv(path):
    """Read a CSV written by ``write_csv``; returns (frame, metadata)."""
    metadata = None
    with open(path) as f:
        first = f.readline()
    if first.startswith("# "):
        metadata = json.loads(first[2:])
    return pd.read_csv(path, comment="#"), metadata
