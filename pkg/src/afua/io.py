"""Text formats for weights, signals, manifests, windows and reports.

Weight file (JSON)::

    {"format_version": 1, "kind": "full_precision" | "quantized",
     "m": 2, "n": 2, "tensors": {"W": [[...]], ..., "bz": [...]},
     "scaler": {"lo": [...], "hi": [...]} | null, "config_hash": "..."}

Quantized tensors are written as JSON integers. Floats use Python's
shortest round-trip repr, so a write/read cycle is bit-exact.

Signals are two-column text ``time value``; feature sequences add one
column per feature. The manifest has one ``start end label kind`` line per
segment, ``label`` being ``chewing`` or ``not_chewing``.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import TENSOR_NAMES, ModelParams
from .dsp import FeatureScaler, FeatureSequence, Segment, SignalBuffer, WindowSample
from .netsim import Label, QuantizedParams

FORMAT_VERSION = 1
LABEL_NAMES = {Label.CHEWING: "chewing", Label.NOT_CHEWING: "not_chewing"}
LABEL_FROM_NAME = {v: k for k, v in LABEL_NAMES.items()}

PathLike = Union[str, Path]


class FormatError(ValueError):
    pass


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dump_json(obj, path: PathLike):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path: PathLike):
    return json.loads(Path(path).read_text())


def weights_to_dict(params: Union[ModelParams, QuantizedParams],
                    scaler: Optional[FeatureScaler] = None, config_hash: str = "") -> dict:
    quantized = isinstance(params, QuantizedParams)
    tensors = {k: (v.astype(int).tolist() if quantized else v.tolist())
               for k, v in params.as_dict().items()}
    return {"format_version": FORMAT_VERSION,
            "kind": "quantized" if quantized else "full_precision",
            "m": params.m, "n": params.n, "tensors": tensors,
            "scaler": scaler.as_dict() if scaler is not None else None,
            "config_hash": config_hash}


def weights_from_dict(doc: dict):
    """Return ``(params, scaler)`` from a weight document."""
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported weight format version {doc.get('format_version')!r}")
    tensors = doc.get("tensors", {})
    if set(tensors) != set(TENSOR_NAMES):
        raise FormatError(f"weight file must hold exactly {TENSOR_NAMES}")
    kind = doc.get("kind")
    if kind == "quantized":
        if not all(isinstance(v, int) for t in tensors.values() for v in np.ravel(t).tolist()):
            raise FormatError("quantized tensors must be integers")
        params = QuantizedParams(**{k: np.asarray(v, dtype=np.int64) for k, v in tensors.items()})
    elif kind == "full_precision":
        params = ModelParams(**{k: np.asarray(v, dtype=float) for k, v in tensors.items()})
    else:
        raise FormatError(f"unknown weight kind {kind!r}")
    scaler = FeatureScaler.from_dict(doc["scaler"]) if doc.get("scaler") else None
    return params, scaler


def save_weights(path: PathLike, params, scaler=None, config_hash: str = ""):
    dump_json(weights_to_dict(params, scaler, config_hash), path)


def load_weights(path: PathLike):
    return weights_from_dict(load_json(path))


def _hash_line(config_hash: str) -> str:
    return f"\nconfig_hash {config_hash}" if config_hash else ""


def read_config_hash(path: PathLike) -> str:
    """Config hash recorded in a text or JSON artifact ('' when absent)."""
    with open(path) as fh:
        first = fh.readline()
        if first.lstrip().startswith("{"):
            return json.loads(first + fh.read()).get("config_hash", "")
        line = first
        while line.startswith("#"):
            if line.startswith("# config_hash "):
                return line.split()[2]
            line = fh.readline()
    return ""


def save_signal(path: PathLike, buf: SignalBuffer, config_hash: str = ""):
    np.savetxt(path, np.column_stack([buf.times(), buf.samples]), fmt="%.17g",
               header=f"sample_rate {buf.sample_rate!r}{_hash_line(config_hash)}\ntime value")


def load_signal(path: PathLike) -> SignalBuffer:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# sample_rate"):
        raise FormatError("signal file lacks a sample_rate header")
    rate = float(first.split()[2])
    data = np.loadtxt(path, ndmin=2)
    return SignalBuffer(data[:, 1], rate)


def save_features(path: PathLike, feats: FeatureSequence, config_hash: str = ""):
    np.savetxt(path, np.column_stack([feats.times(), feats.values]), fmt="%.17g",
               header=f"rate {feats.rate!r}{_hash_line(config_hash)}\ntime x0 x1")


def load_features(path: PathLike) -> FeatureSequence:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# rate"):
        raise FormatError("feature file lacks a rate header")
    rate = float(first.split()[2])
    data = np.loadtxt(path, ndmin=2)
    t0 = data[0, 0] - 1.0 / rate
    return FeatureSequence(values=data[:, 1:], rate=rate, t0=round(t0, 12))


def save_manifest(path: PathLike, manifest, config_hash: str = ""):
    lines = [f"# config_hash {config_hash}"] if config_hash else []
    lines += ["# start end label kind"]
    lines += [f"{s.start!r} {s.end!r} {LABEL_NAMES[s.label]} {s.kind or '-'}" for s in manifest]
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path: PathLike) -> list[Segment]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        start, end, label, kind = line.split()
        if label not in LABEL_FROM_NAME:
            raise FormatError(f"unknown label {label!r}")
        out.append(Segment(float(start), float(end), LABEL_FROM_NAME[label],
                           "" if kind == "-" else kind))
    return out


def windows_to_dict(windows) -> list[dict]:
    return [{"label": LABEL_NAMES[w.label], "t0": w.t0, "frame_rate": w.frame_rate,
             "kind": w.kind, "frames": np.asarray(w.frames).tolist()} for w in windows]


def windows_from_dict(items) -> list[WindowSample]:
    return [WindowSample(frames=np.asarray(d["frames"], dtype=float),
                         label=LABEL_FROM_NAME[d["label"]], t0=d["t0"],
                         frame_rate=d["frame_rate"], kind=d.get("kind", "")) for d in items]


def save_columns(path: PathLike, header: str, *columns, config_hash: str = ""):
    if config_hash:
        header = f"config_hash {config_hash}\n{header}"
    np.savetxt(path, np.column_stack(columns), fmt="%.17g", header=header)
