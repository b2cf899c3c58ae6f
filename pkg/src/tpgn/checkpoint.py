"""Parameter checkpoints: one JSON document, float64 payload as base64.

The byte payload makes the write-read roundtrip bit-exact while keeping
config and seed human-readable.  The sentence encoder used by the warm
start rides along under its own key when present.
"""

from __future__ import annotations

import base64
import hashlib
import json

import numpy as np

from .model import TpgnConfig, TpgnParams
from .tensor import ContractViolation
from .train import PretrainEncoderParams

__all__ = ["save_checkpoint", "load_checkpoint", "checkpoint_id"]

_FORMAT = "tpgn-checkpoint-v1"


def _pack(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "dims": list(a.shape),
        "dtype": "float64",
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _unpack(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    a = np.frombuffer(raw, dtype="<f8").reshape(doc["dims"]).copy()
    if not np.all(np.isfinite(a)):
        raise ContractViolation("checkpoint tensor has non-finite entries")
    return a


def save_checkpoint(path, params: TpgnParams,
                    encoder: PretrainEncoderParams | None = None) -> None:
    doc = {
        "format": _FORMAT,
        "config": params.config.to_dict(),
        "seed": params.seed,
        "tensors": {n: _pack(a) for n, a in params.items()},
    }
    if encoder is not None:
        doc["encoder_tensors"] = {n: _pack(a) for n, a in encoder.items()}
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=1)


def load_checkpoint(path, with_encoder: bool = False):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != _FORMAT:
        raise ContractViolation(f"not a checkpoint file: {path}")
    cfg = TpgnConfig.from_dict(doc["config"])
    params = TpgnParams(cfg, int(doc["seed"]),
                        {n: _unpack(t) for n, t in doc["tensors"].items()})
    if not with_encoder:
        return params
    encoder = None
    if "encoder_tensors" in doc:
        encoder = PretrainEncoderParams(
            cfg, int(doc["seed"]),
            {n: _unpack(t) for n, t in doc["encoder_tensors"].items()})
    return params, encoder


def checkpoint_id(path) -> str:
    """Content hash of a checkpoint file (first 16 hex chars of sha256)."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
