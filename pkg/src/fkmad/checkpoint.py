"""Versioned binary checkpoint with an explicit tensor manifest.

Layout: 6-byte magic, little-endian uint32 manifest length, UTF-8 JSON
manifest, then the raw float64 little-endian tensor payload.  The manifest
records the format version, the training-step counter, the full run config,
and for every tensor its name, shape, byte offset and length.  Loading a
saved model reproduces every tensor bit-exactly; the round trip is a test.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, as_dict, from_dict
from .model import FkmadModel, init_model

MAGIC = b"FKMAD\x01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Corrupt, truncated, or incompatible checkpoint file."""


@dataclass
class LoadedCheckpoint:
    model: FkmadModel
    config: RunConfig
    step: int


def _entries(model: FkmadModel) -> list[tuple[str, np.ndarray]]:
    """All arrays that define the model, in a stable order."""
    out = [(name, p.data) for name, p in sorted(model.named_params().items())]
    out.append(("buf.freqs", model.proj.freqs))
    if model.norm_mean is not None:
        out.append(("buf.norm_mean", np.asarray(model.norm_mean, dtype=np.float64)))
        out.append(("buf.norm_std", np.asarray(model.norm_std, dtype=np.float64)))
    return out


def save_checkpoint(path: str, model: FkmadModel, cfg: RunConfig,
                    step: int) -> None:
    entries = _entries(model)
    tensors = []
    offset = 0
    chunks = []
    for name, arr in entries:
        arr = np.asarray(arr, dtype=np.float64)  # 0-d scalars stay 0-d
        raw = arr.tobytes()
        tensors.append({"name": name, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format_version": FORMAT_VERSION, "step": int(step),
                "config": as_dict(cfg), "tensors": tensors}
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path: str) -> LoadedCheckpoint:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from None
    if len(blob) < len(MAGIC) + 4 or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    if len(blob) < start + hlen:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest: {exc}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {manifest.get('format_version')}"
        )
    payload = blob[start + hlen:]
    stored: dict[str, np.ndarray] = {}
    for ent in manifest["tensors"]:
        end = ent["offset"] + ent["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"{path}: truncated tensor '{ent['name']}'")
        arr = np.frombuffer(payload[ent["offset"]:end], dtype="<f8")
        stored[ent["name"]] = arr.reshape(ent["shape"]).copy()

    cfg = from_dict(manifest["config"])
    if cfg.model.d_in < 1:
        raise CheckpointError(f"{path}: config lacks a resolved input width")
    model = init_model(cfg.model, seed=0)
    for name, param in model.named_params().items():
        if name not in stored:
            raise CheckpointError(f"{path}: missing tensor '{name}'")
        if tuple(stored[name].shape) != param.data.shape:
            raise CheckpointError(
                f"{path}: tensor '{name}' has shape {stored[name].shape}, "
                f"expected {param.data.shape}"
            )
        param.data = stored[name]
    model.proj.freqs = stored["buf.freqs"]
    if "buf.norm_mean" in stored:
        model.norm_mean = stored["buf.norm_mean"]
        model.norm_std = stored["buf.norm_std"]
    return LoadedCheckpoint(model=model, config=cfg, step=int(manifest["step"]))
