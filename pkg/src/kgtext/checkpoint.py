"""Single-file checkpoints: a zip of a JSON manifest plus raw little-endian arrays.

Entries are stored uncompressed with a fixed timestamp and in a fixed order,
so loading a checkpoint and saving it again reproduces the same bytes.
"""
from __future__ import annotations

import io
import json
import os
import zipfile
from dataclasses import dataclass

import numpy as np
import torch

from .model import KG2TextModel, ModelConfig
from .tokenizer import SubwordVocab

FORMAT = "kgtext-checkpoint"
VERSION = 1
SECTIONS = ("graph_encoder", "seq_model", "copy_gate", "relation_classifier")
_EPOCH = (1980, 1, 1, 0, 0, 0)
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: KG2TextModel
    config: dict  # echo of the training configuration
    step: int = 0
    seed: int = 0
    rng_state: bytes | None = None


def _section(name: str) -> str:
    head = name.split(".", 1)[0]
    if head not in SECTIONS:
        raise CheckpointError(f"parameter {name!r} is outside the known sections")
    return head


def _write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    model = ckpt.model
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "config": ckpt.config,
        "model_config": model.config.to_dict(),
        "vocab": model.vocab.to_dict(),
        "relations": list(model.relations),
        "step": int(ckpt.step),
        "seed": int(ckpt.seed),
        "rng_state": "rng/torch.bin" if ckpt.rng_state is not None else None,
        "parameters": [],
    }
    blobs = []
    for name, t in model.state_dict().items():
        t = t.detach().cpu()
        if t.dtype not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {t.dtype} for {name}")
        path = f"parameters/{name}.bin"
        manifest["parameters"].append({"name": name, "section": _section(name), "dtype": _DTYPES[t.dtype],
                                       "shape": list(t.shape), "file": path})
        blobs.append((path, np.ascontiguousarray(t.numpy(), dtype=_DTYPES[t.dtype]).tobytes()))
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _write(zf, "manifest.json", json.dumps(manifest, indent=1, sort_keys=True).encode("utf-8"))
        for path, data in blobs:
            _write(zf, path, data)
        if ckpt.rng_state is not None:
            _write(zf, "rng/torch.bin", ckpt.rng_state)
    return buf.getvalue()


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    data = checkpoint_bytes(ckpt)
    with open(path, "wb") as fh:
        fh.write(data)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, FileNotFoundError) as exc:
        raise CheckpointError(f"cannot open checkpoint {path}: {exc}") from exc
    with zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != FORMAT:
            raise CheckpointError(f"{path} is not a {FORMAT} archive")
        if manifest.get("version") != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')}")
        vocab = SubwordVocab.from_dict(manifest["vocab"])
        model = KG2TextModel(vocab, manifest["relations"], ModelConfig(**manifest["model_config"]))
        state = {}
        for entry in manifest["parameters"]:
            arr = np.frombuffer(zf.read(entry["file"]), dtype=entry["dtype"]).reshape(entry["shape"])
            state[entry["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True))
        dtypes = {t.dtype for t in state.values()}
        if len(dtypes) == 1:
            model = model.to(dtypes.pop())
        missing = set(model.state_dict()) - set(state)
        if missing:
            raise CheckpointError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        model.load_state_dict(state)
        rng = zf.read(manifest["rng_state"]) if manifest.get("rng_state") else None
    model.eval()
    return Checkpoint(model, manifest["config"], manifest["step"], manifest["seed"], rng)


def from_training(result, with_rng: bool = True) -> Checkpoint:
    """Wrap a :class:`~kgtext.trainer.TrainResult`."""
    rng = torch.get_rng_state().numpy().tobytes() if with_rng else None
    return Checkpoint(result.model, result.config.to_dict(), result.step, result.config.seed, rng)
