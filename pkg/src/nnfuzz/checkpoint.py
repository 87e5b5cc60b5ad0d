"""Framework-free model checkpoints.

Layout (all integers little-endian)::

    b"NNFZ"            magic, 4 bytes
    uint32             format version (currently 1)
    uint32             header length H in bytes
    H bytes            UTF-8 JSON header
    ...                tensor data, float32 little-endian, C order

The header is ``{"kind", "tensors", "meta", "config"}`` where ``tensors`` is a
list of ``{"name", "shape", "offset"}`` with ``offset`` counted in bytes from
the start of the tensor data. ``meta`` holds what is needed to rebuild the
model (activations and input range for ``mlp``, the vocabulary for
``charrnn``); ``config`` is free-form training provenance. JSON keys are
sorted, so equal models with equal configs serialise to identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .models.charrnn import CharRnnModel, LstmLayer
from .models.mlp import Layer, MlpModel
from .numeric import ParameterError

MAGIC = b"NNFZ"
VERSION = 1


class CheckpointError(ParameterError):
    pass


def _mlp_tensors(model: MlpModel):
    out = []
    for i, l in enumerate(model.layers):
        out += [(f"layers.{i}.weight", l.weight), (f"layers.{i}.bias", l.bias)]
    meta = {"activations": [l.activation for l in model.layers], "input_range": list(model.input_range)}
    return out, meta


def _charrnn_tensors(model: CharRnnModel):
    out = [("embedding", model.embedding)]
    for i, l in enumerate(model.layers):
        out += [(f"lstm.{i}.weight", l.weight), (f"lstm.{i}.bias", l.bias)]
    out += [("out.weight", model.out_weight), ("out.bias", model.out_bias)]
    return out, {"vocabulary": model.vocabulary, "num_layers": len(model.layers)}


def dumps(model, config: dict | None = None) -> bytes:
    if isinstance(model, MlpModel):
        kind, (tensors, meta) = "mlp", _mlp_tensors(model)
    elif isinstance(model, CharRnnModel):
        kind, (tensors, meta) = "charrnn", _charrnn_tensors(model)
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    entries, blobs, offset = [], [], 0
    for name, arr in tensors:
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"kind": kind, "tensors": entries, "meta": meta, "config": config or {}},
                        sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + b"".join(blobs)


def loads(data: bytes):
    """Return ``(model, config)``."""
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from None
    body = memoryview(data)[12 + hlen:]
    tensors = {}
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64))
        end = t["offset"] + 4 * n
        if end > len(body):
            raise CheckpointError(f"tensor {t['name']} runs past the end of the file")
        arr = np.frombuffer(body[t["offset"]:end], dtype="<f4").reshape(t["shape"])
        tensors[t["name"]] = arr.astype(np.float32)
    meta = header["meta"]
    if header["kind"] == "mlp":
        acts = meta["activations"]
        layers = [Layer(tensors[f"layers.{i}.weight"], tensors[f"layers.{i}.bias"], a) for i, a in enumerate(acts)]
        model = MlpModel(tuple(layers), tuple(meta["input_range"]))
    elif header["kind"] == "charrnn":
        layers = [LstmLayer(tensors[f"lstm.{i}.weight"], tensors[f"lstm.{i}.bias"])
                  for i in range(meta["num_layers"])]
        model = CharRnnModel(meta["vocabulary"], tensors["embedding"], tuple(layers),
                             tensors["out.weight"], tensors["out.bias"])
    else:
        raise CheckpointError(f"unknown model kind {header['kind']!r}")
    return model, header["config"]


def save(path, model, config: dict | None = None) -> None:
    Path(path).write_bytes(dumps(model, config))


def load(path):
    return loads(Path(path).read_bytes())
