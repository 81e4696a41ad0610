"""Model persistence: JSON header followed by a flat float32 payload.

Layout::

    bytes 0..7    magic b"SNNCONV1"
    bytes 8..11   header length H, little-endian uint32
    bytes 12..    UTF-8 JSON header (H bytes)
    then          little-endian float32 values, weights then bias per
                  weighted layer, in declaration order

The header carries everything non-tensor: layer kinds and shapes, the
quantization step count, per-layer thresholds, input standardization
constants, and an optional model type tag ("ann" or "snn"; the tensors are
identical either way since conversion reuses them).
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataFormatError
from .network import LayerParams, NetworkSpec

MAGIC = b"SNNCONV1"
FORMAT_VERSION = 1


def _layer_header(layer: LayerParams) -> dict:
    entry: dict = {"kind": layer.kind}
    if layer.kind == "dense":
        entry["shape"] = list(layer.weights.shape)
        entry["has_bias"] = layer.bias is not None
        entry["lam"] = layer.lam
    elif layer.kind == "conv2d":
        entry["shape"] = list(layer.weights.shape)
        entry["has_bias"] = layer.bias is not None
        entry["lam"] = layer.lam
        entry["stride"] = layer.stride
        entry["padding"] = layer.padding
    elif layer.kind == "avgpool2d":
        entry["pool"] = layer.pool
    return entry


def save_checkpoint(net: NetworkSpec, path, model_type: str = "ann") -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "model_type": model_type,
        "quant_steps": net.quant_steps,
        "input_shape": list(net.input_shape),
        "normalization": list(net.normalization) if net.normalization else None,
        "layers": [_layer_header(l) for l in net.layers],
    }
    chunks = []
    for layer in net.layers:
        if layer.weights is not None:
            chunks.append(layer.weights.astype("<f4").ravel())
            if layer.bias is not None:
                chunks.append(layer.bias.astype("<f4").ravel())
    payload = np.concatenate(chunks) if chunks else np.empty(0, dtype="<f4")
    header["payload_count"] = int(payload.size)

    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload.tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns ``(NetworkSpec, header_dict)``.

    Raises :class:`DataFormatError` with the byte offset on any structural
    problem (bad magic, truncated header or payload).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4:
        raise DataFormatError(f"checkpoint truncated at byte {len(blob)}: no header")
    if blob[: len(MAGIC)] != MAGIC:
        raise DataFormatError(f"bad checkpoint magic at byte 0: {blob[:8]!r}")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    header_start = len(MAGIC) + 4
    header_end = header_start + header_len
    if len(blob) < header_end:
        raise DataFormatError(f"checkpoint truncated at byte {len(blob)}: header needs {header_end}")
    try:
        header = json.loads(blob[header_start:header_end].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"unparseable checkpoint header at byte {header_start}: {exc}") from exc

    payload = np.frombuffer(blob[header_end:], dtype="<f4")
    expected = header.get("payload_count")
    if expected is not None and payload.size != expected:
        raise DataFormatError(
            f"payload truncated at byte {header_end + payload.size * 4}: "
            f"have {payload.size} floats, header declares {expected}")

    layers = []
    offset = 0
    for entry in header["layers"]:
        kind = entry["kind"]
        if kind in ("dense", "conv2d"):
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            w = payload[offset:offset + count].astype(np.float64).reshape(shape)
            offset += count
            b = None
            if entry.get("has_bias"):
                out = shape[0]
                b = payload[offset:offset + out].astype(np.float64)
                offset += out
            layers.append(LayerParams(
                kind=kind, weights=w, bias=b, lam=entry.get("lam"),
                stride=entry.get("stride", 1), padding=entry.get("padding", 0)))
        elif kind == "avgpool2d":
            layers.append(LayerParams(kind=kind, pool=entry["pool"]))
        elif kind == "flatten":
            layers.append(LayerParams(kind=kind))
        else:
            raise DataFormatError(f"unknown layer kind {kind!r} in checkpoint header")
    if offset != payload.size:
        raise DataFormatError(
            f"payload has {payload.size} floats but layers consume {offset}")

    normalization = header.get("normalization")
    net = NetworkSpec(
        layers=layers,
        quant_steps=header["quant_steps"],
        input_shape=tuple(header["input_shape"]),
        normalization=tuple(normalization) if normalization else None,
    )
    return net, header
