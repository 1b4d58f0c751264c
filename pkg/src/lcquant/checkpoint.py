"""Versioned binary model container.

Byte layout (all multi-byte integers little-endian):

    offset  size  contents
    0       8     magic b"LCQCKPT\\x01" (trailing byte = format version)
    8       4     uint32 header length H
    12      H     UTF-8 JSON header
    12+H    ...   payload blobs, concatenated in layer order

The JSON header describes the model (task, activation, layer shapes) and,
per layer, whether it is stored quantized.  Payload per layer:

  * raw layer:        weight matrix as float64 row-major, then bias float64
  * quantized layer:  assignment indices packed at ceil(log2 K) bits per
                      weight (big-endian within each index, indices
                      concatenated MSB-first, final byte zero-padded),
                      then bias float64; the codebook entries and optional
                      scale live in the header, so decompression is exact.

K = 1 packs to zero bits (no index payload).  Reconstruction is bit-exact:
float64 survives untouched and header floats round-trip through JSON via
repr.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import DataFormatError
from .quantizers import Assignments, Codebook, QuantParams, decompress

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint",
           "pack_indices", "unpack_indices"]

MAGIC = b"LCQCKPT\x01"


def pack_indices(kappa: np.ndarray, bits: int) -> bytes:
    """Pack nonnegative ints < 2**bits at ``bits`` bits each, MSB first."""
    if bits == 0:
        return b""
    kappa = np.asarray(kappa, dtype=np.uint64)
    if kappa.size and int(kappa.max()) >= (1 << bits):
        raise ValueError("index does not fit in the given bit width")
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    bitmat = ((kappa[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bitmat.ravel()).tobytes()


def unpack_indices(buf: bytes, n: int, bits: int) -> np.ndarray:
    """Inverse of pack_indices for ``n`` indices."""
    if bits == 0:
        return np.zeros(n, dtype=np.int64)
    needed = (n * bits + 7) // 8
    if len(buf) < needed:
        raise DataFormatError("packed index payload is truncated")
    flat = np.unpackbits(np.frombuffer(buf[:needed], dtype=np.uint8),
                         count=n * bits)
    powers = (1 << np.arange(bits - 1, -1, -1, dtype=np.int64))
    return (flat.reshape(n, bits).astype(np.int64) @ powers)


@dataclass
class Checkpoint:
    """A saved model: layout, parameters, and optional quantization."""

    task: str
    weights: list  # list of (out, in) float arrays
    biases: list  # list of (out,) float arrays
    activation: str | None = None
    quant: list | None = None  # per-layer QuantParams (or None entries)
    meta: dict = field(default_factory=dict)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return [tuple(w.shape) for w in self.weights]


def _bits_for(k: int) -> int:
    return (k - 1).bit_length()


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    quant = ckpt.quant or [None] * len(ckpt.weights)
    if len(quant) != len(ckpt.weights):
        raise ValueError("quant entries must match the layer count")
    layers = []
    blobs = []
    for w, b, q in zip(ckpt.weights, ckpt.biases, quant):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        entry = {"shape": list(w.shape), "bias": int(b.size)}
        if q is None:
            entry["quantized"] = False
            blobs.append(w.tobytes(order="C"))
        else:
            if q.n_weights != w.size:
                raise ValueError("quantization does not match the layer size")
            bits = _bits_for(q.codebook.k)
            entry["quantized"] = True
            entry["codebook"] = [float(c) for c in q.codebook.entries]
            entry["scale"] = None if q.codebook.scale is None else float(q.codebook.scale)
            entry["kind"] = q.codebook.kind
            entry["index_bits"] = bits
            entry["degenerate"] = bool(q.degenerate)
            blobs.append(pack_indices(q.assignments.kappa, bits))
        blobs.append(b.tobytes(order="C"))
        layers.append(entry)
    header = {
        "format_version": 1,
        "library_version": __version__,
        "task": ckpt.task,
        "activation": ckpt.activation,
        "layers": layers,
        "meta": ckpt.meta,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise DataFormatError(f"{path}: not a model checkpoint (bad magic)")
    (head_len,) = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])
    start = len(MAGIC) + 4
    if len(raw) < start + head_len:
        raise DataFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start : start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format_version") != 1:
        raise DataFormatError(
            f"{path}: unsupported format version {header.get('format_version')!r}"
        )
    pos = start + head_len

    def take(nbytes, what):
        nonlocal pos
        if len(raw) < pos + nbytes:
            raise DataFormatError(f"{path}: truncated while reading {what}")
        chunk = raw[pos : pos + nbytes]
        pos += nbytes
        return chunk

    weights, biases, quant = [], [], []
    any_quant = False
    for entry in header["layers"]:
        out, n_in = entry["shape"]
        size = out * n_in
        if entry["quantized"]:
            any_quant = True
            bits = entry["index_bits"]
            kappa = unpack_indices(take((size * bits + 7) // 8, "indices"),
                                   size, bits)
            codebook = Codebook(
                np.array(entry["codebook"]),
                kind=entry["kind"],
                scale=entry["scale"],
            )
            params = QuantParams(codebook, Assignments(kappa),
                                 degenerate=entry.get("degenerate", False))
            weights.append(decompress(params).reshape(out, n_in))
            quant.append(params)
        else:
            w = np.frombuffer(take(size * 8, "weights"), dtype=np.float64)
            weights.append(w.reshape(out, n_in).copy())
            quant.append(None)
        b = np.frombuffer(take(entry["bias"] * 8, "bias"), dtype=np.float64)
        biases.append(b.copy())
    if pos != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return Checkpoint(
        task=header["task"],
        weights=weights,
        biases=biases,
        activation=header.get("activation"),
        quant=quant if any_quant else None,
        meta=header.get("meta", {}),
    )
