"""Network checkpoint serialization.

Layout: 8-byte magic, little-endian uint32 header length, a UTF-8
key=value header (format version, architecture, training temperature,
seed), then every parameter tensor as raw little-endian float64 in
layer order.  Loading rebuilds the network and is bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (CheckpointCorruptError, CheckpointMismatchError,
                     CheckpointVersionError, ShapeError)
from .layers import LayerSpec
from .network import Architecture, Network

MAGIC = b"DSTLBRK\x01"
FORMAT_VERSION = 1


def _header_text(net: Network) -> str:
    lines = [
        f"format_version={FORMAT_VERSION}",
        f"name={net.arch.name}",
        "input_shape=" + ",".join(str(d) for d in net.arch.input_shape),
        "layers=" + "|".join(s.to_string() for s in net.arch.specs),
        f"training_temperature={net.training_temperature!r}",
        f"rng_seed={net.rng_seed}",
        f"param_count={net.num_params()}",
    ]
    return "\n".join(lines) + "\n"


def save_checkpoint(net: Network, path) -> None:
    header = _header_text(net).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for _, arr in net.param_items():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _parse_header(text: str, path) -> dict:
    fields = {}
    for line in text.splitlines():
        if not line:
            continue
        if "=" not in line:
            raise CheckpointCorruptError(f"{path}: malformed header line {line!r}")
        key, value = line.split("=", 1)
        fields[key] = value
    return fields


def load_checkpoint(path) -> Network:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:8] != MAGIC:
        raise CheckpointCorruptError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + header_len:
        raise CheckpointCorruptError(f"{path}: truncated header")
    fields = _parse_header(raw[12:12 + header_len].decode("utf-8"), path)

    version = fields.get("format_version")
    if version != str(FORMAT_VERSION):
        raise CheckpointVersionError(f"{path}: unsupported format version {version!r}")

    try:
        input_shape = tuple(int(d) for d in fields["input_shape"].split(","))
        specs = tuple(LayerSpec.from_string(s) for s in fields["layers"].split("|"))
        temperature = float(fields["training_temperature"])
        seed = int(fields["rng_seed"])
        declared_params = int(fields["param_count"])
        name = fields["name"]
    except (KeyError, ValueError) as exc:
        raise CheckpointCorruptError(f"{path}: bad header field ({exc})") from exc

    try:
        arch = Architecture(name=name, input_shape=input_shape, specs=specs)
        net = Network(arch, seed=seed, training_temperature=temperature)
    except ShapeError as exc:
        raise CheckpointMismatchError(f"{path}: architecture header is not self-consistent "
                                      f"({exc})") from exc

    if net.num_params() != declared_params:
        raise CheckpointMismatchError(
            f"{path}: architecture implies {net.num_params()} parameters but header "
            f"declares {declared_params}")
    payload = raw[12 + header_len:]
    if len(payload) != declared_params * 8:
        raise CheckpointCorruptError(
            f"{path}: payload is {len(payload)} bytes, expected {declared_params * 8}")

    values = np.frombuffer(payload, dtype="<f8")
    offset = 0
    for _, arr in net.param_items():
        chunk = values[offset:offset + arr.size]
        arr[...] = chunk.reshape(arr.shape)
        offset += arr.size
    net.bump_version()
    return net
