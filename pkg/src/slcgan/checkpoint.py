"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..7    magic b"SLCGCKPT"
    bytes 8..11   format version (u32)
    bytes 12..19  manifest length (u64)
    ...           manifest: UTF-8 JSON with the format version, the hash
                  and full text of the resolved run config (output
                  directory omitted), the iteration counter, the serialized
                  RNG state, and an ordered record list (name, dtype,
                  shape) for every tensor
    ...           payload: raw little-endian tensor data, concatenated in
                  record order
    last 32 bytes SHA-256 digest of everything before it

Any truncation, unknown version, or single flipped byte fails the load
with an explicit error; there is no partial restore.
"""

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .config import RunConfig, build_config, config_hash, config_to_text, parse_config_text
from .errors import CheckpointError

MAGIC = b"SLCGCKPT"
FORMAT_VERSION = 1

_DTYPES = {
    torch.float32: "<f4",
    torch.float64: "<f8",
    torch.int64: "<i8",
    torch.int32: "<i4",
    torch.uint8: "|u1",
    torch.bool: "|b1",
}
_TORCH_DTYPES = {v: k for k, v in _DTYPES.items()}


@dataclass
class CheckpointData:
    config: RunConfig
    iteration: int
    tensors: dict[str, torch.Tensor]
    rng_state: dict


def _encode_rng_state(state: dict) -> dict:
    # PCG64 state contains arbitrary-precision ints; JSON handles them natively
    return json.loads(json.dumps(state))


def write_checkpoint(path: str, config: RunConfig, iteration: int,
                     tensors: dict[str, torch.Tensor], rng_state: dict) -> None:
    records = []
    blobs = []
    for name in sorted(tensors):
        t = tensors[name].detach().cpu()
        if t.dtype not in _DTYPES:
            raise CheckpointError(f"tensor {name} has unsupported dtype {t.dtype}")
        dtype = _DTYPES[t.dtype]
        arr = np.ascontiguousarray(t.numpy()).astype(dtype, copy=False)
        records.append({"name": name, "dtype": dtype, "shape": list(t.shape)})
        blobs.append(arr.tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash(config),
        "config_text": config_to_text(config, include_out_dir=False),
        "iteration": iteration,
        "rng_state": _encode_rng_state(rng_state),
        "tensors": records,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", FORMAT_VERSION)
    body += struct.pack("<Q", len(manifest_bytes))
    body += manifest_bytes
    for blob in blobs:
        body += blob
    digest = hashlib.sha256(bytes(body)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(body))
        fh.write(digest)


def read_checkpoint(path: str) -> CheckpointData:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 4 + 8 + 32:
        raise CheckpointError(f"checkpoint {path} is truncated")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"checkpoint {path} failed its integrity check")
    if body[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<I", body, offset)
    offset += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {version}, expected {FORMAT_VERSION}")
    (manifest_len,) = struct.unpack_from("<Q", body, offset)
    offset += 8
    if offset + manifest_len > len(body):
        raise CheckpointError(f"checkpoint {path} is truncated inside its manifest")
    try:
        manifest = json.loads(body[offset:offset + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint {path} has a corrupt manifest: {exc}") from exc
    offset += manifest_len
    tensors: dict[str, torch.Tensor] = {}
    for record in manifest["tensors"]:
        dtype = record["dtype"]
        if dtype not in _TORCH_DTYPES:
            raise CheckpointError(f"checkpoint {path}: unknown tensor dtype {dtype}")
        shape = tuple(record["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
        if offset + nbytes > len(body):
            raise CheckpointError(f"checkpoint {path} is truncated inside tensor data")
        arr = np.frombuffer(body, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)),
                            offset=offset).reshape(shape)
        tensors[record["name"]] = torch.from_numpy(arr.copy())
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"checkpoint {path} has {len(body) - offset} trailing bytes")
    config = build_config(parse_config_text(manifest["config_text"]))
    if config_hash(config) != manifest["config_hash"]:
        raise CheckpointError(f"checkpoint {path}: embedded config does not match its hash")
    return CheckpointData(config=config, iteration=int(manifest["iteration"]),
                          tensors=tensors, rng_state=manifest["rng_state"])
