"""Single-file persistence for a trained network plus its preprocessor.

A ``.teta`` file is self-sufficient for inference:

    offset 0   4 bytes   magic  b"TETA"
    offset 4   4 bytes   format version, uint32 little-endian
    offset 8   8 bytes   header length H, uint64 little-endian
    offset 16  H bytes   UTF-8 JSON header (architecture, vocabularies,
                         scaler, metadata, array manifest, blob size)
    offset 16+H  B bytes parameter blob: float64 little-endian arrays,
                         concatenated in manifest order
    last 4 bytes         CRC32 of everything before it, uint32 little-endian

The header is human-inspectable; the fixed-endianness blob makes files
portable across machines.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrityError, VersionMismatchError
from .features import FeaturePipeline
from .neuralnet import Network, NetworkSpec

MAGIC = b"TETA"
FORMAT_VERSION = 1
FILE_EXTENSION = ".teta"

_PREFIX = struct.Struct("<4sIQ")
_CRC = struct.Struct("<I")


@dataclass
class ModelBundle:
    """Everything needed to reproduce inference: network, preprocessor, metadata."""

    network: Network
    pipeline: FeaturePipeline
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def _blob_and_manifest(net: Network) -> tuple[bytes, list[dict]]:
    manifest = []
    chunks = []
    for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
        for name, arr in ((f"W{layer}", W), (f"b{layer}", b)):
            manifest.append({"name": name, "shape": list(arr.shape)})
            chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(chunks), manifest


def save(bundle: ModelBundle, path) -> None:
    blob, manifest = _blob_and_manifest(bundle.network)
    metadata = dict(bundle.metadata)
    metadata.setdefault("model_version", f"v{FORMAT_VERSION}-{zlib.crc32(blob):08x}")
    spec = bundle.network.spec
    header = {
        "network": {
            "layer_sizes": list(spec.layer_sizes),
            "hidden_activation": spec.hidden_activation,
            "output_activation": spec.output_activation,
            "seed": spec.seed,
        },
        "arrays": manifest,
        "blob_bytes": len(blob),
        "preprocessor": bundle.pipeline.to_dict(),
        "metadata": metadata,
    }
    header_bytes = json.dumps(header).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)) + header_bytes + blob
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(_CRC.pack(zlib.crc32(body)))


def load(path) -> ModelBundle:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _PREFIX.size + _CRC.size:
        raise IntegrityError(f"file too short to be a model bundle: {len(data)} bytes")
    magic, version, header_len = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise IntegrityError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(have=FORMAT_VERSION, found=version)

    header_end = _PREFIX.size + header_len
    if len(data) < header_end + _CRC.size:
        raise IntegrityError("file truncated inside the header")
    header = json.loads(data[_PREFIX.size:header_end].decode("utf-8"))
    blob_bytes = int(header["blob_bytes"])
    expected_len = header_end + blob_bytes + _CRC.size
    if len(data) != expected_len:
        raise IntegrityError(
            f"file length {len(data)} does not match expected {expected_len}"
        )
    (stored_crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    actual_crc = zlib.crc32(data[: len(data) - _CRC.size])
    if stored_crc != actual_crc:
        raise IntegrityError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )

    net_info = header["network"]
    spec = NetworkSpec(
        layer_sizes=tuple(net_info["layer_sizes"]),
        hidden_activation=net_info["hidden_activation"],
        output_activation=net_info["output_activation"],
        seed=net_info["seed"],
    )
    arrays = {}
    offset = header_end
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
        offset += count * 8
    n_layers = len(spec.layer_sizes) - 1
    network = Network(
        weights=[arrays[f"W{i}"] for i in range(n_layers)],
        biases=[arrays[f"b{i}"] for i in range(n_layers)],
        spec=spec,
    )
    pipeline = FeaturePipeline.from_dict(header["preprocessor"])
    return ModelBundle(
        network=network,
        pipeline=pipeline,
        metadata=header["metadata"],
        format_version=version,
    )
