"""Reader/writer for the named-tensor container used by dinoprobe.

Layout: u64 LE header length N, N bytes of JSON, raw little-endian data.
Tensors are written in name order; the header is space-padded to 8 bytes.
"""

import json
import struct

import numpy as np

_DTYPES = {"F32": np.float32, "F64": np.float64, "I32": np.int32, "I64": np.int64}
_NAMES = {np.dtype(v): k for k, v in _DTYPES.items()}


def write(path, tensors, metadata=None):
    header = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype not in _NAMES:
            arr = arr.astype(np.float32)
        raw = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        header[name] = {
            "data_offsets": [offset, offset + len(raw)],
            "dtype": _NAMES[arr.dtype],
            "shape": list(arr.shape),
        }
        blobs.append(raw)
        offset += len(raw)
    if metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in metadata.items()}
    text = json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8")
    text += b" " * ((8 - len(text) % 8) % 8)
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(text)))
        f.write(text)
        for raw in blobs:
            f.write(raw)


def read(path):
    with open(path, "rb") as f:
        blob = f.read()
    (n,) = struct.unpack("<Q", blob[:8])
    header = json.loads(blob[8 : 8 + n])
    data = blob[8 + n :]
    metadata = header.pop("__metadata__", {})
    tensors = {}
    for name, desc in header.items():
        begin, end = desc["data_offsets"]
        arr = np.frombuffer(data[begin:end], dtype=np.dtype(_DTYPES[desc["dtype"]]).newbyteorder("<"))
        tensors[name] = arr.reshape(desc["shape"])
    return tensors, metadata
