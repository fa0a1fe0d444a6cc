#!/usr/bin/env python3
"""Writes golden_v1.qrb with struct, independently of the C++ writer."""
import json
import struct
from pathlib import Path

entries = [
    ("image", "f32", [2, 3], [0.5, -1.25, 3.0, 1e-3, -0.0, 65504.0]),
    ("labels", "i64", [3], [0, -1, 2]),
]
meta = {"logit_scale": 100.0, "model_tag": "golden", "prenormalized": False}

payload = b""
records = []
for name, dtype, shape, values in entries:
    fmt = "<%d%s" % (len(values), "f" if dtype == "f32" else "q")
    blob = struct.pack(fmt, *values)
    records.append({"name": name, "dtype": dtype, "shape": shape,
                    "offset": len(payload), "byte_len": len(blob)})
    payload += blob

manifest = json.dumps({"entries": records, "meta": meta}, separators=(",", ":")).encode()
out = b"QRB1" + struct.pack("<Q", len(manifest)) + manifest + payload
Path(__file__).with_name("golden_v1.qrb").write_bytes(out)
