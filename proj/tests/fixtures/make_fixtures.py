#!/usr/bin/env python3
"""Writes the golden-byte fixtures straight from the container layouts."""
import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def eegr() -> bytes:
    # 2 channels x 3 samples holding 1..6, row-major
    out = b"EEGR" + struct.pack("<IIQf", 1, 2, 3, 128.0)
    sid = b"GLD"
    out += struct.pack("<B", len(sid)) + sid
    out += struct.pack("<6f", 1, 2, 3, 4, 5, 6)
    out += bytes([0, 1, 1])
    return out


def mhck() -> bytes:
    tensors = [("w", [2, 2], [1.0, 2.0, 3.0, 4.0]), ("b", [3], [0.5, -1.0, 2.0])]
    out = b"MHCK" + struct.pack("<II", 1, len(tensors))
    for name, shape, values in tensors:
        raw = name.encode()
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<I", len(shape))
        out += b"".join(struct.pack("<Q", d) for d in shape)
        out += struct.pack(f"<{len(values)}f", *values)
    return out + struct.pack("<Q", fnv1a64(out))


if __name__ == "__main__":
    (HERE / "golden.eegr").write_bytes(eegr())
    (HERE / "golden.mhck").write_bytes(mhck())
