"""Minimal PNG and PFM image I/O.

PNG: 8-bit RGB or grayscale, written with filter type 0 and a fixed zlib
level so byte output is deterministic.  The reader handles filter types 0-4,
so any baseline 8-bit PNG round-trips.

PFM: the portable float map format, float32.  Files are written little-endian
(negative scale) with rows bottom-to-top per the format convention.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + tag
        + data
        + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
    )


def write_png(path: str | Path, image: np.ndarray) -> None:
    """Write an 8-bit PNG.  ``image`` is (H, W) grayscale or (H, W, 3) RGB uint8."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ValueError(f"write_png expects uint8, got {image.dtype}")
    if image.ndim == 2:
        color_type = 0
        channels = 1
    elif image.ndim == 3 and image.shape[2] == 3:
        color_type = 2
        channels = 3
    else:
        raise ValueError(f"unsupported image shape {image.shape}")
    h, w = image.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    rows = image.reshape(h, w * channels)
    raw = b"".join(b"\x00" + rows[r].tobytes() for r in range(h))
    idat = zlib.compress(raw, 6)
    blob = _PNG_SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat) + _chunk(b"IEND", b"")
    Path(path).write_bytes(blob)


def _unfilter(raw: np.ndarray, h: int, w: int, channels: int) -> np.ndarray:
    stride = w * channels
    out = np.zeros((h, stride), dtype=np.uint8)
    pos = 0
    for r in range(h):
        ftype = raw[pos]
        line = raw[pos + 1 : pos + 1 + stride].astype(np.int32)
        pos += 1 + stride
        prev = out[r - 1].astype(np.int32) if r > 0 else np.zeros(stride, dtype=np.int32)
        if ftype == 0:
            cur = line
        elif ftype == 2:  # Up
            cur = (line + prev) & 0xFF
        elif ftype in (1, 3, 4):  # Sub / Average / Paeth need a scan
            cur = np.zeros(stride, dtype=np.int32)
            for i in range(stride):
                a = cur[i - channels] if i >= channels else 0
                b = prev[i]
                if ftype == 1:
                    v = line[i] + a
                elif ftype == 3:
                    v = line[i] + (a + b) // 2
                else:
                    c = prev[i - channels] if i >= channels else 0
                    p = a + b - c
                    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                    pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                    v = line[i] + pred
                cur[i] = v & 0xFF
        else:
            raise ValueError(f"unsupported PNG filter type {ftype}")
        out[r] = cur.astype(np.uint8)
    return out.reshape((h, w, channels) if channels > 1 else (h, w))


def read_png(path: str | Path) -> np.ndarray:
    """Read a baseline 8-bit PNG into uint8 (H, W) or (H, W, 3)."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != _PNG_SIG:
        raise ValueError(f"{path}: not a PNG file")
    pos = 8
    width = height = None
    color_type = None
    idat = b""
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos : pos + 4])
        tag = blob[pos + 4 : pos + 8]
        data = blob[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            width, height, depth, color_type, comp, filt, interlace = struct.unpack(
                ">IIBBBBB", data
            )
            if depth != 8 or color_type not in (0, 2) or interlace != 0:
                raise ValueError(f"{path}: only baseline 8-bit gray/RGB PNG supported")
        elif tag == b"IDAT":
            idat += data
        elif tag == b"IEND":
            break
    if width is None:
        raise ValueError(f"{path}: missing IHDR chunk")
    channels = 3 if color_type == 2 else 1
    raw = np.frombuffer(zlib.decompress(idat), dtype=np.uint8)
    expected = height * (1 + width * channels)
    if raw.size != expected:
        raise ValueError(f"{path}: IDAT payload size {raw.size} != expected {expected}")
    return _unfilter(raw, height, width, channels)


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Write float32 data as PFM: (H, W) -> 'Pf', (H, W, 3) -> 'PF'."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        header = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError(f"unsupported PFM shape {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale = little-endian
        f.write(np.ascontiguousarray(data[::-1]).tobytes())  # bottom-to-top


def read_pfm(path: str | Path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header not in (b"PF", b"Pf"):
            raise ValueError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise ValueError(f"{path}: malformed PFM dimensions line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        count = w * h * (3 if header == b"PF" else 1)
        buf = f.read(count * 4)
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(buf, dtype=dtype).astype(np.float32)
    if header == b"PF":
        data = data.reshape(h, w, 3)
    else:
        data = data.reshape(h, w)
    return data[::-1].copy()


def float_rgb_to_uint8(rgb: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(rgb, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def uint8_to_float_rgb(img: np.ndarray) -> np.ndarray:
    return (img.astype(np.float32) / np.float32(255.0)).astype(np.float32)
