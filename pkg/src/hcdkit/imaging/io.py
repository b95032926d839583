"""PNG and binary PPM/PGM codecs.

PNG: reads greyscale, RGB, palette, grey+alpha and RGBA at bit depth 8 or 16
(non-interlaced; alpha is discarded). Writes greyscale or RGB at 8 or 16 bits
with filter type 0 on every scanline and zlib level 9, so output bytes depend
only on pixel values.

PPM/PGM: reads P5/P6 with any maxval up to 65535 (2-byte big-endian samples
above 255). Writes P5/P6 as ``P6\\n<w> <h>\\n255\\n`` followed by raw bytes, no
comments.
"""
from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .image import Image


class ImageFormatError(ValueError):
    """Unsupported, malformed or truncated image file."""


PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_PNG_CHANNELS = {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}


def load_image(path) -> Image:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    data = path.read_bytes()
    if data.startswith(PNG_SIGNATURE):
        px = _decode_png(data)
    elif data[:2] in (b"P5", b"P6"):
        px = _decode_pnm(data)
    else:
        raise ImageFormatError(f"{path}: unsupported image format")
    return Image(px, "Gray" if px.shape[2] == 1 else "RGB")


def save_image(img: Image, path, bit_depth: int = 8) -> None:
    path = Path(path)
    if not path.parent.exists():
        raise FileNotFoundError(f"directory not found: {path.parent}")
    if img.colorspace == "YCbCr":
        raise ImageFormatError("convert YCbCr images to RGB before saving")
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    suffix = path.suffix.lower()
    if suffix == ".png":
        payload = _encode_png(img.pixels, bit_depth)
    elif suffix in (".ppm", ".pgm", ".pnm"):
        if bit_depth != 8:
            raise ImageFormatError("PPM/PGM are written with maxval 255 only")
        payload = _encode_pnm(img.pixels)
    else:
        raise ImageFormatError(f"unsupported extension {path.suffix!r}")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def quantize(px: np.ndarray, bit_depth: int = 8) -> np.ndarray:
    peak = (1 << bit_depth) - 1
    return np.round(np.clip(px, 0.0, 1.0) * peak).astype(np.uint16 if bit_depth == 16 else np.uint8)


# --- PNG -------------------------------------------------------------------

def _chunk(tag: bytes, body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)


def _encode_png(px: np.ndarray, bit_depth: int) -> bytes:
    h, w, c = px.shape
    color_type = {1: 0, 3: 2}[c]
    q = quantize(px, bit_depth)
    if bit_depth == 16:
        q = q.astype(">u2")
    rows = q.reshape(h, -1).view(np.uint8).reshape(h, -1)
    raw = np.concatenate([np.zeros((h, 1), np.uint8), rows], axis=1).tobytes()
    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, color_type, 0, 0, 0)
    return (
        PNG_SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw, 9))
        + _chunk(b"IEND", b"")
    )


def _read_chunks(data: bytes):
    pos = len(PNG_SIGNATURE)
    while True:
        if pos + 8 > len(data):
            raise ImageFormatError("truncated PNG: missing IEND")
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        tag = data[pos + 4:pos + 8]
        end = pos + 12 + length
        if end > len(data):
            raise ImageFormatError(f"truncated PNG: {tag!r} chunk cut short")
        body = data[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length:end])
        if zlib.crc32(tag + body) & 0xFFFFFFFF != crc:
            raise ImageFormatError(f"corrupt PNG: bad CRC in {tag!r}")
        yield tag, body
        if tag == b"IEND":
            return
        pos = end


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = np.abs(p - a), np.abs(p - b), np.abs(p - c)
    return np.where((pa <= pb) & (pa <= pc), a, np.where(pb <= pc, b, c))


def _unfilter(raw: bytes, h: int, stride: int, bpp: int) -> np.ndarray:
    buf = np.frombuffer(raw, np.uint8)
    if buf.size < h * (stride + 1):
        raise ImageFormatError("truncated PNG: not enough image data")
    buf = buf[: h * (stride + 1)].reshape(h, stride + 1)
    out = np.zeros((h, stride), np.uint8)
    prev = np.zeros(stride, np.int32)
    for y in range(h):
        ftype = buf[y, 0]
        line = buf[y, 1:].astype(np.int32)
        if ftype == 0:
            cur = line
        elif ftype == 1:
            cur = np.cumsum(line.reshape(-1, bpp), axis=0).reshape(-1) & 0xFF
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        elif ftype in (3, 4):
            cur = np.zeros(stride, np.int32)
            left = np.zeros(bpp, np.int32)
            upleft = np.zeros(bpp, np.int32)
            for i in range(0, stride, bpp):
                up = prev[i:i + bpp]
                if ftype == 3:
                    v = (line[i:i + bpp] + ((left + up) >> 1)) & 0xFF
                else:
                    v = (line[i:i + bpp] + _paeth(left, up, upleft)) & 0xFF
                cur[i:i + bpp] = v
                left, upleft = v, up
        else:
            raise ImageFormatError(f"corrupt PNG: unknown filter type {ftype}")
        out[y] = cur
        prev = cur.astype(np.int32)
    return out


def _decode_png(data: bytes) -> np.ndarray:
    header = palette = None
    idat = []
    for tag, body in _read_chunks(data):
        if tag == b"IHDR":
            header = struct.unpack(">IIBBBBB", body)
        elif tag == b"PLTE":
            palette = np.frombuffer(body, np.uint8).reshape(-1, 3)
        elif tag == b"IDAT":
            idat.append(body)
    if header is None:
        raise ImageFormatError("corrupt PNG: no IHDR")
    w, h, depth, ctype, _, _, interlace = header
    if ctype not in _PNG_CHANNELS or depth not in (8, 16) or (ctype == 3 and depth != 8):
        raise ImageFormatError(f"unsupported PNG: color type {ctype}, bit depth {depth}")
    if interlace:
        raise ImageFormatError("unsupported PNG: interlaced")
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise ImageFormatError(f"corrupt PNG data: {exc}") from None
    nch = _PNG_CHANNELS[ctype]
    bpp = nch * depth // 8
    rows = _unfilter(raw, h, w * bpp, bpp)
    if depth == 16:
        samples = rows.reshape(h, w * nch, 2).astype(np.uint32)
        vals = ((samples[..., 0] << 8) | samples[..., 1]).reshape(h, w, nch)
        px = vals / 65535.0
    else:
        vals = rows.reshape(h, w, nch)
        if ctype == 3:
            if palette is None:
                raise ImageFormatError("corrupt PNG: palette image without PLTE")
            vals = palette[vals[..., 0]]
        px = vals / 255.0
    if ctype in (4, 6):
        px = px[..., :-1]
    return np.ascontiguousarray(px, dtype=np.float64)


# --- PPM / PGM -------------------------------------------------------------

def _pnm_tokens(data: bytes, count: int):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PNM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def _decode_pnm(data: bytes) -> np.ndarray:
    nch = 3 if data[:2] == b"P6" else 1
    (w, h, maxval), start = _pnm_tokens(data, 3)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageFormatError("malformed PNM header") from None
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"invalid PNM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    n = w * h * nch
    body = data[start:start + n * dtype.itemsize]
    if len(body) < n * dtype.itemsize:
        raise ImageFormatError("truncated PNM pixel data")
    vals = np.frombuffer(body, dtype).reshape(h, w, nch)
    return np.minimum(vals / float(maxval), 1.0)


def _encode_pnm(px: np.ndarray) -> bytes:
    h, w, c = px.shape
    magic = b"P6" if c == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + quantize(px, 8).tobytes()
