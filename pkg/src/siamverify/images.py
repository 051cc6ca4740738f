"""Image file I/O and resampling helpers.

Supported formats: binary PGM (P5) / PPM (P6) with maxval 255, and a raw
float64 tensor format (``.f64``: three little-endian u32 for C,H,W followed
by row-major float64 data, assumed already scaled).
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError

F64_SUFFIX = ".f64"


def _read_pnm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(buf):
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated PNM header")
    return buf[start:pos], pos


def read_image(path) -> np.ndarray:
    """Read an image file into a CHW float64 array scaled to [0, 1]."""
    path = str(path)
    with open(path, "rb") as f:
        raw = f.read()
    if path.endswith(F64_SUFFIX):
        return _decode_f64(raw)
    if raw[:2] in (b"P5", b"P6"):
        return _decode_pnm(raw)
    raise FormatError(f"unrecognized image format: {path}")


def _decode_pnm(raw: bytes) -> np.ndarray:
    magic, pos = _read_pnm_token(raw, 0)
    channels = 1 if magic == b"P5" else 3
    w_tok, pos = _read_pnm_token(raw, pos)
    h_tok, pos = _read_pnm_token(raw, pos)
    max_tok, pos = _read_pnm_token(raw, pos)
    try:
        w, h, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError as exc:
        raise FormatError("non-numeric PNM header field") from exc
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    n = w * h * channels
    data = raw[pos:pos + n]
    if len(data) != n:
        raise FormatError("truncated PNM payload")
    arr = np.frombuffer(data, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        return arr.reshape(1, h, w)
    return arr.reshape(h, w, 3).transpose(2, 0, 1)


def _decode_f64(raw: bytes) -> np.ndarray:
    if len(raw) < 12:
        raise FormatError("truncated .f64 header")
    c, h, w = struct.unpack_from("<III", raw, 0)
    n = c * h * w
    if len(raw) != 12 + 8 * n:
        raise FormatError("size mismatch in .f64 payload")
    return np.frombuffer(raw, dtype="<f8", count=n, offset=12).reshape(c, h, w).copy()


def write_pgm(path, img: np.ndarray) -> None:
    """Write a 1xHxW (or HxW) [0,1] image as binary PGM."""
    img = np.asarray(img)
    if img.ndim == 3:
        img = img[0]
    h, w = img.shape
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(pixels.tobytes())


def write_ppm(path, img: np.ndarray) -> None:
    """Write a 3xHxW [0,1] image as binary PPM."""
    img = np.asarray(img)
    _, h, w = img.shape
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(pixels.transpose(1, 2, 0).tobytes())


def write_f64(path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype="<f8")
    c, h, w = img.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<III", c, h, w))
        f.write(img.tobytes())


def bilinear_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample a CHW image at fractional (row, col) grids; zero outside."""
    _, h, w = img.shape
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    fr = rows - r0
    fc = cols - c0
    out = np.zeros((img.shape[0],) + rows.shape)
    for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                        (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr = r0 + dr
        cc = c0 + dc
        valid = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        rs = np.clip(rr, 0, h - 1)
        cs = np.clip(cc, 0, w - 1)
        out += img[:, rs, cs] * (wgt * valid)
    return out


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resize of a CHW image."""
    _, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    rows = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    cols = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    rgrid, cgrid = np.meshgrid(rows, cols, indexing="ij")
    # clamp to edges: resize should not introduce dark borders
    rgrid = np.clip(rgrid, 0, h - 1)
    cgrid = np.clip(cgrid, 0, w - 1)
    return bilinear_sample(img, rgrid, cgrid)


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center, bilinear, zero-filled borders."""
    if degrees == 0.0:
        return img.copy()
    _, h, w = img.shape
    theta = np.deg2rad(degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    # inverse map: output pixel pulls from the source rotated by -theta
    dy, dx = rr - cy, cc - cx
    src_r = cy + np.cos(theta) * dy - np.sin(theta) * dx
    src_c = cx + np.sin(theta) * dy + np.cos(theta) * dx
    return bilinear_sample(img, src_r, src_c)


def translate(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer shift with zero fill."""
    out = np.zeros_like(img)
    _, h, w = img.shape
    src_r = slice(max(0, -dy), min(h, h - dy))
    dst_r = slice(max(0, dy), min(h, h + dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[:, dst_r, dst_c] = img[:, src_r, src_c]
    return out
