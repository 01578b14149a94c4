"""Image loading, saving, and resizing.

PPM (binary P6) is parsed and written natively so tests run without any
codec. PNG is delegated to Pillow. Images move through the pipeline as
float arrays of shape (H, W, 3) with values in [0, 1].
"""

from __future__ import annotations

import os

import numpy as np

from .errors import InputError


def read_ppm(path: str) -> np.ndarray:
    """Read a binary P6 PPM with maxval 255."""
    with open(path, "rb") as fh:
        raw = fh.read()

    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(raw):
            if raw[pos:pos + 1].isspace():
                pos += 1
            elif raw[pos:pos + 1] == b"#":
                while pos < len(raw) and raw[pos] != 0x0A:
                    pos += 1
            else:
                break
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InputError(f"{path}: truncated PPM header")
        return raw[start:pos]

    magic = token()
    if magic != b"P6":
        raise InputError(f"{path}: not a binary PPM (magic {magic!r})")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise InputError(f"{path}: bad PPM header") from exc
    if maxval != 255:
        raise InputError(f"{path}: unsupported PPM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    pixels = raw[pos:pos + need]
    if len(pixels) < need:
        raise InputError(f"{path}: PPM payload truncated "
                         f"({len(pixels)} of {need} bytes)")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
    return arr.astype(np.float64) / 255.0


def write_ppm(path: str, image: np.ndarray) -> None:
    """Write a float [0,1] (H, W, 3) image as binary P6."""
    img8 = to_uint8(image)
    h, w = img8.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img8.tobytes())


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def read_image(path: str) -> np.ndarray:
    """Load a PPM or PNG file as float (H, W, 3) in [0, 1]."""
    if not os.path.exists(path):
        raise InputError(f"image not found: {path}")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ppm":
        return read_ppm(path)
    if ext == ".png":
        from PIL import Image
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        return arr
    raise InputError(f"unsupported image format: {path}")


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Anisotropic bilinear resize with half-pixel centers and edge clamping.

    Same-size calls return the input unchanged.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    h, w = image.shape[:2]
    if h < 1 or w < 1 or out_h < 1 or out_w < 1:
        raise InputError(f"degenerate resize: {h}x{w} -> {out_h}x{out_w}")
    if (h, w) == (out_h, out_w):
        return image.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = image[y0][:, x0] * (1 - wx) + image[y0][:, x1] * wx
    bottom = image[y1][:, x0] * (1 - wx) + image[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy
