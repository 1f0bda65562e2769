"""Windowed 8-bit grayscale output as binary PGM."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def window(img, center: float, width: float) -> np.ndarray:
    """Map ``[center - width/2, center + width/2]`` linearly to 0..255, rounding half up."""
    if width <= 0:
        raise ValueError("window width must be positive")
    v = np.clip((np.asarray(img, dtype=np.float64) - (center - width / 2.0)) / width, 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def write_pgm(pixels: np.ndarray, path) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ValueError("PGM needs a 2D image")
    h, w = pixels.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5" or int(fields[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(fields[1]), int(fields[2])
    body = data[pos + 1 : pos + 1 + w * h]
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)
