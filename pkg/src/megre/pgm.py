"""8-bit binary PGM export for visual inspection of maps and masks."""

from __future__ import annotations

import os

import numpy as np


def write_pgm(img, path, vmin=None, vmax=None):
    """Window a real 2-D image to [vmin, vmax] and write it as binary PGM."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM export needs a 2-D image, got shape {img.shape}")
    lo = float(img.min()) if vmin is None else float(vmin)
    hi = float(img.max()) if vmax is None else float(vmax)
    if hi <= lo:
        scaled = np.zeros_like(img)
    else:
        scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header + pixels.tobytes())
    os.replace(tmp, path)
