"""Reconstruction quality metrics and ROI statistics.

PSNR uses the reference maximum as the peak; RMSE and HFEN are reported in
percent of the reference norm; HFEN compares Laplacian-of-Gaussian filtered
images (15x15 kernel, sigma 1.5, zero-padded 'same' convolution); SSIM uses
the shared windowed implementation.  SSIM inputs are scaled by the
reference maximum magnitude so the stabilizer constants see a [0, 1]-ish
range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ssim import ssim_map

HFEN_SIZE = 15
HFEN_SIGMA = 1.5


@dataclass
class Metrics:
    psnr: float
    ssim: float
    rmse: float
    hfen: float

    def as_dict(self):
        return {"psnr": self.psnr, "ssim": self.ssim, "rmse": self.rmse, "hfen": self.hfen}


def psnr(x, ref):
    """20 log10(max(ref) / rms(x - ref)); +inf for identical images."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {ref.shape}")
    err = np.sqrt(np.mean((x - ref) ** 2))
    if err == 0:
        return float("inf")
    return float(20.0 * np.log10(ref.max() / err))


def log_kernel(size=HFEN_SIZE, sigma=HFEN_SIGMA):
    """Laplacian-of-Gaussian kernel: normalized Gaussian times the Laplacian
    factor, shifted to zero mean so flat regions map to zero."""
    half = (size - 1) / 2.0
    y = np.arange(size) - half
    yy, xx = np.meshgrid(y, y, indexing="ij")
    r2 = yy**2 + xx**2
    g = np.exp(-r2 / (2.0 * sigma**2))
    g /= g.sum()
    h = g * (r2 - 2.0 * sigma**2) / sigma**4
    return h - h.mean()


def conv2_same(img, kernel):
    """Zero-padded 'same' 2-D convolution (kernel flipped)."""
    img = np.asarray(img, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)[::-1, ::-1]
    kh, kw = k.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(img, ((ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw))
    return np.einsum("ijkl,kl->ij", win, k)


def hfen(x, ref, size=HFEN_SIZE, sigma=HFEN_SIGMA):
    k = log_kernel(size, sigma)
    fx = conv2_same(x, k)
    fr = conv2_same(ref, k)
    denom = np.linalg.norm(fr)
    if denom == 0:
        raise ValueError("reference image has zero LoG energy")
    return float(100.0 * np.linalg.norm(fx - fr) / denom)


def compute_metrics(x, ref):
    """PSNR/SSIM/RMSE/HFEN of a real map against its reference."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {ref.shape}")
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0:
        raise ValueError("reference image is identically zero")
    scale = np.abs(ref).max()
    return Metrics(
        psnr=psnr(x, ref),
        ssim=float(ssim_map(x / scale, ref / scale)),
        rmse=float(100.0 * np.linalg.norm(x - ref) / ref_norm),
        hfen=hfen(x, ref),
    )


def roi_stats(map_img, mask):
    """Population mean and standard deviation over a binary ROI."""
    map_img = np.asarray(map_img, dtype=np.float64)
    mask = np.asarray(mask) != 0
    if not mask.any():
        raise ValueError("empty ROI mask")
    vals = map_img[mask]
    return float(vals.mean()), float(vals.std())


def _dilate8(mask):
    m = np.asarray(mask) != 0
    out = m.copy()
    for dy in (-1, 0, 1):
        for dz in (-1, 0, 1):
            if dy == 0 and dz == 0:
                continue
            shifted = np.zeros_like(m)
            ys = slice(max(dy, 0), m.shape[0] + min(dy, 0))
            yt = slice(max(-dy, 0), m.shape[0] + min(-dy, 0))
            zs = slice(max(dz, 0), m.shape[1] + min(dz, 0))
            zt = slice(max(-dz, 0), m.shape[1] + min(-dz, 0))
            shifted[yt, zt] = m[ys, zs]
            out |= shifted
    return out


def sharpness(map_img, roi):
    """Mean over the ROI minus mean over its one-pixel 8-connected border."""
    map_img = np.asarray(map_img, dtype=np.float64)
    roi = np.asarray(roi) != 0
    if not roi.any():
        raise ValueError("empty ROI")
    edge = np.zeros_like(roi)
    edge[0, :] = edge[-1, :] = True
    edge[:, 0] = edge[:, -1] = True
    if (roi & edge).any():
        raise ValueError("ROI touches the image border; its dilation is clipped")
    border = _dilate8(roi) & ~roi
    if not border.any():
        raise ValueError("ROI border is empty")
    return float(map_img[roi].mean() - map_img[border].mean())
