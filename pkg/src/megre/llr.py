"""Locally-low-rank denoising across the echo dimension.

For every non-overlapping spatial patch the (patch-pixels x n_echoes)
Casorati matrix is formed, its singular values are soft-thresholded, and
the patch stack is reassembled.  Images whose extents are not divisible by
the patch size are zero-padded and cropped back.
"""

from __future__ import annotations

import numpy as np


def llr_denoise(x, patch_size, lam):
    """Soft-threshold singular values of patchwise Casorati matrices by ``lam``."""
    if lam < 0:
        raise ValueError(f"threshold must be >= 0, got {lam}")
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}")
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 3:
        raise ValueError(f"expected [n_echoes, N_y, N_z], got {x.shape}")
    nt, ny, nz = x.shape
    py = (-ny) % patch_size
    pz = (-nz) % patch_size
    xp = np.pad(x, ((0, 0), (0, py), (0, pz)))
    gy, gz = xp.shape[1] // patch_size, xp.shape[2] // patch_size
    # (gy*gz, patch*patch, nt) stack of Casorati matrices
    blocks = (
        xp.reshape(nt, gy, patch_size, gz, patch_size)
        .transpose(1, 3, 2, 4, 0)
        .reshape(gy * gz, patch_size * patch_size, nt)
    )
    u, s, vh = np.linalg.svd(blocks, full_matrices=False)
    s = np.maximum(s - lam, 0.0)
    denoised = (u * s[:, None, :]) @ vh
    out = (
        denoised.reshape(gy, gz, patch_size, patch_size, nt)
        .transpose(4, 0, 2, 1, 3)
        .reshape(nt, xp.shape[1], xp.shape[2])
    )
    return out[:, :ny, :nz]
