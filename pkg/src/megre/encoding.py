"""Multi-coil multi-echo Fourier encoding operator and its adjoint.

Forward model per echo j and coil k:

    b[j, k] = U_j * F(E_k * s_j)

with U_j the per-echo binary sampling pattern, F the centered unitary FFT
and E_k the coil sensitivity.  The adjoint is

    x[j] = sum_k conj(E_k) * F^-1(U_j * b[j, k])

With sum-of-squares-normalized coils and all-ones masks, A^H A is the
identity.  Both ops accept autodiff Variables and then participate in the
gradient tape; with plain arrays they are pure numpy.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .rng import make_rng


def _check_shapes(image_shape, coil_shape, mask_shape):
    nt, ny, nz = image_shape
    nc, cy, cz = coil_shape
    mt, my, mz = mask_shape
    # a single mask slab (leading extent 1) is shared across echoes
    if (cy, cz) != (ny, nz) or (my, mz) != (ny, nz) or mt not in (1, nt):
        raise ValueError(
            f"shape mismatch: image {image_shape}, coils {coil_shape}, masks {mask_shape}"
        )


def encode(x, coils, masks):
    """k-space data [n_echoes, n_coils, N_y, N_z] for image stack ``x``.

    Masked-out locations are exactly zero.
    """
    xv, cv, mv = ad.val(x), ad.val(coils), ad.val(masks)
    _check_shapes(xv.shape, cv.shape, mv.shape)
    xe = ad.reshape(x, (xv.shape[0], 1, xv.shape[1], xv.shape[2]))
    coil_imgs = ad.mul(xe, cv[None])
    k = ad.fftc(coil_imgs, axes=(-2, -1))
    me = ad.reshape(masks, (mv.shape[0], 1, mv.shape[1], mv.shape[2]))
    return ad.mul(k, me)


def adjoint(b, coils, masks):
    """Coil-combined image stack [n_echoes, N_y, N_z] from k-space ``b``."""
    bv, cv, mv = ad.val(b), ad.val(coils), ad.val(masks)
    if bv.ndim != 4 or bv.shape[1] != cv.shape[0]:
        raise ValueError(f"shape mismatch: kspace {bv.shape}, coils {cv.shape}")
    _check_shapes((bv.shape[0], bv.shape[2], bv.shape[3]), cv.shape, mv.shape)
    me = ad.reshape(masks, (mv.shape[0], 1, mv.shape[1], mv.shape[2]))
    imgs = ad.ifftc(ad.mul(b, me), axes=(-2, -1))
    combined = ad.mul(imgs, np.conj(cv)[None])
    return ad.tsum(combined, axis=1)


def add_noise(b, sigma, seed, masks=None):
    """Add i.i.d. complex Gaussian noise with per-component std ``sigma``.

    When ``masks`` is given, noise lands only at sampled locations (entries
    never measured stay exactly zero).  Draws are indexed by location, so
    results do not depend on evaluation order.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    b = np.asarray(b)
    if sigma == 0:
        return b.copy()
    rng = make_rng(seed)
    draws = rng.standard_normal(size=b.shape + (2,))
    noise = sigma * (draws[..., 0] + 1j * draws[..., 1])
    if masks is not None:
        masks = np.asarray(masks)
        noise = noise * masks[:, None, :, :]
    return b + noise
