"""Centered, unitary discrete Fourier transforms.

Convention: DC sits at index ``n // 2`` on every transformed axis and both
directions carry 1/sqrt(N) so the transform is unitary.  This keeps Parseval
and adjoint identities exact and puts the k-space center where sampling
masks expect it.
"""

from __future__ import annotations

import numpy as np


def _check_axes(shape, axes):
    ndim = len(shape)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ValueError(f"axis {ax} out of range for shape {shape}")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate axes in {axes}")
    return tuple(out)


def fft_centered(x, axes=(-2, -1)):
    """Unitary DFT with zero frequency at the array center of ``axes``."""
    x = np.asarray(x)
    axes = _check_axes(x.shape, axes)
    return np.fft.fftshift(
        np.fft.fftn(np.fft.ifftshift(x, axes=axes), axes=axes, norm="ortho"),
        axes=axes,
    )


def ifft_centered(x, axes=(-2, -1)):
    """Inverse of :func:`fft_centered`; also its adjoint (unitary map)."""
    x = np.asarray(x)
    axes = _check_axes(x.shape, axes)
    return np.fft.fftshift(
        np.fft.ifftn(np.fft.ifftshift(x, axes=axes), axes=axes, norm="ortho"),
        axes=axes,
    )
