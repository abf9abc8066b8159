"""Windowed structural similarity.

Plain 10x10 uniform windows at unit stride (no Gaussian weighting),
population statistics per window, and the standard stabilizers
c1 = 0.01^2, c2 = 0.03^2 that assume inputs scaled to a [0, 1]-ish
dynamic range:

    SSIM(x, y) = (2 mx my + c1)(2 cov + c2) /
                 ((mx^2 + my^2 + c1)(vx + vy + c2))

averaged over all valid window positions.  Works on arrays or autodiff
Variables, so the same code is the training loss and the report metric.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

WINDOW = 10
C1 = 0.01**2
C2 = 0.03**2


def ssim_map(x, y, window=WINDOW, c1=C1, c2=C2):
    """Mean SSIM of two equally shaped real 2-D images."""
    xv, yv = ad.val(x), ad.val(y)
    if xv.shape != yv.shape:
        raise ValueError(f"shape mismatch {xv.shape} vs {yv.shape}")
    if xv.ndim != 2:
        raise ValueError(f"expected 2-D images, got shape {xv.shape}")
    if np.iscomplexobj(xv) or np.iscomplexobj(yv):
        raise ValueError("ssim_map expects real-valued images")
    if xv.shape[0] < window or xv.shape[1] < window:
        raise ValueError(f"image {xv.shape} smaller than the {window}x{window} window")
    n = float(window * window)
    mx = ad.div(ad.window_sum(x, window), n)
    my = ad.div(ad.window_sum(y, window), n)
    sxx = ad.div(ad.window_sum(ad.mul(x, x), window), n)
    syy = ad.div(ad.window_sum(ad.mul(y, y), window), n)
    sxy = ad.div(ad.window_sum(ad.mul(x, y), window), n)
    mx2 = ad.mul(mx, mx)
    my2 = ad.mul(my, my)
    vx = ad.sub(sxx, mx2)
    vy = ad.sub(syy, my2)
    cov = ad.sub(sxy, ad.mul(mx, my))
    num = ad.mul(ad.add(ad.mul(2.0, ad.mul(mx, my)), c1), ad.add(ad.mul(2.0, cov), c2))
    den = ad.mul(ad.add(ad.add(mx2, my2), c1), ad.add(ad.add(vx, vy), c2))
    out = ad.tmean(ad.div(num, den))
    return out if ad.is_variable(out) else float(out)
