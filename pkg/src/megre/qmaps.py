"""Quantitative maps derived from multi-echo complex images.

The echo-combined magnitude is the voxelwise root sum of squares over
echoes.  R2* comes from an unweighted log-linear fit of -ln|s_j| against
echo time; the off-resonance field from a magnitude-weighted linear fit of
the accumulated inter-echo phase differences.  Both fits invert the
phantom's signal model exactly, so they are their own oracle on noiseless
data.  Phase differences are trusted only while they stay clearly inside
(-pi, pi); voxels stepping past 0.95 pi per echo pair are dropped from the
field validity mask because no unwrapping is attempted here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WRAP_GUARD = 0.95 * np.pi


@dataclass
class QuantMaps:
    magnitude: np.ndarray
    r2star: np.ndarray
    field: np.ndarray
    r2star_valid: np.ndarray
    field_valid: np.ndarray


def echo_combine(image):
    """Root-sum-of-squares magnitude over echoes."""
    data = np.asarray(image.data if hasattr(image, "data") else image)
    return np.sqrt(np.sum(np.abs(data) ** 2, axis=0))


def validity_mask(image, rel_threshold=0.05):
    """Voxels whose first-echo magnitude clears ``rel_threshold`` of the max."""
    data = np.asarray(image.data if hasattr(image, "data") else image)
    mag0 = np.abs(data[0])
    return mag0 > rel_threshold * mag0.max()


def fit_r2star(image, rel_threshold=0.05):
    """Log-linear least-squares R2* map (1/s), clamped at 0.

    Returns (r2star, valid); invalid voxels are zeroed.
    """
    data = np.asarray(image.data)
    te = np.asarray(image.echo_times)
    if len(te) < 2:
        raise ValueError("R2* fit needs at least two echoes")
    valid = validity_mask(image, rel_threshold)
    mag = np.abs(data)
    safe = np.where(mag > 0, mag, 1.0)
    logs = np.where(mag > 0, np.log(safe), 0.0)
    all_positive = np.all(mag > 0, axis=0)
    valid = valid & all_positive
    t = te[:, None, None]
    t_mean = te.mean()
    denom = np.sum((te - t_mean) ** 2)
    slope = np.sum((t - t_mean) * logs, axis=0) / denom
    r2 = np.maximum(-slope, 0.0)
    return np.where(valid, r2, 0.0), valid


def fit_field(image, rel_threshold=0.05):
    """Magnitude-weighted linear fit of accumulated phase; field in Hz.

    Returns (field, valid).  Voxels whose inter-echo phase step reaches the
    wrap guard are excluded: their fitted value is an aliased, documented
    wrong answer.
    """
    data = np.asarray(image.data)
    te = np.asarray(image.echo_times)
    if len(te) < 2:
        raise ValueError("field fit needs at least two echoes")
    valid = validity_mask(image, rel_threshold)
    steps = np.angle(data[1:] * np.conj(data[:-1]))  # per echo pair, in (-pi, pi]
    psi = np.concatenate([np.zeros((1,) + data.shape[1:]), np.cumsum(steps, axis=0)], axis=0)
    wrapped = np.any(np.abs(steps) >= WRAP_GUARD, axis=0)
    valid = valid & ~wrapped
    w = np.abs(data)
    t = te[:, None, None]
    wsum = np.sum(w, axis=0)
    wsum_safe = np.where(wsum > 0, wsum, 1.0)
    t_bar = np.sum(w * t, axis=0) / wsum_safe
    psi_bar = np.sum(w * psi, axis=0) / wsum_safe
    denom = np.sum(w * (t - t_bar) ** 2, axis=0)
    denom_safe = np.where(denom > 0, denom, 1.0)
    slope = np.sum(w * (t - t_bar) * (psi - psi_bar), axis=0) / denom_safe
    field = np.where(denom > 0, slope / (2.0 * np.pi), 0.0)
    return np.where(valid | wrapped, field, 0.0), valid


def quant_maps(image, rel_threshold=0.05):
    r2, r2_valid = fit_r2star(image, rel_threshold)
    field, f_valid = fit_field(image, rel_threshold)
    return QuantMaps(
        magnitude=echo_combine(image),
        r2star=r2,
        field=field,
        r2star_valid=r2_valid,
        field_valid=f_valid,
    )
