"""Probabilistic k-space sampling patterns and their gradients.

A learnable weight map w (one slab per echo, or a single shared slab) is
squashed through a sigmoid with slope ``a`` and then linearly renormalized
per echo so the mean probability hits the target sampling ratio gamma:

    if mean(s) >= gamma:  P = s * gamma / mean(s)
    else:                 P = 1 - (1 - s) * (1 - gamma) / (1 - mean(s))

Both branches keep P inside [0, 1].  Binary masks are Bernoulli draws
U = 1[z < P]; the gradient of anything downstream of U with respect to w is
taken through P (straight-through estimator), including the dependence of
the renormalization on the per-echo mean.

A multi-level variable-density mask (geometrically decaying ring densities,
fully sampled core) provides the fixed, manually designed baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class PatternWeights:
    """Learnable pattern weights.

    ``w`` has shape (n_echoes, N_y, N_z) for per-echo patterns or
    (1, N_y, N_z) for a single pattern shared by all echoes.
    """

    w: np.ndarray
    n_echoes: int
    slope: float = 0.25
    gamma: float = 0.25

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 3 or self.w.shape[0] not in (1, self.n_echoes):
            raise ValueError(f"weights shape {self.w.shape} incompatible with {self.n_echoes} echoes")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.slope <= 0:
            raise ValueError(f"slope must be > 0, got {self.slope}")

    @property
    def shared(self):
        return self.w.shape[0] == 1 and self.n_echoes > 1

    def expanded(self):
        """Weights broadcast to the full (n_echoes, N_y, N_z) shape."""
        if self.w.shape[0] == self.n_echoes:
            return self.w
        return np.broadcast_to(self.w, (self.n_echoes,) + self.w.shape[1:]).copy()


def zero_weights(n_echoes, shape, shared=False, slope=0.25, gamma=0.25):
    lead = 1 if shared else n_echoes
    return PatternWeights(np.zeros((lead,) + tuple(shape)), n_echoes, slope, gamma)


def build_prob_pattern(w, slope, gamma):
    """Sigmoid + per-echo renormalization; accepts arrays or Variables.

    Returns probabilities with the same leading echo dimension as ``w``;
    the mean of every echo slab equals gamma exactly.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    wv = ad.val(w)
    if wv.ndim != 3:
        raise ValueError(f"expected weights [n_echoes, N_y, N_z], got shape {wv.shape}")
    s = ad.sigmoid(ad.mul(w, float(slope)))
    slabs = []
    for j in range(wv.shape[0]):
        sj = ad.getitem(s, j)
        m = ad.tmean(sj)
        # the branch choice is data-dependent but locally constant, so it is
        # taken on the forward value and the selected branch is differentiated
        if float(ad.val(m)) >= gamma:
            pj = ad.mul(sj, ad.div(float(gamma), m))
        else:
            one_minus = ad.sub(1.0, sj)
            scale = ad.div(float(1.0 - gamma), ad.sub(1.0, m))
            pj = ad.sub(1.0, ad.mul(one_minus, scale))
        slabs.append(ad.reshape(pj, (1,) + wv.shape[1:]))
    p = slabs[0] if len(slabs) == 1 else ad.concat(slabs, axis=0)
    if not ad.is_variable(p):
        p = np.clip(p, 0.0, 1.0)  # both branches already map into [0, 1]
    return p


def sample_binary(p, rng, calib_size=0):
    """Independent Bernoulli draw per location/echo, then force the
    central calibration block to ones."""
    p = np.asarray(ad.val(p), dtype=np.float64)
    z = rng.random(size=p.shape)
    u = (z < p).astype(np.float64)
    return apply_calibration(u, calib_size)


def apply_calibration(u, calib_size):
    """Set the central calib_size x calib_size block of every echo to 1."""
    u = np.asarray(u, dtype=np.float64)
    if calib_size == 0:
        return u
    ny, nz = u.shape[-2], u.shape[-1]
    if calib_size < 0 or calib_size > ny or calib_size > nz:
        raise ValueError(f"calib_size {calib_size} exceeds grid {(ny, nz)}")
    u = u.copy()
    y0 = ny // 2 - calib_size // 2
    z0 = nz // 2 - calib_size // 2
    u[..., y0 : y0 + calib_size, z0 : z0 + calib_size] = 1.0
    return u


def calibration_mask(shape, calib_size):
    m = np.zeros(shape, dtype=np.float64)
    if calib_size:
        return apply_calibration(m, calib_size)
    return m


def straight_through_grad(dl_du, weights):
    """Chain a loss gradient at the binary mask back to the pattern weights.

    Implements the straight-through rule d(mask)/dw -> dP/dw analytically,
    including the renormalization's dependence on the per-echo mean.
    ``dl_du`` has shape (n_echoes, N_y, N_z); the result matches
    ``weights.w`` (shared weights accumulate over echoes).
    """
    g = np.asarray(dl_du, dtype=np.float64)
    wv = weights.w
    a, gamma = weights.slope, weights.gamma
    if g.shape[1:] != wv.shape[1:] or g.shape[0] != weights.n_echoes:
        raise ValueError(f"gradient shape {g.shape} does not match weights {wv.shape}")
    if weights.shared:
        g = g.sum(axis=0, keepdims=True)
    out = np.empty_like(wv)
    count = wv.shape[1] * wv.shape[2]
    for j in range(wv.shape[0]):
        s = ad._sigmoid_value(a * wv[j])
        sprime = a * s * (1.0 - s)
        m = s.mean()
        gj = g[j]
        if m >= gamma:
            out[j] = sprime * (gamma / m) * gj - sprime * (
                gamma / (count * m * m)
            ) * np.sum(gj * s)
        else:
            kappa = 1.0 - gamma
            om = 1.0 - m
            out[j] = sprime * (kappa / om) * gj - sprime * (
                kappa / (count * om * om)
            ) * np.sum(gj * (1.0 - s))
    return out


def equalize_mask_counts(mask, target, rng, prob=None, calib_size=0):
    """Adjust every echo's mask to exactly ``target`` sampled locations.

    Bernoulli draws leave per-echo counts unequal, but a prospective
    schedule needs one location per echo per TR.  Surplus samples are
    dropped lowest-probability-first and deficits filled
    highest-probability-first (uniformly at random when no probability map
    is given); ties break randomly.  Calibration locations are never
    removed.
    """
    mask = np.asarray(mask, dtype=np.float64).copy()
    lead, ny, nz = mask.shape
    protected = calibration_mask((ny, nz), calib_size).astype(bool)
    if target < int(protected.sum()):
        raise ValueError(f"target {target} is below the {int(protected.sum())} calibration locations")
    if target > ny * nz:
        raise ValueError(f"target {target} exceeds the grid size {ny * nz}")
    p = None if prob is None else np.broadcast_to(np.asarray(prob), mask.shape)
    for j in range(lead):
        scores = rng.random((ny, nz)) if p is None else p[j]
        jitter = rng.random((ny, nz))
        on = mask[j] != 0
        n = int(on.sum())
        if n > target:
            removable = on & ~protected
            iy, iz = np.nonzero(removable)
            order = np.lexsort((jitter[iy, iz], scores[iy, iz]))  # lowest first
            drop = order[: n - target]
            mask[j, iy[drop], iz[drop]] = 0.0
        elif n < target:
            iy, iz = np.nonzero(~on)
            order = np.lexsort((jitter[iy, iz], -scores[iy, iz]))  # highest first
            keep = order[: target - n]
            mask[j, iy[keep], iz[keep]] = 1.0
    return mask


def schedule_budget(shape, gamma, n_segments):
    """Per-echo location count: the nominal gamma budget rounded up to a
    multiple of the segment count (the 206 x 80, R=8, N_s=11 protocol gives
    188 * 11 = 2068 against a nominal 2060)."""
    nominal = int(round(gamma * shape[0] * shape[1]))
    per_segment = -(-nominal // n_segments)
    return per_segment * n_segments


def manual_vd_pattern(shape, gamma, n_levels, rng, n_echoes=1, decay=0.5):
    """Multi-level variable-density mask: concentric rings with densities
    decaying geometrically from a fully sampled core, scaled so the expected
    overall sampling ratio is gamma.  The same mask is replicated across
    echoes.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    if n_levels < 1:
        raise ValueError(f"n_levels must be >= 1, got {n_levels}")
    ny, nz = shape
    yy = (np.arange(ny) - ny // 2)[:, None] / max(ny / 2.0, 1.0)
    zz = (np.arange(nz) - nz // 2)[None, :] / max(nz / 2.0, 1.0)
    rho = np.sqrt(yy**2 + zz**2)
    edges = np.linspace(0.0, rho.max() + 1e-12, n_levels + 1)
    level = np.clip(np.searchsorted(edges, rho, side="right") - 1, 0, n_levels - 1)
    areas = np.bincount(level.ravel(), minlength=n_levels).astype(np.float64)
    total = float(ny * nz)
    if areas[0] / total > gamma + 1e-12:
        raise ValueError(
            f"gamma {gamma} infeasible: fully sampled core already covers "
            f"{areas[0] / total:.4f} of k-space"
        )

    def expected_ratio(c):
        dens = np.minimum(1.0, c * decay ** np.arange(n_levels))
        dens[0] = 1.0
        return float(np.dot(areas, dens)) / total

    lo, hi = 0.0, 1.0 / (decay ** (n_levels - 1))  # hi saturates all levels at 1
    if expected_ratio(hi) <= gamma:
        c = hi
    else:
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if expected_ratio(mid) < gamma:
                lo = mid
            else:
                hi = mid
        c = 0.5 * (lo + hi)
    dens = np.minimum(1.0, c * decay ** np.arange(n_levels))
    dens[0] = 1.0
    p = dens[level]
    z = rng.random(size=p.shape)
    u = (z < p).astype(np.float64)
    return np.broadcast_to(u, (n_echoes, ny, nz)).copy()
