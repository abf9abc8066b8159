"""Unrolled plug-and-play ADMM reconstruction.

A fixed number of outer iterations alternates a conjugate-gradient data
consistency solve with a pluggable denoiser:

    s    <- argmin_s ||A s - b||^2 + (rho/2) ||s - (v - 2 u / rho)||^2
    v    <- D(s + u / rho)
    u    <- u + rho (s - v)

starting from the zero-filled coil combination for both s and v and u = 0.
The data consistency step solves the normal equations

    (A^H A + (rho/2) I) s = A^H b + (rho/2) v - u

per echo with ``cg_iters`` conjugate-gradient iterations from a zero guess.
Denoisers: identity, locally-low-rank, or the (ablated) TFF network.
Everything runs on plain arrays or autodiff Variables, so the same code is
trained and evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoding import adjoint, encode
from .llr import llr_denoise
from .network import apply_network

DENOISERS = ("identity", "llr", "tff", "tff0")


@dataclass
class AdmmConfig:
    n_unrolled: int = 10
    rho: float = 1.0
    cg_iters: int = 10
    denoiser: str = "identity"
    llr_patch: int = 8
    llr_lambda: float = 0.05
    residual: bool = True  # network denoisers predict a correction to v~

    def __post_init__(self):
        if self.n_unrolled < 1:
            raise ValueError(f"n_unrolled must be >= 1, got {self.n_unrolled}")
        if self.cg_iters < 1:
            raise ValueError(f"cg_iters must be >= 1, got {self.cg_iters}")
        if self.rho <= 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if self.denoiser not in DENOISERS:
            raise ValueError(f"denoiser must be one of {DENOISERS}, got {self.denoiser!r}")


def zero_filled_init(b, coils, masks):
    """Coil-combined inverse FFT of the masked data; the s^(0) = v^(0) start."""
    return adjoint(b, coils, masks)


def _echo_dot(a, b):
    # per-echo real inner product <a, b>, shape (n_echoes, 1, 1)
    return ad.creal(ad.tsum(ad.mul(ad.conj(a), b), axis=(-2, -1), keepdims=True))


def data_consistency_cg(b, coils, masks, v, u, rho, cg_iters, return_residuals=False):
    """CG solve of the ADMM data consistency normal equations, per echo.

    Runs a fixed ``cg_iters`` iterations from a zero initial guess; echoes
    whose residual is exactly zero are frozen rather than dividing by zero.
    Differentiates by unrolling the iteration when inputs carry gradients.
    """
    if rho <= 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    half_rho = 0.5 * float(rho)

    def normal_op(x):
        return ad.add(adjoint(encode(x, coils, masks), coils, masks), ad.mul(x, half_rho))

    rhs = ad.add(adjoint(b, coils, masks), ad.sub(ad.mul(v, half_rho), u))
    if not np.all(np.isfinite(ad.val(rhs))):
        raise ad.NumericError("non-finite right-hand side in data consistency solve")
    x = np.zeros_like(ad.val(rhs))
    r = rhs
    p = rhs
    rs = _echo_dot(r, r)
    residuals = [float(np.sqrt(ad.val(rs).sum()))]
    for _ in range(int(cg_iters)):
        ap = normal_op(p)
        alpha = ad.div_safe(rs, _echo_dot(p, ap))
        x = ad.add(x, ad.mul(alpha, p))
        r = ad.sub(r, ad.mul(alpha, ap))
        rs_new = _echo_dot(r, r)
        p = ad.add(r, ad.mul(ad.div_safe(rs_new, rs), p))
        rs = rs_new
        residuals.append(float(np.sqrt(ad.val(rs).sum())))
    if return_residuals:
        return x, residuals
    return x


def make_denoiser(cfg, weights=None):
    if cfg.denoiser == "identity":
        return lambda v: v
    if cfg.denoiser == "llr":
        return lambda v: llr_denoise(ad.val(v), cfg.llr_patch, cfg.llr_lambda)
    if weights is None:
        raise ValueError(f"denoiser {cfg.denoiser!r} needs network weights")
    if weights.mode != cfg.denoiser:
        raise ValueError(f"weights are {weights.mode!r} but config wants {cfg.denoiser!r}")
    if cfg.residual:
        # skip connection: freshly initialized networks start as the identity
        # denoiser instead of collapsing every iterate toward zero
        return lambda v, _w=weights: ad.add(v, apply_network(v, _w))
    return lambda v, _w=weights: apply_network(v, _w)


def admm_reconstruct(b, coils, masks, cfg, weights=None, denoiser=None):
    """Run the unrolled ADMM; returns the final denoiser output v^(N_l)."""
    if denoiser is None:
        denoiser = make_denoiser(cfg, weights)
    inv_rho = 1.0 / float(cfg.rho)
    v = zero_filled_init(b, coils, masks)
    u = np.zeros_like(ad.val(v))
    for _ in range(cfg.n_unrolled):
        s = data_consistency_cg(b, coils, masks, v, u, cfg.rho, cfg.cg_iters)
        v_tilde = ad.add(s, ad.mul(u, inv_rho))
        v = denoiser(v_tilde)
        u = ad.add(u, ad.mul(ad.sub(s, v), float(cfg.rho)))
    return v
