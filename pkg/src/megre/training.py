"""Joint training of the sampling pattern and the unrolled reconstructor.

Phase 1 updates the denoiser weights and the pattern weights together,
redrawing a Bernoulli mask from the current probabilistic pattern at every
step and backpropagating through the binarization with the straight-through
rule.  Phase 2 freezes a realized binary mask and fine-tunes the network
alone.  The loss is the negative mean channel-wise SSIM over the 2 x
n_echoes real/imag channels, with both reconstruction and truth scaled by
the truth's maximum magnitude.

Everything is deterministic given (dataset, config, seed): the seed is
split into independent Philox streams for initialization, the step loop
and validation draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .admm import AdmmConfig, admm_reconstruct, zero_filled_init
from .encoding import add_noise, encode
from .metrics import psnr
from .network import TffWeights, apply_network, init_weights
from .optim import adam_init, adam_step
from .patterns import (
    PatternWeights,
    build_prob_pattern,
    calibration_mask,
    zero_weights,
)
from .phantom import generate_coils, generate_phantom, random_phantom_spec
from .qmaps import echo_combine
from .rng import make_rng, split_seeds
from .ssim import ssim_map

TRAINABLE_DENOISERS = ("tff", "tff0")


@dataclass
class TrainSample:
    kspace: np.ndarray      # fully sampled noisy k-space [n_echoes, n_coils, N_y, N_z]
    truth: np.ndarray       # noiseless complex images [n_echoes, N_y, N_z]
    coils: np.ndarray       # [n_coils, N_y, N_z]
    echo_times: np.ndarray

    @property
    def n_echoes(self):
        return self.truth.shape[0]

    @property
    def grid_shape(self):
        return self.truth.shape[1:]


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 1
    phase: int = 1
    spo: int = 2
    gamma: float = 0.25
    slope: float = 0.25
    calib_size: int = 8
    seed: int = 0
    loss: str = "neg_mean_ssim"
    admm: AdmmConfig = field(
        default_factory=lambda: AdmmConfig(n_unrolled=4, cg_iters=4, denoiser="tff")
    )
    hidden_width: int = 8
    trunk_width: int = 16
    trunk_layers: int = 3
    kernel_size: int = 3
    ssim_window: int = 10  # smaller grids need a smaller loss window
    pattern_lr: float | None = None  # default: same as lr; desk-scale runs
    # have ~1000x fewer steps than the full protocol, so the pattern needs
    # a faster schedule to develop structure at all

    def __post_init__(self):
        if self.phase not in (1, 2):
            raise ValueError(f"phase must be 1 or 2, got {self.phase}")
        if self.ssim_window < 2:
            raise ValueError(f"ssim_window must be >= 2, got {self.ssim_window}")
        if self.spo not in (0, 1, 2):
            raise ValueError(f"spo must be 0, 1 or 2, got {self.spo}")
        if self.batch_size != 1:
            raise ValueError("only batch size 1 is supported")
        if self.loss != "neg_mean_ssim":
            raise ValueError(f"unsupported loss {self.loss!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def network_meta(cfg, n_echoes):
    return TffWeights(
        mode=cfg.admm.denoiser,
        n_echoes=n_echoes,
        hidden_width=cfg.hidden_width,
        trunk_width=cfg.trunk_width,
        trunk_layers=cfg.trunk_layers,
        kernel_size=cfg.kernel_size,
    )


def pack_params(pattern, net):
    params = {}
    if pattern is not None:
        params["pattern_w"] = pattern.w
    for name in net.layer_names():
        params[f"net.{name}"] = net.layers[name]
    return params


def unpack_net(params, meta):
    out = meta.copy()
    out.layers = {name: params[f"net.{name}"] for name in meta.layer_names()}
    return out


def loss_and_grad(sample, params, cfg, z=None, fixed_mask=None, binarize=True, compute_grads=True):
    """Forward pass of the full training objective and its gradients.

    Mask source, in priority order: ``fixed_mask`` (phase 2 / manual
    baseline), otherwise the learnable pattern in ``params['pattern_w']``,
    binarized against the uniform draw ``z`` (straight-through gradient) or,
    with ``binarize=False``, used directly as a soft mask (the deterministic
    surrogate that finite differences can probe).
    """
    if cfg.admm.denoiser not in TRAINABLE_DENOISERS:
        raise ValueError(f"training requires a network denoiser, got {cfg.admm.denoiser!r}")
    wrap = ad.parameter if compute_grads else (lambda x: np.asarray(x, dtype=np.float64))
    n_echoes = sample.n_echoes
    meta = network_meta(cfg, n_echoes)
    net_layers = {name: wrap(params[f"net.{name}"]) for name in meta.layer_names()}

    if fixed_mask is not None:
        mask = np.asarray(fixed_mask, dtype=np.float64)
        pattern_var = None
    else:
        if "pattern_w" not in params:
            raise ValueError("no fixed mask and no pattern weights given")
        pattern_var = wrap(params["pattern_w"])
        prob = build_prob_pattern(pattern_var, cfg.slope, cfg.gamma)
        if binarize:
            if z is None:
                raise ValueError("binarize=True needs the uniform draw z")
            hard = (np.asarray(z) < ad.val(prob)).astype(np.float64)
            soft_or_hard = ad.straight_through(prob, hard) if compute_grads else hard
        else:
            soft_or_hard = prob
        cal = calibration_mask(sample.grid_shape, cfg.calib_size)
        mask = ad.add(ad.mul(soft_or_hard, 1.0 - cal), cal)

    mv = ad.val(mask)
    b_under = ad.mul(sample.kspace, ad.reshape(mask, (mv.shape[0], 1) + mv.shape[1:]))
    if cfg.admm.residual:
        denoiser = lambda v: ad.add(v, apply_network(v, meta, net_layers))
    else:
        denoiser = lambda v: apply_network(v, meta, net_layers)
    recon = admm_reconstruct(b_under, sample.coils, mask, cfg.admm, denoiser=denoiser)

    scale = float(np.abs(sample.truth).max())
    ssim_total = None
    for j in range(n_echoes):
        rj = ad.getitem(recon, j)
        for comp, ref in (
            (ad.creal(rj), sample.truth[j].real),
            (ad.cimag(rj), sample.truth[j].imag),
        ):
            s = ssim_map(ad.div(comp, scale), ref / scale, window=cfg.ssim_window)
            ssim_total = s if ssim_total is None else ad.add(ssim_total, s)
    loss = ad.mul(ad.div(ssim_total, float(2 * n_echoes)), -1.0)

    if not compute_grads:
        value = float(ad.val(loss))
        if not np.isfinite(value):
            raise ad.NumericError("non-finite training loss")
        return value, None

    value = float(loss.value)
    if not np.isfinite(value):
        culprit = ad.first_nonfinite(loss)
        raise ad.NumericError(f"non-finite training loss; first bad node: {culprit}")
    ad.backward(loss)
    grads = {}
    for key in params:
        if key == "pattern_w":
            var = pattern_var
        else:
            var = net_layers[key[len("net.") :]]
        g = None if var is None or not isinstance(var, ad.Variable) else var.grad
        grads[key] = np.zeros_like(params[key]) if g is None else g
    return value, grads


def _epoch_log(log, epoch, losses, val_loss):
    log.append(
        {
            "epoch": epoch,
            "mean_loss": float(np.mean(losses)) if losses else float("nan"),
            "val_loss": float(val_loss) if val_loss is not None else float("nan"),
        }
    )


def _validation_loss(val_set, params, cfg, mask):
    if not val_set:
        return None
    losses = [
        loss_and_grad(s, params, cfg, fixed_mask=mask, compute_grads=False)[0] for s in val_set
    ]
    return float(np.mean(losses))


def train_phase1(dataset, cfg, seed=None, val_set=None):
    """Joint pattern + network training with per-step Bernoulli redraws.

    Returns (PatternWeights, TffWeights, log); log rows carry the per-epoch
    mean training loss and validation loss.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    if cfg.spo not in (1, 2):
        raise ValueError(f"phase 1 learns a pattern; spo must be 1 or 2, got {cfg.spo}")
    if cfg.phase != 1:
        raise ValueError("config is not a phase-1 config")
    seed = cfg.seed if seed is None else seed
    n_echoes = dataset[0].n_echoes
    grid = dataset[0].grid_shape
    init_seed, loop_seed, val_seed = split_seeds(seed, 3)

    pattern = zero_weights(
        n_echoes, grid, shared=(cfg.spo == 1), slope=cfg.slope, gamma=cfg.gamma
    )
    meta = network_meta(cfg, n_echoes)
    net = init_weights(
        meta.mode,
        n_echoes,
        init_seed,
        hidden_width=cfg.hidden_width,
        trunk_width=cfg.trunk_width,
        trunk_layers=cfg.trunk_layers,
        kernel_size=cfg.kernel_size,
    )
    params = pack_params(pattern, net)
    overrides = {} if cfg.pattern_lr is None else {"pattern_w": cfg.pattern_lr}
    state = adam_init(params, lr=cfg.lr, lr_overrides=overrides)
    loop_rng = make_rng(loop_seed)
    z_val = make_rng(val_seed).random(size=pattern.w.shape)

    log = []
    for epoch in range(cfg.epochs):
        order = loop_rng.permutation(len(dataset))
        losses = []
        for idx in order:
            z = loop_rng.random(size=params["pattern_w"].shape)
            value, grads = loss_and_grad(dataset[int(idx)], params, cfg, z=z)
            params, state = adam_step(params, grads, state)
            losses.append(value)
        val_loss = None
        if val_set:
            prob = build_prob_pattern(params["pattern_w"], cfg.slope, cfg.gamma)
            cal = calibration_mask(grid, cfg.calib_size)
            mask = (z_val < prob).astype(np.float64) * (1.0 - cal) + cal
            val_loss = _validation_loss(val_set, params, cfg, mask)
        _epoch_log(log, epoch, losses, val_loss)

    pattern = PatternWeights(params["pattern_w"], n_echoes, cfg.slope, cfg.gamma)
    return pattern, unpack_net(params, meta), log


def train_phase2(dataset, fixed_mask, init_net, cfg, seed=None, val_set=None):
    """Fine-tune the network with a frozen binary mask; patterns untouched."""
    if not dataset:
        raise ValueError("empty training dataset")
    if cfg.phase != 2:
        raise ValueError("config is not a phase-2 config")
    if fixed_mask is None:
        raise ValueError("phase 2 requires a fixed binary mask")
    seed = cfg.seed if seed is None else seed
    _, loop_seed = split_seeds(seed, 2)
    mask = np.asarray(fixed_mask, dtype=np.float64)
    net = init_net.copy()
    params = pack_params(None, net)
    state = adam_init(params, lr=cfg.lr)
    loop_rng = make_rng(loop_seed)

    log = []
    for epoch in range(cfg.epochs):
        order = loop_rng.permutation(len(dataset))
        losses = []
        for idx in order:
            value, grads = loss_and_grad(dataset[int(idx)], params, cfg, fixed_mask=mask)
            params, state = adam_step(params, grads, state)
            losses.append(value)
        val_loss = _validation_loss(val_set, params, cfg, mask)
        _epoch_log(log, epoch, losses, val_loss)
    return unpack_net(params, network_meta(cfg, init_net.n_echoes)), log


# ---------------------------------------------------------------------------
# synthetic data


def sigma_for_snr(kspace, snr_db):
    """Per-component noise std putting the k-space data at ``snr_db`` SNR."""
    if snr_db is None or np.isinf(snr_db):
        return 0.0
    p_sig = float(np.mean(np.abs(kspace) ** 2))
    return float(np.sqrt(p_sig / (2.0 * 10.0 ** (snr_db / 10.0))))


def make_synthetic_dataset(n, shape, echo_times, n_coils, seed, snr_db=30.0):
    """Seeded set of random-ellipse phantoms with full noisy k-space."""
    if n < 1:
        raise ValueError("dataset size must be >= 1")
    seeds = split_seeds(seed, n + 1)
    coils = generate_coils(n_coils, shape, seeds[0])
    full_mask = np.ones((1,) + tuple(shape))
    samples = []
    for i in range(n):
        spec_seed, noise_seed = split_seeds(seeds[i + 1], 2)
        spec = random_phantom_spec(shape, make_rng(spec_seed))
        image, _ = generate_phantom(spec, echo_times)
        b = encode(image.data, coils, full_mask)
        b = add_noise(b, sigma_for_snr(b, snr_db), noise_seed)
        samples.append(
            TrainSample(
                kspace=b,
                truth=image.data,
                coils=coils,
                echo_times=np.asarray(echo_times, dtype=np.float64),
            )
        )
    return samples


def evaluate_recon(dataset, mask, cfg_admm, weights=None):
    """Per-sample echo-combined-magnitude PSNR for a reconstruction setup.

    Returns rows with the network (or classical) reconstruction PSNR and the
    zero-filled baseline PSNR under the same mask.
    """
    mask = np.asarray(mask, dtype=np.float64)
    rows = []
    for s in dataset:
        b_under = s.kspace * mask[:, None, :, :]
        recon = admm_reconstruct(b_under, s.coils, mask, cfg_admm, weights=weights)
        zf = zero_filled_init(b_under, s.coils, mask)
        truth_mag = echo_combine(s.truth)
        rows.append(
            {
                "psnr": psnr(echo_combine(recon), truth_mag),
                "zf_psnr": psnr(echo_combine(zf), truth_mag),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_key: str
    worst_index: tuple
    n_checked: int
    rel_errors: np.ndarray

    def fraction_within(self, tol):
        if self.n_checked == 0:
            return 1.0
        return float(np.mean(self.rel_errors <= tol))


def gradient_check(f, point, eps, max_coords_per_key=None, value_fn=None):
    """Central-difference check of a differentiable scalar function.

    ``f(point) -> (value, grads)`` supplies the reverse-mode gradient;
    ``value_fn(point) -> value`` (default: ``f`` discarding grads) is used
    for the perturbed evaluations.  Coordinates may be subsampled
    deterministically (evenly spaced) via ``max_coords_per_key``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if value_fn is None:
        value_fn = lambda pt: f(pt)[0]
    base_value, grads = f(point)
    if not np.isfinite(base_value):
        raise ad.NumericError("non-finite value at the check point")
    rel_errors = []
    worst = (0.0, None, None)
    n_checked = 0
    for key in sorted(point):
        arr = np.asarray(point[key], dtype=np.float64)
        flat_n = arr.size
        if max_coords_per_key is not None and flat_n > max_coords_per_key:
            idxs = np.unique(np.linspace(0, flat_n - 1, max_coords_per_key).astype(int))
        else:
            idxs = np.arange(flat_n)
        g = np.asarray(grads[key]).reshape(-1)
        for flat_idx in idxs:
            shifted = dict(point)
            plus = arr.copy().reshape(-1)
            plus[flat_idx] += eps
            shifted[key] = plus.reshape(arr.shape)
            f_plus = value_fn(shifted)
            minus = arr.copy().reshape(-1)
            minus[flat_idx] -= eps
            shifted[key] = minus.reshape(arr.shape)
            f_minus = value_fn(shifted)
            fd = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(g[flat_idx] - fd) / max(abs(g[flat_idx]), abs(fd), 1e-8)
            rel_errors.append(rel)
            n_checked += 1
            if rel > worst[0]:
                worst = (rel, key, np.unravel_index(flat_idx, arr.shape))
    return GradCheckReport(
        max_rel_err=worst[0],
        worst_key=worst[1] if worst[1] is not None else "",
        worst_index=worst[2] if worst[2] is not None else (),
        n_checked=n_checked,
        rel_errors=np.asarray(rel_errors),
    )
