"""Recurrent temporal-feature-fusion denoiser and its ablated variant.

The full model runs a shared recurrent cell over echoes,

    h_j = ReLU(in_conv(x_j) + hid_conv(h_{j-1})),    h_0 = 0,

with x_j the real/imag channel pair of echo j, then concatenates all h_j
along the channel axis and feeds them through a small convolutional stack
that emits every echo's real/imag pair at once.  The ablated variant drops
the hidden path and instead uses two stacked input convolutions per echo,
matching the parameter budget, so echoes only interact inside the trunk.

All layers are plain 3x3 same-padding convolutions shared across echoes and
across unrolled iterations; weights may be numpy arrays (evaluation) or
autodiff Variables (training).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import metf
from .rng import make_rng

TFF = "tff"
TFF_ABLATED = "tff0"


@dataclass
class TffWeights:
    mode: str
    n_echoes: int
    hidden_width: int = 8
    trunk_width: int = 16
    trunk_layers: int = 3
    kernel_size: int = 3
    layers: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in (TFF, TFF_ABLATED):
            raise ValueError(f"unknown network mode {self.mode!r}")
        if self.hidden_width < 1 or self.trunk_width < 1 or self.trunk_layers < 1:
            raise ValueError("network widths/depths must be >= 1")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd (same-size padding)")

    def layer_names(self):
        head = ["in_w", "in_b", "hid_w", "hid_b"] if self.mode == TFF else [
            "in1_w",
            "in1_b",
            "in2_w",
            "in2_b",
        ]
        trunk = []
        for i in range(self.trunk_layers):
            trunk += [f"trunk{i}_w", f"trunk{i}_b"]
        return head + trunk

    def shapes(self):
        k, ch, cd, t = self.kernel_size, self.hidden_width, self.trunk_width, self.n_echoes
        if self.mode == TFF:
            head = {
                "in_w": (ch, 2, k, k),
                "in_b": (ch,),
                "hid_w": (ch, ch, k, k),
                "hid_b": (ch,),
            }
        else:
            head = {
                "in1_w": (ch, 2, k, k),
                "in1_b": (ch,),
                "in2_w": (ch, ch, k, k),
                "in2_b": (ch,),
            }
        shapes = dict(head)
        widths = [t * ch] + [cd] * (self.trunk_layers - 1) + [2 * t]
        for i in range(self.trunk_layers):
            shapes[f"trunk{i}_w"] = (widths[i + 1], widths[i], k, k)
            shapes[f"trunk{i}_b"] = (widths[i + 1],)
        return shapes

    def copy(self):
        return TffWeights(
            mode=self.mode,
            n_echoes=self.n_echoes,
            hidden_width=self.hidden_width,
            trunk_width=self.trunk_width,
            trunk_layers=self.trunk_layers,
            kernel_size=self.kernel_size,
            layers={k: v.copy() for k, v in self.layers.items()},
        )


def init_weights(mode, n_echoes, seed, hidden_width=8, trunk_width=16, trunk_layers=3, kernel_size=3):
    """Glorot-uniform kernels, zero biases, deterministic in ``seed``."""
    w = TffWeights(mode, n_echoes, hidden_width, trunk_width, trunk_layers, kernel_size)
    rng = make_rng(seed)
    layers = {}
    for name, shape in w.shapes().items():
        if name.endswith("_b"):
            layers[name] = np.zeros(shape)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            fan_out = shape[0] * shape[2] * shape[3]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers[name] = rng.uniform(-limit, limit, size=shape)
    w.layers = layers
    return w


def zero_network(mode, n_echoes, **kwargs):
    w = TffWeights(mode, n_echoes, **kwargs)
    w.layers = {name: np.zeros(shape) for name, shape in w.shapes().items()}
    return w


def _echo_channels(v, j, ny, nz):
    re = ad.reshape(ad.creal(ad.getitem(v, j)), (1, ny, nz))
    im = ad.reshape(ad.cimag(ad.getitem(v, j)), (1, ny, nz))
    return ad.concat([re, im], axis=0)


def _trunk(features, weights, layers):
    y = features
    for i in range(weights.trunk_layers):
        y = ad.conv2d(y, layers[f"trunk{i}_w"], layers[f"trunk{i}_b"])
        if i < weights.trunk_layers - 1:
            y = ad.relu(y)
    return y


def _to_complex_stack(y, n_echoes, ny, nz):
    echoes = []
    for j in range(n_echoes):
        re = ad.getitem(y, 2 * j)
        im = ad.getitem(y, 2 * j + 1)
        echoes.append(ad.reshape(ad.make_complex(re, im), (1, ny, nz)))
    return echoes[0] if n_echoes == 1 else ad.concat(echoes, axis=0)


def tff_forward(v_tilde, weights, layers=None):
    """Denoise a complex echo stack [n_echoes, N_y, N_z]; deterministic."""
    if weights.mode != TFF:
        raise ValueError("tff_forward needs TFF-mode weights")
    layers = weights.layers if layers is None else layers
    vv = ad.val(v_tilde)
    if vv.ndim != 3 or vv.shape[0] != weights.n_echoes:
        raise ValueError(f"input shape {vv.shape} does not match {weights.n_echoes} echoes")
    ny, nz = vv.shape[1], vv.shape[2]
    h = None
    feats = []
    for j in range(weights.n_echoes):
        xj = _echo_channels(v_tilde, j, ny, nz)
        pre = ad.conv2d(xj, layers["in_w"], layers["in_b"])
        if h is not None:
            pre = ad.add(pre, ad.conv2d(h, layers["hid_w"], layers["hid_b"]))
        h = ad.relu(pre)
        feats.append(h)
    y = _trunk(ad.concat(feats, axis=0), weights, layers)
    return _to_complex_stack(y, weights.n_echoes, ny, nz)


def tff_ablated_forward(v_tilde, weights, layers=None):
    """Ablated denoiser: no hidden-state path, two input convs per echo."""
    if weights.mode != TFF_ABLATED:
        raise ValueError("tff_ablated_forward needs ablated-mode weights")
    layers = weights.layers if layers is None else layers
    vv = ad.val(v_tilde)
    if vv.ndim != 3 or vv.shape[0] != weights.n_echoes:
        raise ValueError(f"input shape {vv.shape} does not match {weights.n_echoes} echoes")
    ny, nz = vv.shape[1], vv.shape[2]
    feats = []
    for j in range(weights.n_echoes):
        xj = _echo_channels(v_tilde, j, ny, nz)
        a = ad.relu(ad.conv2d(xj, layers["in1_w"], layers["in1_b"]))
        feats.append(ad.relu(ad.conv2d(a, layers["in2_w"], layers["in2_b"])))
    y = _trunk(ad.concat(feats, axis=0), weights, layers)
    return _to_complex_stack(y, weights.n_echoes, ny, nz)


def apply_network(v_tilde, weights, layers=None):
    if weights.mode == TFF:
        return tff_forward(v_tilde, weights, layers)
    return tff_ablated_forward(v_tilde, weights, layers)


def save_weights(weights, dirpath):
    meta = {
        "mode": weights.mode,
        "n_echoes": weights.n_echoes,
        "hidden_width": weights.hidden_width,
        "trunk_width": weights.trunk_width,
        "trunk_layers": weights.trunk_layers,
        "kernel_size": weights.kernel_size,
        "layer_order": weights.layer_names(),
    }
    metf.write_archive({k: weights.layers[k] for k in weights.layer_names()}, meta, dirpath)


def load_weights(dirpath):
    tensors, meta = metf.read_archive(dirpath)
    w = TffWeights(
        mode=meta["mode"],
        n_echoes=meta["n_echoes"],
        hidden_width=meta["hidden_width"],
        trunk_width=meta["trunk_width"],
        trunk_layers=meta["trunk_layers"],
        kernel_size=meta["kernel_size"],
    )
    expected = w.shapes()
    for name in meta["layer_order"]:
        if tuple(tensors[name].shape) != expected[name]:
            raise ValueError(f"layer {name} has shape {tensors[name].shape}, expected {expected[name]}")
    w.layers = {name: tensors[name] for name in meta["layer_order"]}
    return w
