"""Declarative experiment configuration.

One JSON document configures every command; ``--set section.key=value``
overrides individual entries (values parsed as JSON, falling back to
strings).  Validation failures name the offending field.
"""

from __future__ import annotations

import copy
import json


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


DEFAULTS = {
    "seed": 1234,
    "output_dir": "out",
    "workers": 1,
    "phantom": {
        "shape": [64, 64],
        "echo_times": [0.004, 0.008, 0.012, 0.016],
        "n_coils": 4,
        "snr_db": 30.0,
        "spec_path": None,
    },
    "pattern": {
        "spo": 2,
        "gamma": 0.25,
        "slope": 0.25,
        "calib_size": 8,
        "vd_levels": 5,
        "weights_path": None,
    },
    "admm": {
        "n_unrolled": 10,
        "rho": 1.0,
        "cg_iters": 10,
        "denoiser": "llr",
        "llr_patch": 8,
        "llr_lambda": 0.05,
    },
    "network": {
        "hidden_width": 8,
        "trunk_width": 16,
        "trunk_layers": 3,
        "kernel_size": 3,
    },
    "train": {
        "epochs_phase1": 30,
        "epochs_phase2": 10,
        "lr": 1e-3,
        "pattern_lr": 0.1,
        "n_train": 20,
        "n_val": 2,
        "n_test": 6,
        "seeds": [0, 1, 2],
    },
    "ordering": {"n_segments": 11, "mask_path": None},
    "recon": {
        "kspace_path": None,
        "coils_path": None,
        "mask_path": None,
        "checkpoint_path": None,
        "truth_path": None,
    },
    "eval": {
        "recon_path": None,
        "ref_path": None,
        "window_min": None,
        "window_max": None,
    },
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(where, "unknown field")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None):
    """DEFAULTS deep-merged with the JSON document at ``path`` (if any)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config document must be a JSON object")
    return _merge(DEFAULTS, doc)


def apply_overrides(cfg, assignments):
    """Apply ``section.key=value`` strings; values are parsed as JSON."""
    cfg = copy.deepcopy(cfg)
    for item in assignments or []:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(dotted, "unknown section")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(dotted, "unknown field")
        node[parts[-1]] = value
    return cfg


def _require(cond, fieldname, message):
    if not cond:
        raise ConfigError(fieldname, message)


def validate(cfg):
    ph, pa, am, tr = cfg["phantom"], cfg["pattern"], cfg["admm"], cfg["train"]
    _require(
        isinstance(ph["shape"], (list, tuple)) and len(ph["shape"]) == 2 and min(ph["shape"]) >= 4,
        "phantom.shape",
        "needs two extents >= 4",
    )
    te = ph["echo_times"]
    _require(
        len(te) >= 1 and all(t > 0 for t in te) and all(b > a for a, b in zip(te, te[1:])),
        "phantom.echo_times",
        "must be positive and strictly increasing",
    )
    _require(ph["n_coils"] >= 1, "phantom.n_coils", "must be >= 1")
    _require(pa["spo"] in (0, 1, 2), "pattern.spo", "must be 0, 1 or 2")
    _require(0.0 < pa["gamma"] <= 1.0, "pattern.gamma", "must be in (0, 1]")
    _require(pa["slope"] > 0, "pattern.slope", "must be > 0")
    _require(
        0 <= pa["calib_size"] <= min(ph["shape"]),
        "pattern.calib_size",
        "must fit inside the grid",
    )
    _require(am["n_unrolled"] >= 1, "admm.n_unrolled", "must be >= 1")
    _require(am["cg_iters"] >= 1, "admm.cg_iters", "must be >= 1")
    _require(am["rho"] > 0, "admm.rho", "must be > 0")
    _require(
        am["denoiser"] in ("identity", "llr", "tff", "tff0"),
        "admm.denoiser",
        "must be identity, llr, tff or tff0",
    )
    _require(tr["epochs_phase1"] >= 0, "train.epochs_phase1", "must be >= 0")
    _require(tr["epochs_phase2"] >= 0, "train.epochs_phase2", "must be >= 0")
    _require(tr["lr"] > 0, "train.lr", "must be > 0")
    _require(tr["n_train"] >= 1, "train.n_train", "must be >= 1")
    _require(len(tr["seeds"]) >= 1, "train.seeds", "needs at least one seed")
    _require(cfg["ordering"]["n_segments"] >= 1, "ordering.n_segments", "must be >= 1")
    _require(cfg["workers"] >= 1, "workers", "must be >= 1")
    return cfg
