"""Ablation grid: every (TFF, SPO) combination trained and scored.

All six grid cells share the same synthetic train/val/test datasets and the
same per-repeat seeds, so differences come from the sampling-pattern mode
and the denoiser architecture alone.  SPO >= 1 cells run the two training
phases (joint learning, then fine-tuning on a mask realized from the
learned probabilities); SPO = 0 cells train against the fixed manual
variable-density mask for the same total number of epochs.
"""

from __future__ import annotations

import contextlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

try:  # BLAS pools thrash on the small matmuls these runs are made of
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - plain numpy environments
    threadpool_limits = None


def single_threaded_blas():
    if threadpool_limits is None:
        return contextlib.nullcontext()
    return threadpool_limits(limits=1)

from .admm import AdmmConfig
from .network import init_weights
from .patterns import apply_calibration, build_prob_pattern, manual_vd_pattern, sample_binary
from .rng import make_rng, seed_from, split_seeds
from .training import (
    TrainConfig,
    evaluate_recon,
    make_synthetic_dataset,
    train_phase1,
    train_phase2,
)

GRID = ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2))


@dataclass
class AblationConfig:
    shape: tuple = (64, 64)
    echo_times: tuple = (0.004, 0.008, 0.012, 0.016)
    n_coils: int = 4
    n_train: int = 20
    n_val: int = 2
    n_test: int = 6
    snr_db: float = 30.0
    gamma: float = 0.25
    slope: float = 0.25
    calib_size: int = 8
    epochs_phase1: int = 30
    epochs_phase2: int = 10
    lr: float = 1e-3
    pattern_lr: float = 0.1
    seeds: tuple = (0, 1, 2)
    n_unrolled: int = 4
    cg_iters: int = 3
    hidden_width: int = 8
    trunk_width: int = 16
    trunk_layers: int = 3
    vd_levels: int = 5
    root_seed: int = 1234
    cells: tuple = GRID

    def train_config(self, tff_on, spo, phase, epochs):
        return TrainConfig(
            epochs=epochs,
            lr=self.lr,
            pattern_lr=self.pattern_lr,
            phase=phase,
            spo=spo,
            gamma=self.gamma,
            slope=self.slope,
            calib_size=self.calib_size,
            admm=AdmmConfig(
                n_unrolled=self.n_unrolled,
                cg_iters=self.cg_iters,
                denoiser="tff" if tff_on else "tff0",
            ),
            hidden_width=self.hidden_width,
            trunk_width=self.trunk_width,
            trunk_layers=self.trunk_layers,
        )


def make_datasets(cfg):
    tr_seed, va_seed, te_seed = split_seeds(cfg.root_seed, 3)
    mk = lambda n, s: make_synthetic_dataset(
        n, cfg.shape, cfg.echo_times, cfg.n_coils, s, snr_db=cfg.snr_db
    )
    return mk(cfg.n_train, tr_seed), mk(cfg.n_val, va_seed), mk(cfg.n_test, te_seed)


def run_cell(cfg, datasets, tff_on, spo, repeat_seed):
    """Train one grid cell and score it on the test set."""
    train, val, test = datasets
    n_echoes = train[0].n_echoes
    run_seed = seed_from(cfg.root_seed, tff_on, spo, repeat_seed)
    train_seed, mask_seed, ft_seed = split_seeds(run_seed, 3)

    if spo >= 1:
        cfg1 = cfg.train_config(tff_on, spo, phase=1, epochs=cfg.epochs_phase1)
        pattern, net, log1 = train_phase1(train, cfg1, seed=train_seed, val_set=val)
        prob = build_prob_pattern(pattern.w, cfg.slope, cfg.gamma)
        mask = sample_binary(prob, make_rng(mask_seed), calib_size=cfg.calib_size)
        cfg2 = cfg.train_config(tff_on, spo, phase=2, epochs=cfg.epochs_phase2)
        net, log2 = train_phase2(train, mask, net, cfg2, seed=ft_seed, val_set=val)
    else:
        pattern = None
        mask = manual_vd_pattern(
            cfg.shape, cfg.gamma, cfg.vd_levels, make_rng(mask_seed), n_echoes=1
        )
        mask = apply_calibration(mask, cfg.calib_size)
        cfg2 = cfg.train_config(tff_on, spo, phase=2, epochs=cfg.epochs_phase1 + cfg.epochs_phase2)
        init_seed = split_seeds(train_seed, 3)[0]  # same stream position as phase 1
        init = init_weights(
            cfg2.admm.denoiser,
            n_echoes,
            init_seed,
            hidden_width=cfg.hidden_width,
            trunk_width=cfg.trunk_width,
            trunk_layers=cfg.trunk_layers,
        )
        net, log2 = train_phase2(train, mask, init, cfg2, seed=ft_seed, val_set=val)
        log1 = []

    eval_rows = evaluate_recon(test, mask, cfg2.admm, weights=net)
    return {
        "tff": tff_on,
        "spo": spo,
        "seed": repeat_seed,
        "psnr": float(np.mean([r["psnr"] for r in eval_rows])),
        "zf_psnr": float(np.mean([r["zf_psnr"] for r in eval_rows])),
        "final_train_loss": (log2 or log1)[-1]["mean_loss"] if (log2 or log1) else float("nan"),
        "loss_log_phase1": log1,
        "loss_log_phase2": log2,
        "mask": mask,
        "pattern": pattern,
        "net": net,
    }


def run_ablation(cfg, workers=1):
    """Run the whole grid; returns (per-run rows, per-cell summary).

    Rows keep a fixed (cell, seed) order regardless of worker count, and each
    run is internally deterministic, so repeated invocations with the same
    config produce identical numbers.
    """
    datasets = make_datasets(cfg)
    tasks = [(tff, spo, s) for (tff, spo) in cfg.cells for s in cfg.seeds]
    with single_threaded_blas():
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(
                    pool.map(lambda t: run_cell(cfg, datasets, t[0], t[1], t[2]), tasks)
                )
        else:
            rows = [run_cell(cfg, datasets, tff, spo, s) for tff, spo, s in tasks]

    summary = []
    for tff, spo in cfg.cells:
        cell_rows = [r for r in rows if r["tff"] == tff and r["spo"] == spo]
        summary.append(
            {
                "tff": tff,
                "spo": spo,
                "mean_psnr": float(np.mean([r["psnr"] for r in cell_rows])),
                "mean_zf_psnr": float(np.mean([r["zf_psnr"] for r in cell_rows])),
                "n_seeds": len(cell_rows),
            }
        )
    summary.sort(key=lambda r: r["mean_psnr"], reverse=True)
    return rows, summary
