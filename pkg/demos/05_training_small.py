"""Two-phase training at toy scale.

Phase 1 learns the per-echo sampling pattern jointly with the recurrent
denoiser (fresh Bernoulli mask every step, straight-through gradients);
phase 2 freezes a mask drawn from the learned probabilities and fine-tunes
the network.  A few minutes of CPU; shrink epochs to make it faster.
"""

import numpy as np

from megre.admm import AdmmConfig
from megre.patterns import build_prob_pattern, sample_binary
from megre.rng import make_rng
from megre.training import (
    TrainConfig,
    evaluate_recon,
    make_synthetic_dataset,
    train_phase1,
    train_phase2,
)

shape, echo_times = (32, 32), [0.004, 0.008, 0.012]
train_set = make_synthetic_dataset(8, shape, echo_times, 1, seed=100, snr_db=30)
val_set = make_synthetic_dataset(2, shape, echo_times, 1, seed=101, snr_db=30)
test_set = make_synthetic_dataset(3, shape, echo_times, 1, seed=102, snr_db=30)

admm = AdmmConfig(n_unrolled=3, cg_iters=3, denoiser="tff")
cfg1 = TrainConfig(epochs=10, spo=2, gamma=0.25, calib_size=4, admm=admm,
                   hidden_width=6, trunk_width=8, trunk_layers=3)
pattern, net, log1 = train_phase1(train_set, cfg1, seed=0, val_set=val_set)
print("phase 1 loss:", " ".join(f"{r['mean_loss']:.3f}" for r in log1))

prob = build_prob_pattern(pattern.w, cfg1.slope, cfg1.gamma)
mask = sample_binary(prob, make_rng(1), calib_size=4)
print("learned pattern center-weighted?",
      prob[:, 12:20, 12:20].mean() > prob.mean())

cfg2 = TrainConfig(epochs=4, phase=2, spo=2, gamma=0.25, calib_size=4, admm=admm,
                   hidden_width=6, trunk_width=8, trunk_layers=3)
net, log2 = train_phase2(train_set, mask, net, cfg2, seed=2, val_set=val_set)
print("phase 2 loss:", " ".join(f"{r['mean_loss']:.3f}" for r in log2))

rows = evaluate_recon(test_set, mask, admm, weights=net)
print("test PSNR:", " ".join(f"{r['psnr']:.2f}" for r in rows),
      "| zero-filled:", " ".join(f"{r['zf_psnr']:.2f}" for r in rows))
