"""Config-driven command line front end.

Commands: phantom, pattern, schedule, train, recon, eval, ablate.
Exit codes: 0 success, 1 config/validation error, 2 usage error,
3 numeric failure.  Every command logs the resolved configuration and
root seed into the output directory, and all artifacts are written
atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import metf, pgm
from .admm import AdmmConfig, admm_reconstruct, zero_filled_init
from .autodiff import NumericError
from .config import ConfigError, apply_overrides, load_config, validate
from .encoding import add_noise, encode
from .experiments import AblationConfig, run_ablation, single_threaded_blas
from .metrics import compute_metrics
from .network import init_weights, load_weights, save_weights
from .phantom import MultiEchoImage
from .ordering import build_schedule, encoding_jump_metric, shuffled_schedule, write_schedule
from .patterns import (
    apply_calibration,
    build_prob_pattern,
    equalize_mask_counts,
    manual_vd_pattern,
    sample_binary,
    schedule_budget,
)
from .phantom import generate_coils, generate_phantom, load_phantom_spec, random_phantom_spec
from .qmaps import quant_maps
from .rng import make_rng, split_seeds
from .training import (
    TrainConfig,
    make_synthetic_dataset,
    sigma_for_snr,
    train_phase1,
    train_phase2,
)


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_text(path, text):
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(row[h]) for h in header))
    _write_text(path, "\n".join(lines) + "\n")


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _log_config(cfg, outdir, command):
    os.makedirs(outdir, exist_ok=True)
    resolved = dict(cfg)
    resolved["command"] = command
    _write_json(os.path.join(outdir, "resolved_config.json"), resolved)
    print(f"[megre {command}] seed={cfg['seed']} output_dir={outdir}")


def _full_mask(shape):
    return np.ones((1,) + tuple(shape))


# ---------------------------------------------------------------------------
# commands


def cmd_phantom(cfg, outdir):
    ph = cfg["phantom"]
    spec_seed, coil_seed, noise_seed = split_seeds(cfg["seed"], 3)
    te = np.asarray(ph["echo_times"], dtype=np.float64)
    if ph["spec_path"]:
        spec, te = load_phantom_spec(ph["spec_path"])
    else:
        spec = random_phantom_spec(tuple(ph["shape"]), make_rng(spec_seed))
    image, maps = generate_phantom(spec, te)
    coils = generate_coils(ph["n_coils"], spec.shape, coil_seed)
    b = encode(image.data, coils, _full_mask(spec.shape))
    sigma = spec.noise_sigma or sigma_for_snr(b, ph["snr_db"])
    b = add_noise(b, sigma, noise_seed)
    metf.write_tensor(image.data, os.path.join(outdir, "truth.metf"))
    metf.write_tensor(b, os.path.join(outdir, "kspace.metf"))
    metf.write_tensor(coils, os.path.join(outdir, "coils.metf"))
    for name, arr in maps.items():
        metf.write_tensor(arr, os.path.join(outdir, f"map_{name}.metf"))
        pgm.write_pgm(arr, os.path.join(outdir, f"map_{name}.pgm"))
    mag = np.sqrt(np.sum(np.abs(image.data) ** 2, axis=0))
    pgm.write_pgm(mag, os.path.join(outdir, "magnitude.pgm"))
    print(f"phantom: {len(spec.ellipses)} ellipses, sigma={sigma:.6g}")
    return 0


def _make_mask(cfg, n_echoes):
    pa = cfg["pattern"]
    shape = tuple(cfg["phantom"]["shape"])
    pat_seed = split_seeds(cfg["seed"], 4)[3]
    if pa["spo"] == 0:
        mask = manual_vd_pattern(shape, pa["gamma"], pa["vd_levels"], make_rng(pat_seed), n_echoes=1)
        return None, apply_calibration(mask, pa["calib_size"])
    lead = 1 if pa["spo"] == 1 else n_echoes
    if pa["weights_path"]:
        w = metf.read_tensor(pa["weights_path"])
        if w.shape[0] not in (1, n_echoes):
            raise ConfigError("pattern.weights_path", f"weights lead extent {w.shape[0]} unusable")
    else:
        w = np.zeros((lead,) + shape)
    prob = build_prob_pattern(w, pa["slope"], pa["gamma"])
    mask = sample_binary(prob, make_rng(pat_seed), calib_size=pa["calib_size"])
    return prob, mask


def cmd_pattern(cfg, outdir):
    n_echoes = len(cfg["phantom"]["echo_times"])
    prob, mask = _make_mask(cfg, n_echoes)
    full = np.broadcast_to(mask, (n_echoes,) + mask.shape[1:]).copy()
    metf.write_tensor(full, os.path.join(outdir, "mask.metf"))
    if prob is not None:
        metf.write_tensor(np.asarray(prob), os.path.join(outdir, "prob.metf"))
        for j in range(prob.shape[0]):
            pgm.write_pgm(prob[j], os.path.join(outdir, f"prob_e{j}.pgm"), 0.0, 1.0)
    for j in range(full.shape[0]):
        pgm.write_pgm(full[j], os.path.join(outdir, f"mask_e{j}.pgm"), 0.0, 1.0)
    rates = [float(m.mean()) for m in full]
    print("realized sampling rates per echo:", " ".join(f"{r:.4f}" for r in rates))
    return 0


def cmd_schedule(cfg, outdir):
    n_echoes = len(cfg["phantom"]["echo_times"])
    n_segments = cfg["ordering"]["n_segments"]
    pa = cfg["pattern"]
    if cfg["ordering"]["mask_path"]:
        mask = metf.read_tensor(cfg["ordering"]["mask_path"])
    else:
        prob, mask = _make_mask(cfg, n_echoes)
        target = schedule_budget(tuple(cfg["phantom"]["shape"]), pa["gamma"], n_segments)
        eq_seed = split_seeds(cfg["seed"], 5)[4]
        mask = equalize_mask_counts(
            mask, target, make_rng(eq_seed), prob=prob, calib_size=pa["calib_size"]
        )
        mask = np.broadcast_to(mask, (n_echoes,) + mask.shape[1:]).copy()
    schedule = build_schedule(mask, n_segments)
    write_schedule(schedule, os.path.join(outdir, "schedule.txt"))
    jumps = encoding_jump_metric(schedule)
    baseline = encoding_jump_metric(shuffled_schedule(schedule, make_rng(cfg["seed"])))
    report = {
        "n_segments": schedule.n_segments,
        "n_ind": [int(s) for s in schedule.segment_sizes],
        "n_tr": schedule.n_tr,
        "n_echoes": schedule.n_echoes,
        "ordered": jumps,
        "random_baseline": baseline,
    }
    _write_json(os.path.join(outdir, "jump_metrics.json"), report)
    print(
        f"schedule: n_TR={schedule.n_tr}, N_s={schedule.n_segments}, "
        f"intra-TR mean {jumps['intra_tr_mean']:.3f} (random {baseline['intra_tr_mean']:.3f})"
    )
    return 0


def _loss_csv(path, log):
    _write_csv(path, ["epoch", "mean_loss", "val_loss"], log)


def cmd_train(cfg, outdir):
    ph, pa, am, tr, nw = cfg["phantom"], cfg["pattern"], cfg["admm"], cfg["train"], cfg["network"]
    if am["denoiser"] not in ("tff", "tff0"):
        raise ConfigError("admm.denoiser", "training requires 'tff' or 'tff0'")
    data_seed, val_seed, mask_seed, ft_seed = split_seeds(cfg["seed"], 4)
    mk = lambda n, s: make_synthetic_dataset(
        n, tuple(ph["shape"]), ph["echo_times"], ph["n_coils"], s, snr_db=ph["snr_db"]
    )
    train_set = mk(tr["n_train"], data_seed)
    val_set = mk(tr["n_val"], val_seed) if tr["n_val"] else []

    def train_cfg(phase, epochs):
        return TrainConfig(
            epochs=epochs,
            lr=tr["lr"],
            pattern_lr=tr["pattern_lr"],
            phase=phase,
            spo=pa["spo"],
            gamma=pa["gamma"],
            slope=pa["slope"],
            calib_size=pa["calib_size"],
            seed=cfg["seed"],
            admm=AdmmConfig(
                n_unrolled=am["n_unrolled"],
                rho=am["rho"],
                cg_iters=am["cg_iters"],
                denoiser=am["denoiser"],
            ),
            hidden_width=nw["hidden_width"],
            trunk_width=nw["trunk_width"],
            trunk_layers=nw["trunk_layers"],
            kernel_size=nw["kernel_size"],
        )

    if pa["spo"] >= 1:
        cfg1 = train_cfg(1, tr["epochs_phase1"])
        with single_threaded_blas():
            pattern, net, log1 = train_phase1(train_set, cfg1, val_set=val_set)
        prob = build_prob_pattern(pattern.w, pa["slope"], pa["gamma"])
        mask = sample_binary(prob, make_rng(mask_seed), calib_size=pa["calib_size"])
        metf.write_tensor(pattern.w, os.path.join(outdir, "pattern_w.metf"))
        metf.write_tensor(np.asarray(prob), os.path.join(outdir, "prob.metf"))
        _loss_csv(os.path.join(outdir, "loss_phase1.csv"), log1)
        cfg2 = train_cfg(2, tr["epochs_phase2"])
        with single_threaded_blas():
            net, log2 = train_phase2(train_set, mask, net, cfg2, seed=ft_seed, val_set=val_set)
    else:
        mask = manual_vd_pattern(
            tuple(ph["shape"]), pa["gamma"], pa["vd_levels"], make_rng(mask_seed), n_echoes=1
        )
        mask = apply_calibration(mask, pa["calib_size"])
        init = init_weights(
            am["denoiser"],
            len(ph["echo_times"]),
            split_seeds(cfg["seed"], 3)[0],
            hidden_width=nw["hidden_width"],
            trunk_width=nw["trunk_width"],
            trunk_layers=nw["trunk_layers"],
            kernel_size=nw["kernel_size"],
        )
        cfg2 = train_cfg(2, tr["epochs_phase1"] + tr["epochs_phase2"])
        with single_threaded_blas():
            net, log2 = train_phase2(train_set, mask, init, cfg2, seed=ft_seed, val_set=val_set)
    metf.write_tensor(mask, os.path.join(outdir, "mask.metf"))
    _loss_csv(os.path.join(outdir, "loss_phase2.csv"), log2)
    save_weights(net, os.path.join(outdir, "checkpoint"))
    print(f"train: final loss {log2[-1]['mean_loss']:.6f}" if log2 else "train: 0 epochs")
    return 0


def cmd_recon(cfg, outdir):
    rc, am = cfg["recon"], cfg["admm"]
    for key in ("kspace_path", "coils_path", "mask_path"):
        if not rc[key]:
            raise ConfigError(f"recon.{key}", "required for recon")
    b = metf.read_tensor(rc["kspace_path"])
    coils = metf.read_tensor(rc["coils_path"])
    mask = metf.read_tensor(rc["mask_path"])
    b = b * np.asarray(mask)[:, None, :, :]
    admm_cfg = AdmmConfig(
        n_unrolled=am["n_unrolled"],
        rho=am["rho"],
        cg_iters=am["cg_iters"],
        denoiser=am["denoiser"],
        llr_patch=am["llr_patch"],
        llr_lambda=am["llr_lambda"],
    )
    weights = None
    if am["denoiser"] in ("tff", "tff0"):
        if not rc["checkpoint_path"]:
            raise ConfigError("recon.checkpoint_path", "required for a network denoiser")
        weights = load_weights(rc["checkpoint_path"])
    recon = admm_reconstruct(b, coils, mask, admm_cfg, weights=weights)
    zf = zero_filled_init(b, coils, mask)
    metf.write_tensor(recon, os.path.join(outdir, "recon.metf"))
    metf.write_tensor(zf, os.path.join(outdir, "zero_filled.metf"))
    mag = np.sqrt(np.sum(np.abs(recon) ** 2, axis=0))
    pgm.write_pgm(mag, os.path.join(outdir, "recon_magnitude.pgm"))
    if rc["truth_path"]:
        truth = metf.read_tensor(rc["truth_path"])
        tmag = np.sqrt(np.sum(np.abs(truth) ** 2, axis=0))
        zmag = np.sqrt(np.sum(np.abs(zf) ** 2, axis=0))
        report = {
            "recon": compute_metrics(mag, tmag).as_dict(),
            "zero_filled": compute_metrics(zmag, tmag).as_dict(),
        }
        _write_json(os.path.join(outdir, "metrics.json"), report)
        print(f"recon PSNR {report['recon']['psnr']:.2f} dB (zero-filled {report['zero_filled']['psnr']:.2f})")
    return 0


def cmd_eval(cfg, outdir):
    ev = cfg["eval"]
    for key in ("recon_path", "ref_path"):
        if not ev[key]:
            raise ConfigError(f"eval.{key}", "required for eval")
    te = np.asarray(cfg["phantom"]["echo_times"], dtype=np.float64)
    x = MultiEchoImage(metf.read_tensor(ev["recon_path"]), te)
    ref = MultiEchoImage(metf.read_tensor(ev["ref_path"]), te)
    qx, qr = quant_maps(x), quant_maps(ref)
    rows = []
    for name in ("magnitude", "r2star", "field"):
        mx, mr = getattr(qx, name), getattr(qr, name)
        if name == "field":
            joint = qx.field_valid & qr.field_valid
            mx, mr = mx * joint, mr * joint
        m = compute_metrics(mx, mr)
        rows.append({"map": name, **m.as_dict()})
        metf.write_tensor(mx, os.path.join(outdir, f"{name}_recon.metf"))
        metf.write_tensor(mr, os.path.join(outdir, f"{name}_ref.metf"))
        window = (ev["window_min"], ev["window_max"]) if name == "magnitude" else (None, None)
        pgm.write_pgm(mx, os.path.join(outdir, f"{name}_recon.pgm"), *window)
        pgm.write_pgm(mr, os.path.join(outdir, f"{name}_ref.pgm"), *window)
    _write_csv(os.path.join(outdir, "metrics.csv"), ["map", "psnr", "ssim", "rmse", "hfen"], rows)
    _write_json(os.path.join(outdir, "metrics.json"), {r["map"]: {k: r[k] for k in ("psnr", "ssim", "rmse", "hfen")} for r in rows})
    for r in rows:
        print(f"eval {r['map']}: PSNR={_fmt(r['psnr'])} SSIM={_fmt(r['ssim'])} RMSE={_fmt(r['rmse'])}% HFEN={_fmt(r['hfen'])}%")
    return 0


def cmd_ablate(cfg, outdir):
    ph, pa, am, tr, nw = cfg["phantom"], cfg["pattern"], cfg["admm"], cfg["train"], cfg["network"]
    acfg = AblationConfig(
        shape=tuple(ph["shape"]),
        echo_times=tuple(ph["echo_times"]),
        n_coils=ph["n_coils"],
        n_train=tr["n_train"],
        n_val=tr["n_val"],
        n_test=tr["n_test"],
        snr_db=ph["snr_db"],
        gamma=pa["gamma"],
        slope=pa["slope"],
        calib_size=pa["calib_size"],
        epochs_phase1=tr["epochs_phase1"],
        epochs_phase2=tr["epochs_phase2"],
        lr=tr["lr"],
        pattern_lr=tr["pattern_lr"],
        seeds=tuple(tr["seeds"]),
        n_unrolled=am["n_unrolled"],
        cg_iters=am["cg_iters"],
        hidden_width=nw["hidden_width"],
        trunk_width=nw["trunk_width"],
        trunk_layers=nw["trunk_layers"],
        vd_levels=pa["vd_levels"],
        root_seed=cfg["seed"],
    )
    rows, summary = run_ablation(acfg, workers=cfg["workers"])
    # all cells computed before anything is written, so output is all-or-nothing
    run_rows = [
        {k: r[k] for k in ("tff", "spo", "seed", "psnr", "zf_psnr", "final_train_loss")}
        for r in rows
    ]
    _write_csv(
        os.path.join(outdir, "ablation.csv"),
        ["tff", "spo", "seed", "psnr", "zf_psnr", "final_train_loss"],
        run_rows,
    )
    _write_csv(
        os.path.join(outdir, "ablation_summary.csv"),
        ["tff", "spo", "mean_psnr", "mean_zf_psnr", "n_seeds"],
        summary,
    )
    for r in rows:
        tag = f"tff{r['tff']}_spo{r['spo']}_seed{r['seed']}"
        if r["loss_log_phase1"]:
            _loss_csv(os.path.join(outdir, f"loss_{tag}_phase1.csv"), r["loss_log_phase1"])
        _loss_csv(os.path.join(outdir, f"loss_{tag}_phase2.csv"), r["loss_log_phase2"])
    for s in summary:
        print(
            f"ablate TFF={s['tff']} SPO={s['spo']}: mean PSNR {s['mean_psnr']:.2f} dB "
            f"(zero-filled {s['mean_zf_psnr']:.2f})"
        )
    return 0


COMMANDS = {
    "phantom": cmd_phantom,
    "pattern": cmd_pattern,
    "schedule": cmd_schedule,
    "train": cmd_train,
    "recon": cmd_recon,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="megre",
        description="Accelerated multi-echo gradient-echo simulation, pattern learning, "
        "reconstruction and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry, e.g. --set pattern.gamma=0.125",
        )
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, args.overrides)
        if args.out:
            cfg["output_dir"] = args.out
        validate(cfg)
        outdir = cfg["output_dir"]
        _log_config(cfg, outdir, args.command)
        return COMMANDS[args.command](cfg, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
