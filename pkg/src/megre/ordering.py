"""Fan-beam segmented centric ordering of sampled k-space locations.

Each echo's sampled (k_y, k_z) locations are sorted by angle with respect
to the positive k_y axis and split into contiguous angular segments of
(near-)equal size; within a segment, locations are visited center-out.
TR t then acquires, for echo j, the t-th element of echo j's sequence, so
consecutive echoes within one TR land at nearby k-space locations and the
phase/slice encoding gradient jumps stay small.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


@dataclass
class AcquisitionSchedule:
    """locations[t, j] = (k_y, k_z) offsets from k-space center acquired at
    TR t for echo j; segment_sizes are the realized per-segment counts."""

    locations: np.ndarray  # (n_tr, n_echoes, 2) int64
    segment_sizes: np.ndarray  # (n_segments,) int64

    @property
    def n_tr(self):
        return self.locations.shape[0]

    @property
    def n_echoes(self):
        return self.locations.shape[1]

    @property
    def n_segments(self):
        return len(self.segment_sizes)


def _offsets_and_keys(mask):
    ny, nz = mask.shape
    iy, iz = np.nonzero(np.asarray(mask) != 0)
    ky = iy - ny // 2
    kz = iz - nz // 2
    ang = np.mod(np.arctan2(kz, ky), 2.0 * np.pi)  # atan2(0, 0) == 0 for the center
    r = np.hypot(ky, kz)
    return ky, kz, ang, r


def segment_locations(mask, n_segments):
    """Split one echo's sampled locations into angular segments.

    Locations are sorted by angle in [0, 2 pi) (ties by radius, then k_y,
    then k_z) and cut into ``n_segments`` contiguous runs; when the count is
    not divisible, the last ``count % n_segments`` segments get one extra
    location, so sizes differ by at most 1.
    """
    if n_segments <= 0:
        raise ValueError(f"n_segments must be positive, got {n_segments}")
    ky, kz, ang, r = _offsets_and_keys(mask)
    n = len(ky)
    if n < n_segments:
        raise ValueError(f"{n} sampled locations cannot fill {n_segments} segments")
    order = np.lexsort((kz, ky, r, ang))
    locs = np.stack([ky[order], kz[order]], axis=1)
    base, rem = divmod(n, n_segments)
    sizes = np.full(n_segments, base, dtype=np.int64)
    if rem:
        sizes[-rem:] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [locs[bounds[i] : bounds[i + 1]] for i in range(n_segments)]


def order_within_segment(segment):
    """Sort a segment center-out: ascending radius, ties by angle, k_y, k_z."""
    seg = np.asarray(segment)
    if len(seg) == 0:
        raise ValueError("empty segment")
    ky, kz = seg[:, 0], seg[:, 1]
    ang = np.mod(np.arctan2(kz, ky), 2.0 * np.pi)
    r = np.hypot(ky, kz)
    return seg[np.lexsort((kz, ky, ang, r))]


def build_schedule(masks, n_segments):
    """Assemble the per-TR acquisition schedule for all echoes.

    Every echo must sample the same number of locations; segments are
    traversed sequentially, each center-out, giving one ordered sequence per
    echo of length n_TR.
    """
    masks = np.asarray(masks)
    counts = [int(np.count_nonzero(masks[j])) for j in range(masks.shape[0])]
    if len(set(counts)) != 1:
        raise ValueError(f"echoes sample unequal location counts: {counts}")
    sequences = []
    sizes = None
    for j in range(masks.shape[0]):
        segs = segment_locations(masks[j], n_segments)
        sizes = np.array([len(s) for s in segs], dtype=np.int64)
        sequences.append(np.concatenate([order_within_segment(s) for s in segs]))
    locations = np.stack(sequences, axis=1).astype(np.int64)
    return AcquisitionSchedule(locations=locations, segment_sizes=sizes)


def encoding_jump_metric(schedule):
    """Mean/max Euclidean encoding jumps within and between TRs.

    The intra-TR jump of one TR is the summed distance over consecutive
    echoes; the inter-TR jump connects the last echo of TR t to the first
    echo of TR t+1.
    """
    loc = schedule.locations.astype(np.float64)
    if schedule.n_echoes > 1:
        d = np.linalg.norm(np.diff(loc, axis=1), axis=2)
        intra = d.sum(axis=1)
    else:
        intra = np.zeros(schedule.n_tr)
    if schedule.n_tr > 1:
        inter = np.linalg.norm(loc[1:, 0] - loc[:-1, -1], axis=1)
    else:
        inter = np.zeros(0)
    return {
        "intra_tr_mean": float(intra.mean()) if len(intra) else 0.0,
        "intra_tr_max": float(intra.max()) if len(intra) else 0.0,
        "inter_tr_mean": float(inter.mean()) if len(inter) else 0.0,
        "inter_tr_max": float(inter.max()) if len(inter) else 0.0,
    }


def shuffled_schedule(schedule, rng):
    """Same locations per echo, independently random acquisition order.

    Baseline for quantifying what the fan-beam ordering buys.
    """
    loc = schedule.locations.copy()
    for j in range(schedule.n_echoes):
        loc[:, j] = loc[rng.permutation(schedule.n_tr), j]
    return AcquisitionSchedule(locations=loc, segment_sizes=schedule.segment_sizes.copy())


def write_schedule(schedule, path):
    """Plain-text export: one header line, then one `tr echo ky kz` row per
    (TR, echo), LF line endings."""
    sizes = schedule.segment_sizes
    n_ind = (
        str(int(sizes[0]))
        if len(set(sizes.tolist())) == 1
        else ",".join(str(int(s)) for s in sizes)
    )
    lines = [f"N_s={schedule.n_segments} N_ind={n_ind} N_T={schedule.n_echoes}"]
    for t in range(schedule.n_tr):
        for j in range(schedule.n_echoes):
            ky, kz = schedule.locations[t, j]
            lines.append(f"{t} {j} {int(ky)} {int(kz)}")
    blob = ("\n".join(lines) + "\n").encode()
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_schedule(path):
    with open(path, "rb") as fh:
        lines = fh.read().decode().splitlines()
    header = dict(kv.split("=") for kv in lines[0].split())
    n_t = int(header["N_T"])
    sizes = np.array([int(s) for s in header["N_ind"].split(",")], dtype=np.int64)
    if len(sizes) == 1:
        sizes = np.full(int(header["N_s"]), sizes[0], dtype=np.int64)
    rows = np.array([[int(tok) for tok in ln.split()] for ln in lines[1:]], dtype=np.int64)
    n_tr = rows[:, 0].max() + 1
    loc = np.zeros((n_tr, n_t, 2), dtype=np.int64)
    loc[rows[:, 0], rows[:, 1]] = rows[:, 2:]
    return AcquisitionSchedule(locations=loc, segment_sizes=sizes)
