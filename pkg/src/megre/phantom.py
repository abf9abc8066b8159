"""Synthetic multi-echo phantoms and coil sensitivity synthesis.

Phantoms are built from overlapping ellipses on a normalized [-1, 1]^2
grid, each carrying proton density, R2*, off-resonance frequency and an
initial phase.  The per-echo complex signal follows the mono-exponential
gradient-echo model

    s_j(r) = m0(r) * exp(-R2*(r) * TE_j) * exp(i * (2 pi f(r) TE_j + phi0(r)))

which is exactly the model the downstream R2*/field fits invert, so
noiseless round trips are exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import make_rng


@dataclass
class Ellipse:
    center: tuple[float, float]  # (y, z) in [-1, 1] units
    axes: tuple[float, float]    # semi-axes, same units
    rotation: float = 0.0        # radians, counter-clockwise
    m0: float = 1.0              # proton density (a.u.)
    r2star: float = 0.0          # 1/s
    field_hz: float = 0.0        # off-resonance (Hz)
    phi0: float = 0.0            # initial phase (rad)

    def __post_init__(self):
        if self.m0 < 0:
            raise ValueError(f"m0 must be >= 0, got {self.m0}")
        if self.r2star < 0:
            raise ValueError(f"r2star must be >= 0, got {self.r2star}")
        if self.axes[0] <= 0 or self.axes[1] <= 0:
            raise ValueError(f"ellipse axes must be > 0, got {self.axes}")


@dataclass
class PhantomSpec:
    shape: tuple[int, int]
    ellipses: list[Ellipse] = field(default_factory=list)
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class MultiEchoImage:
    """Complex echo image stack [n_echoes, N_y, N_z] with echo times in seconds."""

    data: np.ndarray
    echo_times: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        self.echo_times = np.asarray(self.echo_times, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"expected [n_echoes, N_y, N_z], got shape {self.data.shape}")
        if self.echo_times.ndim != 1 or self.echo_times.shape[0] != self.data.shape[0]:
            raise ValueError("echo_times length must match the echo axis")
        if self.echo_times.shape[0] < 1:
            raise ValueError("need at least one echo")
        if np.any(self.echo_times <= 0) or np.any(np.diff(self.echo_times) <= 0):
            raise ValueError("echo_times must be strictly increasing and positive")

    @property
    def n_echoes(self):
        return self.data.shape[0]


def _ellipse_mask(shape, ell):
    ny, nz = shape
    y = np.linspace(-1.0, 1.0, ny)[:, None]
    z = np.linspace(-1.0, 1.0, nz)[None, :]
    dy = y - ell.center[0]
    dz = z - ell.center[1]
    c, s = math.cos(ell.rotation), math.sin(ell.rotation)
    u = dy * c + dz * s
    v = -dy * s + dz * c
    return (u / ell.axes[0]) ** 2 + (v / ell.axes[1]) ** 2 <= 1.0


def generate_phantom(spec, echo_times):
    """Rasterize a PhantomSpec into echo images plus ground-truth maps.

    Later ellipses overwrite earlier ones where they overlap.  Returns
    (MultiEchoImage, maps) with maps = dict of m0/r2star/field/phi0 arrays.
    """
    if not spec.ellipses:
        raise ValueError("phantom spec has an empty ellipse list")
    ny, nz = spec.shape
    te = np.asarray(echo_times, dtype=np.float64)
    m0 = np.zeros((ny, nz))
    r2 = np.zeros((ny, nz))
    f = np.zeros((ny, nz))
    p0 = np.zeros((ny, nz))
    for ell in spec.ellipses:
        m = _ellipse_mask(spec.shape, ell)
        m0[m] = ell.m0
        r2[m] = ell.r2star
        f[m] = ell.field_hz
        p0[m] = ell.phi0
    decay = np.exp(-r2[None] * te[:, None, None])
    phase = 2.0 * np.pi * f[None] * te[:, None, None] + p0[None]
    data = m0[None] * decay * np.exp(1j * phase)
    maps = {"m0": m0, "r2star": r2, "field": f, "phi0": p0}
    return MultiEchoImage(data, te), maps


def generate_coils(n_coils, shape, seed):
    """Smooth complex sensitivity maps, sum-of-squares normalized voxelwise.

    Gaussian-bump magnitudes centered around the field of view with
    low-order polynomial phase; Sum_k |E_k|^2 == 1 everywhere.
    """
    if n_coils < 1:
        raise ValueError(f"n_coils must be >= 1, got {n_coils}")
    ny, nz = shape
    rng = make_rng(seed)
    y = np.linspace(-1.0, 1.0, ny)[:, None]
    z = np.linspace(-1.0, 1.0, nz)[None, :]
    maps = np.empty((n_coils, ny, nz), dtype=np.complex128)
    for k in range(n_coils):
        ang = 2.0 * np.pi * k / n_coils + rng.uniform(-0.3, 0.3)
        cy, cz = 1.2 * math.cos(ang), 1.2 * math.sin(ang)
        width = 1.0 + rng.uniform(-0.2, 0.4)
        mag = np.exp(-((y - cy) ** 2 + (z - cz) ** 2) / (2.0 * width**2))
        a = rng.uniform(-1.0, 1.0, size=4)
        phase = 0.5 * (a[0] + a[1] * y + a[2] * z + a[3] * y * z)
        maps[k] = mag * np.exp(1j * phase)
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / sos[None]


def random_phantom_spec(shape, rng, n_ellipses=(3, 6), noise_sigma=0.0):
    """Seeded random phantom: a head-like outer ellipse plus inner structures."""
    n_inner = int(rng.integers(n_ellipses[0], n_ellipses[1] + 1))
    ells = [
        Ellipse(
            center=(0.0, 0.0),
            axes=(rng.uniform(0.75, 0.9), rng.uniform(0.75, 0.9)),
            rotation=0.0,
            m0=rng.uniform(0.6, 1.0),
            r2star=rng.uniform(10.0, 25.0),
            field_hz=rng.uniform(-5.0, 5.0),
            phi0=rng.uniform(-0.5, 0.5),
        )
    ]
    for _ in range(n_inner):
        ells.append(
            Ellipse(
                center=(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)),
                axes=(rng.uniform(0.08, 0.35), rng.uniform(0.08, 0.35)),
                rotation=rng.uniform(0.0, np.pi),
                m0=rng.uniform(0.3, 1.2),
                r2star=rng.uniform(5.0, 60.0),
                field_hz=rng.uniform(-30.0, 30.0),
                phi0=rng.uniform(-np.pi / 2, np.pi / 2),
            )
        )
    return PhantomSpec(shape=tuple(shape), ellipses=ells, noise_sigma=noise_sigma)


def load_phantom_spec(path):
    """Read a declarative phantom description (JSON document)."""
    with open(path) as fh:
        doc = json.load(fh)
    ells = [
        Ellipse(
            center=tuple(e["center"]),
            axes=tuple(e["axes"]),
            rotation=float(e.get("rotation", 0.0)),
            m0=float(e.get("m0", 1.0)),
            r2star=float(e.get("r2star", 0.0)),
            field_hz=float(e.get("field_hz", 0.0)),
            phi0=float(e.get("phi0", 0.0)),
        )
        for e in doc["ellipses"]
    ]
    return PhantomSpec(
        shape=tuple(doc["shape"]),
        ellipses=ells,
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
    ), np.asarray(doc["echo_times"], dtype=np.float64)


def save_phantom_spec(spec, echo_times, path):
    doc = {
        "shape": list(spec.shape),
        "echo_times": [float(t) for t in np.asarray(echo_times)],
        "noise_sigma": spec.noise_sigma,
        "ellipses": [
            {
                "center": list(e.center),
                "axes": list(e.axes),
                "rotation": e.rotation,
                "m0": e.m0,
                "r2star": e.r2star,
                "field_hz": e.field_hz,
                "phi0": e.phi0,
            }
            for e in spec.ellipses
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
