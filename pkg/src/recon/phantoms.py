"""Synthetic ground truth: Shepp-Logan, a beating-ellipse cine phantom, coil maps.

Ellipses live in normalised coordinates ``[-1, 1]^2``.  Pixels are rendered
as the mean over a 4x4 sub-pixel grid, which keeps phantoms at different
resolutions consistent under 2x2 averaging.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .operators.mri import CoilProfile

SUPERSAMPLE = 4

# Shepp-Logan geometry: a, b, x0, y0, phi [deg]
_SL_GEOMETRY = (
    (0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.0230, 0.0460, 0.06, -0.6050, 0.0),
)
# original intensities, halved so the skull (sum 2.0) maps to 1.0
SL_INTENSITIES = (1.0, -0.49, -0.01, -0.01, 0.005, 0.005, 0.005, 0.005, 0.005, 0.005)
# higher-contrast variant (Toft), handy for display
SL_MODIFIED_INTENSITIES = (1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1)


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple[float, float]
    axes: tuple[float, float]
    theta: float  # radians
    intensity: float

    def __post_init__(self):
        if min(self.axes) <= 0:
            raise ValueError("ellipse semi-axes must be positive")


def shepp_logan_ellipses(modified: bool = False) -> list[EllipseSpec]:
    vals = SL_MODIFIED_INTENSITIES if modified else SL_INTENSITIES
    return [
        EllipseSpec((x0, y0), (a, b), math.radians(phi), val)
        for val, (a, b, x0, y0, phi) in zip(vals, _SL_GEOMETRY)
    ]


def _grid(N: int, ss: int = SUPERSAMPLE):
    # sub-pixel sample coordinates; row index runs top (y=+1) to bottom
    n = N * ss
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    X = c[None, :]
    Y = -c[:, None]
    return X, Y


def _downsample(img: np.ndarray, ss: int) -> np.ndarray:
    N = img.shape[0] // ss
    return img.reshape(N, ss, N, ss).mean(axis=(1, 3))


def render_ellipses(ellipses, N: int, ss: int = SUPERSAMPLE) -> np.ndarray:
    X, Y = _grid(N, ss)
    img = np.zeros((N * ss, N * ss))
    for e in ellipses:
        ct, st = math.cos(e.theta), math.sin(e.theta)
        dx, dy = X - e.center[0], Y - e.center[1]
        u = dx * ct + dy * st
        v = -dx * st + dy * ct
        inside = (u / e.axes[0]) ** 2 + (v / e.axes[1]) ** 2 <= 1.0
        img += e.intensity * inside
    return _downsample(img, ss)


def shepp_logan(N: int, modified: bool = False) -> np.ndarray:
    """Shepp-Logan phantom on an N x N grid, values in [0, 1].

    The default uses the original ten-ellipse intensities (brain tissue near
    0.5, soft-tissue contrasts of about 1%); ``modified=True`` gives the
    high-contrast variant.
    """
    if N < 16:
        raise ValueError("shepp_logan needs N >= 16")
    return np.clip(render_ellipses(shepp_logan_ellipses(modified), N), 0.0, 1.0)


def random_ellipse_phantom(N: int, rng: np.random.Generator, n_inner: int = 8) -> np.ndarray:
    """Shepp-Logan-like head phantom with randomised inner structures (training data)."""
    outer_a = rng.uniform(0.62, 0.74)
    outer_b = rng.uniform(0.80, 0.94)
    rim = rng.uniform(0.02, 0.05)
    ell = [
        EllipseSpec((0.0, 0.0), (outer_a, outer_b), rng.uniform(-0.2, 0.2), 1.0),
    ]
    ell.append(replace(ell[0], axes=(outer_a - rim, outer_b - rim), intensity=-rng.uniform(0.45, 0.52)))
    for _ in range(n_inner):
        r = rng.uniform(0.0, 0.55)
        phi = rng.uniform(0, 2 * np.pi)
        ell.append(
            EllipseSpec(
                (r * math.cos(phi) * outer_a / 0.7, r * math.sin(phi)),
                (rng.uniform(0.02, 0.25), rng.uniform(0.02, 0.25)),
                rng.uniform(0, np.pi),
                rng.choice([-1.0, 1.0]) * rng.uniform(0.005, 0.05),
            )
        )
    return np.clip(render_ellipses(ell, N), 0.0, 1.0)


@dataclass(frozen=True)
class DynamicPhantomSpec:
    """Ellipse overlay whose ``pulsing`` ellipses scale sinusoidally over a cycle."""

    ellipses: tuple[EllipseSpec, ...]
    pulsing: tuple[int, ...] = ()
    amplitude: float = 0.15
    phase_coeffs: tuple[float, ...] = (0.4, -0.3, 0.5, 0.2, -0.25)

    def __post_init__(self):
        if not 0.0 <= self.amplitude < 1.0:
            raise ValueError("pulse amplitude must lie in [0, 1)")

    def scale_at(self, t: float, n_frames: int) -> float:
        return 1.0 + self.amplitude * math.sin(2.0 * math.pi * t / n_frames)


def cine_spec(amplitude: float = 0.15) -> DynamicPhantomSpec:
    """Default cardiac-like phantom: torso, myocardium, pulsing blood pool."""
    ell = (
        EllipseSpec((0.0, 0.0), (0.85, 0.65), 0.0, 0.35),  # torso
        EllipseSpec((-0.45, 0.05), (0.22, 0.38), 0.1, 0.25),  # lung-ish region
        EllipseSpec((0.12, 0.05), (0.36, 0.30), 0.5, 0.45),  # myocardium
        EllipseSpec((0.12, 0.05), (0.22, 0.18), 0.5, 0.20),  # blood pool (pulses)
        EllipseSpec((0.45, -0.35), (0.10, 0.10), 0.0, 0.30),
        EllipseSpec((-0.05, -0.42), (0.08, 0.05), 0.3, -0.15),
    )
    return DynamicPhantomSpec(ell, pulsing=(2, 3), amplitude=amplitude)


def random_cine_spec(rng: np.random.Generator) -> DynamicPhantomSpec:
    base = cine_spec()
    ell = []
    for e in base.ellipses:
        ell.append(
            EllipseSpec(
                (e.center[0] + rng.uniform(-0.08, 0.08), e.center[1] + rng.uniform(-0.08, 0.08)),
                (e.axes[0] * rng.uniform(0.8, 1.2), e.axes[1] * rng.uniform(0.8, 1.2)),
                e.theta + rng.uniform(-0.4, 0.4),
                e.intensity * rng.uniform(0.8, 1.2),
            )
        )
    coeffs = tuple(rng.uniform(-0.5, 0.5, size=5))
    return DynamicPhantomSpec(tuple(ell), base.pulsing, rng.uniform(0.08, 0.2), coeffs)


def _phase_map(coeffs, N: int) -> np.ndarray:
    c = (np.arange(N) + 0.5) / N * 2.0 - 1.0
    X, Y = c[:, None], c[None, :]
    a0, ax, ay, axy, ar = coeffs
    return a0 + ax * X + ay * Y + axy * X * Y + ar * (X**2 + Y**2)


def dynamic_frame(spec: DynamicPhantomSpec, N: int, t: float, n_frames: int) -> np.ndarray:
    """Magnitude of frame ``t`` (any real t; period ``n_frames``), shape (Nx, Ny)."""
    k = spec.scale_at(t, n_frames)
    ell = [
        replace(e, axes=(e.axes[0] * k, e.axes[1] * k)) if i in spec.pulsing else e
        for i, e in enumerate(spec.ellipses)
    ]
    # rows of render_ellipses run along y; sequences are indexed (x, y)
    return np.clip(render_ellipses(ell, N), 0.0, None).T


def dynamic_phantom(spec: DynamicPhantomSpec, N: int, n_frames: int = 30) -> np.ndarray:
    """Complex image sequence of shape (N, N, n_frames)."""
    mag = np.stack([dynamic_frame(spec, N, t, n_frames) for t in range(n_frames)], axis=-1)
    phase = _phase_map(spec.phase_coeffs, N)
    return mag * np.exp(1j * phase)[:, :, None]


def synth_coils(N: int, n_c: int, width: float = 0.9, radius: float = 1.3) -> CoilProfile:
    """Gaussian-bump coils on a ring, normalised to unit sum of squares."""
    if n_c < 1:
        raise ValueError("need at least one coil")
    c = (np.arange(N) + 0.5) / N * 2.0 - 1.0
    X, Y = np.meshgrid(c, c, indexing="ij")
    maps = []
    for i in range(n_c):
        phi = 2.0 * np.pi * i / n_c
        cx, cy = radius * math.cos(phi), radius * math.sin(phi)
        mag = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width**2))
        phase = phi + 0.5 * (X * math.cos(phi) - Y * math.sin(phi))
        maps.append(mag * np.exp(1j * phase))
    maps = np.array(maps)
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return CoilProfile(maps / sos[None])
