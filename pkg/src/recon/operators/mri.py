"""Radial multi-coil MRI encoding with an exact nonuniform DFT.

Image sequences have shape ``(Nx, Ny, Nt)``; pixel ``(ix, iy)`` sits at
``(ix - Nx//2, iy - Ny//2)``.  k-space positions are in radians per pixel,
so ``|k| <= pi`` covers the Nyquist disk.  The forward transform is
unnormalised, ``y(k) = sum_r x(r) exp(-i k.r)``, and the adjoint carries the
conjugate kernel only.

Data layout: ``(n_coils, Nt, n_spokes_per_frame * n_samples)``, spoke-major.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import ShapeMismatchError
from .base import ImagingOperator

GOLDEN_ANGLE = math.pi * (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RadialTrajectory:
    angles: np.ndarray  # (n_spokes,)
    radii: np.ndarray  # (n_samples,), uniform in [-pi, pi)

    @property
    def n_spokes(self) -> int:
        return int(self.angles.size)

    @property
    def n_samples(self) -> int:
        return int(self.radii.size)

    @property
    def kx(self) -> np.ndarray:
        return (np.cos(self.angles)[:, None] * self.radii[None, :]).ravel()

    @property
    def ky(self) -> np.ndarray:
        return (np.sin(self.angles)[:, None] * self.radii[None, :]).ravel()

    @property
    def n_points(self) -> int:
        return self.n_spokes * self.n_samples


def spoke_radii(n_samples: int, k_max: float = math.pi) -> np.ndarray:
    return (np.arange(n_samples) - n_samples // 2) * (2.0 * k_max / n_samples)


def golden_angle_trajectory(n_spokes: int, n_samples: int, first_spoke: int = 0) -> RadialTrajectory:
    """Spokes ``k = first_spoke, ...`` at angle ``(k * golden) mod pi``."""
    if n_spokes < 1 or n_samples < 1:
        raise ValueError("n_spokes and n_samples must be >= 1")
    k = np.arange(first_spoke, first_spoke + n_spokes, dtype=np.float64)
    return RadialTrajectory(np.mod(k * GOLDEN_ANGLE, np.pi), spoke_radii(n_samples))


def frame_trajectories(n_spokes_total: int, n_frames: int, n_samples: int) -> list[RadialTrajectory]:
    """Split one continuous golden-angle acquisition into equal frame bins."""
    if n_spokes_total % n_frames:
        raise ValueError(f"{n_spokes_total} spokes do not split into {n_frames} frames")
    m = n_spokes_total // n_frames
    return [golden_angle_trajectory(m, n_samples, first_spoke=t * m) for t in range(n_frames)]


@dataclass(frozen=True)
class CoilProfile:
    maps: np.ndarray  # (n_c, Nx, Ny) complex

    @property
    def n_coils(self) -> int:
        return int(self.maps.shape[0])

    @property
    def image_shape(self) -> tuple[int, int]:
        return tuple(self.maps.shape[1:])


def single_coil(Nx: int, Ny: int | None = None) -> CoilProfile:
    return CoilProfile(np.ones((1, Nx, Ny or Nx), dtype=np.complex128))


class RadialEncoder(ImagingOperator):
    """Coil weighting, frame-wise 2D Fourier encoding and radial sampling."""

    is_complex = True

    def __init__(self, coils: CoilProfile, trajs: list[RadialTrajectory]):
        self.coils = coils
        self.trajs = list(trajs)
        npts = {tr.n_points for tr in self.trajs}
        if len(npts) != 1:
            raise ValueError("every frame needs the same number of k-space points")
        Nx, Ny = coils.image_shape
        Nt = len(self.trajs)
        self.domain_shape = (Nx, Ny, Nt)
        self.range_shape = (coils.n_coils, Nt, npts.pop())
        px = np.arange(Nx) - Nx // 2
        py = np.arange(Ny) - Ny // 2
        # separable kernels: exp(-i(kx x + ky y)) = exp(-i kx x) exp(-i ky y)
        self._ex = [np.exp(-1j * np.outer(tr.kx, px)) for tr in self.trajs]
        self._ey = [np.exp(-1j * np.outer(tr.ky, py)) for tr in self.trajs]

    def _forward(self, x):
        C = self.coils.maps
        out = np.empty(self.range_shape, dtype=np.complex128)
        for t, (ex, ey) in enumerate(zip(self._ex, self._ey)):
            z = C * x[None, :, :, t]
            b = z @ ey.T  # (nc, Nx, M)
            out[:, t, :] = np.einsum("cxm,mx->cm", b, ex)
        return out

    def _adjoint(self, y):
        Cc = self.coils.maps.conj()
        out = np.empty(self.domain_shape, dtype=np.complex128)
        for t, (ex, ey) in enumerate(zip(self._ex, self._ey)):
            d = ex.conj().T[None, :, :] * y[:, t, None, :]  # (nc, Nx, M)
            img = d @ ey.conj()  # (nc, Nx, Ny)
            out[:, :, t] = np.sum(Cc * img, axis=0)
        return out


def radial_encode(x, coils: CoilProfile, trajs) -> np.ndarray:
    if isinstance(trajs, RadialTrajectory):
        trajs = [trajs] * np.shape(x)[-1]
    return RadialEncoder(coils, trajs).forward(np.asarray(x, dtype=np.complex128))


def radial_encode_adjoint(y, coils: CoilProfile, trajs) -> np.ndarray:
    y = np.asarray(y, dtype=np.complex128)
    if isinstance(trajs, RadialTrajectory):
        trajs = [trajs] * y.shape[1]
    return RadialEncoder(coils, trajs).adjoint(y)


def density_weights(traj: RadialTrajectory, Nx: int, Ny: int) -> np.ndarray:
    """Radial ramp ``|k|/k_max`` floored at ``1/(2 n_samples)``.

    Scaled so the weights of one frame sum to the number of Cartesian grid
    points inside the sampled k-space disk, ``pi Nx Ny / 4``.
    """
    r = np.abs(traj.radii) / math.pi
    w = np.maximum(r, 1.0 / (2.0 * traj.n_samples))
    w = np.tile(w, traj.n_spokes)
    return w * (math.pi * Nx * Ny / 4.0) / w.sum()


def nufft_recon(y, coils: CoilProfile, trajs, encoder: RadialEncoder | None = None) -> np.ndarray:
    """Density-compensated adjoint reconstruction, scaled to image intensity."""
    y = np.asarray(y, dtype=np.complex128)
    if isinstance(trajs, RadialTrajectory):
        trajs = [trajs] * y.shape[1]
    E = encoder if encoder is not None else RadialEncoder(coils, trajs)
    if y.shape != E.range_shape:
        raise ShapeMismatchError(f"k-space data {y.shape} != {E.range_shape}")
    Nx, Ny = coils.image_shape
    w = np.stack([density_weights(tr, Nx, Ny) for tr in trajs])  # (Nt, M)
    return E.adjoint(y * w[None]) / (Nx * Ny)
