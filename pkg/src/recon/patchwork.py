"""Patch decomposition, overlap weighting and patch-wise prior assembly.

A :class:`PatchScheme` describes a regular grid of (possibly overlapping)
patches of size ``p`` placed with strides ``s`` inside a volume.  For any
volume ``x`` the decomposition

    x = W * sum_j R_j^T R_j x

holds exactly when ``W`` is the reciprocal coverage count, which is what
:func:`compute_weights` returns.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ShapeMismatchError

EXACT_FIT = "exact"
CLAMP_LAST = "clamp"


class SchemeError(ValueError):
    pass


def _axis_origins(n: int, p: int, s: int, boundary: str) -> list[int]:
    starts = list(range(0, n - p + 1, s))
    if starts[-1] != n - p:
        if boundary == EXACT_FIT:
            raise SchemeError(
                f"axis of length {n} is not tiled by patch {p} with stride {s}"
            )
        starts.append(n - p)
    return starts


@dataclass(frozen=True)
class PatchScheme:
    """Regular patch grid: ``volume_shape``, patch size ``p``, strides ``s``."""

    volume_shape: tuple[int, ...]
    p: tuple[int, ...]
    s: tuple[int, ...]
    boundary: str = EXACT_FIT

    def __post_init__(self):
        object.__setattr__(self, "volume_shape", tuple(int(v) for v in self.volume_shape))
        object.__setattr__(self, "p", tuple(int(v) for v in self.p))
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        if not (len(self.volume_shape) == len(self.p) == len(self.s)):
            raise SchemeError("volume_shape, p and s must have the same rank")
        if self.boundary not in (EXACT_FIT, CLAMP_LAST):
            raise SchemeError(f"unknown boundary policy {self.boundary!r}")
        for n, p, s in zip(self.volume_shape, self.p, self.s):
            if not 1 <= p <= n:
                raise SchemeError(f"patch size {p} outside [1, {n}]")
            if not 1 <= s <= p:
                raise SchemeError(f"stride {s} outside [1, {p}]")
        # validates the fit as a side effect
        self.axis_origins()

    def axis_origins(self) -> list[list[int]]:
        return [
            _axis_origins(n, p, s, self.boundary)
            for n, p, s in zip(self.volume_shape, self.p, self.s)
        ]

    @property
    def n_patches(self) -> int:
        return int(np.prod([len(o) for o in self.axis_origins()]))


def enumerate_patches(scheme: PatchScheme) -> list[tuple[int, ...]]:
    """Patch origins in lexicographic order."""
    return list(itertools.product(*scheme.axis_origins()))


def _window(origin, p):
    return tuple(slice(o, o + n) for o, n in zip(origin, p))


def _check_bounds(shape, origin, p):
    if len(origin) != len(shape) or len(p) != len(shape):
        raise ShapeMismatchError(f"rank mismatch: origin {origin}, size {p}, shape {shape}")
    for o, n, N in zip(origin, p, shape):
        if o < 0 or o + n > N:
            raise IndexError(f"patch at {tuple(origin)} of size {tuple(p)} exceeds {shape}")


def extract_patch(x: np.ndarray, origin, p) -> np.ndarray:
    """Copy of the block of size ``p`` starting at ``origin``."""
    _check_bounds(x.shape, origin, p)
    return x[_window(origin, p)].copy()


def insert_patch_transpose(acc: np.ndarray, patch: np.ndarray, origin) -> None:
    """Add ``patch`` into ``acc`` at ``origin`` (overlaps sum)."""
    _check_bounds(acc.shape, origin, patch.shape)
    acc[_window(origin, patch.shape)] += patch


def coverage(scheme: PatchScheme) -> np.ndarray:
    """Number of patches covering each voxel."""
    cov = np.zeros(scheme.volume_shape, dtype=np.int64)
    for origin in enumerate_patches(scheme):
        cov[_window(origin, scheme.p)] += 1
    return cov


def compute_weights(scheme: PatchScheme) -> np.ndarray:
    """Diagonal of W: reciprocal coverage count per voxel."""
    cov = coverage(scheme)
    if cov.min() < 1:
        raise RuntimeError("voxel not covered by any patch")
    return 1.0 / cov


def extract_all(x: np.ndarray, scheme: PatchScheme, origins=None) -> np.ndarray:
    """Stack of all patches, shape ``(n_patches, *p)``."""
    if x.shape != scheme.volume_shape:
        raise ShapeMismatchError(f"volume {x.shape} does not match scheme {scheme.volume_shape}")
    if origins is None:
        origins = enumerate_patches(scheme)
    out = np.empty((len(origins),) + scheme.p, dtype=x.dtype)
    for k, origin in enumerate(origins):
        out[k] = x[_window(origin, scheme.p)]
    return out


def assemble(patches: np.ndarray, scheme: PatchScheme, origins=None) -> np.ndarray:
    """W * sum_j R_j^T patches[j]."""
    if origins is None:
        origins = enumerate_patches(scheme)
    acc = np.zeros(scheme.volume_shape, dtype=patches.dtype)
    for k, origin in enumerate(origins):
        acc[_window(origin, scheme.p)] += patches[k]
    return acc * compute_weights(scheme)


def _denoise_stack(denoiser, stack: np.ndarray) -> np.ndarray:
    batch = getattr(denoiser, "denoise_batch", None)
    if batch is not None:
        out = batch(stack)
    else:
        fn = denoiser.denoise if hasattr(denoiser, "denoise") else denoiser
        out = np.stack([np.asarray(fn(z)) for z in stack]) if len(stack) else stack.copy()
    out = np.asarray(out)
    if out.shape != stack.shape:
        raise ShapeMismatchError(
            f"denoiser returned patches of shape {out.shape[1:]}, expected {stack.shape[1:]}"
        )
    return out


def apply_prior_patchwise(
    x_ini: np.ndarray,
    scheme: PatchScheme,
    denoiser,
    order: Sequence[int] | None = None,
) -> np.ndarray:
    """Return ``W sum_j R_j^T u(R_j x_ini)``.

    ``denoiser`` is a :class:`recon.priors.PriorModel`, or any callable mapping a
    real patch to a patch of the same shape.  Complex volumes are processed
    as real and imaginary parts through the same real denoiser.  ``order``
    permutes the patch processing order (the result does not depend on it
    beyond rounding).
    """
    x_ini = np.asarray(x_ini)
    if np.iscomplexobj(x_ini):
        re = apply_prior_patchwise(x_ini.real.copy(), scheme, denoiser, order)
        im = apply_prior_patchwise(x_ini.imag.copy(), scheme, denoiser, order)
        return re + 1j * im
    origins = enumerate_patches(scheme)
    if order is not None:
        if sorted(order) != list(range(len(origins))):
            raise ValueError("order must be a permutation of the patch indices")
        origins = [origins[k] for k in order]
    stack = extract_all(x_ini, scheme, origins)
    return assemble(_denoise_stack(denoiser, stack), scheme, origins)


def _xt_slices(v: np.ndarray) -> np.ndarray:
    # slice j at fixed y: v[:, j, :] -> stack (Ny, Nx, Nt)
    return np.ascontiguousarray(np.transpose(v, (1, 0, 2)))


def _yt_slices(v: np.ndarray) -> np.ndarray:
    # slice i at fixed x: v[i, :, :] -> stack (Nx, Ny, Nt)
    return np.ascontiguousarray(v)


def apply_prior_xtyt(x_ini: np.ndarray, denoiser) -> np.ndarray:
    """Spatio-temporal slice prior for an image sequence of shape (Nx, Ny, Nt).

    The same real 2D denoiser is applied to every xt slice (shape (Nx, Nt))
    and every yt slice (shape (Ny, Nt)) of the real and the imaginary part;
    the two reassembled slice stacks are averaged.
    """
    x_ini = np.asarray(x_ini)
    if x_ini.ndim != 3:
        raise ShapeMismatchError(f"expected (Nx, Ny, Nt) sequence, got shape {x_ini.shape}")

    def one_part(v: np.ndarray) -> np.ndarray:
        xt = _denoise_stack(denoiser, _xt_slices(v))
        yt = _denoise_stack(denoiser, _yt_slices(v))
        return 0.5 * (np.transpose(xt, (1, 0, 2)) + yt)

    if np.iscomplexobj(x_ini):
        return one_part(np.ascontiguousarray(x_ini.real)) + 1j * one_part(
            np.ascontiguousarray(x_ini.imag)
        )
    return one_part(x_ini.astype(np.float64))


def xtyt_training_slices(x: np.ndarray) -> np.ndarray:
    """All xt and yt slices of the real and imaginary parts, for training."""
    parts = [x.real, x.imag] if np.iscomplexobj(x) else [x]
    out = []
    for v in parts:
        v = np.ascontiguousarray(v, dtype=np.float64)
        out.extend(list(_xt_slices(v)))
        out.extend(list(_yt_slices(v)))
    return out


Denoiser = Callable[[np.ndarray], np.ndarray]
