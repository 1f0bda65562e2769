"""2D parallel-beam CT: Joseph ray transform, FBP, low-dose model and KL.

Image convention: ``x[i, j]`` with row ``i`` along y and column ``j`` along x,
pixel centres at ``j - (N-1)/2`` (unit pixel size).  A ray at angle ``theta``
and detector offset ``t`` is the line ``x cos(theta) + y sin(theta) = t``;
detector bins have unit spacing and are centred on the rotation axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ..core import ShapeMismatchError, check_same_shape
from .base import ImagingOperator


class DomainError(ValueError):
    """Raised when a divergence is evaluated outside its domain."""


def default_n_bins(N: int) -> int:
    # smallest count >= N*sqrt(2) with the parity of N, so centres align
    n = math.ceil(N * math.sqrt(2.0))
    return n + ((n - N) % 2)


@dataclass(frozen=True)
class ParallelBeamGeometry:
    N: int
    n_angles: int
    n_bins: int | None = None

    def __post_init__(self):
        if self.n_bins is None:
            object.__setattr__(self, "n_bins", default_n_bins(self.N))
        if self.N < 1 or self.n_angles < 1:
            raise ValueError("N and n_angles must be positive")
        if self.n_bins < self.N:
            raise ValueError(f"n_bins={self.n_bins} must be >= N={self.N}")

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * (np.pi / self.n_angles)

    @property
    def image_shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    @property
    def sino_shape(self) -> tuple[int, int]:
        return (self.n_angles, self.n_bins)

    @property
    def cell_volume(self) -> float:
        """Area of one sinogram cell (angle step times unit bin width)."""
        return np.pi / self.n_angles


@lru_cache(maxsize=8)
def _joseph_matrix(N: int, n_angles: int, n_bins: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    c0 = (N - 1) / 2.0
    t = np.arange(n_bins) - (n_bins - 1) / 2.0
    pix = np.arange(N) - c0
    rows, cols, vals = [], [], []
    for a in range(n_angles):
        th = a * np.pi / n_angles
        c, s = math.cos(th), math.sin(th)
        ray = a * n_bins + np.arange(n_bins)
        if abs(s) >= abs(c):
            # march over columns, interpolate between rows
            y = (t[:, None] - pix[None, :] * c) / s
            r = y + c0
            step = np.broadcast_to(np.arange(N)[None, :], r.shape)
            w = 1.0 / abs(s)
        else:
            x = (t[:, None] - pix[None, :] * s) / c
            r = x + c0
            step = np.broadcast_to(np.arange(N)[None, :], r.shape)
            w = 1.0 / abs(c)
        i0 = np.floor(r).astype(np.int64)
        f = r - i0
        rr = np.broadcast_to(ray[:, None], r.shape)
        for idx, wt in ((i0, 1.0 - f), (i0 + 1, f)):
            ok = (idx >= 0) & (idx < N) & (wt > 0)
            if abs(s) >= abs(c):
                flat = idx[ok] * N + step[ok]
            else:
                flat = step[ok] * N + idx[ok]
            rows.append(rr[ok])
            cols.append(flat)
            vals.append(wt[ok] * w)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_angles * n_bins, N * N),
    )
    A.sum_duplicates()
    return A, A.T.tocsr()


class RayTransform(ImagingOperator):
    """Joseph-method ray transform with its exact transpose as adjoint."""

    def __init__(self, geom: ParallelBeamGeometry):
        self.geom = geom
        self.domain_shape = geom.image_shape
        self.range_shape = geom.sino_shape
        self.A, self.AT = _joseph_matrix(geom.N, geom.n_angles, geom.n_bins)

    def _forward(self, x):
        return (self.A @ x.ravel()).reshape(self.range_shape)

    def _adjoint(self, y):
        return (self.AT @ y.ravel()).reshape(self.domain_shape)

    def fbp(self, sino):
        return fbp(sino, self.geom)


def ray_transform(x, geom: ParallelBeamGeometry) -> np.ndarray:
    return RayTransform(geom).forward(np.asarray(x, dtype=np.float64))


def ray_transform_adjoint(sino, geom: ParallelBeamGeometry) -> np.ndarray:
    return RayTransform(geom).adjoint(np.asarray(sino, dtype=np.float64))


@lru_cache(maxsize=8)
def _ramp_response(n_bins: int) -> np.ndarray:
    n_pad = 1 << max(1, math.ceil(math.log2(2 * n_bins)))
    n = np.fft.fftfreq(n_pad, d=1.0 / n_pad)  # signed integer offsets
    h = np.zeros(n_pad)
    h[0] = 0.25
    odd = (np.abs(n) % 2) == 1
    h[odd] = -1.0 / (np.pi * n[odd]) ** 2
    # spatial Ram-Lak kernel avoids the DC offset of a sampled |f|
    return 2.0 * np.real(np.fft.fft(h))


def ramp_filter(sino: np.ndarray) -> np.ndarray:
    """Ram-Lak filtering of every projection along the detector axis."""
    n_bins = sino.shape[-1]
    H = _ramp_response(n_bins)
    S = np.fft.fft(sino, n=H.size, axis=-1)
    return np.real(np.fft.ifft(S * H, axis=-1))[..., :n_bins]


def fbp(sino, geom: ParallelBeamGeometry) -> np.ndarray:
    """Filtered backprojection with the matched adjoint as backprojector."""
    sino = np.asarray(sino, dtype=np.float64)
    if sino.shape != geom.sino_shape:
        raise ShapeMismatchError(f"sinogram {sino.shape} != {geom.sino_shape}")
    q = ramp_filter(sino)
    return RayTransform(geom).adjoint(q) * (np.pi / (2.0 * geom.n_angles))


@dataclass(frozen=True)
class LowDoseModel:
    """Expected photon counts ``photons * exp(-mu * R x)``."""

    photons: float = 10_000.0
    mu: float = 0.02
    geom: ParallelBeamGeometry | None = None

    def __post_init__(self):
        if self.photons <= 0 or self.mu <= 0:
            raise ValueError("photons and mu must be positive")
        if self.geom is None:
            raise ValueError("LowDoseModel needs a geometry")

    @property
    def ray(self) -> RayTransform:
        return RayTransform(self.geom)

    def log_data(self, y: np.ndarray) -> np.ndarray:
        """Line-integral estimate ``-ln(y / photons) / mu``; zero counts clipped to 1."""
        return -np.log(np.maximum(y, 1.0) / self.photons) / self.mu


def lowdose_forward(x, model: LowDoseModel) -> np.ndarray:
    return model.photons * np.exp(-model.mu * model.ray.forward(np.asarray(x, dtype=np.float64)))


def lowdose_jvp(x, v, model: LowDoseModel) -> np.ndarray:
    """Directional derivative of :func:`lowdose_forward` at ``x`` along ``v``."""
    R = model.ray
    return -model.mu * lowdose_forward(x, model) * R.forward(np.asarray(v, dtype=np.float64))


def poisson_sample(mean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Poisson draws: exact inversion for mean < 30, rounded normal above."""
    mean = np.asarray(mean, dtype=np.float64)
    flat = mean.ravel()
    u = rng.random(flat.size)
    z = rng.standard_normal(flat.size)
    out = np.empty(flat.size)

    big = flat >= 30.0
    out[big] = np.maximum(np.floor(flat[big] + np.sqrt(flat[big]) * z[big] + 0.5), 0.0)

    small = ~big
    m = flat[small]
    us = u[small]
    k = np.zeros(m.size)
    pk = np.exp(-m)
    cdf = pk.copy()
    j = 0
    active = us > cdf
    while active.any() and j < 1000:
        k[active] += 1
        j += 1
        pk = pk * m / j
        cdf = cdf + pk
        active = us > cdf
    out[small] = k
    return out.reshape(mean.shape)


def lowdose_simulate(x, model: LowDoseModel, seed) -> np.ndarray:
    """Noisy counts; ``seed`` is an int or a ``numpy.random.Generator``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return poisson_sample(lowdose_forward(x, model), rng)


def kl_divergence(u, y) -> float:
    """Generalised KL divergence ``sum(u - y + y ln(y/u))`` with ``0 ln 0 = 0``."""
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_same_shape(u, y, "kl_divergence")
    if np.any(u <= 0):
        raise DomainError("kl_divergence needs strictly positive u")
    if np.any(y < 0):
        raise DomainError("kl_divergence needs nonnegative y")
    pos = y > 0
    val = np.sum(u - y)
    val += np.sum(y[pos] * np.log(y[pos] / u[pos]))
    return float(val)


def kl_objective(x, y, model: LowDoseModel) -> float:
    return kl_divergence(lowdose_forward(x, model), y)


def kl_gradient(x, y, model: LowDoseModel, precondition: bool = False) -> np.ndarray:
    """Gradient of ``kl_divergence(lowdose_forward(x), y)`` with respect to ``x``.

    With ``precondition=True`` the backprojection is replaced by FBP (ramp
    filter, then backprojection), giving the left-preconditioned direction.
    """
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0):
        raise DomainError("counts must be nonnegative")
    resid = lowdose_forward(x, model) - y
    if precondition:
        return -model.mu * fbp(resid, model.geom)
    return -model.mu * model.ray.adjoint(resid)
