"""Image-quality measures: PSNR, NRMSE, SSIM and HaarPSI.

PSNR and NRMSE use the (possibly complex) difference directly; SSIM and
HaarPSI compare magnitudes.  Volumes are scored slice by slice over the last
axis and averaged.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

from .core import ShapeMismatchError, check_same_shape

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
HPSI_C = 30.0
HPSI_ALPHA = 4.2
HPSI_SCALES = 3


def _pair(x, ref):
    x = np.asarray(x)
    ref = np.asarray(ref)
    check_same_shape(x, ref, "metric inputs")
    return x, ref


def psnr(x, ref, peak: float | None = None) -> float:
    """``10 log10(peak^2 / MSE)``; ``inf`` when the images agree exactly.

    ``peak`` defaults to ``max |ref|``.
    """
    x, ref = _pair(x, ref)
    if peak is None:
        peak = float(np.max(np.abs(ref)))
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean(np.abs(x - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def nrmse(x, ref) -> float:
    """``||x - ref|| / ||ref||``."""
    x, ref = _pair(x, ref)
    den = float(np.linalg.norm(ref))
    if den == 0.0:
        raise ValueError("nrmse needs a nonzero reference")
    return float(np.linalg.norm(x - ref)) / den


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(t**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(x, ref, data_range: float | None = None) -> float:
    """Mean SSIM over all window positions fully inside the image.

    ``data_range`` (L) defaults to ``max - min`` of the reference magnitude.
    """
    x, ref = _pair(x, ref)
    if x.ndim != 2:
        raise ShapeMismatchError("ssim works on 2D slices")
    a = np.abs(x).astype(np.float64)
    b = np.abs(ref).astype(np.float64)
    if min(a.shape) < SSIM_WIN:
        raise ValueError(f"image {a.shape} is smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    L = float(b.max() - b.min()) if data_range is None else float(data_range)
    if L <= 0:
        raise ValueError("dynamic range must be positive")
    C1 = (SSIM_K1 * L) ** 2
    C2 = (SSIM_K2 * L) ** 2
    w = gaussian_window()

    def filt(v):
        return convolve2d(v, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a**2
    sbb = filt(b * b) - mu_b**2
    sab = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * sab + C2)
    den = (mu_a**2 + mu_b**2 + C1) * (saa + sbb + C2)
    return float(np.mean(num / den))


def _conv_same(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    # "same" cropping that keeps rows k//2 ... of the full convolution
    full = convolve2d(img, k, mode="full")
    r0, c0 = k.shape[0] // 2, k.shape[1] // 2
    return full[r0 : r0 + img.shape[0], c0 : c0 + img.shape[1]]


def haar_filters(scale: int) -> np.ndarray:
    n = 2**scale
    h = np.full((n, n), 2.0**-scale)
    h[: n // 2] *= -1.0
    return h


def _haar_decompose(img: np.ndarray) -> list[np.ndarray]:
    """Responses ordered horizontal-edge scales 1..3, then the transposed filters."""
    out_h, out_v = [], []
    for s in range(1, HPSI_SCALES + 1):
        h = haar_filters(s)
        out_h.append(_conv_same(img, h))
        out_v.append(_conv_same(img, h.T))
    return out_h + out_v


def _subsample(img: np.ndarray) -> np.ndarray:
    return _conv_same(img, np.full((2, 2), 0.25))[::2, ::2]


def hpsi(x, ref, data_range: float | None = None) -> float:
    """Haar wavelet-based perceptual similarity index (grayscale).

    Magnitudes are mapped to [0, 255] using ``data_range`` (default: the
    maximum of the reference) before the fixed constants are applied.
    """
    x, ref = _pair(x, ref)
    if x.ndim != 2:
        raise ShapeMismatchError("hpsi works on 2D slices")
    if min(x.shape) < 8:
        raise ValueError("hpsi needs images of at least 8x8")
    a = np.abs(x).astype(np.float64)
    b = np.abs(ref).astype(np.float64)
    L = float(b.max()) if data_range is None else float(data_range)
    if L <= 0:
        L = 1.0
    a = _subsample(a * (255.0 / L))
    b = _subsample(b * (255.0 / L))
    ca, cb = _haar_decompose(a), _haar_decompose(b)
    num = den = 0.0
    for o in range(2):
        coarse = o * HPSI_SCALES + HPSI_SCALES - 1
        weight = np.maximum(np.abs(ca[coarse]), np.abs(cb[coarse]))
        sim = np.zeros_like(a)
        for s in range(HPSI_SCALES - 1):
            ma = np.abs(ca[o * HPSI_SCALES + s])
            mb = np.abs(cb[o * HPSI_SCALES + s])
            sim += (2 * ma * mb + HPSI_C) / (ma**2 + mb**2 + HPSI_C)
        sim /= HPSI_SCALES - 1
        num += np.sum(_sigmoid(sim) * weight)
        den += np.sum(weight)
    if den == 0.0:
        return 1.0
    return _logit(num / den) ** 2


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-HPSI_ALPHA * v))


def _logit(v):
    return math.log(v / (1.0 - v)) / HPSI_ALPHA


# ---------------------------------------------------------------- reports


@dataclass
class MetricReport:
    psnr: list[float] = field(default_factory=list)
    nrmse: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)
    hpsi: list[float] = field(default_factory=list)

    COLUMNS = ("psnr", "nrmse", "ssim", "hpsi")

    def mean(self) -> dict[str, float]:
        return {c: float(np.mean(getattr(self, c))) for c in self.COLUMNS}

    @property
    def n_slices(self) -> int:
        return len(self.psnr)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("slice",) + self.COLUMNS)
            for i in range(self.n_slices):
                w.writerow([i] + [repr(float(getattr(self, c)[i])) for c in self.COLUMNS])
            m = self.mean()
            w.writerow(["mean"] + [repr(m[c]) for c in self.COLUMNS])


def _slices(v: np.ndarray):
    if v.ndim == 2:
        return [v]
    if v.ndim == 3:
        return [v[:, :, k] for k in range(v.shape[2])]
    raise ShapeMismatchError(f"expected a 2D image or a stack of slices, got {v.shape}")


def evaluate(x, ref, peak: float | None = None, data_range: float | None = None) -> MetricReport:
    """Score every xy slice of ``x`` against ``ref``."""
    x, ref = _pair(x, ref)
    rep = MetricReport()
    for a, b in zip(_slices(x), _slices(ref)):
        rep.psnr.append(psnr(a, b, peak))
        rep.nrmse.append(nrmse(a, b))
        rep.ssim.append(ssim(a, b, data_range))
        rep.hpsi.append(hpsi(a, b, data_range))
    return rep
