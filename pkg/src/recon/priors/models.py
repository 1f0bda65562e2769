"""Patch denoisers that produce the prior image."""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from ..core import ShapeMismatchError
from ..patchwork import apply_prior_patchwise
from .convnet import ConvNet, convnet_forward
from .dictionary import DictionaryModel, omp_batch


class PriorModel:
    """Maps a patch of ``patch_shape`` to a patch of the same shape.

    ``patch_shape`` may be ``None`` for models that accept any shape.
    Subclasses implement :meth:`denoise_batch` on a stack ``(n, *patch_shape)``.
    """

    patch_shape: tuple[int, ...] | None = None

    def check(self, shape) -> None:
        if self.patch_shape is not None and tuple(shape) != tuple(self.patch_shape):
            raise ShapeMismatchError(f"patch shape {tuple(shape)} != model shape {self.patch_shape}")

    def denoise(self, patch: np.ndarray) -> np.ndarray:
        patch = np.asarray(patch, dtype=np.float64)
        self.check(patch.shape)
        return self.denoise_batch(patch[None])[0]

    def denoise_batch(self, stack: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, patch):
        return self.denoise(patch)


class IdentityPrior(PriorModel):
    def __init__(self, patch_shape=None):
        self.patch_shape = None if patch_shape is None else tuple(patch_shape)

    def denoise_batch(self, stack):
        stack = np.asarray(stack)
        self.check(stack.shape[1:])
        return stack.copy()


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at radius ceil(3 sigma), summing to one."""
    r = max(int(math.ceil(3.0 * sigma)), 0)
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


class GaussianSmoothPrior(PriorModel):
    """Separable Gaussian blur with zero padding, renormalised at the borders.

    Dividing by the blurred indicator of the patch keeps constants fixed.
    """

    def __init__(self, sigma: float, patch_shape=None):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.patch_shape = None if patch_shape is None else tuple(patch_shape)

    def denoise_batch(self, stack):
        stack = np.asarray(stack, dtype=np.float64)
        self.check(stack.shape[1:])
        k = gaussian_kernel(self.sigma)
        num = stack
        den = np.ones(stack.shape[1:])
        for ax in range(1, stack.ndim):
            num = correlate1d(num, k, axis=ax, mode="constant")
            den = correlate1d(den, k, axis=ax - 1, mode="constant")
        return num / den


class ConvNetPrior(PriorModel):
    def __init__(self, net: ConvNet, patch_shape=None, chunk: int = 1024):
        self.net = net
        self.patch_shape = None if patch_shape is None else tuple(patch_shape)
        self.chunk = chunk

    def denoise_batch(self, stack):
        stack = np.asarray(stack, dtype=np.float64)
        self.check(stack.shape[1:])
        if stack.ndim != 3:
            raise ShapeMismatchError("the convolutional denoiser works on 2D patches")
        out = np.empty_like(stack)
        for i in range(0, len(stack), self.chunk):
            out[i : i + self.chunk] = convnet_forward(self.net, stack[i : i + self.chunk])
        return out


class DictionaryPrior(PriorModel):
    """Replaces each patch by its S-term OMP approximation ``D gamma``."""

    def __init__(self, dico: DictionaryModel, chunk: int = 4096):
        self.dico = dico
        self.patch_shape = dico.patch_shape
        self.chunk = chunk

    def denoise_batch(self, stack):
        stack = np.asarray(stack, dtype=np.float64)
        self.check(stack.shape[1:])
        Y = stack.reshape(len(stack), -1).T
        out = np.empty_like(Y)
        D = self.dico.D
        for i in range(0, Y.shape[1], self.chunk):
            out[:, i : i + self.chunk] = D @ omp_batch(D, Y[:, i : i + self.chunk], self.dico.S)
        return out.T.reshape(stack.shape)


def denoise_patch(model: PriorModel, patch) -> np.ndarray:
    return model.denoise(patch)


def dictionary_prior(x_ini, scheme, dico: DictionaryModel) -> np.ndarray:
    """Patch-wise sparse approximation ``W sum_j R_j^T D gamma_j`` of ``x_ini``."""
    if tuple(scheme.p) != dico.patch_shape:
        raise ShapeMismatchError(f"scheme patch {tuple(scheme.p)} != dictionary patch {dico.patch_shape}")
    return apply_prior_patchwise(x_ini, scheme, DictionaryPrior(dico))
