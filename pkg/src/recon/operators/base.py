from __future__ import annotations

import numpy as np

from ..core import ShapeMismatchError


class ImagingOperator:
    """Linear forward/adjoint pair between two array spaces.

    Subclasses implement ``_forward`` and ``_adjoint``; the public methods
    check shapes so that no operator silently broadcasts.
    """

    domain_shape: tuple[int, ...]
    range_shape: tuple[int, ...]
    is_complex = False

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != self.domain_shape:
            raise ShapeMismatchError(
                f"{type(self).__name__}.forward: got {x.shape}, expected {self.domain_shape}"
            )
        return self._forward(x)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if y.shape != self.range_shape:
            raise ShapeMismatchError(
                f"{type(self).__name__}.adjoint: got {y.shape}, expected {self.range_shape}"
            )
        return self._adjoint(y)

    def normal(self, x: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(x))

    def __call__(self, x):
        return self.forward(x)

    def _forward(self, x):
        raise NotImplementedError

    def _adjoint(self, y):
        raise NotImplementedError


class MatrixOperator(ImagingOperator):
    """Dense matrix acting on flat vectors (used by oracles and tests)."""

    def __init__(self, A: np.ndarray):
        self.A = np.asarray(A)
        self.is_complex = np.iscomplexobj(self.A)
        self.domain_shape = (self.A.shape[1],)
        self.range_shape = (self.A.shape[0],)

    def _forward(self, x):
        return self.A @ x

    def _adjoint(self, y):
        return self.A.conj().T @ y


class IdentityOperator(ImagingOperator):
    def __init__(self, shape, is_complex=False):
        self.domain_shape = self.range_shape = tuple(shape)
        self.is_complex = is_complex

    def _forward(self, x):
        return x.copy()

    def _adjoint(self, y):
        return y.copy()
