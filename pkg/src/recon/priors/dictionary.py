"""Dictionary prior: ITKrM training and batched orthogonal matching pursuit."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import ndf_read, ndf_write


@dataclass
class DictionaryModel:
    """``D`` holds K unit-norm atoms as columns, shape (d, K)."""

    D: np.ndarray
    S: int
    patch_shape: tuple[int, ...]

    def __post_init__(self):
        self.D = np.asarray(self.D, dtype=np.float64)
        self.patch_shape = tuple(int(v) for v in self.patch_shape)
        d, K = self.D.shape
        if d != int(np.prod(self.patch_shape)):
            raise ValueError(f"atom dimension {d} does not match patch shape {self.patch_shape}")
        if not 1 <= self.S <= K:
            raise ValueError(f"sparsity {self.S} must lie in [1, {K}]")

    @property
    def d(self) -> int:
        return self.D.shape[0]

    @property
    def K(self) -> int:
        return self.D.shape[1]


def _solve_small(G: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched solve of (n, s, s) systems; returns coefficients and an ok-mask."""
    ok = np.ones(len(G), dtype=bool)
    if G.shape[1] == 0:
        return rhs.copy(), ok
    cond = np.linalg.cond(G)
    ok = np.isfinite(cond) & (cond < 1e12)
    out = np.zeros_like(rhs)
    if ok.any():
        out[ok] = np.linalg.solve(G[ok], rhs[ok][..., None])[..., 0]
    return out, ok


def omp_batch(D: np.ndarray, Y: np.ndarray, S: int, tol: float = 1e-12) -> np.ndarray:
    """Sparse codes for the columns of ``Y`` (d, n); returns (K, n).

    Each step selects the atom most correlated with the current residual and
    refits all selected coefficients by least squares.  A signal stops early
    once its residual drops below ``tol`` (relative to max(1, ||y||)) or when
    the next support would be rank deficient.
    """
    D = np.asarray(D, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    d, K = D.shape
    n = Y.shape[1]
    gamma = np.zeros((K, n))
    support = np.zeros((n, 0), dtype=np.int64)
    coef = np.zeros((n, 0))
    R = Y.copy()
    scale = np.maximum(np.linalg.norm(Y, axis=0), 1.0)
    active = np.linalg.norm(R, axis=0) >= tol * scale
    DT = D.T
    G_full = DT @ D
    for _ in range(min(S, K)):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        corr = np.abs(DT @ R[:, idx])  # (K, m)
        if support.shape[1]:
            np.put_along_axis(corr, support[idx].T, -1.0, axis=0)
        new = np.argmax(corr, axis=0)
        supp = np.concatenate([support[idx], new[:, None]], axis=1)
        G = G_full[supp[:, :, None], supp[:, None, :]]
        rhs = (DT[supp] @ Y[:, idx].T[:, :, None])[..., 0]
        c, ok = _solve_small(G, rhs)
        # signals whose new support is degenerate keep their previous code
        grow = idx[ok]
        support_new = np.zeros((n, supp.shape[1]), dtype=np.int64)
        coef_new = np.zeros((n, supp.shape[1]))
        support_new[:, :-1] = support
        coef_new[:, :-1] = coef
        support_new[grow] = supp[ok]
        coef_new[grow] = c[ok]
        # padding entries for signals that stopped: repeat atom 0 with zero coef
        stopped_now = idx[~ok]
        active[stopped_now] = False
        support, coef = support_new, coef_new
        if grow.size:
            approx = np.einsum("dms,ms->dm", D[:, support[grow]], coef[grow])
            R[:, grow] = Y[:, grow] - approx
            active[grow] = np.linalg.norm(R[:, grow], axis=0) >= tol * scale[grow]
    for j in range(support.shape[1]):
        np.add.at(gamma, (support[:, j], np.arange(n)), coef[:, j])
    return gamma


def omp_sparse_code(dico, patch, S: int | None = None) -> np.ndarray:
    """Sparse code of one patch against a :class:`DictionaryModel` or a matrix."""
    if isinstance(dico, DictionaryModel):
        D, S = dico.D, dico.S if S is None else S
    else:
        D = np.asarray(dico, dtype=np.float64)
        if S is None:
            raise ValueError("sparsity S is required with a bare matrix")
    y = np.asarray(patch, dtype=np.float64).reshape(-1, 1)
    if y.shape[0] != D.shape[0]:
        raise ValueError(f"patch dimension {y.shape[0]} != atom dimension {D.shape[0]}")
    return omp_batch(D, y, S)[:, 0]


def _normalise_columns(M: np.ndarray) -> np.ndarray:
    return M / np.linalg.norm(M, axis=0, keepdims=True)


def itkrm_train(
    patches,
    K: int,
    S: int,
    n_iters: int = 15,
    seed: int = 0,
    init: np.ndarray | None = None,
    patch_shape: tuple[int, ...] | None = None,
    refresh=None,
    callback=None,
) -> DictionaryModel:
    """Iterative thresholding and K residual means.

    ``patches`` is (n, *patch_shape) or (n, d).  ``refresh``, if given, is a
    callable ``refresh(iteration, rng) -> patches`` that supplies a new
    training set for each iteration.  ``callback(iteration, D, Y)`` is
    called before the first and after every iteration.
    """
    P = np.asarray(patches, dtype=np.float64)
    if patch_shape is None:
        patch_shape = P.shape[1:] if P.ndim > 2 else (P.shape[1],)
    Y = P.reshape(len(P), -1).T.copy()
    d, n = Y.shape
    if d == 0 or K == 0:
        raise ValueError("need positive atom dimension and atom count")
    if S > K or S < 1:
        raise ValueError(f"sparsity S={S} must lie in [1, K={K}]")
    if n < K:
        raise ValueError(f"need at least K={K} training patches, got {n}")
    rng = np.random.default_rng(seed)

    def draw(Ycur, count):
        norms = np.linalg.norm(Ycur, axis=0)
        pool = np.flatnonzero(norms > 0)
        pick = rng.choice(pool, size=count, replace=pool.size < count)
        return Ycur[:, pick] / norms[pick]

    D = _normalise_columns(np.asarray(init, dtype=np.float64).copy()) if init is not None else draw(Y, K)
    if callback is not None:
        callback(0, D, Y)
    for it in range(n_iters):
        if refresh is not None:
            Y = np.asarray(refresh(it, rng), dtype=np.float64).reshape(-1, d).T
        ip = D.T @ Y  # (K, n)
        top = np.argpartition(-np.abs(ip), S - 1, axis=0)[:S].T  # (n, S)
        top.sort(axis=1)
        G = (D.T @ D)[top[:, :, None], top[:, None, :]]
        rhs = np.take_along_axis(ip.T, top, axis=1)
        try:
            c = np.linalg.solve(G, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            c = (np.linalg.pinv(G) @ rhs[..., None])[..., 0]
        X = np.zeros_like(ip)
        np.put_along_axis(X.T, top, c, axis=1)
        res = Y - D @ X
        mask = np.zeros(ip.shape, dtype=bool)
        np.put_along_axis(mask.T, top, True, axis=1)
        signed = np.where(mask, np.sign(ip), 0.0)
        weight = np.where(mask, np.abs(ip), 0.0).sum(axis=1)
        Dn = res @ signed.T + D * weight[None, :]
        norms = np.linalg.norm(Dn, axis=0)
        dead = ~(norms > 1e-12 * max(1.0, float(np.abs(Y).max())))
        if dead.any():
            Dn[:, dead] = draw(Y, int(dead.sum()))
            norms[dead] = 1.0
        D = Dn / norms[None, :]
        if callback is not None:
            callback(it + 1, D, Y)
    return DictionaryModel(D, S, patch_shape)


def sparse_approx_error(D: np.ndarray, Y: np.ndarray, S: int) -> float:
    """Mean squared S-term OMP approximation error over the columns of ``Y``."""
    G = omp_batch(D, Y, S)
    return float(np.mean(np.sum((Y - D @ G) ** 2, axis=0)))


def save_dictionary(model: DictionaryModel, path) -> None:
    path = Path(path)
    ndf_write(model.D, path)
    sidecar_path(path).write_text(f"S={model.S}\n")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".txt")


def load_dictionary(path, patch_shape) -> DictionaryModel:
    D = ndf_read(path)
    text = sidecar_path(path).read_text().strip()
    if not text.startswith("S="):
        raise ValueError(f"{sidecar_path(path)}: expected 'S=<count>', got {text!r}")
    return DictionaryModel(D, int(text[2:]), patch_shape)
