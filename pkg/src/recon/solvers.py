"""Data-consistency solvers: Tikhonov normal equations, KL Landweber, TV splitting.

Every iterative solver returns ``(x, SolveReport)``.  The report's history
starts with the objective at the initial point, so its length is the number
of iterations used plus one.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import inner_product, norm
from .operators.base import ImagingOperator
from .operators.ct import LowDoseModel, fbp, kl_divergence, lowdose_forward

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised on NaN or divergence; carries the partial report."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass
class SolveReport:
    history: list[float] = field(default_factory=list)
    residual: float = float("nan")
    iterations: int = 0
    converged: bool = False
    residuals: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "objective", "residual"])
            res = self.residuals + [float("nan")] * (len(self.history) - len(self.residuals))
            for i, (obj, r) in enumerate(zip(self.history, res)):
                w.writerow([i, repr(float(obj)), repr(float(r))])


def _finite(x, report, what):
    if not np.all(np.isfinite(x)):
        raise SolverError(f"{what}: non-finite values after {report.iterations} iterations", report)


# ---------------------------------------------------------------- CG


def conjugate_gradient(
    apply_H: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: np.ndarray,
    n_iter: int,
    tol: float = 0.0,
    precond: np.ndarray | None = None,
    objective: Callable[[np.ndarray], float] | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned CG for a Hermitian positive definite ``H``.

    ``precond`` is an optional diagonal (elementwise) approximation of
    ``H^{-1}``.  Stops after ``n_iter`` steps or when ``||r|| <= tol ||b||``.
    """
    x = np.array(x0, dtype=np.result_type(b, x0, np.float64), copy=True)
    rep = SolveReport()
    r = b - apply_H(x)
    bnorm = norm(b) or 1.0
    obj = objective or (lambda v: 0.5 * float(np.real(inner_product(v, apply_H(v)))) - float(np.real(inner_product(b, v))))
    rep.history.append(obj(x))
    rep.residuals.append(norm(r) / bnorm)
    z = r * precond if precond is not None else r
    p = z.copy()
    rz = inner_product(r, z)
    for k in range(n_iter):
        if rep.residuals[-1] <= tol:
            rep.converged = True
            break
        Hp = apply_H(p)
        pHp = np.real(inner_product(p, Hp))
        if pHp <= 0:
            raise SolverError("system is not positive definite along the search direction", rep)
        alpha = rz / pHp
        x = x + alpha * p
        r = r - alpha * Hp
        rep.iterations = k + 1
        _finite(x, rep, "conjugate_gradient")
        rep.history.append(obj(x))
        rep.residuals.append(norm(r) / bnorm)
        z = r * precond if precond is not None else r
        rz_new = inner_product(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    else:
        rep.converged = rep.residuals[-1] <= tol
    rep.residual = rep.residuals[-1]
    return x, rep


def pcg_normal_solve(
    E: ImagingOperator,
    y,
    lam: float,
    x_prior,
    n_iter: int = 16,
    tol: float = 1e-10,
    x0=None,
    precond=None,
) -> tuple[np.ndarray, SolveReport]:
    """Minimise ``||E x - y||^2 + lam ||x - x_prior||^2`` by CG on the normal equations.

    Solves ``(E^H E + lam I) x = E^H y + lam x_prior``.  The report tracks the
    Tikhonov objective and the relative residual of the linear system.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if n_iter < 0:
        raise ValueError("n_iter must be nonnegative")
    y = np.asarray(y)
    x_prior = np.asarray(x_prior)
    b = E.adjoint(y) + lam * x_prior
    start = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=b.dtype)

    def H(v):
        return E.adjoint(E.forward(v)) + lam * v

    def objective(v):
        return norm(E.forward(v) - y) ** 2 + lam * norm(v - x_prior) ** 2

    return conjugate_gradient(H, b, start, n_iter, tol, precond, objective)


def tikhonov_dense_oracle(A, y, lam: float, x_prior) -> np.ndarray:
    """Dense minimiser of ``||A x - y||^2 + lam ||x - x_prior||^2``.

    Solves the stacked least-squares system ``[A; sqrt(lam) I] x = [y; sqrt(lam) x_prior]``,
    which has the same solution as the normal equations
    ``(A^H A + lam I) x = A^H y + lam x_prior`` with the square root of their
    condition number.
    """
    A = np.asarray(A)
    n = A.shape[1]
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    s = np.sqrt(lam)
    M = np.vstack([A, s * np.eye(n)])
    rhs = np.concatenate([np.asarray(y), s * np.asarray(x_prior)])
    x, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
    if rank < n:
        raise np.linalg.LinAlgError("singular normal equations: lambda must be positive")
    return x


# ---------------------------------------------------------------- KL / Landweber


def tikhonov_kl_objective(x, y, model: LowDoseModel, lam: float, x_prior, data_weight: float = 1.0) -> float:
    return data_weight * kl_divergence(lowdose_forward(x, model), y) + lam * float(np.sum((x - x_prior) ** 2))


def _kl_objective_or_inf(x, y, model, lam, x_prior, data_weight) -> float:
    # overflowing or underflowing trial steps count as infinitely bad
    if not np.all(np.isfinite(x)):
        return math.inf
    with np.errstate(over="ignore", under="ignore"):
        u = lowdose_forward(x, model)
    if not np.all((u > 0) & np.isfinite(u)):
        return math.inf
    return data_weight * kl_divergence(u, y) + lam * float(np.sum((x - x_prior) ** 2))


def landweber_step_size(
    model: LowDoseModel, x0, lam: float, n_power: int = 20, seed: int = 0, data_weight: float = 1.0
) -> float:
    """``1 / L`` with L the top eigenvalue of the preconditioned linearisation at ``x0``.

    Power iteration on ``v -> w mu^2 fbp(T(x0) * R v) + 2 lam v``.
    """
    T0 = lowdose_forward(x0, model)
    R = model.ray
    v = np.random.default_rng(seed).standard_normal(model.geom.image_shape)
    v /= np.linalg.norm(v)
    L = 1.0
    for _ in range(n_power):
        w = data_weight * model.mu**2 * fbp(T0 * R.forward(v), model.geom) + 2.0 * lam * v
        L = float(np.linalg.norm(w))
        if L == 0:
            break
        v = w / L
    return 1.0 / L


def landweber_kl(
    model: LowDoseModel,
    y,
    lam: float,
    x_prior,
    n_iter: int = 4,
    tau: float | None = None,
    x0=None,
    data_weight: float = 1.0,
    safeguard: bool = True,
    max_halvings: int = 30,
) -> tuple[np.ndarray, SolveReport]:
    """FBP-preconditioned Landweber iteration on ``w KL(T x, y) + lam ||x - x_prior||^2``.

    Update: ``x <- x - t * (-w mu fbp(T x - y) + 2 lam (x - x_prior))``.
    Runs ``n_iter`` steps; stopping early is the regularisation.  With
    ``safeguard`` the step ``t`` starts at ``tau`` and is halved until the
    objective does not increase; if no step up to ``max_halvings`` halvings
    achieves that, the iteration ends there.
    ``x0`` defaults to the FBP of the log-transformed data.  ``w`` (the
    ``data_weight``) converts the sum over sinogram cells into an integral;
    pass ``geom.cell_volume`` for that convention.
    """
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0):
        raise ValueError("counts must be nonnegative")
    if lam < 0 or n_iter < 0:
        raise ValueError("lambda and n_iter must be nonnegative")
    x_prior = np.asarray(x_prior, dtype=np.float64)
    x = fbp(model.log_data(y), model.geom) if x0 is None else np.array(x0, dtype=np.float64)
    if tau is None:
        tau = landweber_step_size(model, x, lam, data_weight=data_weight)
    if tau <= 0:
        raise ValueError("step size must be positive")
    rep = SolveReport()
    _finite(x, rep, "landweber_kl")
    f = _kl_objective_or_inf(x, y, model, lam, x_prior, data_weight)
    if not np.isfinite(f):
        raise SolverError("landweber_kl: objective is not finite at the starting point", rep)
    rep.history.append(f)
    for k in range(n_iter):
        resid = lowdose_forward(x, model) - y
        step = -data_weight * model.mu * fbp(resid, model.geom) + 2.0 * lam * (x - x_prior)
        # the preconditioned direction is not a gradient, so guard the step
        t = tau
        for _ in range(max_halvings + 1):
            cand = x - t * step
            fc = _kl_objective_or_inf(cand, y, model, lam, x_prior, data_weight)
            if not safeguard:
                _finite(cand, rep, "landweber_kl")
                if not np.isfinite(fc):
                    raise SolverError(f"landweber_kl: objective diverged at step {k + 1}", rep)
                break
            if fc <= f:
                break
            t *= 0.5
        else:
            log.debug("landweber_kl: no decrease along the preconditioned direction at step %d", k)
            break
        x, f = cand, fc
        rep.iterations = k + 1
        rep.steps.append(t)
        rep.residuals.append(float(np.linalg.norm(step)))
        rep.history.append(f)
    if n_iter:
        resid = lowdose_forward(x, model) - y
        rep.residuals.append(float(np.linalg.norm(-data_weight * model.mu * fbp(resid, model.geom) + 2.0 * lam * (x - x_prior))))
    rep.residual = rep.residuals[-1] if rep.residuals else float("nan")
    rep.converged = True
    return x, rep


# ---------------------------------------------------------------- TV


def soft_threshold(v, t: float, axis: int | None = None):
    """Proximal map of ``t |.|``.

    With ``axis=None`` it acts elementwise: ``sign(v) max(|v| - t, 0)``
    (complex entries shrink in modulus).  With an ``axis`` the vectors along
    that axis are shrunk in Euclidean norm (isotropic shrinkage).
    """
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v)
    mag = np.abs(v) if axis is None else np.sqrt(np.sum(np.abs(v) ** 2, axis=axis, keepdims=True))
    keep = mag > t
    scale = np.zeros(mag.shape)
    scale[keep] = 1.0 - t / mag[keep]
    out = v * scale
    return out if out.ndim else out[()]


def grad_forward(x: np.ndarray) -> np.ndarray:
    """Forward differences on every axis, zero at the far edge; shape (ndim, *x.shape)."""
    g = np.zeros((x.ndim,) + x.shape, dtype=x.dtype)
    for ax in range(x.ndim):
        d = np.diff(x, axis=ax)
        sl = [slice(None)] * x.ndim
        sl[ax] = slice(0, x.shape[ax] - 1)
        g[(ax,) + tuple(sl)] = d
    return g


def grad_adjoint(g: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`grad_forward` (a negative divergence)."""
    out = np.zeros(g.shape[1:], dtype=g.dtype)
    n = g.ndim - 1
    for ax in range(n):
        ga = g[ax]
        m = ga.shape[ax]
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[ax] = slice(0, m - 1)
        hi[ax] = slice(1, m)
        out[tuple(lo)] -= ga[tuple(lo)]
        out[tuple(hi)] += ga[tuple(lo)]
    return out


def tv_norm(x) -> float:
    g = grad_forward(np.asarray(x))
    return float(np.sum(np.sqrt(np.sum(np.abs(g) ** 2, axis=0))))


def image_ramp(shape) -> np.ndarray:
    """Frequency response of the image-domain ramp preconditioner on a 2x padded grid.

    ``|omega|`` (cycles per pixel) floored at half the lowest nonzero
    frequency, so the filter is symmetric positive definite.  By the
    Fourier-slice relation ``R^T R`` acts as ``1/|omega|``, so this is the FBP
    ramp moved into image space.
    """
    freqs = [np.fft.fftfreq(2 * n) for n in shape]
    grids = np.meshgrid(*freqs, indexing="ij")
    w = np.sqrt(sum(g**2 for g in grids))
    return np.maximum(w, 0.5 / (2 * max(shape)))


def _apply_ramp(v: np.ndarray, H: np.ndarray) -> np.ndarray:
    pad = [(0, n) for n in v.shape]
    V = np.fft.fftn(np.pad(v, pad))
    out = np.real(np.fft.ifftn(V * H))
    return out[tuple(slice(0, n) for n in v.shape)]


def _split_step_size(model, x, rho, H, data_weight, n_power=20, seed=0):
    T0 = lowdose_forward(x, model)
    R = model.ray
    v = np.random.default_rng(seed).standard_normal(x.shape)
    v /= np.linalg.norm(v)
    L = 1.0
    for _ in range(n_power):
        hv = data_weight * model.mu**2 * R.adjoint(T0 * R.forward(v)) + rho * grad_adjoint(grad_forward(v))
        w = _apply_ramp(hv, H)
        L = float(np.linalg.norm(w))
        if L == 0:
            break
        v = w / L
    return 1.0 / L


def _kl_split_descent(model, y, z, rho, x, tau, n_steps, data_weight, H):
    """Preconditioned descent on ``w KL(T x, y) + (rho/2) ||G x - z||^2``.

    Steps along ``-M grad`` with ``M`` the image-domain ramp; Armijo
    backtracking from ``tau`` makes every accepted step lower the objective.
    """

    def J(v):
        u = lowdose_forward(v, model)
        return data_weight * kl_divergence(u, y) + 0.5 * rho * float(np.sum((grad_forward(v) - z) ** 2)), u

    Jx, u = J(x)
    R = model.ray
    for _ in range(n_steps):
        g = -data_weight * model.mu * R.adjoint(u - y) + rho * grad_adjoint(grad_forward(x) - z)
        d = _apply_ramp(g, H)
        slope = float(np.sum(g * d))
        if slope <= 0:
            break
        t = tau
        for _ in range(40):
            cand = x - t * d
            Jc, uc = J(cand)
            if Jc <= Jx - 1e-4 * t * slope:
                x, Jx, u = cand, Jc, uc
                break
            t *= 0.5
        else:
            break
    return x


def tv_reconstruct(
    op,
    y,
    lam: float,
    discrepancy: str = "l2",
    model: LowDoseModel | None = None,
    n_outer: int = 16,
    n_inner: int = 8,
    rho: float = 1.0,
    x0=None,
    tau: float | None = None,
    data_weight: float = 1.0,
) -> tuple[np.ndarray, SolveReport]:
    """Minimise ``D(A x, y) + lam TV(x)`` by half-quadratic splitting.

    Alternates the shrinkage step ``z = shrink(G x, lam / rho)`` with
    ``n_inner`` iterations on ``D(A x, y) + (rho/2) ||G x - z||^2``: CG for the
    quadratic discrepancy ``||A x - y||^2``, ramp-preconditioned Landweber
    with backtracking for the KL discrepancy (``model`` is then required and
    ``op`` may be None).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    rep = SolveReport()
    y = np.asarray(y)
    if discrepancy == "l2":
        if x0 is None:
            x = op.adjoint(y) * 0
        else:
            x = np.array(x0, dtype=np.result_type(x0, op.adjoint(y)))

        def objective(v):
            return norm(op.forward(v) - y) ** 2 + lam * tv_norm(v)

    elif discrepancy == "kl":
        if model is None:
            raise ValueError("KL discrepancy needs the low-dose model")
        x = fbp(model.log_data(y), model.geom) if x0 is None else np.array(x0, dtype=np.float64)
        H = image_ramp(x.shape)
        if tau is None:
            tau = _split_step_size(model, x, rho, H, data_weight)

        def objective(v):
            return data_weight * kl_divergence(lowdose_forward(v, model), y) + lam * tv_norm(v)

    else:
        raise ValueError(f"unknown discrepancy {discrepancy!r}")

    rep.history.append(objective(x))
    for k in range(n_outer):
        z = soft_threshold(grad_forward(x), lam / rho, axis=0)
        if discrepancy == "l2":
            b = op.adjoint(y) + 0.5 * rho * grad_adjoint(z)

            def H(v):
                return op.adjoint(op.forward(v)) + 0.5 * rho * grad_adjoint(grad_forward(v))

            x, _ = conjugate_gradient(H, b, x, n_inner, tol=1e-14, objective=lambda v: 0.0)
        else:
            x = _kl_split_descent(model, y, z, rho, x, tau, n_inner, data_weight, H)
        rep.iterations = k + 1
        _finite(x, rep, "tv_reconstruct")
        rep.history.append(objective(x))
    rep.residual = float(norm(grad_forward(x) - soft_threshold(grad_forward(x), lam / rho, axis=0)))
    rep.converged = True
    return x, rep


# ---------------------------------------------------------------- convergence sweep


@dataclass
class ConvergenceTable:
    deltas: list[float]
    lambdas: list[float]
    errors: list[float]
    shifted_gap: float

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "lambda", "error"])
            for row in zip(self.deltas, self.lambdas, self.errors):
                w.writerow([repr(float(v)) for v in row])


def prior_minimizing_solution(A, y0, x_prior) -> np.ndarray:
    """The solution of ``A x = y0`` closest to ``x_prior``."""
    A = np.asarray(A)
    return x_prior + np.linalg.pinv(A) @ (y0 - A @ x_prior)


def shifted_tikhonov(A, y, lam: float, x_prior) -> np.ndarray:
    """Standard Tikhonov in ``h = x - x_prior`` with data ``y - A x_prior``."""
    A = np.asarray(A)
    h = tikhonov_dense_oracle(A, y - A @ x_prior, lam, np.zeros(A.shape[1]))
    return x_prior + h


def convergence_experiment(A, x_true, x_prior, deltas, rule=lambda d: d, seed: int = 0) -> ConvergenceTable:
    """Tikhonov error ``||x_{delta, lam(delta)} - x_0||`` over a sweep of noise levels.

    A single noise direction, scaled to norm ``delta``, is shared by all
    levels.  ``shifted_gap`` is the largest difference between the direct and
    the shifted-variable solutions.
    """
    A = np.asarray(A, dtype=np.float64)
    x_prior = np.asarray(x_prior, dtype=np.float64)
    y0 = A @ np.asarray(x_true, dtype=np.float64)
    x0 = prior_minimizing_solution(A, y0, x_prior)
    n = np.random.default_rng(seed).standard_normal(A.shape[0])
    n /= np.linalg.norm(n)
    errs, lams, gap = [], [], 0.0
    for d in deltas:
        lam = float(rule(d))
        y = y0 + d * n
        x = tikhonov_dense_oracle(A, y, lam, x_prior)
        xs = shifted_tikhonov(A, y, lam, x_prior)
        gap = max(gap, float(np.max(np.abs(x - xs))))
        errs.append(float(np.linalg.norm(x - x0)))
        lams.append(lam)
    return ConvergenceTable(list(map(float, deltas)), lams, errs, gap)
