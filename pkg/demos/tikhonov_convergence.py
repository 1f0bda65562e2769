"""Convergence of prior-anchored Tikhonov regularisation on a toy system.

    python3 demos/tikhonov_convergence.py

For an underdetermined system A x = y the regularised solutions with
lambda = delta converge, as the noise level delta goes to zero, to the
solution of A x = y that is closest to the prior, not to the true x.  The
demo prints the error against that limit and against the truth.
"""
import numpy as np

from recon.solvers import convergence_experiment, prior_minimizing_solution, tikhonov_dense_oracle

rng = np.random.default_rng(0)
A = rng.standard_normal((8, 12))
x_true = rng.standard_normal(12)
x_prior = x_true + 0.3 * rng.standard_normal(12)  # a decent but imperfect prior
deltas = [10.0**-k for k in range(1, 8)]

table = convergence_experiment(A, x_true, x_prior, deltas)
x_limit = prior_minimizing_solution(A, A @ x_true, x_prior)
noise = rng.standard_normal(8)
noise /= np.linalg.norm(noise)

print(f"{'delta':>8s} {'|x - limit|':>12s} {'|x - truth|':>12s}")
for d, err in zip(table.deltas, table.errors):
    x = tikhonov_dense_oracle(A, A @ x_true + d * noise, d, x_prior)
    print(f"{d:8.0e} {err:12.3e} {np.linalg.norm(x - x_true):12.3e}")
print(f"distance of the limit from the truth: {np.linalg.norm(x_limit - x_true):.3e}")
print(f"distance of the prior from the truth: {np.linalg.norm(x_prior - x_true):.3e}")
print(f"direct vs shifted-variable solutions agree to {table.shifted_gap:.1e}")
