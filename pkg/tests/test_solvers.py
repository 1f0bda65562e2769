import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from recon.operators import (
    IdentityOperator,
    LowDoseModel,
    MatrixOperator,
    ParallelBeamGeometry,
    RayTransform,
    fbp,
    lowdose_forward,
    lowdose_simulate,
)
from recon.phantoms import shepp_logan
from recon.solvers import (
    SolveReport,
    SolverError,
    conjugate_gradient,
    convergence_experiment,
    grad_adjoint,
    grad_forward,
    landweber_kl,
    pcg_normal_solve,
    prior_minimizing_solution,
    shifted_tikhonov,
    soft_threshold,
    tikhonov_dense_oracle,
    tikhonov_kl_objective,
    tv_norm,
    tv_reconstruct,
)


def normal_eq_solution(A, y, lam, xp):
    """Straight normal-equation solve, used only on well-conditioned systems."""
    AH = A.conj().T
    return np.linalg.solve(AH @ A + lam * np.eye(A.shape[1]), AH @ y + lam * xp)


# ---------------------------------------------------------------- PCG and dense oracle


def test_pcg_identity_closed_form():
    x, rep = pcg_normal_solve(MatrixOperator(np.eye(2)), np.array([1.1, 2.2]), 0.1, np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, np.array([1.2, 2.4]) / 1.1, rtol=1e-15)
    assert rep.converged and len(rep.history) == rep.iterations + 1


def test_pcg_prior_dominated(rng):
    A = rng.standard_normal((20, 12))
    xp = rng.standard_normal(12)
    x, _ = pcg_normal_solve(MatrixOperator(A), rng.standard_normal(20), 1e8, xp, n_iter=30)
    assert np.linalg.norm(x - xp) <= 1e-6 * np.linalg.norm(xp)


def test_pcg_matches_dense_oracle(rng):
    for _ in range(20):
        A = rng.standard_normal((20, 12))
        y = rng.standard_normal(20)
        xp = rng.standard_normal(12)
        x, rep = pcg_normal_solve(MatrixOperator(A), y, 0.1, xp, n_iter=60, tol=1e-14)
        ref = tikhonov_dense_oracle(A, y, 0.1, xp)
        assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)
        np.testing.assert_allclose(ref, normal_eq_solution(A, y, 0.1, xp), rtol=1e-9)


def test_pcg_complex_system(rng):
    A = rng.standard_normal((20, 12)) + 1j * rng.standard_normal((20, 12))
    y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    xp = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    x, _ = pcg_normal_solve(MatrixOperator(A), y, 0.1, xp, n_iter=60, tol=1e-14)
    ref = tikhonov_dense_oracle(A, y, 0.1, xp)
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_pcg_diagonal_preconditioner(rng):
    A = rng.standard_normal((30, 10)) * np.logspace(0, 2, 10)
    y = rng.standard_normal(30)
    xp = np.zeros(10)
    d = 1.0 / (np.sum(A**2, axis=0) + 0.1)
    x, rep = pcg_normal_solve(MatrixOperator(A), y, 0.1, xp, n_iter=60, tol=1e-13, precond=d)
    np.testing.assert_allclose(x, tikhonov_dense_oracle(A, y, 0.1, xp), rtol=1e-8)
    assert rep.converged


def test_pcg_objective_nonincreasing(rng):
    A = rng.standard_normal((20, 12))
    _, rep = pcg_normal_solve(MatrixOperator(A), rng.standard_normal(20), 0.1, rng.standard_normal(12), n_iter=12)
    h = np.array(rep.history)
    assert np.all(np.diff(h) <= 1e-12 * abs(h[0]))


def test_cg_rejects_indefinite():
    with pytest.raises(SolverError):
        conjugate_gradient(lambda v: -v, np.ones(3), np.zeros(3), 5)


def test_pcg_rejects_negative_lambda():
    with pytest.raises(ValueError):
        pcg_normal_solve(MatrixOperator(np.eye(2)), np.ones(2), -1.0, np.ones(2))


def test_oracle_identity_and_small_lambda(rng):
    y = rng.standard_normal(5)
    xp = rng.standard_normal(5)
    np.testing.assert_allclose(tikhonov_dense_oracle(np.eye(5), y, 0.3, xp), (y + 0.3 * xp) / 1.3, rtol=1e-14)
    A = rng.standard_normal((20, 12))
    x_true = rng.standard_normal(12)
    x = tikhonov_dense_oracle(A, A @ x_true, 1e-10, xp[:1].repeat(12))
    assert np.linalg.norm(x - np.linalg.pinv(A) @ (A @ x_true)) <= 1e-6


def test_oracle_singular_at_zero_lambda(rng):
    with pytest.raises(np.linalg.LinAlgError):
        tikhonov_dense_oracle(rng.standard_normal((8, 12)), np.ones(8), 0.0, np.zeros(12))


# ---------------------------------------------------------------- KL Landweber


@pytest.fixture(scope="module")
def ct16():
    geom = ParallelBeamGeometry(16, 30)
    return LowDoseModel(10_000.0, 0.02, geom)


def test_landweber_stationary_at_consistency(ct16):
    x = shepp_logan(16)
    y = lowdose_forward(x, ct16)
    out, rep = landweber_kl(ct16, y, 1.0, x, n_iter=4, x0=x)
    assert np.abs(out - x).max() <= 1e-12
    assert rep.iterations == 4 and len(rep.history) == 5


def test_landweber_zero_steps(ct16, rng):
    x0 = rng.random((16, 16))
    out, rep = landweber_kl(ct16, lowdose_forward(x0, ct16), 1.0, x0 * 0, n_iter=0, x0=x0)
    np.testing.assert_array_equal(out, x0)
    assert rep.iterations == 0 and len(rep.history) == 1


def test_landweber_pulls_to_prior(ct16, rng):
    xp = shepp_logan(16)
    y = lowdose_forward(xp, ct16)
    x0 = xp + 0.2 * rng.standard_normal((16, 16))
    dists = []
    x = x0
    for _ in range(8):
        x, _ = landweber_kl(ct16, y, 1e3, xp, n_iter=1, x0=x)
        dists.append(np.linalg.norm(x - xp))
    assert np.linalg.norm(x0 - xp) > dists[0]
    assert all(b < a for a, b in zip(dists, dists[1:]))


def test_landweber_objective_decreases_on_noisy_phantom():
    geom = ParallelBeamGeometry(64, 90)
    model = LowDoseModel(10_000.0, 0.02, geom)
    x = shepp_logan(64)
    y = lowdose_simulate(x, model, 0)
    x_fbp = fbp(model.log_data(y), geom)
    for w in (1.0, geom.cell_volume):
        _, rep = landweber_kl(model, y, 1.0, x, n_iter=4, data_weight=w)
        h = np.array(rep.history)
        assert np.all(np.diff(h) < 0), h
        assert h[0] == pytest.approx(tikhonov_kl_objective(x_fbp, y, model, 1.0, x, w))


def test_landweber_input_checks(ct16):
    y = np.ones(ct16.geom.sino_shape)
    with pytest.raises(ValueError):
        landweber_kl(ct16, -y, 1.0, np.zeros((16, 16)))
    with pytest.raises(ValueError):
        landweber_kl(ct16, y, 1.0, np.zeros((16, 16)), tau=-1.0)


# ---------------------------------------------------------------- shrinkage and TV


@pytest.mark.parametrize("v,t,out", [(3.0, 1.0, 2.0), (-0.5, 1.0, 0.0), (-2.5, 1.0, -1.5)])
def test_soft_threshold_examples(v, t, out):
    assert soft_threshold(v, t) == out


vec = arrays(np.float64, 12, elements=st.floats(-100, 100))


@given(vec, vec, st.floats(0, 10))
def test_soft_threshold_is_proximal(a, b, t):
    sa, sb = soft_threshold(a, t), soft_threshold(b, t)
    assert np.all(np.abs(sa - sb) <= np.abs(a - b) + 1e-12)
    np.testing.assert_array_equal(soft_threshold(-a, t), -sa)
    assert np.all(np.abs(sa) <= np.abs(a))


@given(arrays(np.float64, (2, 5), elements=st.floats(-10, 10)), st.floats(0, 5))
def test_isotropic_shrinkage(g, t):
    out = soft_threshold(g, t, axis=0)
    mag = np.hypot(g[0], g[1])
    new = np.hypot(out[0], out[1])
    np.testing.assert_allclose(new, np.maximum(mag - t, 0), atol=1e-9)
    # direction is preserved where the vector survives
    keep = new > 1e-9
    np.testing.assert_allclose(out[:, keep] * mag[keep], g[:, keep] * new[keep], atol=1e-8)


def test_soft_threshold_negative_t():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -1.0)


def test_gradient_adjoint_pair(rng):
    for shape in [(7,), (5, 6), (3, 4, 5)]:
        x = rng.standard_normal(shape)
        g = rng.standard_normal((len(shape),) + shape)
        lhs = np.sum(grad_forward(x) * g)
        rhs = np.sum(x * grad_adjoint(g))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_gradient_of_constant_and_tv_norm():
    assert not grad_forward(np.full((4, 5), 2.0)).any()
    x = np.zeros((4, 4))
    x[:, 2:] = 1.0
    assert tv_norm(x) == 4.0


def test_tv_zero_fixed_point():
    op = IdentityOperator((8, 8))
    x, rep = tv_reconstruct(op, np.zeros((8, 8)), 0.1, x0=np.zeros((8, 8)))
    assert not x.any()


def test_tv_constant_phantom_recovered():
    geom = ParallelBeamGeometry(16, 20)
    R = RayTransform(geom)
    c = np.full((16, 16), 0.7)
    x, _ = tv_reconstruct(R, R.forward(c), 0.05, "l2", n_outer=3, n_inner=300, rho=1.0, x0=np.zeros((16, 16)))
    assert np.abs(x - c).max() <= 1e-8


def _blocky(N):
    x = np.zeros((N, N))
    x[N // 4 : 3 * N // 4, N // 4 : 3 * N // 4] = 1.0
    x[N // 3 : N // 2, N // 3 : 2 * N // 3] = 0.5
    return x


def test_tv_l2_descent(rng):
    op = IdentityOperator((32, 32))
    x = _blocky(32)
    y = x + 0.1 * rng.standard_normal(x.shape)
    out, rep = tv_reconstruct(op, y, 0.2, "l2", n_outer=10, n_inner=8, rho=2.0, x0=y)
    h = np.array(rep.history)
    assert h[-1] <= h[0] and np.all(np.diff(h) <= 1e-12 * h[0])
    assert np.linalg.norm(out - x) < np.linalg.norm(y - x)


def test_tv_kl_descent():
    geom = ParallelBeamGeometry(32, 60)
    model = LowDoseModel(10_000.0, 0.02, geom)
    x = _blocky(32)
    y = lowdose_simulate(x, model, 3)
    out, rep = tv_reconstruct(None, y, 0.2, "kl", model, n_outer=8, n_inner=4, rho=10.0, data_weight=geom.cell_volume)
    h = np.array(rep.history)
    assert np.all(np.diff(h) <= 0)
    assert rep.iterations == 8 and len(h) == 9


def test_tv_argument_checks():
    op = IdentityOperator((4, 4))
    with pytest.raises(ValueError):
        tv_reconstruct(op, np.zeros((4, 4)), 0.0)
    with pytest.raises(ValueError):
        tv_reconstruct(op, np.zeros((4, 4)), 1.0, "kl")
    with pytest.raises(ValueError):
        tv_reconstruct(op, np.zeros((4, 4)), 1.0, "l1")


# ---------------------------------------------------------------- convergence sweep


def test_convergence_experiment_underdetermined():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((8, 12))
    x_true = rng.standard_normal(12)
    xp = rng.standard_normal(12)
    tab = convergence_experiment(A, x_true, xp, [10.0**-k for k in range(1, 7)])
    e = np.array(tab.errors)
    assert np.all(np.diff(e) < 0)
    assert e[0] / e[-1] >= 10
    assert tab.shifted_gap <= 1e-12
    assert tab.lambdas == tab.deltas


def test_noiseless_error_vanishes_with_lambda(rng):
    A = rng.standard_normal((8, 12))
    x_true = rng.standard_normal(12)
    xp = rng.standard_normal(12)
    x0 = prior_minimizing_solution(A, A @ x_true, xp)
    errs = [np.linalg.norm(tikhonov_dense_oracle(A, A @ x_true, lam, xp) - x0) for lam in (1e-2, 1e-4, 1e-6)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-5


def test_prior_minimizing_solution_properties(rng):
    A = rng.standard_normal((8, 12))
    y0 = rng.standard_normal(8)
    xp = rng.standard_normal(12)
    x0 = prior_minimizing_solution(A, y0, xp)
    np.testing.assert_allclose(A @ x0, y0, atol=1e-12)
    # x0 - xp is orthogonal to the null space of A
    null = np.linalg.svd(A)[2][8:]
    assert np.abs(null @ (x0 - xp)).max() <= 1e-12


def test_shifted_form_matches(rng):
    A = rng.standard_normal((8, 12))
    y = rng.standard_normal(8)
    xp = rng.standard_normal(12)
    for lam in (1e-1, 1e-3, 1e-6):
        assert np.abs(shifted_tikhonov(A, y, lam, xp) - tikhonov_dense_oracle(A, y, lam, xp)).max() <= 1e-12


def test_report_csv(tmp_path):
    rep = SolveReport(history=[3.0, 2.0, 1.0], residuals=[0.5, 0.25, 0.125], iterations=2)
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "iteration,objective,residual"
    assert lines[1:] == ["0,3.0,0.5", "1,2.0,0.25", "2,1.0,0.125"]
