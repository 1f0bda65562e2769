"""Command line behaviour: exit codes, files, determinism."""
import csv
import subprocess
import sys

import numpy as np
import pytest

from recon.cli import main
from recon.core import ndf_read, ndf_write
from recon.pgm import read_pgm, window, write_pgm

SMALL_CT = """\
mode = ct
N = 32
n_angles = 48
seed = 3
prior_kind = gaussian
"""


@pytest.fixture
def ct_cfg(tmp_path):
    p = tmp_path / "ct.cfg"
    p.write_text(SMALL_CT + f"out_dir = {tmp_path / 'out'}\n")
    return p


def run(cfg, *args):
    argv = [args[0], "--config", str(cfg)]
    for a in args[1:]:
        argv += ["--set", a]
    return main(argv)


def test_ct_chain(ct_cfg, tmp_path):
    out = tmp_path / "out"
    assert run(ct_cfg, "phantom") == 0
    assert run(ct_cfg, "simulate") == 0
    assert run(ct_cfg, "reconstruct") == 0
    for name in ("phantom", "data", "x_ini", "x_prior", "x_rec"):
        assert (out / f"{name}.ndf").exists()
    assert ndf_read(out / "data.ndf").shape == (48, 46)  # ceil(sqrt(2) N) bins
    rows = list(csv.reader((out / "solve_report.csv").open()))
    assert rows[0] == ["iteration", "objective", "residual"]
    objs = [float(r[1]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(objs, objs[1:]))
    assert run(ct_cfg, "evaluate") == 0
    rows = list(csv.reader((out / "metrics.csv").open()))
    assert rows[0] == ["slice", "psnr", "nrmse", "ssim", "hpsi"] and len(rows) == 3
    assert run(ct_cfg, "render") == 0
    assert read_pgm(out / "render.pgm").shape == (32, 32)
    assert run(ct_cfg, "reconstruct", "method=tv", "tv_outer=2") == 0
    assert (out / "x_tv.ndf").exists()


def test_simulate_zero_phantom_counts(ct_cfg, tmp_path):
    ndf_write(np.zeros((32, 32)), tmp_path / "zero.ndf")
    assert run(ct_cfg, "simulate", f"phantom_path={tmp_path / 'zero.ndf'}") == 0
    y = ndf_read(tmp_path / "out" / "data.ndf")
    assert abs(y.mean() - 10000) < 5 * 100 / np.sqrt(y.size)


def test_identity_prior_with_huge_lambda_keeps_initial(ct_cfg, tmp_path):
    assert run(ct_cfg, "phantom") == 0
    assert run(ct_cfg, "simulate") == 0
    assert run(ct_cfg, "reconstruct", "prior_kind=identity", "lambda=1e8") == 0
    out = tmp_path / "out"
    x_ini, x_rec = ndf_read(out / "x_ini.ndf"), ndf_read(out / "x_rec.ndf")
    np.testing.assert_allclose(x_rec, x_ini, atol=1e-6 * np.abs(x_ini).max())


def test_evaluate_identical(ct_cfg, tmp_path):
    assert run(ct_cfg, "phantom") == 0
    out = tmp_path / "out"
    assert run(ct_cfg, "evaluate", f"eval_input={out / 'phantom.ndf'}") == 0
    row = next(r for r in csv.reader((out / "metrics.csv").open()) if r[0] == "0")
    assert float(row[2]) == 0.0 and float(row[3]) == pytest.approx(1.0) and float(row[4]) == pytest.approx(1.0)


def test_usage_errors(ct_cfg, tmp_path):
    assert main(["frobnicate", "--config", str(ct_cfg)]) == 1
    assert main(["phantom"]) == 1
    assert main(["phantom", "--config", str(tmp_path / "none.cfg")]) == 1
    assert run(ct_cfg, "phantom", "bogus=1") == 1
    assert run(ct_cfg, "simulate", f"phantom_path={tmp_path / 'missing.ndf'}") == 1
    (tmp_path / "bad.ndf").write_bytes(b"garbage")
    assert run(ct_cfg, "evaluate", f"eval_input={tmp_path / 'bad.ndf'}") == 1
    assert run(ct_cfg, "phantom") == 0
    ndf_write(np.zeros((16, 16)), tmp_path / "small.ndf")
    assert run(ct_cfg, "evaluate", f"eval_input={tmp_path / 'small.ndf'}") == 1
    assert run(ct_cfg, "render", "render_slice=2") == 1
    assert run(ct_cfg, "train", "prior_kind=identity") == 1


def test_numerical_failure_exit_code(ct_cfg, tmp_path):
    assert run(ct_cfg, "phantom") == 0
    assert run(ct_cfg, "simulate") == 0
    out = tmp_path / "out"
    y = ndf_read(out / "data.ndf")
    y[3, 7] = np.nan
    ndf_write(y, out / "nan.ndf")
    assert run(ct_cfg, "reconstruct", f"data_path={out / 'nan.ndf'}") == 2
    # an oversized step is rejected by the safeguard rather than diverging
    assert run(ct_cfg, "reconstruct", "tau=1e300") == 0


def test_convergence_subcommand(ct_cfg, tmp_path):
    assert run(ct_cfg, "convergence") == 0
    rows = list(csv.reader((tmp_path / "out" / "convergence.csv").open()))
    errs = [float(r[2]) for r in rows[1:]]
    assert len(errs) == 6 and all(b < a for a, b in zip(errs, errs[1:]))


def test_train_and_prior_subcommands(ct_cfg, tmp_path):
    common = ["phantom_kind=random", "n_phantoms=2", "prior_kind=convnet", "epochs=2", "patch_budget=200"]
    assert run(ct_cfg, "phantom", *common) == 0
    assert run(ct_cfg, "simulate", *common) == 0
    out = tmp_path / "out"
    assert run(ct_cfg, "train", *common) == 0
    losses = [float(r[1]) for r in list(csv.reader((out / "train_log.csv").open()))[1:]]
    assert losses[-1] < losses[0]
    x1 = ndf_read(out / "x_ini.ndf")[0]
    ndf_write(x1, out / "one.ndf")
    assert run(ct_cfg, "prior", "prior_kind=convnet", f"prior_input={out / 'one.ndf'}") == 0
    assert ndf_read(out / "x_prior.ndf").shape == (32, 32)


def test_dictionary_training_subcommand(ct_cfg, tmp_path):
    common = ["phantom_kind=random", "n_phantoms=1", "prior_kind=dictionary", "dict_atoms=32",
              "dict_sparsity=4", "dict_iters=3", "dict_patches=500"]
    assert run(ct_cfg, "phantom", *common) == 0
    assert run(ct_cfg, "train", *common) == 0
    D = ndf_read(tmp_path / "out" / "dict.ndf")
    np.testing.assert_allclose(np.linalg.norm(D, axis=0), 1.0, atol=1e-12)


def test_determinism(ct_cfg, tmp_path):
    names = ("phantom.ndf", "data.ndf", "x_ini.ndf", "x_prior.ndf", "x_rec.ndf", "solve_report.csv")
    blobs = []
    for _ in range(2):
        for cmd in ("phantom", "simulate", "reconstruct"):
            assert run(ct_cfg, cmd) == 0
        blobs.append([(tmp_path / "out" / n).read_bytes() for n in names])
    assert blobs[0] == blobs[1]
    assert run(ct_cfg, "simulate", "seed=4") == 0
    assert (tmp_path / "out" / "data.ndf").read_bytes() != blobs[0][1]


def test_module_entry_point(ct_cfg):
    r = subprocess.run([sys.executable, "-m", "recon.cli", "phantom", "--config", str(ct_cfg)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr


# ---------------------------------------------------------------- PGM


def test_window_examples():
    px = window(np.array([0.0, -425.0, -1000.0, 425.0, 900.0]), 0.0, 850.0)
    assert px.tolist() == [128, 0, 0, 255, 255]


def test_pgm_roundtrip_and_header(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_pgm(img, tmp_path / "a.pgm")
    data = (tmp_path / "a.pgm").read_bytes()
    assert data.startswith(b"P5\n4 3\n255\n") and len(data) == 11 + 12
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)


def test_constant_image_renders_constant(tmp_path):
    write_pgm(window(np.full((5, 5), 3.0), 0.0, 10.0), tmp_path / "c.pgm")
    px = read_pgm(tmp_path / "c.pgm")
    assert np.all(px == px[0, 0])
    with pytest.raises(ValueError):
        window(np.zeros(3), 0.0, 0.0)
