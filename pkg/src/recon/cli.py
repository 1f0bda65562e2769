"""Command line entry point: ``recon <subcommand> --config <path> [--set key=value]``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import pipeline as pl
from .config import Config, ConfigError
from .core import NdfError, ShapeMismatchError, ndf_read, ndf_write, rng_for
from .metrics import evaluate
from .pgm import window, write_pgm
from .priors import TrainingError, save_cnw, save_dictionary, write_train_log
from .solvers import SolverError, convergence_experiment

log = logging.getLogger("recon")

USAGE, NUMERIC = 1, 2


def _read(path):
    try:
        return ndf_read(path)
    except FileNotFoundError:
        raise ConfigError(f"missing input file {path}") from None


def _out(cfg: Config, name: str):
    d = cfg.path("out_dir", "")
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def cmd_phantom(cfg):
    path = cfg.path("phantom_path", "phantom.ndf")
    _out(cfg, "")
    x = pl.make_phantoms(cfg)
    ndf_write(x, path)
    print(f"phantom {x.shape} -> {path}")


def cmd_simulate(cfg):
    x = _read(cfg.path("phantom_path", "phantom.ndf"))
    _out(cfg, "")
    y, x_ini = pl.simulate(cfg, x)
    ndf_write(y, cfg.path("data_path", "data.ndf"))
    ndf_write(x_ini, cfg.path("initial_path", "x_ini.ndf"))
    print(f"data {y.shape} -> {cfg.path('data_path', 'data.ndf')}")


def cmd_train(cfg):
    targets = _read(cfg.path("train_targets", "phantom.ndf"))
    _out(cfg, "")
    log_path = cfg.path("train_log", "train_log.csv")
    if cfg["prior_kind"] == "dictionary":
        dico, hist = pl.train_dictionary(cfg, targets)
        path = cfg.path("dictionary_path", "dict.ndf")
        save_dictionary(dico, path)
        write_train_log(hist, log_path)
    elif cfg["prior_kind"] == "convnet":
        inputs = _read(cfg.path("train_inputs", "x_ini.ndf"))
        res = pl.train_convnet(cfg, inputs, targets)
        path = cfg.path("weights_path", "net.cnw")
        save_cnw(res.net, path)
        hist = res.history
        write_train_log(hist, log_path)
    else:
        raise ConfigError(f"prior_kind {cfg['prior_kind']!r} has nothing to train")
    print(f"loss {hist[0]:.6g} -> {hist[-1]:.6g}; model -> {path}")


def cmd_prior(cfg):
    x_ini = _read(cfg.path("prior_input", "x_ini.ndf"))
    out = cfg.path("prior_output", "x_prior.ndf")
    ndf_write(pl.apply_prior(cfg, x_ini, pl.load_prior(cfg)), out)
    print(f"prior -> {out}")


def cmd_reconstruct(cfg):
    y = _read(cfg.path("data_path", "data.ndf"))
    setup = pl.setup_for(cfg)
    report_path = cfg.path("report_path", "solve_report.csv")
    if cfg["method"] == "tv":
        x, rep = setup.tv(y)
        ndf_write(x, _out(cfg, "x_tv.ndf"))
    else:
        r = pl.reconstruct(cfg, y, pl.load_prior(cfg), setup)
        for name in ("x_ini", "x_prior", "x_rec"):
            ndf_write(getattr(r, name), _out(cfg, name + ".ndf"))
        rep = r.report
    rep.write_csv(report_path)
    print(f"{rep.iterations} iterations, objective {rep.history[0]:.6g} -> {rep.history[-1]:.6g}")


def cmd_evaluate(cfg):
    x = _read(cfg.path("eval_input", "x_rec.ndf"))
    ref = _read(cfg.path("eval_reference", "phantom.ndf"))
    if x.shape != ref.shape:
        raise ShapeMismatchError(f"input {x.shape} and reference {ref.shape} differ")
    peak = cfg["psnr_peak"]
    if peak is None and cfg["mode"] == "mri":
        peak = 1.0
    rep = evaluate(x, ref, peak, cfg["ssim_range"])
    out = cfg.path("metrics_path", "metrics.csv")
    rep.write_csv(out)
    m = rep.mean()
    print("  ".join(f"{k}={m[k]:.4f}" for k in rep.COLUMNS))


def cmd_render(cfg):
    x = _read(cfg.path("render_input", "x_rec.ndf"))
    x = np.abs(x) if np.iscomplexobj(x) else x
    k = cfg["render_slice"]
    if x.ndim == 3:
        if not 0 <= k < x.shape[-1]:
            raise ConfigError(f"render_slice {k} out of range 0..{x.shape[-1] - 1}")
        x = x[:, :, k]
    elif x.ndim != 2 or k != 0:
        raise ConfigError(f"render_slice {k} invalid for an image of shape {x.shape}")
    lo, hi = float(x.min()), float(x.max())
    c = cfg["window_center"] if cfg["window_center"] is not None else (lo + hi) / 2.0
    w = cfg["window_width"] if cfg["window_width"] is not None else max(hi - lo, 1e-12)
    out = cfg.path("render_path", "render.pgm")
    write_pgm(window(x, c, w), out)
    print(f"render -> {out}")


def cmd_convergence(cfg):
    rng = rng_for(cfg["seed"], "convergence")
    m, n = cfg["conv_rows"], cfg["conv_cols"]
    A = rng.standard_normal((m, n))
    x_true, x_prior = rng.standard_normal(n), rng.standard_normal(n)
    table = convergence_experiment(A, x_true, x_prior, cfg["conv_deltas"], seed=cfg["seed"])
    _out(cfg, "")
    table.write_csv(cfg.path("conv_path", "convergence.csv"))
    for d, e in zip(table.deltas, table.errors):
        print(f"delta={d:.1e}  error={e:.3e}")
    print(f"shifted-variable gap {table.shifted_gap:.2e}")


COMMANDS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "prior": cmd_prior,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
    "convergence": cmd_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recon", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE if e.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = Config.load(args.config, args.set)
        COMMANDS[args.command](cfg)
    except (SolverError, TrainingError, ArithmeticError) as e:
        print(f"recon {args.command}: numerical failure: {e}", file=sys.stderr)
        return NUMERIC
    except pl.StageError as e:
        numeric = isinstance(e.cause, (SolverError, TrainingError, ArithmeticError))
        print(f"recon {args.command}: {e}", file=sys.stderr)
        return NUMERIC if numeric else USAGE
    except (ConfigError, NdfError, ShapeMismatchError, ValueError, OSError) as e:
        print(f"recon {args.command}: {e}", file=sys.stderr)
        return USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
