"""Reconstruction pipelines for low-dose CT and radial cine MRI.

Each pipeline runs three stages: a direct reconstruction ``x_ini``, a
patch-wise prior ``x_prior = f(x_ini)``, and a Tikhonov solve pulling the
data-consistent solution towards ``x_prior``.  Everything random is drawn
from labelled substreams of the single config seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import Config, ConfigError
from .core import rng_for
from .operators.ct import LowDoseModel, ParallelBeamGeometry, fbp, lowdose_simulate
from .operators.mri import RadialEncoder, frame_trajectories, nufft_recon
from .patchwork import (
    PatchScheme,
    apply_prior_patchwise,
    apply_prior_xtyt,
    extract_all,
    xtyt_training_slices,
)
from .phantoms import (
    cine_spec,
    dynamic_phantom,
    random_cine_spec,
    random_ellipse_phantom,
    shepp_logan,
    synth_coils,
)
from .priors import (
    ConvNet,
    ConvNetPrior,
    ConvNetSpec,
    DictionaryPrior,
    GaussianSmoothPrior,
    IdentityPrior,
    TrainConfig,
    convnet_train,
    itkrm_train,
    load_cnw,
    load_dictionary,
    sparse_approx_error,
)
from .solvers import SolveReport, landweber_kl, pcg_normal_solve, tv_reconstruct

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- acquisition


class CTSetup:
    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.geom = ParallelBeamGeometry(cfg["N"], cfg["n_angles"], cfg["n_bins"])
        self.model = LowDoseModel(cfg["photons"], cfg["mu"], self.geom)
        w = cfg["kl_weight"]
        self.kl_weight = self.geom.cell_volume if w is None else w

    @property
    def image_shape(self):
        return self.geom.image_shape

    def simulate(self, x, rng):
        return lowdose_simulate(x, self.model, rng)

    def initial(self, y):
        return fbp(self.model.log_data(y), self.geom)

    def solve(self, y, x_prior):
        cfg = self.cfg
        return landweber_kl(
            self.model, y, cfg["lambda"], x_prior, cfg["n_iter"], cfg["tau"], x0=x_prior,
            data_weight=self.kl_weight,
        )

    def tv(self, y):
        cfg = self.cfg
        return tv_reconstruct(
            None, y, cfg["tv_lambda"], "kl", self.model, cfg["tv_outer"], cfg["tv_inner"],
            cfg["tv_rho"], data_weight=self.kl_weight,
        )


class MRISetup:
    def __init__(self, cfg: Config):
        self.cfg = cfg
        N, Nt = cfg["N"], cfg["n_frames"]
        self.coils = synth_coils(N, cfg["n_coils"])
        spokes = cfg["spokes_under"] if cfg["sampling"] == "under" else cfg["spokes_full"]
        self.trajs = frame_trajectories(spokes, Nt, cfg["n_samples"])
        self.E = RadialEncoder(self.coils, self.trajs)

    @property
    def image_shape(self):
        return self.E.domain_shape

    def simulate(self, x, rng):
        y = self.E.forward(np.asarray(x, dtype=np.complex128))
        s = self.cfg["noise_std"]
        if s > 0:
            y = y + s * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)) / np.sqrt(2.0)
        return y

    def initial(self, y):
        return nufft_recon(y, self.coils, self.trajs, self.E)

    def solve(self, y, x_prior):
        cfg = self.cfg
        return pcg_normal_solve(self.E, y, cfg["lambda"], x_prior, cfg["n_iter"], cfg["tol"], x0=x_prior)

    def tv(self, y):
        cfg = self.cfg
        return tv_reconstruct(
            self.E, y, cfg["tv_lambda"], "l2", None, cfg["tv_outer"], cfg["tv_inner"], cfg["tv_rho"],
            x0=self.initial(y),
        )


def setup_for(cfg: Config):
    return CTSetup(cfg) if cfg["mode"] == "ct" else MRISetup(cfg)


# ---------------------------------------------------------------- phantoms and data


def make_phantoms(cfg: Config) -> np.ndarray:
    """Ground truth: one image for ``standard``, a stack ``(n, ...)`` for ``random``."""
    N = cfg["N"]
    if cfg["phantom_kind"] == "standard":
        return shepp_logan(N) if cfg["mode"] == "ct" else dynamic_phantom(cine_spec(), N, cfg["n_frames"])
    rng = rng_for(cfg["seed"], "phantom")
    if cfg["mode"] == "ct":
        return np.stack([random_ellipse_phantom(N, rng) for _ in range(cfg["n_phantoms"])])
    return np.stack([dynamic_phantom(random_cine_spec(rng), N, cfg["n_frames"]) for _ in range(cfg["n_phantoms"])])


def _is_stack(setup, x) -> bool:
    nd = len(setup.image_shape)
    if x.ndim == nd + 1 and x.shape[1:] == tuple(setup.image_shape):
        return True
    if x.shape != tuple(setup.image_shape):
        raise ConfigError(f"phantom shape {x.shape} does not match the configured image {setup.image_shape}")
    return False


def simulate(cfg: Config, x, setup=None):
    """Measurements and direct reconstructions for one image or a stack."""
    setup = setup or setup_for(cfg)
    rng = rng_for(cfg["seed"], "simulate")
    x = np.asarray(x)
    if _is_stack(setup, x):
        ys = [setup.simulate(v, rng) for v in x]
        return np.stack(ys), np.stack([setup.initial(y) for y in ys])
    y = setup.simulate(x, rng)
    return y, setup.initial(y)


# ---------------------------------------------------------------- priors


def scheme_for(cfg: Config, shape) -> PatchScheme:
    return PatchScheme(tuple(shape), tuple(cfg["patch_size"]), tuple(cfg["patch_stride"]), cfg["boundary"])


def net_spec(cfg: Config) -> ConvNetSpec:
    return ConvNetSpec.default(cfg["net_channels"], cfg["net_kernel"], cfg["net_layers"])


def training_pairs(cfg: Config, inputs, targets):
    """Noisy/clean training examples for the convolutional denoiser."""
    inputs, targets = np.asarray(inputs), np.asarray(targets)
    if inputs.shape != targets.shape or len(inputs) == 0:
        raise ConfigError(f"training inputs {inputs.shape} and targets {targets.shape} must match")
    if cfg["prior_layout"] == "xtyt":
        zs = [s for v in inputs for s in xtyt_training_slices(v)]
        ts = [s for v in targets for s in xtyt_training_slices(v)]
        zs, ts = np.array(zs), np.array(ts)
    else:
        sch = scheme_for(cfg, inputs.shape[1:])
        zs = np.concatenate([extract_all(v, sch) for v in inputs])
        ts = np.concatenate([extract_all(v, sch) for v in targets])
    budget = cfg["patch_budget"]
    if budget and len(zs) > budget:
        idx = np.sort(rng_for(cfg["seed"], "patches").choice(len(zs), budget, replace=False))
        zs, ts = zs[idx], ts[idx]
    return zs, ts


def train_convnet(cfg: Config, inputs, targets, net: ConvNet | None = None):
    zs, ts = training_pairs(cfg, inputs, targets)
    tc = TrainConfig(lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"], seed=cfg["seed"])
    return convnet_train(net_spec(cfg), zs, ts, tc, net=net)


def train_dictionary(cfg: Config, targets):
    """ITKrM on ground-truth patches; also returns the approximation error before and after."""
    targets = np.asarray(targets)
    sch = scheme_for(cfg, targets.shape[1:])
    parts = [targets.real, targets.imag] if np.iscomplexobj(targets) else [targets]
    P = np.concatenate([extract_all(np.ascontiguousarray(v), sch) for part in parts for v in part])
    n = cfg["dict_patches"]
    if n and len(P) > n:
        P = P[np.sort(rng_for(cfg["seed"], "patches").choice(len(P), n, replace=False))]
    S, n_iters = cfg["dict_sparsity"], cfg["dict_iters"]
    history = []

    def track(it, D, Y):
        if it in (0, n_iters):
            history.append(sparse_approx_error(D, Y, S))

    dico = itkrm_train(P, cfg["dict_atoms"], S, n_iters, seed=cfg["seed"], callback=track)
    return dico, history


def load_prior(cfg: Config):
    kind = cfg["prior_kind"]
    if kind == "identity":
        return IdentityPrior()
    if kind == "gaussian":
        return GaussianSmoothPrior(cfg["prior_sigma"])
    if kind == "convnet":
        return ConvNetPrior(load_cnw(cfg.path("weights_path", "net.cnw")))
    return DictionaryPrior(load_dictionary(cfg.path("dictionary_path", "dict.ndf"), cfg["patch_size"]))


def apply_prior(cfg: Config, x_ini, model) -> np.ndarray:
    if cfg["prior_layout"] == "xtyt":
        return apply_prior_xtyt(x_ini, model)
    return apply_prior_patchwise(x_ini, scheme_for(cfg, np.shape(x_ini)), model)


# ---------------------------------------------------------------- three stages


@dataclass
class Reconstruction:
    x_ini: np.ndarray
    x_prior: np.ndarray
    x_rec: np.ndarray
    report: SolveReport = field(default_factory=SolveReport)


class StageError(RuntimeError):
    def __init__(self, stage: str, err: Exception):
        super().__init__(f"stage {stage}: {err}")
        self.stage = stage
        self.cause = err


def reconstruct(cfg: Config, y, model, setup=None, x_ini=None) -> Reconstruction:
    """Direct reconstruction, prior, then the regularised data-consistency solve."""
    setup = setup or setup_for(cfg)
    y = np.asarray(y)
    stage = "initial"
    try:
        if x_ini is None:
            x_ini = setup.initial(y)
        stage = "prior"
        x_prior = apply_prior(cfg, x_ini, model)
        stage = "solve"
        x_rec, rep = setup.solve(y, x_prior)
    except (ArithmeticError, ValueError, RuntimeError) as e:
        raise StageError(stage, e) from e
    return Reconstruction(x_ini, x_prior, x_rec, rep)
