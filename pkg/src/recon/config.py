"""Flat ``key = value`` configuration files.

Lines starting with ``#`` are comments, as is anything after `` #``.  Keys
not in :data:`SCHEMA` are rejected.  The value ``auto`` selects a default
that depends on the mode (and sometimes on other keys); see
:meth:`Config.resolved`.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace(" ", "").split(",") if v)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.replace(" ", "").split(",") if v)


def _choice(*opts):
    def parse(s: str) -> str:
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s

    return parse


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# name: (parser, default)   default None == "auto"
SCHEMA: dict[str, tuple] = {
    "mode": (_choice("ct", "mri"), "ct"),
    "seed": (int, 0),
    "N": (int, None),
    "out_dir": (str, "."),
    # phantoms and data
    "phantom_kind": (_choice("standard", "random"), "standard"),
    "n_phantoms": (int, 1),
    "phantom_path": (str, None),
    "data_path": (str, None),
    "initial_path": (str, None),
    # CT acquisition
    "n_angles": (int, 360),
    "n_bins": (int, None),
    "photons": (float, 10000.0),
    "mu": (float, 0.02),
    "kl_weight": (float, None),
    # MRI acquisition
    "n_frames": (int, 30),
    "n_coils": (int, 8),
    "spokes_full": (int, 900),
    "spokes_under": (int, 300),
    "sampling": (_choice("under", "full"), "under"),
    "n_samples": (int, None),
    "noise_std": (float, 0.0),
    # prior
    "prior_kind": (_choice("convnet", "dictionary", "gaussian", "identity"), "convnet"),
    "prior_layout": (_choice("patch", "xtyt"), None),
    "patch_size": (_ints, None),
    "patch_stride": (_ints, None),
    "boundary": (_choice("exact", "clamp"), "exact"),
    "prior_sigma": (float, 1.0),
    "weights_path": (str, None),
    "dictionary_path": (str, None),
    "prior_input": (str, None),
    "prior_output": (str, None),
    # data consistency
    "method": (_choice("prior", "tv"), "prior"),
    "lambda": (float, None),
    "n_iter": (int, None),
    "tau": (float, None),
    "tol": (float, 1e-10),
    "tv_lambda": (float, None),
    "tv_rho": (float, None),
    "tv_outer": (int, 16),
    "tv_inner": (int, 8),
    "report_path": (str, None),
    # training
    "train_inputs": (str, None),
    "train_targets": (str, None),
    "patch_budget": (int, 2000),
    "epochs": (int, None),
    "batch_size": (int, None),
    "lr": (float, 1e-3),
    "net_channels": (int, 8),
    "net_kernel": (int, 3),
    "net_layers": (int, 3),
    "dict_atoms": (int, 256),
    "dict_sparsity": (int, 16),
    "dict_iters": (int, 15),
    "dict_patches": (int, 10000),
    "train_log": (str, None),
    # evaluation and display
    "eval_input": (str, None),
    "eval_reference": (str, None),
    "metrics_path": (str, None),
    "psnr_peak": (float, None),
    "ssim_range": (float, None),
    "render_input": (str, None),
    "render_slice": (int, 0),
    "window_center": (float, None),
    "window_width": (float, None),
    "render_path": (str, None),
    # regularisation sweep
    "conv_rows": (int, 8),
    "conv_cols": (int, 12),
    "conv_deltas": (_floats, (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)),
    "conv_path": (str, None),
}


def _parse_value(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    if raw == "auto":
        return None
    parser = SCHEMA[key][0]
    try:
        return parser(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({e})") from None


@dataclass
class Config:
    values: dict

    @classmethod
    def defaults(cls) -> "Config":
        return cls({k: d for k, (_, d) in SCHEMA.items()})

    @classmethod
    def parse(cls, text: str) -> "Config":
        cfg = cls.defaults()
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split(" #", 1)[0].strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
            k, v = line.split("=", 1)
            cfg.values[k.strip()] = _parse_value(k.strip(), v)
        return cfg

    @classmethod
    def load(cls, path, overrides=()) -> "Config":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        cfg = cls.parse(text)
        cfg.apply_overrides(overrides)
        return cfg

    def apply_overrides(self, overrides) -> None:
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            self.values[k.strip()] = _parse_value(k.strip(), v)

    def dump(self) -> str:
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in SCHEMA)

    def __getitem__(self, key):
        return self.resolved(key)

    def with_(self, **kw) -> "Config":
        vals = dict(self.values)
        for k, v in kw.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key {k!r}")
            vals[k] = v
        return Config(vals)

    # ------------------------------------------------------------ defaults

    def path(self, key: str, name: str) -> Path:
        v = self.values[key]
        return Path(v) if v is not None else Path(self.values["out_dir"]) / name

    def resolved(self, key: str):
        v = self.values[key]
        if v is not None:
            return v
        ct = self.values["mode"] == "ct"
        kind = self.values["prior_kind"]
        N = self.resolved("N") if key != "N" else None
        auto = {
            "N": 128 if ct else 64,
            "n_samples": 2 * N if N else None,
            "lambda": 1.0 if ct else 0.1,
            "n_iter": 4 if ct else 16,
            "prior_layout": "patch" if ct or kind == "dictionary" else "xtyt",
            "epochs": 20 if ct else 12,
            "batch_size": 32 if ct else 16,
            "tv_lambda": 0.2 if ct else 63.2,
            "tv_rho": 10.0 if ct else 3160.0,
        }
        if key == "patch_size":
            if kind == "dictionary":
                return (8, 8) if ct else (4, 4, 4)
            return (16, 16) if ct else (N, self.values["n_frames"])
        if key == "patch_stride":
            if kind == "dictionary":
                return (2, 2) if ct else (2, 2, 2)
            return (8, 8) if ct else (N, self.values["n_frames"])
        if key in auto:
            return auto[key]
        return None
