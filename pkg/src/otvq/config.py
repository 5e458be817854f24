"""Experiment configuration: a strict flat JSON file.

Flat deliberately: no nesting, so the diff between two experiment variants
is one line per changed knob. Unknown keys and wrong types are errors that
name the key; missing keys take the defaults below.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

__all__ = ["TrainConfig", "ConfigError", "parse_config", "config_from_dict",
           "config_to_dict"]


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    method: str = "vqwae"              # "vqvae" | "vqwae"
    dataset: str = "gaussian_mixture"  # "gaussian_mixture" | "idx"
    # gaussian_mixture knobs
    n_clusters: int = 8
    n_x: int = 2
    points_per_cluster: int = 256
    spread: float = 0.05
    # idx knobs; n_x then comes from the file
    images_path: str = ""
    labels_path: str = ""
    # model
    K: int = 16
    M: int = 1
    n_z: int = 2
    hidden: list = field(default_factory=lambda: [64, 64])
    # optimization
    batch_size: int = 32
    iters: int = 1000
    lr: float = 1e-4
    lambda_: float = 1e-3   # JSON key "lambda": weight of the transport term
    lambda_r: float = 1.0   # weight of the KL-to-uniform term
    beta_vqvae: float = 0.25
    eps: float = 0.1
    phi_iters: int = 5
    phi_lr: float = 0.05
    # bookkeeping
    seed: int = 0
    out_dir: str = "runs/exp"
    log_every: int = 50


# JSON key -> (dataclass attr, type tag)
_FIELDS = {
    "method": ("method", "str"),
    "dataset": ("dataset", "str"),
    "n_clusters": ("n_clusters", "int"),
    "n_x": ("n_x", "int"),
    "points_per_cluster": ("points_per_cluster", "int"),
    "spread": ("spread", "float"),
    "images_path": ("images_path", "str"),
    "labels_path": ("labels_path", "str"),
    "K": ("K", "int"),
    "M": ("M", "int"),
    "n_z": ("n_z", "int"),
    "hidden": ("hidden", "int_list"),
    "batch_size": ("batch_size", "int"),
    "iters": ("iters", "int"),
    "lr": ("lr", "float"),
    "lambda": ("lambda_", "float"),
    "lambda_r": ("lambda_r", "float"),
    "beta_vqvae": ("beta_vqvae", "float"),
    "eps": ("eps", "float"),
    "phi_iters": ("phi_iters", "int"),
    "phi_lr": ("phi_lr", "float"),
    "seed": ("seed", "int"),
    "out_dir": ("out_dir", "str"),
    "log_every": ("log_every", "int"),
}


def _coerce(key: str, value, tag: str):
    # bool is an int subclass; reject it everywhere
    if isinstance(value, bool):
        raise ConfigError(f"type mismatch for key '{key}': expected {tag}, got bool")
    if tag == "int":
        if not isinstance(value, int):
            raise ConfigError(f"type mismatch for key '{key}': expected int, "
                              f"got {type(value).__name__}")
        return value
    if tag == "float":
        if not isinstance(value, (int, float)):
            raise ConfigError(f"type mismatch for key '{key}': expected number, "
                              f"got {type(value).__name__}")
        return float(value)
    if tag == "str":
        if not isinstance(value, str):
            raise ConfigError(f"type mismatch for key '{key}': expected string, "
                              f"got {type(value).__name__}")
        return value
    if tag == "int_list":
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, int)
                                              for v in value):
            raise ConfigError(f"type mismatch for key '{key}': expected list of ints")
        return list(value)
    raise AssertionError(tag)


def _validate(cfg: TrainConfig) -> TrainConfig:
    if cfg.method not in ("vqvae", "vqwae"):
        raise ConfigError(f"unknown method '{cfg.method}'")
    if cfg.dataset not in ("gaussian_mixture", "idx"):
        raise ConfigError(f"unknown dataset '{cfg.dataset}'")
    if cfg.dataset == "idx" and not cfg.images_path:
        raise ConfigError("key 'images_path' is required when dataset is 'idx'")
    positive = [("K", cfg.K), ("M", cfg.M), ("n_z", cfg.n_z), ("n_x", cfg.n_x),
                ("batch_size", cfg.batch_size), ("n_clusters", cfg.n_clusters),
                ("points_per_cluster", cfg.points_per_cluster),
                ("log_every", cfg.log_every)]
    for key, val in positive:
        if val < 1:
            raise ConfigError(f"key '{key}' must be positive, got {val}")
    nonneg = [("iters", cfg.iters), ("lr", cfg.lr), ("lambda", cfg.lambda_),
              ("lambda_r", cfg.lambda_r), ("beta_vqvae", cfg.beta_vqvae),
              ("phi_iters", cfg.phi_iters), ("phi_lr", cfg.phi_lr),
              ("spread", cfg.spread), ("seed", cfg.seed)]
    for key, val in nonneg:
        if val < 0:
            raise ConfigError(f"key '{key}' must be nonnegative, got {val}")
    if cfg.eps <= 0:
        raise ConfigError(f"key 'eps' must be positive, got {cfg.eps}")
    if any(h < 1 for h in cfg.hidden):
        raise ConfigError("key 'hidden' entries must be positive")
    return cfg


def config_from_dict(raw: dict) -> TrainConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
    cfg = TrainConfig()
    for key, value in raw.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown key '{key}'")
        attr, tag = _FIELDS[key]
        setattr(cfg, attr, _coerce(key, value, tag))
    return _validate(cfg)


def parse_config(path: str) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(cfg: TrainConfig) -> dict:
    """Inverse of config_from_dict, using the JSON key spelling."""
    attr_to_key = {attr: key for key, (attr, _) in _FIELDS.items()}
    return {attr_to_key[f.name]: getattr(cfg, f.name) for f in fields(cfg)}
