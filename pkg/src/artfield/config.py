"""Training configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    iters_warmup: int = 300
    iters_soft: int = 400
    iters_hard: int = 600
    prismatic_check_step: int = 250
    eps_deg: float = 15.0

    lambda_ssim: float = 0.2
    lambda_d: float = 0.5
    lambda_sem: float = 0.5
    lambda_sparsity: float = 1.0
    sparsity_mean: bool = True
    lambda_traj: float = 1.0
    lambda_align: float = 1.0
    lambda_align_hard: float = 0.0
    knn_k: int = 8
    temperature: float = 0.25
    delta_vis: float = 0.01
    front_only: bool = False

    lr_motion: float = 5e-3
    lr_logits: float = 1e-2
    lr_color: float = 1e-2
    lr_decay_hard: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    pos_lr_max: float = 1.6e-4
    pos_lr_min: float = 1e-8
    pos_lr_init: int = 6000
    pos_lr_end: int = 10000

    n_points: int = 5000
    opacity: float = 0.9
    align_points: int = 4000
    match_r: float = 0.01
    match_r_prime: float = 0.02
    k_views: int = 4
    min_iou: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.startswith("lambda_") and v < 0:
                raise ConfigError(f"{f.name} must be >= 0, got {v}")
            if f.name.startswith("iters_") and v < 0:
                raise ConfigError(f"{f.name} must be >= 0, got {v}")
        if not 0 <= self.prismatic_check_step <= self.iters_soft:
            raise ConfigError("prismatic_check_step must lie in [0, iters_soft]")
        if self.pos_lr_end <= self.pos_lr_init:
            raise ConfigError("pos_lr_end must exceed pos_lr_init")
        if self.n_points < 1 or self.knn_k < 1:
            raise ConfigError("n_points and knn_k must be positive")
        if self.temperature <= 0 or self.delta_vis <= 0:
            raise ConfigError("temperature and delta_vis must be positive")
        if not 0 < self.lr_decay_hard <= 1:
            raise ConfigError("lr_decay_hard must lie in (0, 1]")

    def replace(self, **kw) -> TrainConfig:
        d = asdict(self)
        unknown = set(kw) - set(d)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d.update(kw)
        return TrainConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _coerce(name: str, typ, raw: str):
    raw = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    base = base or TrainConfig()
    types = {f.name: f.type for f in fields(TrainConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _coerce(key, types[key], val)
    return base.replace(**updates)


def load_config(path) -> TrainConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
