"""Flat key = value run configuration.

Defaults are the reference training recipe (h 4, n 7, k 10, weight
decay 1e-5, 50 epochs, task-dependent learning rate). The effective
config text is echoed into every produced artifact so downstream steps
can detect mismatches.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError, ConfigMismatch, EvenSliceCount

LR_BINARY = 0.001
LR_THREECLASS = 0.0005

# keys whose values must agree between a checkpoint and the eval config
STRUCTURAL_KEYS = ("m", "h", "n", "k", "d_common", "d_attn", "backbone_dim",
                   "bins", "hu_min", "hu_max", "spacing")


@dataclass
class Config:
    m: int = 3
    h: int = 4
    n: int = 7
    k: int = 10
    d_common: int = 128
    d_attn: int = 8
    backbone_dim: int = 128
    lr: float = 0.0
    weight_decay: float = 1e-5
    epochs: int = 50
    batch_size: int = 16
    bins: int = 32
    hu_min: float = -1000.0
    hu_max: float = 400.0
    spacing: float = 0.625
    seed: int = 0
    data_dir: str = ""
    work_dir: str = ""

    def __post_init__(self):
        if self.m not in (2, 3):
            raise ConfigError(f"m must be 2 or 3, got {self.m}")
        if self.n < 1 or self.n % 2 == 0:
            raise EvenSliceCount(f"n must be odd and positive, got {self.n}")
        if self.h < 1:
            raise ConfigError(f"h must be >= 1, got {self.h}")
        for key in ("k", "d_common", "d_attn", "backbone_dim", "epochs",
                    "batch_size", "bins"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.hu_max <= self.hu_min:
            raise ConfigError("hu_max must exceed hu_min")
        if self.spacing <= 0:
            raise ConfigError("spacing must be positive")
        if self.lr == 0.0:
            self.lr = LR_BINARY if self.m == 2 else LR_THREECLASS
        if self.lr < 0:
            raise ConfigError("lr must be positive")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from exc


def parse_config(text: str, overrides: dict | None = None) -> Config:
    """Key = value lines plus override pairs; unknown keys rejected."""
    values: dict = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value if not isinstance(value, str) else _parse_value(key, value)
    return Config(**values)


def check_structural_match(stored_text: str, current: Config) -> None:
    """Fail loudly when a checkpoint disagrees on model/data shape keys."""
    stored = parse_config(stored_text)
    for key in STRUCTURAL_KEYS:
        a, b = getattr(stored, key), getattr(current, key)
        if a != b:
            raise ConfigMismatch(f"config key {key}: checkpoint has {a}, run has {b}")
