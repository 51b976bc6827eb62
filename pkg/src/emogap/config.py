"""Run configuration: profiles, JSON loading, strict validation.

Two named profiles keep the headline hyperparameters honest: ``paper``
mirrors the published setup (12 blocks, 8 heads, D=1024, d_k=128, lr=1e-5,
batch 64, 30 epochs), while ``desk`` is the small configuration every test
and demo actually runs. A config file selects a profile and overrides
fields; unknown keys are rejected everywhere.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import inconsistency as inc
from .encoder import EncoderConfig
from .errors import ConfigError
from .inconsistency import AteiConfig
from .synthetic import SynthConfig

FUSION_ADD = "add"
FUSION_MULT = "mult"
FUSION_CONCAT = "concat"
FUSION_KINDS = (FUSION_ADD, FUSION_MULT, FUSION_CONCAT)


@dataclass
class TrainConfig:
    lr: float = 1e-5
    batch_size: int = 64
    max_epochs: int = 30
    pretrain_epochs: int = 10
    seed: int = 0
    fusion: str = FUSION_CONCAT
    atei_mode: str = inc.EMBED_FC2
    scaling: bool = False
    use_textual: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 0 or self.pretrain_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.fusion not in FUSION_KINDS:
            raise ConfigError(f"fusion must be one of {FUSION_KINDS}")
        if self.atei_mode not in inc.MODES:
            raise ConfigError(f"atei_mode must be one of {inc.MODES}")


@dataclass
class ClassifierConfig:
    hidden_dim: int = 1024

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ConfigError("classifier hidden_dim must be >= 1")


@dataclass
class RunConfig:
    profile: str = "paper"
    train: TrainConfig = field(default_factory=TrainConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    atei: AteiConfig = field(default_factory=AteiConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        t = self.train
        if t.scaling and t.atei_mode not in inc.EMBED_MODES:
            raise ConfigError(
                "scaling modulates embedding representations only; it cannot be "
                f"combined with atei_mode={t.atei_mode!r}"
            )
        if t.atei_mode in (inc.ZERO_ONE, inc.ZERO_ONE_LOGITS) and t.fusion != FUSION_CONCAT:
            raise ConfigError(
                "0/1-style representations have width 1 or 2; only concatenation "
                "fusion supports them"
            )
        if (
            t.atei_mode in inc.EMBED_MODES
            and t.fusion in (FUSION_ADD, FUSION_MULT)
            and self.atei.fc_dim != self.encoder.model_dim
        ):
            raise ConfigError(
                f"add/mult fusion needs equal widths: embedding fc_dim "
                f"{self.atei.fc_dim} vs model_dim {self.encoder.model_dim}"
            )

    def fusion_input_dim(self) -> int:
        """Width of the fused vector the classifier head sees."""
        t = self.train
        d = self.encoder.model_dim
        widths = [d]
        if t.use_textual:
            widths.append(d)
        if t.atei_mode == inc.ZERO_ONE:
            widths.append(1)
        elif t.atei_mode == inc.ZERO_ONE_LOGITS:
            widths.append(2)
        elif t.atei_mode in inc.EMBED_MODES:
            widths.append(self.atei.fc_dim)
        if t.fusion == FUSION_CONCAT:
            return sum(widths)
        return d

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "train": asdict(self.train),
            "encoder": asdict(self.encoder),
            "atei": asdict(self.atei),
            "classifier": asdict(self.classifier),
            "synth": asdict(self.synth),
        }


def profile_defaults(profile: str) -> dict:
    if profile == "paper":
        return {
            "train": {},
            "encoder": {},
            "atei": {"n_blocks": 12},
            "classifier": {},
            "synth": {
                "n_subjects": [100, 100, 72],
                "segments_mean": [27.0, 39.2, 37.6],
                "segments_std": 5.0,
                "input_dim_a": 1024,
                "input_dim_t": 1024,
                "t_range_a": [50, 150],
                "t_range_t": [10, 60],
            },
        }
    if profile == "desk":
        return {
            "train": {"lr": 1e-3, "max_epochs": 10, "pretrain_epochs": 10},
            "encoder": {
                "n_blocks": 2,
                "n_heads": 4,
                "model_dim": 64,
                "head_dim": 16,
                "ffn_dim": 256,
            },
            "atei": {"n_blocks": 2, "fc_dim": 64, "scale_dim": 16},
            "classifier": {"hidden_dim": 64},
            "synth": {},
        }
    raise ConfigError(f"unknown profile {profile!r} (expected 'paper' or 'desk')")


_SECTIONS = {
    "train": TrainConfig,
    "encoder": EncoderConfig,
    "atei": AteiConfig,
    "classifier": ClassifierConfig,
    "synth": SynthConfig,
}

_TUPLE_FIELDS = {"n_subjects", "segments_mean", "segments_std", "mismatch_rates",
                 "t_range_a", "t_range_t"}


def _build_section(cls, base: dict, override: dict, section: str):
    merged = dict(base)
    for key, value in override.items():
        merged[key] = value
    allowed = set(cls.__dataclass_fields__)
    unknown = set(merged) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    kwargs = {
        k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
        for k, v in merged.items()
    }
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


def build_config(document: dict | None = None, profile: str | None = None) -> RunConfig:
    """Assemble a RunConfig from profile defaults plus a JSON document."""
    document = dict(document or {})
    doc_profile = document.pop("profile", None)
    name = profile or doc_profile or "paper"
    if not isinstance(name, str):
        raise ConfigError("profile must be a string")
    defaults = profile_defaults(name)
    unknown = set(document) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    sections = {}
    for section, cls in _SECTIONS.items():
        override = document.get(section, {})
        if not isinstance(override, dict):
            raise ConfigError(f"'{section}' must be a JSON object")
        sections[section] = _build_section(cls, defaults[section], override, section)
    return RunConfig(profile=name, **sections)


def load_config(path, profile: str | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return build_config(document, profile)


def apply_overrides(config_dict: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` strings on top of a config document."""
    out = json.loads(json.dumps(config_dict))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = out
        for key in keys[:-1]:
            target = target.setdefault(key, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override {item!r} descends into a non-object")
        target[keys[-1]] = value
    return out
