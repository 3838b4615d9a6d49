"""Flat JSON pipeline configuration with named presets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .classifier import ModelConfig
from .encoder import EncoderConfig
from .scoring import ScorerConfig
from .training import TrainConfig

SELECTORS = ("maxworth", "tfidf", "head")

PRESETS: dict[str, dict] = {
    # Full-size encoders with the fine-tuning hyperparameters.
    "base": dict(
        num_layers=12, hidden=768, heads=12, ffn_dim=3072, headline_max=128, body_max=512,
        encoder_dropout=0.1, learning_rate=2e-5, init_std=0.02, epochs=8, batch_size=8, dtype="float32",
    ),
    # Desk-scale model trained from scratch: larger learning rate and init scale.
    "toy": dict(
        num_layers=2, hidden=32, heads=4, ffn_dim=64, headline_max=16, body_max=64,
        encoder_dropout=0.0, learning_rate=3e-3, init_std=0.1, epochs=5, batch_size=8,
        dtype="float32",
    ),
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


@dataclass
class PipelineConfig:
    preset: str = "toy"
    # model
    variant: str = "dual"
    tied_encoders: bool = False
    post_ln: bool = False
    num_layers: int = 2
    hidden: int = 32
    heads: int = 4
    ffn_dim: int = 64
    headline_max: int = 16
    body_max: int = 64
    dropout: float = 0.2
    encoder_dropout: float = 0.0
    init_std: float = 0.1
    dtype: str = "float32"
    # training
    learning_rate: float = 3e-3
    epochs: int = 5
    batch_size: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-5
    weight_decay: float = 0.01
    seed: int = 42
    val_fraction: float = 0.0
    early_stopping_patience: int = 0
    # span selection
    selector: str = "maxworth"
    budget: int | None = None  # encoder input length; defaults to body_max
    scorer: str = "local"
    scorer_endpoint: str | None = None
    scorer_cache: str | None = None
    scorer_model: str | None = None
    scorer_timeout: float = 30.0
    scorer_max_retries: int = 3
    scorer_min_interval: float = 0.0
    scorer_max_in_flight: int = 1
    # data / paths
    vocab: str | None = None
    vocab_max_words: int = 5000
    train: str | None = None
    test: str | None = None
    out_dir: str = "runs/default"
    ablation_sizes: list[int] = field(default_factory=lambda: [128, 256, 512])

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        """Preset values first, then explicit keys.  Unknown keys are errors."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown config key {k!r}" for k in unknown])
        preset = data.get("preset", "toy")
        if preset not in PRESETS:
            raise ConfigError([f"unknown preset {preset!r}; choose from {sorted(PRESETS)}"])
        merged = {"preset": preset, **PRESETS[preset], **data}
        cfg = cls(**merged)
        errors = cfg.validate()
        if errors:
            raise ConfigError(errors)
        return cfg

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None) -> "PipelineConfig":
        data = {}
        if path:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError([f"cannot read config {path}: {exc}"]) from None
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def selection_budget(self) -> int:
        """Wordpiece budget for the body span: input length minus [CLS]/[SEP]."""
        return (self.budget or self.body_max) - 2

    def model_config(self, vocab_size: int, **overrides) -> ModelConfig:
        vals = {**asdict(self), **overrides}
        longest = max(vals["headline_max"], vals["body_max"])
        enc = EncoderConfig(
            num_layers=vals["num_layers"], hidden=vals["hidden"], heads=vals["heads"],
            ffn_dim=vals["ffn_dim"], vocab_size=vocab_size, max_positions=longest,
            dropout=vals["encoder_dropout"], post_ln=vals["post_ln"],
        )
        return ModelConfig(
            encoder=enc, headline_max=vals["headline_max"], body_max=vals["body_max"],
            dropout=vals["dropout"], variant=vals["variant"], tied_encoders=vals["tied_encoders"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, epochs=self.epochs, batch_size=self.batch_size,
            beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
            weight_decay=self.weight_decay, seed=self.seed, val_fraction=self.val_fraction,
            early_stopping_patience=self.early_stopping_patience,
        )

    def scorer_config(self) -> ScorerConfig:
        return ScorerConfig(
            kind=self.scorer, endpoint=self.scorer_endpoint, cache_path=self.scorer_cache,
            model_path=self.scorer_model, timeout=self.scorer_timeout,
            max_retries=self.scorer_max_retries, min_request_interval=self.scorer_min_interval,
            max_in_flight=self.scorer_max_in_flight,
        )

    def validate(self) -> list[str]:
        errors: list[str] = []
        if self.selector not in SELECTORS:
            errors.append(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        if self.dtype not in ("float32", "float64"):
            errors.append(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.budget is not None and self.budget < 3:
            errors.append(f"budget must be >= 3, got {self.budget}")
        if any(s < 4 for s in self.ablation_sizes):
            errors.append("ablation_sizes must all be >= 4")
        errors += self.model_config(vocab_size=8).validate()  # real size known only once the vocab loads
        errors += self.train_config().validate()
        errors += self.scorer_config().validate()
        return errors
