"""Headline/body dual-encoder classifier and its single-encoder ablation.

Class index 0 is ``real`` and 1 is ``fake``.  The head is
``Linear(Dropout(concat(cls_headline, cls_body)))``; the single variant
feeds one pair-encoded sequence and uses ``Linear(Dropout(cls))``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import numerics as nx
from .encoder import Encoder, EncoderConfig, init_weights, truncated_normal

REAL, FAKE = 0, 1
LABELS = ("real", "fake")


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    headline_max: int = 128
    body_max: int = 512
    dropout: float = 0.2
    num_classes: int = 2
    variant: str = "dual"  # dual | single
    tied_encoders: bool = False

    def validate(self) -> list[str]:
        errors = list(self.encoder.validate())
        if self.variant not in ("dual", "single"):
            errors.append(f"variant must be dual or single, got {self.variant!r}")
        if self.num_classes != 2:
            errors.append("only binary classification is supported")
        if self.headline_max < 3 or self.body_max < 4:
            errors.append("headline_max must be >= 3 and body_max >= 4")
        if not 0.0 <= self.dropout < 1.0:
            errors.append(f"dropout must be in [0, 1), got {self.dropout}")
        longest = self.body_max if self.variant == "single" else max(self.body_max, self.headline_max)
        if self.encoder.max_positions < longest:
            errors.append(f"max_positions {self.encoder.max_positions} < longest input {longest}")
        return errors

    @property
    def concat_dim(self) -> int:
        return self.encoder.hidden if self.variant == "single" else 2 * self.encoder.hidden

    def encoder_config(self) -> EncoderConfig:
        """The single variant carries segment embeddings for the pair input."""
        if self.variant == "single":
            return replace(self.encoder, type_vocab_size=2)
        return replace(self.encoder, type_vocab_size=0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d["encoder"])
        return cls(**d)


def encoder_prefixes(config: ModelConfig) -> list[str]:
    if config.variant == "single":
        return ["encoder."]
    if config.tied_encoders:
        return ["shared."]
    return ["headline.", "body."]


def init_model(config: ModelConfig, seed: int, dtype=np.float64, std: float = 0.02) -> dict[str, np.ndarray]:
    errors = config.validate()
    if errors:
        raise ValueError("invalid model config: " + "; ".join(errors))
    rng = np.random.default_rng(seed)
    enc_cfg = config.encoder_config()
    params: dict[str, np.ndarray] = {}
    for prefix in encoder_prefixes(config):
        for name, value in init_weights(enc_cfg, rng, dtype, std).items():
            params[prefix + name] = value
    params["head.w"] = np.ascontiguousarray(
        truncated_normal(rng, (config.concat_dim, config.num_classes), std), dtype=dtype
    )
    params["head.b"] = np.zeros(config.num_classes, dtype=dtype)
    return params


class Classifier:
    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        errors = config.validate()
        if errors:
            raise ValueError("invalid model config: " + "; ".join(errors))
        self.config = config
        self.params = params
        enc_cfg = config.encoder_config()
        prefixes = encoder_prefixes(config)
        self.encoders = [Encoder(enc_cfg, params, p) for p in prefixes]
        expected = (config.concat_dim, config.num_classes)
        if params["head.w"].shape != expected:
            raise ValueError(f"head.w shape {params['head.w'].shape}, expected {expected}")
        if params["head.b"].shape != (config.num_classes,):
            raise ValueError(f"head.b shape {params['head.b'].shape}")

    @property
    def headline_encoder(self) -> Encoder:
        return self.encoders[0]

    @property
    def body_encoder(self) -> Encoder:
        return self.encoders[-1]

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, headline, body, training=False, rng=None):
        """Dual forward.  ``headline``/``body`` are (ids, mask) or (ids, mask, seg)
        tuples with batch-first arrays.  Returns (logits (B, 2), cache)."""
        if self.config.variant != "dual":
            raise ValueError("forward() needs the dual variant; use forward_single()")
        hid, hmask = headline[0], headline[1]
        bid, bmask = body[0], body[1]
        if np.shape(hid)[-1] > self.config.headline_max or np.shape(bid)[-1] > self.config.body_max:
            raise ValueError(
                f"inputs of length {np.shape(hid)[-1]}/{np.shape(bid)[-1]} exceed "
                f"{self.config.headline_max}/{self.config.body_max}"
            )
        h, hc = self.headline_encoder.forward(hid, hmask, training=training, rng=rng)
        b, bc = self.body_encoder.forward(bid, bmask, training=training, rng=rng)
        z = np.concatenate([h, b], axis=-1)
        logits, head_cache = self._head(z, training, rng)
        return logits, {"enc": [hc, bc], "head": head_cache}

    def forward_single(self, pair, training=False, rng=None):
        if self.config.variant != "single":
            raise ValueError("forward_single() needs the single variant")
        ids, mask = pair[0], pair[1]
        seg = pair[2] if len(pair) > 2 else None
        if np.shape(ids)[-1] > self.config.body_max:
            raise ValueError(f"pair input length {np.shape(ids)[-1]} exceeds {self.config.body_max}")
        c, cc = self.encoders[0].forward(ids, mask, seg, training=training, rng=rng)
        logits, head_cache = self._head(c, training, rng)
        return logits, {"enc": [cc], "head": head_cache}

    def _head(self, z, training, rng):
        if z.shape[-1] != self.config.concat_dim:
            raise nx.ShapeError(f"head input {z.shape[-1]}, expected {self.config.concat_dim}")
        zd, mask = nx.dropout(z, self.config.dropout, rng, training)
        logits, lin = nx.linear(zd, self.params["head.w"], self.params["head.b"])
        return logits, (mask, lin)

    def logits(self, batch, training=False, rng=None):
        """Dispatch on variant.  ``batch`` is the dict built by ``make_batch``."""
        if self.config.variant == "single":
            return self.forward_single(batch["pair"], training, rng)
        return self.forward(batch["headline"], batch["body"], training, rng)

    def backward(self, cache, grad_logits, grads=None):
        if grads is None:
            grads = self.zero_grads()
        mask, lin = cache["head"]
        grad_logits = np.asarray(grad_logits)
        if grad_logits.ndim == 1:
            grad_logits = grad_logits[None]
        gz, gw, gb = nx.linear_backward(grad_logits, lin)
        grads["head.w"] += gw
        grads["head.b"] += gb
        gz = nx.dropout_backward(gz, mask)
        enc_caches = cache["enc"]
        if len(enc_caches) != (1 if self.config.variant == "single" else 2):
            raise ValueError("cache does not match model variant")
        if self.config.variant == "single":
            self.encoders[0].backward(enc_caches[0], gz, grads)
        else:
            H = self.config.encoder.hidden
            self.headline_encoder.backward(enc_caches[0], gz[:, :H], grads)
            self.body_encoder.backward(enc_caches[1], gz[:, H:], grads)
        return grads


def predict_proba(logits) -> np.ndarray:
    """Softmax over the two logits; columns are (p_real, p_fake)."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
