"""Small builders shared by the test modules."""

from pathlib import Path

import numpy as np

from dualnews.classifier import Classifier, ModelConfig, init_model
from dualnews.encoder import EncoderConfig
from dualnews.textprep import Sentence

FIXTURES = Path(__file__).parent / "fixtures"


def tiny_config(variant="dual", post_ln=False, tied=False, dropout=0.0, **enc) -> ModelConfig:
    enc_kw = dict(num_layers=2, hidden=16, heads=2, ffn_dim=32, vocab_size=64, max_positions=12,
                  dropout=0.0, post_ln=post_ln)
    enc_kw.update(enc)
    return ModelConfig(EncoderConfig(**enc_kw), headline_max=8, body_max=12, dropout=dropout,
                       variant=variant, tied_encoders=tied)


def tiny_model(seed=0, std=0.3, dtype=np.float64, **kw) -> Classifier:
    cfg = tiny_config(**kw)
    return Classifier(cfg, init_model(cfg, seed, dtype, std))


def random_batch(rng, n, T, vocab_size=64, min_len=2):
    ids = rng.integers(5, vocab_size, size=(n, T))
    lens = rng.integers(min_len, T + 1, size=n)
    mask = (np.arange(T)[None, :] < lens[:, None]).astype(np.int64)
    ids[:, 0] = 2
    ids = np.where(mask == 1, ids, 0)
    return ids, mask


def sentences_from_lengths(lengths):
    return [Sentence(f"s{i}", i, int(n)) for i, n in enumerate(lengths)]
