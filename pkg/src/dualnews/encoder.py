"""Transformer encoder with explicit backward pass.

Parameters live in a flat ``dict[str, ndarray]`` so checkpoints and the
optimizer can treat every model the same way.  Names (relative to the
encoder's prefix)::

    emb.word            (vocab_size, H)
    emb.position        (max_positions, H)
    emb.token_type      (2, H)               only if type_vocab_size > 0
    emb.ln.gamma/beta   (H,)                 post-LN layout only
    layer{i}.attn.{q,k,v,o}.w  (H, H)   .b (H,)
    layer{i}.ln1.gamma/beta, layer{i}.ln2.gamma/beta
    layer{i}.ffn.in.w  (H, F)  .b (F,)   layer{i}.ffn.out.w (F, H) .b (H,)
    pooler.w (H, H)  pooler.b (H,)

Weight matrices are stored (in, out) and applied as ``x @ w + b``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx

LN_EPS = 1e-12


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 2
    hidden: int = 32
    heads: int = 4
    ffn_dim: int = 64
    vocab_size: int = 64
    max_positions: int = 64
    dropout: float = 0.1
    type_vocab_size: int = 0
    post_ln: bool = False

    def validate(self) -> list[str]:
        errors = []
        if self.num_layers < 1:
            errors.append(f"num_layers must be >= 1, got {self.num_layers}")
        if self.heads < 1 or self.hidden % self.heads:
            errors.append(f"hidden {self.hidden} not divisible by heads {self.heads}")
        for name in ("hidden", "ffn_dim", "vocab_size", "max_positions"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            errors.append(f"dropout must be in [0, 1), got {self.dropout}")
        if self.type_vocab_size not in (0, 2):
            errors.append("type_vocab_size must be 0 or 2")
        return errors

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    H, F = config.hidden, config.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {
        "emb.word": (config.vocab_size, H),
        "emb.position": (config.max_positions, H),
    }
    if config.type_vocab_size:
        shapes["emb.token_type"] = (config.type_vocab_size, H)
    if config.post_ln:
        shapes["emb.ln.gamma"] = (H,)
        shapes["emb.ln.beta"] = (H,)
    for i in range(config.num_layers):
        p = f"layer{i}."
        for proj in "qkvo":
            shapes[p + f"attn.{proj}.w"] = (H, H)
            shapes[p + f"attn.{proj}.b"] = (H,)
        shapes[p + "ln1.gamma"] = (H,)
        shapes[p + "ln1.beta"] = (H,)
        shapes[p + "ffn.in.w"] = (H, F)
        shapes[p + "ffn.in.b"] = (F,)
        shapes[p + "ffn.out.w"] = (F, H)
        shapes[p + "ffn.out.b"] = (H,)
        shapes[p + "ln2.gamma"] = (H,)
        shapes[p + "ln2.beta"] = (H,)
    shapes["pooler.w"] = (H, H)
    shapes["pooler.b"] = (H,)
    return shapes


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02, limit: float = 3.0):
    """Normal(0, std) with draws beyond ``limit`` standard deviations redrawn."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > limit
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > limit
    return out * std


def init_weights(
    config: EncoderConfig,
    seed: int | np.random.Generator,
    dtype=np.float64,
    std: float = 0.02,
) -> dict[str, np.ndarray]:
    errors = config.validate()
    if errors:
        raise ValueError("invalid encoder config: " + "; ".join(errors))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gamma"):
            value = np.ones(shape)
        elif name.endswith(".b") or name.endswith(".beta"):
            value = np.zeros(shape)
        else:
            value = truncated_normal(rng, shape, std)
        params[name] = np.ascontiguousarray(value, dtype=dtype)
    return params


class Encoder:
    """Stateless apart from its parameter dict (shared by reference)."""

    def __init__(self, config: EncoderConfig, params: dict[str, np.ndarray], prefix: str = ""):
        self.config = config
        self.params = params
        self.prefix = prefix
        expected = param_shapes(config)
        for name, shape in expected.items():
            full = prefix + name
            if full not in params:
                raise KeyError(f"missing encoder parameter {full}")
            if params[full].shape != shape:
                raise ValueError(f"{full}: shape {params[full].shape}, expected {shape}")

    def p(self, name: str) -> np.ndarray:
        return self.params[self.prefix + name]

    def param_names(self) -> list[str]:
        return [self.prefix + n for n in param_shapes(self.config)]

    # -- forward ---------------------------------------------------------

    def forward(self, ids, mask, segment_ids=None, training: bool = False, rng=None):
        """ids, mask: (B, T) integer arrays.  Returns (pooled (B, H), cache)."""
        cfg = self.config
        ids = np.asarray(ids)
        mask = np.asarray(mask)
        if ids.ndim == 1:
            ids, mask = ids[None], mask[None]
            if segment_ids is not None:
                segment_ids = np.asarray(segment_ids)[None]
        B, T = ids.shape
        if T > cfg.max_positions:
            raise ValueError(f"sequence length {T} exceeds max_positions {cfg.max_positions}")
        if ids.min() < 0 or ids.max() >= cfg.vocab_size:
            raise ValueError(f"token id out of range for vocab_size {cfg.vocab_size}")
        p = cfg.dropout
        x = self.p("emb.word")[ids] + self.p("emb.position")[:T]
        if cfg.type_vocab_size:
            seg = np.zeros_like(ids) if segment_ids is None else np.asarray(segment_ids)
            x = x + self.p("emb.token_type")[seg]
        else:
            seg = None
        emb_ln = None
        if cfg.post_ln:
            x, emb_ln = nx.layer_norm(x, self.p("emb.ln.gamma"), self.p("emb.ln.beta"), LN_EPS)
        x, emb_drop = nx.dropout(x, p, rng, training)
        key_mask = mask.astype(bool)[:, None, None, :]  # (B,1,1,T)
        layers = []
        for i in range(cfg.num_layers):
            x, lc = self._block_forward(i, x, key_mask, training, rng)
            layers.append(lc)
        cls = x[:, 0, :]
        pre, pool_lin = nx.linear(cls, self.p("pooler.w"), self.p("pooler.b"))
        pooled, pool_tanh = nx.tanh(pre)
        cache = {
            "ids": ids, "seg": seg, "T": T, "emb_ln": emb_ln, "emb_drop": emb_drop,
            "layers": layers, "x_shape": x.shape, "pool_lin": pool_lin, "pool_tanh": pool_tanh,
            "n_params": len(self.params),
        }
        return pooled, cache

    def _attention_forward(self, i, h, key_mask):
        cfg = self.config
        B, T, H = h.shape
        A, d = cfg.heads, cfg.head_dim
        pre = f"layer{i}.attn."
        q, cq = nx.linear(h, self.p(pre + "q.w"), self.p(pre + "q.b"))
        k, ck = nx.linear(h, self.p(pre + "k.w"), self.p(pre + "k.b"))
        v, cv = nx.linear(h, self.p(pre + "v.w"), self.p(pre + "v.b"))
        qh = q.reshape(B, T, A, d).transpose(0, 2, 1, 3)
        kh = k.reshape(B, T, A, d).transpose(0, 2, 1, 3)
        vh = v.reshape(B, T, A, d).transpose(0, 2, 1, 3)
        scale = 1.0 / math.sqrt(d)
        logits = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        probs, sm = nx.softmax_rows(logits, key_mask)
        ctx = (probs @ vh).transpose(0, 2, 1, 3).reshape(B, T, H)
        out, co = nx.linear(ctx, self.p(pre + "o.w"), self.p(pre + "o.b"))
        return out, (cq, ck, cv, qh, kh, vh, sm, co, scale)

    def _attention_backward(self, i, g, cache, grads):
        cq, ck, cv, qh, kh, vh, probs, co, scale = cache
        B, A, T, d = qh.shape
        pre = self.prefix + f"layer{i}.attn."
        gctx, gw, gb = nx.linear_backward(g, co)
        grads[pre + "o.w"] += gw
        grads[pre + "o.b"] += gb
        gctx = gctx.reshape(B, T, A, d).transpose(0, 2, 1, 3)
        gprobs = gctx @ vh.transpose(0, 1, 3, 2)
        gvh = probs.transpose(0, 1, 3, 2) @ gctx
        glogits = nx.softmax_rows_backward(gprobs, probs) * scale
        gqh = glogits @ kh
        gkh = glogits.transpose(0, 1, 3, 2) @ qh
        gh = 0.0
        for name, gheads, c in (("q", gqh, cq), ("k", gkh, ck), ("v", gvh, cv)):
            gflat = gheads.transpose(0, 2, 1, 3).reshape(B, T, A * d)
            gx, gw, gb = nx.linear_backward(gflat, c)
            grads[pre + name + ".w"] += gw
            grads[pre + name + ".b"] += gb
            gh = gh + gx
        return gh

    def _ffn_forward(self, i, h):
        pre = f"layer{i}.ffn."
        a, c1 = nx.linear(h, self.p(pre + "in.w"), self.p(pre + "in.b"))
        z, cg = nx.gelu(a)
        out, c2 = nx.linear(z, self.p(pre + "out.w"), self.p(pre + "out.b"))
        return out, (c1, cg, c2)

    def _ffn_backward(self, i, g, cache, grads):
        c1, cg, c2 = cache
        pre = self.prefix + f"layer{i}.ffn."
        gz, gw, gb = nx.linear_backward(g, c2)
        grads[pre + "out.w"] += gw
        grads[pre + "out.b"] += gb
        ga = nx.gelu_backward(gz, cg)
        gh, gw, gb = nx.linear_backward(ga, c1)
        grads[pre + "in.w"] += gw
        grads[pre + "in.b"] += gb
        return gh

    def _ln(self, i, which, x):
        pre = f"layer{i}.{which}."
        return nx.layer_norm(x, self.p(pre + "gamma"), self.p(pre + "beta"), LN_EPS)

    def _ln_backward(self, i, which, g, cache, grads):
        gx, gg, gb = nx.layer_norm_backward(g, cache)
        pre = self.prefix + f"layer{i}.{which}."
        grads[pre + "gamma"] += gg
        grads[pre + "beta"] += gb
        return gx

    def _block_forward(self, i, x, key_mask, training, rng):
        p = self.config.dropout
        if not self.config.post_ln:
            h, ln1 = self._ln(i, "ln1", x)
            a, att = self._attention_forward(i, h, key_mask)
            a, d1 = nx.dropout(a, p, rng, training)
            x = x + a
            h2, ln2 = self._ln(i, "ln2", x)
            f, ffn = self._ffn_forward(i, h2)
            f, d2 = nx.dropout(f, p, rng, training)
            x = x + f
        else:
            a, att = self._attention_forward(i, x, key_mask)
            a, d1 = nx.dropout(a, p, rng, training)
            x, ln1 = self._ln(i, "ln1", x + a)
            f, ffn = self._ffn_forward(i, x)
            f, d2 = nx.dropout(f, p, rng, training)
            x, ln2 = self._ln(i, "ln2", x + f)
        return x, (ln1, att, d1, ln2, ffn, d2)

    def _block_backward(self, i, g, cache, grads):
        ln1, att, d1, ln2, ffn, d2 = cache
        if not self.config.post_ln:
            gf = nx.dropout_backward(g, d2)
            gh2 = self._ffn_backward(i, gf, ffn, grads)
            g = g + self._ln_backward(i, "ln2", gh2, ln2, grads)
            ga = nx.dropout_backward(g, d1)
            gh = self._attention_backward(i, ga, att, grads)
            g = g + self._ln_backward(i, "ln1", gh, ln1, grads)
        else:
            g = self._ln_backward(i, "ln2", g, ln2, grads)
            gf = nx.dropout_backward(g, d2)
            g = g + self._ffn_backward(i, gf, ffn, grads)
            g = self._ln_backward(i, "ln1", g, ln1, grads)
            ga = nx.dropout_backward(g, d1)
            g = g + self._attention_backward(i, ga, att, grads)
        return g

    # -- backward --------------------------------------------------------

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {n: np.zeros_like(self.params[n]) for n in self.param_names()}

    def backward(self, cache, grad_pooled, grads: dict[str, np.ndarray] | None = None):
        """Accumulate gradients into ``grads`` (created if None) and return it."""
        if cache.get("n_params") != len(self.params):
            raise ValueError("cache does not match this encoder's parameters")
        if grads is None:
            grads = self.zero_grads()
        grad_pooled = np.asarray(grad_pooled)
        if grad_pooled.ndim == 1:
            grad_pooled = grad_pooled[None]
        pre = self.prefix
        gpre = nx.tanh_backward(grad_pooled, cache["pool_tanh"])
        gcls, gw, gb = nx.linear_backward(gpre, cache["pool_lin"])
        grads[pre + "pooler.w"] += gw
        grads[pre + "pooler.b"] += gb
        g = np.zeros(cache["x_shape"], dtype=gcls.dtype)
        g[:, 0, :] = gcls
        for i in reversed(range(self.config.num_layers)):
            g = self._block_backward(i, g, cache["layers"][i], grads)
        g = nx.dropout_backward(g, cache["emb_drop"])
        if self.config.post_ln:
            g, gg, gb = nx.layer_norm_backward(g, cache["emb_ln"])
            grads[pre + "emb.ln.gamma"] += gg
            grads[pre + "emb.ln.beta"] += gb
        T = cache["T"]
        grads[pre + "emb.position"][:T] += g.sum(axis=0)
        H = g.shape[-1]
        np.add.at(grads[pre + "emb.word"], cache["ids"].reshape(-1), g.reshape(-1, H))
        if self.config.type_vocab_size:
            np.add.at(grads[pre + "emb.token_type"], cache["seg"].reshape(-1), g.reshape(-1, H))
        return grads
