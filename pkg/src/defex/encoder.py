"""The two token encoders, mention/definition vector heads, and checkpoints.

The model holds two structurally identical transformer encoders with fully
independent parameters: one contextualizes mention sentences, the other
definition sentences.  Mention vectors are plain means of the context
encoder's sub-token states over the mention span.  Definition vectors pass
every sub-token state through a two-layer feed-forward head before
averaging.  Vectors are stored un-normalized; cosine normalizes at
comparison time.
"""

from __future__ import annotations

import hashlib
import math
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .errors import (
    ArgumentError,
    DegenerateVectorError,
    InputNotFoundError,
    TruncationError,
    ValidationError,
)
from .tokenizer import build_tokenizer, tokenizer_from_dict

CHECKPOINT_FORMAT_VERSION = 1

CONTEXT = "context"
DEFINITION = "definition"


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture knobs shared by both encoders."""

    vocab_size: int = 1024
    embedding_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_head_hidden: int | None = None  # None -> embedding_dim
    block_ffn_hidden: int | None = None  # None -> 2 * embedding_dim
    max_sequence_length: int = 128
    tokenizer: str = "subword"  # or "identity"
    init_std: float = 0.05
    position_scale: float = 0.01
    residual_init_scale: float | None = None  # None -> 1 / sqrt(2 * n_layers)

    def __post_init__(self):
        if self.embedding_dim <= 0 or self.n_layers <= 0 or self.n_heads <= 0:
            raise ArgumentError("all encoder dimensions must be positive")
        if self.embedding_dim % self.n_heads != 0:
            raise ArgumentError("embedding_dim must be divisible by n_heads")
        if self.vocab_size < 8:
            raise ArgumentError("vocab_size must be at least 8")
        if self.max_sequence_length < 2:
            raise ArgumentError("max_sequence_length must be at least 2")
        if self.tokenizer not in ("subword", "identity"):
            raise ArgumentError(f"unknown tokenizer scheme {self.tokenizer!r}")

    @property
    def head_hidden(self) -> int:
        return self.ffn_head_hidden or self.embedding_dim

    @property
    def block_hidden(self) -> int:
        return self.block_ffn_hidden or 2 * self.embedding_dim


@dataclass
class TokenEncoding:
    """Per-sub-token vectors for one word sequence plus the word -> sub-token
    span map (inclusive ranges)."""

    vectors: np.ndarray  # (n_subtokens, dim)
    word_spans: tuple[tuple[int, int], ...]
    sub_ids: tuple[int, ...]

    def sub_range(self, start: int, end: int) -> tuple[int, int]:
        """Map an inclusive word span to the inclusive sub-token span."""
        if start > end:
            raise ArgumentError("empty span: start must be <= end")
        if start < 0 or end >= len(self.word_spans):
            raise ArgumentError(
                f"word span ({start}, {end}) out of bounds for {len(self.word_spans)} words"
            )
        return self.word_spans[start][0], self.word_spans[end][1]


@dataclass(frozen=True)
class MentionVector:
    values: np.ndarray
    provenance: str = ""


@dataclass(frozen=True)
class DefinitionVector:
    values: np.ndarray
    provenance: str = ""


def cosine(u, v) -> float:
    """Cosine similarity of two non-zero vectors; raises on zero input."""
    u = np.asarray(getattr(u, "values", u), dtype=np.float64)
    v = np.asarray(getattr(v, "values", v), dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("cosine of a zero vector is undefined")
    return float(np.dot(u, v) / (nu * nv))


class TokenEncoder:
    """One transformer encoder: embeddings + pre-norm blocks + final norm."""

    def __init__(self, config: EncoderConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self._positions = nn.sinusoidal_positions(
            config.max_sequence_length, config.embedding_dim
        ) * config.position_scale

    @classmethod
    def create(cls, config: EncoderConfig, vocab_size: int, rng: np.random.Generator):
        d = config.embedding_dim
        h = config.block_hidden
        std = config.init_std
        # residual branches start small so token identity dominates the
        # stream early; attention/ffn influence grows only if training asks
        factor = config.residual_init_scale
        if factor is None:
            factor = 1.0 / math.sqrt(2.0 * config.n_layers)
        residual_std = std * factor
        params: dict[str, np.ndarray] = {}
        params["emb"] = rng.normal(0.0, std, size=(vocab_size, d))
        for layer in range(config.n_layers):
            p = f"b{layer}"
            params[f"{p}.ln1.g"] = np.ones(d)
            params[f"{p}.ln1.b"] = np.zeros(d)
            for name in ("wq", "wk", "wv"):
                params[f"{p}.attn.{name}"] = rng.normal(0.0, std, size=(d, d))
            params[f"{p}.attn.wo"] = rng.normal(0.0, residual_std, size=(d, d))
            for name in ("bq", "bk", "bv", "bo"):
                params[f"{p}.attn.{name}"] = np.zeros(d)
            params[f"{p}.ln2.g"] = np.ones(d)
            params[f"{p}.ln2.b"] = np.zeros(d)
            params[f"{p}.ffn.w1"] = rng.normal(0.0, std, size=(d, h))
            params[f"{p}.ffn.b1"] = np.zeros(h)
            params[f"{p}.ffn.w2"] = rng.normal(0.0, residual_std, size=(h, d))
            params[f"{p}.ffn.b2"] = np.zeros(d)
        params["out_ln.g"] = np.ones(d)
        params["out_ln.b"] = np.zeros(d)
        return cls(config, params)

    def copy(self) -> "TokenEncoder":
        return TokenEncoder(self.config, {k: v.copy() for k, v in self.params.items()})

    def forward(self, ids: np.ndarray, mask: np.ndarray):
        """ids (B, L) int64, mask (B, L) in {0, 1} -> states (B, L, dim)."""
        length = ids.shape[1]
        if length > self.config.max_sequence_length:
            raise TruncationError(
                f"sequence of {length} sub-tokens exceeds the maximum of "
                f"{self.config.max_sequence_length}; refusing to truncate"
            )
        x = self.params["emb"][ids] + self._positions[:length]
        caches = []
        for layer in range(self.config.n_layers):
            x, cache = nn.block_forward(x, self.params, f"b{layer}", mask, self.config.n_heads)
            caches.append(cache)
        out, ln_cache = nn.layer_norm_forward(x, self.params["out_ln.g"], self.params["out_ln.b"])
        return out, (ids, caches, ln_cache)

    def backward(self, d_states: np.ndarray, cache):
        ids, caches, ln_cache = cache
        grads: dict[str, np.ndarray] = {}
        dx, dg, db = nn.layer_norm_backward(d_states, ln_cache)
        grads["out_ln.g"] = dg
        grads["out_ln.b"] = db
        for layer in reversed(range(self.config.n_layers)):
            dx, block_grads = nn.block_backward(dx, caches[layer], self.params, f"b{layer}")
            grads.update(block_grads)
        demb = np.zeros_like(self.params["emb"])
        np.add.at(demb, ids.reshape(-1), dx.reshape(-1, dx.shape[-1]))
        grads["emb"] = demb
        return grads


class TwoLayerHead:
    """Affine -> nonlinearity -> affine map applied to definition sub-token
    states before averaging."""

    kind = "two_layer"

    def __init__(self, params: dict[str, np.ndarray]):
        self.params = params

    @classmethod
    def create(cls, config: EncoderConfig, rng: np.random.Generator):
        d = config.embedding_dim
        h = config.head_hidden
        params = {
            "w1": rng.normal(0.0, config.init_std, size=(d, h)),
            "b1": np.zeros(h),
            "w2": rng.normal(0.0, config.init_std, size=(h, d)),
            "b2": np.zeros(d),
        }
        return cls(params)

    def copy(self) -> "TwoLayerHead":
        return TwoLayerHead({k: v.copy() for k, v in self.params.items()})

    def forward(self, x):
        f1, f1_cache = nn.linear_forward(x, self.params["w1"], self.params["b1"])
        a1, gelu_cache = nn.gelu_forward(f1)
        out, f2_cache = nn.linear_forward(a1, self.params["w2"], self.params["b2"])
        return out, (f1_cache, gelu_cache, f2_cache)

    def backward(self, dout, cache):
        f1_cache, gelu_cache, f2_cache = cache
        grads = {}
        da1, grads["w2"], grads["b2"] = nn.linear_backward(dout, f2_cache)
        df1 = nn.gelu_backward(da1, gelu_cache)
        dx, grads["w1"], grads["b1"] = nn.linear_backward(df1, f1_cache)
        return dx, grads


class IdentityHead:
    """Pass-through head; useful for isolating the raw definition encoder."""

    kind = "identity"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}

    def copy(self) -> "IdentityHead":
        return IdentityHead()

    def forward(self, x):
        return x, None

    def backward(self, dout, cache):
        return dout, {}


class DualEncoderModel:
    """Two independent token encoders plus the definition-side head.

    The context and definition encoders share no parameters; the head
    applies only to definition states.
    """

    def __init__(self, config: EncoderConfig, tokenizer, context_encoder: TokenEncoder,
                 definition_encoder: TokenEncoder, ffn_head):
        self.config = config
        self.tokenizer = tokenizer
        self.context_encoder = context_encoder
        self.definition_encoder = definition_encoder
        self.ffn_head = ffn_head

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, config: EncoderConfig, word_source, seed) -> "DualEncoderModel":
        """Fit the tokenizer on ``word_source`` (an iterable of words or an
        alignment corpus) and draw fresh parameters."""
        words = word_source.all_words() if hasattr(word_source, "all_words") else word_source
        tokenizer = build_tokenizer(config.tokenizer, words, config.vocab_size)
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x5EED])
        ctx = TokenEncoder.create(config, len(tokenizer), rng)
        defn = TokenEncoder.create(config, len(tokenizer), rng)
        head = TwoLayerHead.create(config, rng)
        return cls(config, tokenizer, ctx, defn, head)

    def copy(self) -> "DualEncoderModel":
        return DualEncoderModel(
            self.config,
            self.tokenizer,
            self.context_encoder.copy(),
            self.definition_encoder.copy(),
            self.ffn_head.copy(),
        )

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        for name, array in self.context_encoder.params.items():
            params[f"ctx.{name}"] = array
        for name, array in self.definition_encoder.params.items():
            params[f"defn.{name}"] = array
        for name, array in self.ffn_head.params.items():
            params[f"head.{name}"] = array
        return params

    def fingerprint(self) -> str:
        """Content hash of config, tokenizer, and every parameter tensor."""
        digest = hashlib.sha256()
        digest.update(json.dumps(asdict(self.config), sort_keys=True).encode())
        digest.update(json.dumps(self.tokenizer.to_dict(), sort_keys=True).encode())
        digest.update(self.ffn_head.kind.encode())
        for name in sorted(self.parameters()):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(self.parameters()[name]).tobytes())
        return digest.hexdigest()

    # -- encoding -----------------------------------------------------------

    def _encoder(self, side: str) -> TokenEncoder:
        if side == CONTEXT:
            return self.context_encoder
        if side == DEFINITION:
            return self.definition_encoder
        raise ArgumentError(f"unknown encoder side {side!r}")

    def encode_batch(self, side: str, id_sequences: Sequence[Sequence[int]], counter=None):
        """Encode already-tokenized id sequences; returns (states, mask,
        cache).  Counts one encoder call per sequence."""
        ids, mask = nn.pad_batch(id_sequences, self.tokenizer.pad_id)
        states, cache = self._encoder(side).forward(ids, mask)
        if counter is not None:
            counter.record(side, len(id_sequences))
        return states, mask, cache

    def encode_tokens(self, side: str, words: Sequence[str], counter=None) -> TokenEncoding:
        """Contextualize one word sequence; exposes the word -> sub-token map
        so word-level spans can be pooled."""
        if not words:
            raise ArgumentError("cannot encode an empty token sequence")
        sub_ids, spans = self.tokenizer.encode_words(words)
        if len(sub_ids) > self.config.max_sequence_length:
            raise TruncationError(
                f"{len(words)} words expand to {len(sub_ids)} sub-tokens, over the "
                f"maximum of {self.config.max_sequence_length}; refusing to truncate"
            )
        states, _, _ = self.encode_batch(side, [sub_ids], counter=counter)
        return TokenEncoding(states[0], tuple(spans), tuple(sub_ids))

    def pool_mention(self, encoding: TokenEncoding, span: tuple[int, int]) -> MentionVector:
        """Arithmetic mean of the sub-token vectors covering the inclusive
        word span."""
        lo, hi = encoding.sub_range(*span)
        values = encoding.vectors[lo : hi + 1].mean(axis=0)
        return MentionVector(values, provenance=f"span[{span[0]},{span[1]}]")

    def mention_vector(self, sentence: Sequence[str], span: tuple[int, int],
                       counter=None) -> MentionVector:
        encoding = self.encode_tokens(CONTEXT, sentence, counter=counter)
        return self.pool_mention(encoding, span)

    def encode_definition(self, definition: Sequence[str], counter=None) -> DefinitionVector:
        """Head-transformed mean over every definition sub-token."""
        if not definition:
            raise ArgumentError("cannot encode an empty definition")
        encoding = self.encode_tokens(DEFINITION, definition, counter=counter)
        transformed, _ = self.ffn_head.forward(encoding.vectors)
        values = transformed.mean(axis=0)
        return DefinitionVector(values, provenance=" ".join(definition[:6]))

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        """Write a self-describing archive: config, tokenizer table, both
        encoders' parameters, format version."""
        path = Path(path)
        meta = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "config": asdict(self.config),
            "tokenizer": self.tokenizer.to_dict(),
            "head_kind": self.ffn_head.kind,
        }
        arrays = {f"param/{k}": v for k, v in self.parameters().items()}
        np.savez(path, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path) -> "DualEncoderModel":
        path = Path(path)
        if not path.exists():
            raise InputNotFoundError(f"checkpoint not found: {path}")
        with np.load(path, allow_pickle=False) as archive:
            try:
                meta = json.loads(str(archive["meta"]))
            except KeyError:
                raise ValidationError(f"{path} is not a model checkpoint") from None
            version = meta.get("format_version")
            if version != CHECKPOINT_FORMAT_VERSION:
                raise ValidationError(
                    f"checkpoint format version {version!r} does not match "
                    f"supported version {CHECKPOINT_FORMAT_VERSION}"
                )
            config = EncoderConfig(**meta["config"])
            tokenizer = tokenizer_from_dict(meta["tokenizer"])
            params = {
                name[len("param/"):]: archive[name]
                for name in archive.files
                if name.startswith("param/")
            }
        ctx = {k[len("ctx."):]: params[k] for k in params if k.startswith("ctx.")}
        defn = {k[len("defn."):]: params[k] for k in params if k.startswith("defn.")}
        head_params = {k[len("head."):]: params[k] for k in params if k.startswith("head.")}
        if meta.get("head_kind") == "identity":
            head = IdentityHead()
        else:
            head = TwoLayerHead(head_params)
        return cls(config, tokenizer, TokenEncoder(config, ctx), TokenEncoder(config, defn), head)
