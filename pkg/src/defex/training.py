"""Contrastive training of the dual encoder.

Each training instance contributes a hinge term per negative definition:
``max(0, margin - (cos(anchor, positive) - cos(anchor, negative)))``,
averaged over the instance's negatives and then over the batch.  Gradients
are computed analytically through cosine, pooling, the definition head, and
both encoders; :func:`check_gradients` validates them against central
finite differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import AlignmentCorpus, AlignmentInstance, Tokens
from .encoder import CONTEXT, DEFINITION, DualEncoderModel, cosine
from .errors import (
    ArgumentError,
    ConfigurationError,
    DegenerateVectorError,
    NumericalError,
    TruncationError,
)
from .nn import Adam

# one batch item: an instance plus its sampled negatives [(definition_id, tokens), ...]
BatchItem = tuple[AlignmentInstance, Sequence[tuple[str, Tokens]]]
NegativeSampler = Callable[[str, np.random.Generator], list[tuple[str, Tokens]]]


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 0.2
    n_negatives: int = 2
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 7e-4
    seed: int = 0
    strong_negative_ratio: float = 0.0

    def __post_init__(self):
        if self.margin <= 0:
            raise ArgumentError("margin must be positive")
        if self.n_negatives < 1:
            raise ArgumentError("n_negatives must be at least 1")
        if self.epochs < 1:
            raise ArgumentError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be at least 1")
        if not (0.0 <= self.strong_negative_ratio <= 1.0):
            raise ArgumentError("strong_negative_ratio must be in [0, 1]")


@dataclass(frozen=True)
class WarmConfig(TrainConfig):
    """Fine-tuning configuration: half of the negatives come from the
    retrieved strong pool by default, and the step size is smaller than in
    pretraining so the fine-tune cannot wash out what the encoders already
    know about out-of-target senses."""

    strong_negative_ratio: float = 0.5
    learning_rate: float = 3e-4


@dataclass(frozen=True)
class TrainReport:
    epoch_losses: tuple[float, ...]
    epoch_seconds: tuple[float, ...]
    checkpoint_path: str | None = None

    def __post_init__(self):
        losses = np.asarray(self.epoch_losses, dtype=np.float64)
        if losses.size and (not np.all(np.isfinite(losses)) or np.any(losses < 0)):
            raise NumericalError("epoch losses must be finite and non-negative")


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def ranking_loss(anchor, positive, negatives, margin: float) -> float:
    """Reference evaluation of the per-instance hinge objective.

    This is the simple pairwise-cosine formulation; the training loop uses a
    batched path that must agree with it (see the tests).
    """
    if margin <= 0:
        raise ArgumentError("margin must be positive")
    negatives = list(negatives)
    if not negatives:
        raise ArgumentError("at least one negative definition vector is required")
    pos = cosine(anchor, positive)
    total = 0.0
    for neg in negatives:
        total += max(0.0, margin - (pos - cosine(anchor, neg)))
    return total / len(negatives)


# ---------------------------------------------------------------------------
# negative sampling
# ---------------------------------------------------------------------------


def sample_negatives(definitions: Mapping[str, Tokens], positive_id: str, n: int,
                     rng) -> list[tuple[str, Tokens]]:
    """Draw ``n`` distinct definitions uniformly without replacement,
    excluding the positive.  ``rng`` may be a Generator or a seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ids = sorted(k for k in definitions if k != positive_id)
    if len(ids) < n:
        raise ConfigurationError(
            f"need {n} negative definitions but only {len(ids)} are available "
            f"besides {positive_id!r}"
        )
    chosen = rng.choice(len(ids), size=n, replace=False)
    return [(ids[i], definitions[ids[i]]) for i in chosen]


def uniform_negative_sampler(definitions: Mapping[str, Tokens], n: int) -> NegativeSampler:
    def sampler(positive_id: str, rng: np.random.Generator):
        return sample_negatives(definitions, positive_id, n, rng)

    return sampler


# ---------------------------------------------------------------------------
# batched forward/backward
# ---------------------------------------------------------------------------


@dataclass
class PreparedBatch:
    """Tokenized batch: context sequences with mention sub-token ranges, and
    per instance the positive definition followed by its negatives."""

    ctx_seqs: list[list[int]]
    span_ranges: list[tuple[int, int]]
    def_seqs: list[list[int]]
    n_negatives: int

    @property
    def size(self) -> int:
        return len(self.ctx_seqs)


def prepare_batch(model: DualEncoderModel, items: Sequence[BatchItem]) -> PreparedBatch:
    if not items:
        raise ArgumentError("cannot prepare an empty batch")
    n_negatives = len(items[0][1])
    if n_negatives < 1:
        raise ArgumentError("each batch item needs at least one negative")
    max_len = model.config.max_sequence_length
    ctx_seqs, span_ranges, def_seqs = [], [], []
    for inst, negatives in items:
        if len(negatives) != n_negatives:
            raise ArgumentError("all batch items must carry the same negative count")
        sub_ids, spans = model.tokenizer.encode_words(inst.sentence)
        if len(sub_ids) > max_len:
            raise TruncationError(
                f"sentence expands to {len(sub_ids)} sub-tokens (max {max_len})"
            )
        lo = spans[inst.start][0]
        hi = spans[inst.end][1]
        ctx_seqs.append(sub_ids)
        span_ranges.append((lo, hi))
        for tokens in [inst.definition] + [tokens for _, tokens in negatives]:
            ids, _ = model.tokenizer.encode_words(tokens)
            if len(ids) > max_len:
                raise TruncationError(
                    f"definition expands to {len(ids)} sub-tokens (max {max_len})"
                )
            def_seqs.append(ids)
    return PreparedBatch(ctx_seqs, span_ranges, def_seqs, n_negatives)


def _batch_vectors(model: DualEncoderModel, batch: PreparedBatch, keep_caches: bool):
    """Anchors and definition vectors for a prepared batch, plus everything
    needed to push gradients back."""
    states_c, mask_c, cache_c = model.encode_batch(CONTEXT, batch.ctx_seqs)
    states_d, mask_d, cache_d = model.encode_batch(DEFINITION, batch.def_seqs)
    b = batch.size
    span_mask = np.zeros_like(mask_c)
    for i, (lo, hi) in enumerate(batch.span_ranges):
        span_mask[i, lo : hi + 1] = 1.0
    counts_c = span_mask.sum(axis=1)
    anchors = (span_mask[:, :, None] * states_c).sum(axis=1) / counts_c[:, None]
    transformed, head_cache = model.ffn_head.forward(states_d)
    counts_d = mask_d.sum(axis=1)
    defvecs = (mask_d[:, :, None] * transformed).sum(axis=1) / counts_d[:, None]
    defvecs = defvecs.reshape(b, 1 + batch.n_negatives, -1)
    caches = (cache_c, cache_d, head_cache, span_mask, counts_c, mask_d, counts_d) if keep_caches else None
    return anchors, defvecs, caches


def batch_loss(model: DualEncoderModel, batch: PreparedBatch, margin: float,
               loss_scale: float = 1.0):
    """Forward-only batch loss; returns (loss, diagnostics)."""
    anchors, defvecs, _ = _batch_vectors(model, batch, keep_caches=False)
    loss, _, _, diag = _hinge_terms(anchors, defvecs, margin, loss_scale)
    return loss, diag


def _hinge_terms(anchors, defvecs, margin, loss_scale):
    positives = defvecs[:, 0, :]
    negatives = defvecs[:, 1:, :]
    norm_a = np.linalg.norm(anchors, axis=1)
    norm_p = np.linalg.norm(positives, axis=1)
    norm_n = np.linalg.norm(negatives, axis=2)
    if np.any(norm_a == 0.0) or np.any(norm_p == 0.0) or np.any(norm_n == 0.0):
        raise DegenerateVectorError("zero vector reached the ranking loss")
    cos_pos = np.einsum("bd,bd->b", anchors, positives) / (norm_a * norm_p)
    cos_neg = np.einsum("bd,bkd->bk", anchors, negatives) / (norm_a[:, None] * norm_n)
    gaps = cos_pos[:, None] - cos_neg
    hinge = margin - gaps
    active = hinge > 0.0
    b, k = cos_neg.shape
    # np.maximum propagates non-finite hinge values into the loss, so the
    # training loop's finiteness check can name the offending batch
    loss = float(loss_scale * np.maximum(hinge, 0.0).sum() / (b * k))
    diag = {"cos_pos": cos_pos, "cos_neg": cos_neg, "gaps": gaps, "active": active}
    geometry = (positives, negatives, norm_a, norm_p, norm_n, cos_pos, cos_neg)
    return loss, active, geometry, diag


def loss_and_gradients(model: DualEncoderModel, batch: PreparedBatch, margin: float,
                       loss_scale: float = 1.0):
    """Batch loss plus analytic gradients for every trainable parameter.

    Returns ``(loss, grads, diagnostics)`` where ``grads`` is keyed like
    ``model.parameters()``.
    """
    anchors, defvecs, caches = _batch_vectors(model, batch, keep_caches=True)
    cache_c, cache_d, head_cache, span_mask, counts_c, mask_d, counts_d = caches
    loss, active, geometry, diag = _hinge_terms(anchors, defvecs, margin, loss_scale)
    positives, negatives, norm_a, norm_p, norm_n, cos_pos, cos_neg = geometry
    b, k = cos_neg.shape
    coeff = loss_scale / (b * k)
    dcos_pos = -coeff * active.sum(axis=1).astype(np.float64)
    dcos_neg = coeff * active.astype(np.float64)

    # d cos(u, v) / du = v / (|u||v|) - cos * u / |u|^2  (and symmetrically in v)
    inv_ap = 1.0 / (norm_a * norm_p)
    inv_an = 1.0 / (norm_a[:, None] * norm_n)
    inv_a2 = 1.0 / (norm_a * norm_a)
    danchors = dcos_pos[:, None] * (positives * inv_ap[:, None] - cos_pos[:, None] * anchors * inv_a2[:, None])
    danchors += np.einsum(
        "bk,bkd->bd", dcos_neg, negatives * inv_an[:, :, None]
    ) - (dcos_neg * cos_neg).sum(axis=1)[:, None] * anchors * inv_a2[:, None]
    dpositives = dcos_pos[:, None] * (
        anchors * inv_ap[:, None] - cos_pos[:, None] * positives / (norm_p * norm_p)[:, None]
    )
    dnegatives = dcos_neg[:, :, None] * (
        anchors[:, None, :] * inv_an[:, :, None]
        - cos_neg[:, :, None] * negatives / (norm_n * norm_n)[:, :, None]
    )

    d_defvecs = np.concatenate([dpositives[:, None, :], dnegatives], axis=1)
    d_defvecs = d_defvecs.reshape(-1, d_defvecs.shape[-1])
    d_transformed = mask_d[:, :, None] * (d_defvecs / counts_d[:, None])[:, None, :]
    d_states_d, head_grads = model.ffn_head.backward(d_transformed, head_cache)
    d_states_c = span_mask[:, :, None] * (danchors / counts_c[:, None])[:, None, :]

    grads: dict[str, np.ndarray] = {}
    for name, g in model.context_encoder.backward(d_states_c, cache_c).items():
        grads[f"ctx.{name}"] = g
    for name, g in model.definition_encoder.backward(d_states_d, cache_d).items():
        grads[f"defn.{name}"] = g
    for name, g in head_grads.items():
        grads[f"head.{name}"] = g
    return loss, grads, diag


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

_LOOP_SALT = 0x7A17


def _loop_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) % 2**32, _LOOP_SALT])


def run_training_loop(model: DualEncoderModel, instances: Sequence[AlignmentInstance],
                      sampler: NegativeSampler, config: TrainConfig) -> TrainReport:
    """The shared optimization loop: shuffled mini-batches, fresh negatives
    every epoch, adaptive-moment updates on both encoders and the head, and
    the last state kept (no dev-set selection)."""
    if not instances:
        raise ConfigurationError("no training instances: nothing to train on")
    adam = Adam(model.parameters(), lr=config.learning_rate)
    rng = _loop_rng(config.seed)
    losses, seconds = [], []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(len(instances))
        epoch_loss = 0.0
        for batch_no in range(0, len(order), config.batch_size):
            batch_indices = order[batch_no : batch_no + config.batch_size]
            items = []
            for i in batch_indices:
                inst = instances[int(i)]
                items.append((inst, sampler(inst.definition_id, rng)))
            batch = prepare_batch(model, items)
            loss, grads, _ = loss_and_gradients(model, batch, config.margin)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss in epoch {epoch}, batch starting at {batch_no}"
                )
            adam.step(grads)
            epoch_loss += loss * len(batch_indices)
        losses.append(epoch_loss / len(instances))
        seconds.append(time.perf_counter() - started)
    return TrainReport(tuple(losses), tuple(seconds))


def pretrain(model: DualEncoderModel, corpus: AlignmentCorpus,
             config: TrainConfig) -> tuple[DualEncoderModel, TrainReport]:
    """Offline contrastive pretraining over the full alignment corpus with
    uniformly sampled negatives."""
    if len(corpus.instances) == 0:
        raise ConfigurationError("alignment corpus has no instances")
    if len(corpus.definitions) < 2:
        raise ConfigurationError("alignment corpus needs at least 2 definitions")
    sampler = uniform_negative_sampler(corpus.definitions, config.n_negatives)
    report = run_training_loop(model, corpus.instances, sampler, config)
    return model, report


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def sample_kink_free_batch(model: DualEncoderModel, corpus: AlignmentCorpus,
                           config: TrainConfig, rng, kink_tol: float = 1e-3,
                           max_tries: int = 100) -> list[BatchItem]:
    """Sample a batch whose hinge terms all sit safely away from the kink,
    so finite differences are trustworthy."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    sampler = uniform_negative_sampler(corpus.definitions, config.n_negatives)
    for _ in range(max_tries):
        idx = rng.choice(len(corpus.instances), size=min(config.batch_size, len(corpus.instances)), replace=False)
        items = [
            (corpus.instances[int(i)], sampler(corpus.instances[int(i)].definition_id, rng))
            for i in idx
        ]
        batch = prepare_batch(model, items)
        _, diag = batch_loss(model, batch, config.margin)
        if np.all(np.abs(config.margin - diag["gaps"]) >= kink_tol):
            return items
    raise ConfigurationError(
        f"could not sample a kink-free batch in {max_tries} tries; "
        "loosen kink_tol or change the corpus"
    )


def check_gradients(model: DualEncoderModel, items: Sequence[BatchItem], margin: float,
                    n_coordinates: int = 200, step: float = 1e-4, seed: int = 0,
                    loss_scale: float = 1.0) -> float:
    """Compare analytic parameter gradients against central finite
    differences on a random coordinate subset; returns the max relative
    error.  Diagnostic only: never raises on disagreement.
    """
    batch = prepare_batch(model, items)
    _, grads, _ = loss_and_gradients(model, batch, margin, loss_scale=loss_scale)
    params = model.parameters()
    coords = []
    for name in sorted(params):
        for flat in range(params[name].size):
            coords.append((name, flat))
    rng = np.random.default_rng(seed)
    if len(coords) > n_coordinates:
        chosen = rng.choice(len(coords), size=n_coordinates, replace=False)
        coords = [coords[int(i)] for i in chosen]
    worst = 0.0
    for name, flat in coords:
        array = params[name]
        original = array.flat[flat]
        h = step * max(1.0, abs(original))
        array.flat[flat] = original + h
        plus, _ = batch_loss(model, batch, margin, loss_scale=loss_scale)
        array.flat[flat] = original - h
        minus, _ = batch_loss(model, batch, margin, loss_scale=loss_scale)
        array.flat[flat] = original
        numeric = (plus - minus) / (2.0 * h)
        analytic = grads[name].flat[flat]
        scale = max(abs(analytic), abs(numeric))
        if scale < 1e-12:
            continue
        worst = max(worst, abs(analytic - numeric) / max(scale, 1e-8))
    return worst
