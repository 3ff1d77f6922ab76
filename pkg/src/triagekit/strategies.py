"""The three variable-length ingestion strategies.

* ``brute_force``: per-document classification with modal-vote aggregation
  over the instance (pooled head).
* ``concat_512`` / ``concat_4096``: reverse-chronological concatenation
  truncated to the model's window (pooled head).
* ``segment_batch``: fixed-size non-overlapping segments encoded as one
  batch, re-flattened into sequence order, classified by the label-aware
  attention head.

Vote aggregation emits both signals: votes decide the recommended team (the
recommendation's probability vector is the vote-share distribution, so its
argmax is the modal team), and the mean per-document distribution is reported
on the VoteRecord.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .corpus.types import Instance, NUM_TEAMS, TeamLabel
from .encoder import (
    HEAD_LABEL_ATTENTION,
    HEAD_POOLED,
    TriageEncoder,
    TriageRecommendation,
    classify_label_attention,
    classify_pooled,
    pad_batch,
    pool,
)
from .errors import UnsupportedHeadError
from .textpipe import SegmentBatch, TokenSequence, Tokenizer, assemble_instance, segment, truncate

log = logging.getLogger(__name__)

STRATEGY_BRUTE_FORCE = "brute_force"
STRATEGY_CONCAT_512 = "concat_512"
STRATEGY_CONCAT_4096 = "concat_4096"
STRATEGY_SEGMENT_BATCH = "segment_batch"
STRATEGIES = (
    STRATEGY_BRUTE_FORCE,
    STRATEGY_CONCAT_512,
    STRATEGY_CONCAT_4096,
    STRATEGY_SEGMENT_BATCH,
)

BRUTE_DOC_MAX_LEN = 512
CONCAT_MAX_LEN = {STRATEGY_CONCAT_512: 512, STRATEGY_CONCAT_4096: 4096}
DEFAULT_SEGMENT_SIZE = 512
SEGMENT_SIZE_GRID = (128, 256, 512)
MAX_TOTAL_TOKENS = 12_000  # memory-derived cap on the segment-batch input


@dataclass(frozen=True)
class VoteRecord:
    votes: list[tuple[int, TeamLabel, np.ndarray]]  # (doc index, vote, doc distribution)
    modal_team: TeamLabel
    tie_broken: bool
    mean_probabilities: np.ndarray  # mean per-document distribution

    def as_dict(self) -> dict:
        return {
            "votes": [
                {
                    "doc_index": i,
                    "team": team.name,
                    "probabilities": {t.name: float(p[t]) for t in TeamLabel},
                }
                for i, team, p in self.votes
            ],
            "modal_team": self.modal_team.name,
            "tie_broken": self.tie_broken,
            "mean_probabilities": {
                t.name: float(self.mean_probabilities[t]) for t in TeamLabel
            },
        }


def _require_head(model: TriageEncoder, kind: str, strategy: str) -> None:
    if model.config.head_kind != kind:
        raise UnsupportedHeadError(
            f"{strategy} requires a model with the {kind} head, "
            f"got {model.config.head_kind}"
        )


def document_sequence(text: str, tokenizer: Tokenizer, max_len: int = BRUTE_DOC_MAX_LEN) -> TokenSequence:
    """Single-document input: sequence start, document tokens, truncated."""
    ids = (tokenizer.seq_start_id, *tokenizer.encode(text).ids)
    return truncate(TokenSequence(ids=ids), max_len)


def _pooled_logits(model: TriageEncoder, sequences: list[TokenSequence], pad_id: int) -> torch.Tensor:
    ids, mask = pad_batch(sequences, pad_id)
    hidden = model(ids, mask)
    return classify_pooled(model, pool(hidden, mask, model.config.pooling))


def _softmax_probs(logits: torch.Tensor) -> np.ndarray:
    probs = torch.softmax(logits.detach().double(), dim=-1).cpu().numpy()
    return probs / probs.sum(axis=-1, keepdims=True)


def infer_brute_force(
    instance: Instance, model: TriageEncoder, tokenizer: Tokenizer
) -> tuple[TriageRecommendation, VoteRecord]:
    """Method A: one vote per document, recommendation is the modal vote.

    Ties are broken by the highest summed probability mass for the tied teams
    across documents, then by lowest team id; ``tie_broken`` records that the
    rule fired.
    """
    _require_head(model, HEAD_POOLED, STRATEGY_BRUTE_FORCE)
    if not instance.documents:
        raise ValueError(
            f"instance {instance.instance_id} has no documents; "
            "brute-force voting needs at least one (route to concat/segment instead)"
        )
    model.eval()
    votes: list[tuple[int, TeamLabel, np.ndarray]] = []
    with torch.no_grad():
        for i, doc in enumerate(instance.documents):
            seq = document_sequence(doc.text, tokenizer)
            probs = _softmax_probs(_pooled_logits(model, [seq], tokenizer.pad_id))[0]
            votes.append((i, TeamLabel(int(probs.argmax())), probs))

    counts = np.zeros(NUM_TEAMS)
    mass = np.zeros(NUM_TEAMS)
    for _, team, probs in votes:
        counts[int(team)] += 1
        mass += probs
    top = counts.max()
    tied = [t for t in range(NUM_TEAMS) if counts[t] == top]
    tie_broken = len(tied) > 1
    if tie_broken:
        best_mass = max(mass[t] for t in tied)
        tied = [t for t in tied if mass[t] == best_mass]
    modal = TeamLabel(min(tied))

    vote_shares = counts / counts.sum()
    mean_probs = mass / len(votes)
    record = VoteRecord(
        votes=votes,
        modal_team=modal,
        tie_broken=tie_broken,
        mean_probabilities=mean_probs,
    )
    recommendation = TriageRecommendation(
        probabilities=vote_shares, predicted=modal
    )
    return recommendation, record


def infer_concat_truncate(
    instance: Instance,
    model: TriageEncoder,
    tokenizer: Tokenizer,
    max_len: int = 512,
) -> TriageRecommendation:
    """Method B: assemble reverse-chronologically, truncate, classify pooled."""
    _require_head(model, HEAD_POOLED, "concat_truncate")
    if max_len > model.config.max_positions:
        raise ValueError(
            f"max_len {max_len} exceeds model max positions {model.config.max_positions}"
        )
    seq = truncate(assemble_instance(instance, tokenizer), max_len)
    model.eval()
    with torch.no_grad():
        logits = _pooled_logits(model, [seq], tokenizer.pad_id)
    probs = _softmax_probs(logits)[0]
    return TriageRecommendation(probabilities=probs, predicted=TeamLabel(int(probs.argmax())))


def segment_batch_states(
    model: TriageEncoder, batch: SegmentBatch
) -> tuple[torch.Tensor, torch.Tensor]:
    """Encode the segments as one batch and re-flatten the per-token states
    into original sequence order, dropping pad positions. Returns
    (hidden (1, n, d), mask (1, n))."""
    ids = torch.from_numpy(batch.segments)
    mask = torch.from_numpy(batch.pad_mask)
    hidden = model(ids, mask)           # (k, s, d)
    flat = hidden[mask]                 # (n, d), row-major = sequence order
    return flat.unsqueeze(0), torch.ones(1, flat.shape[0], dtype=torch.bool)


def prepare_segment_batch(
    instance: Instance,
    tokenizer: Tokenizer,
    segment_size: int = DEFAULT_SEGMENT_SIZE,
    max_total_tokens: int = MAX_TOTAL_TOKENS,
) -> SegmentBatch:
    seq = assemble_instance(instance, tokenizer)
    if len(seq) > max_total_tokens:
        log.warning(
            "instance %s has %d tokens; truncating to the %d-token cap",
            instance.instance_id, len(seq), max_total_tokens,
        )
        seq = truncate(seq, max_total_tokens)
    return segment(seq, segment_size, tokenizer.pad_id)


def infer_segment_batch(
    instance: Instance,
    model: TriageEncoder,
    tokenizer: Tokenizer,
    segment_size: int = DEFAULT_SEGMENT_SIZE,
    max_total_tokens: int = MAX_TOTAL_TOKENS,
) -> TriageRecommendation:
    """Method C: segment, encode as a batch, classify with label attention.

    The recommendation carries the full (T, n) per-label attention over the
    de-segmented token positions (pads dropped).
    """
    _require_head(model, HEAD_LABEL_ATTENTION, STRATEGY_SEGMENT_BATCH)
    if segment_size > model.config.max_positions:
        raise ValueError(
            f"segment_size {segment_size} exceeds model max positions "
            f"{model.config.max_positions}"
        )
    batch = prepare_segment_batch(instance, tokenizer, segment_size, max_total_tokens)
    model.eval()
    with torch.no_grad():
        hidden, mask = segment_batch_states(model, batch)
        logits, attention = classify_label_attention(model, hidden, mask)
    probs = _softmax_probs(logits)[0]
    return TriageRecommendation(
        probabilities=probs,
        predicted=TeamLabel(int(probs.argmax())),
        per_label_attention=attention[0].detach().cpu().numpy(),
    )


def infer(
    strategy: str,
    instance: Instance,
    model: TriageEncoder,
    tokenizer: Tokenizer,
    segment_size: int = DEFAULT_SEGMENT_SIZE,
) -> tuple[TriageRecommendation, VoteRecord | None]:
    """Uniform strategy dispatch used by the CLI and service."""
    if strategy == STRATEGY_BRUTE_FORCE:
        rec, votes = infer_brute_force(instance, model, tokenizer)
        return rec, votes
    if strategy in CONCAT_MAX_LEN:
        return infer_concat_truncate(instance, model, tokenizer, CONCAT_MAX_LEN[strategy]), None
    if strategy == STRATEGY_SEGMENT_BATCH:
        return infer_segment_batch(instance, model, tokenizer, segment_size), None
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")


# --- training example builders -----------------------------------------------

def document_examples(
    instances: list[Instance],
    tokenizer: Tokenizer,
    max_len: int = BRUTE_DOC_MAX_LEN,
    per_class_fraction: float = 0.2,
    seed: int = 0,
) -> list[tuple[TokenSequence, int]]:
    """Per-document training examples for method A, labeled with the
    instance's accepted team and subsampled per class to a fraction of the
    total document pool (mirrors the balanced sub-sampling of the
    document-level training set)."""
    by_class: dict[int, list[tuple[TokenSequence, int]]] = {int(t): [] for t in TeamLabel}
    total = 0
    for inst in instances:
        if inst.label is None:
            continue
        for doc in inst.documents:
            by_class[int(inst.label)].append(
                (document_sequence(doc.text, tokenizer, max_len), int(inst.label))
            )
            total += 1
    cap = max(1, round(per_class_fraction * total))
    rng = np.random.default_rng(seed)
    examples: list[tuple[TokenSequence, int]] = []
    for label in sorted(by_class):
        pool_ = by_class[label]
        if len(pool_) > cap:
            idx = rng.choice(len(pool_), size=cap, replace=False)
            pool_ = [pool_[i] for i in sorted(idx)]
        examples.extend(pool_)
    return examples


def instance_examples(
    instances: list[Instance], tokenizer: Tokenizer, max_len: int
) -> list[tuple[TokenSequence, int]]:
    """Whole-instance training examples for method B."""
    return [
        (truncate(assemble_instance(inst, tokenizer), max_len), int(inst.label))
        for inst in instances
        if inst.label is not None
    ]


def segment_examples(
    instances: list[Instance],
    tokenizer: Tokenizer,
    segment_size: int = DEFAULT_SEGMENT_SIZE,
    max_total_tokens: int = MAX_TOTAL_TOKENS,
) -> list[tuple[SegmentBatch, int]]:
    """Whole-instance segment batches for method C."""
    return [
        (
            prepare_segment_batch(inst, tokenizer, segment_size, max_total_tokens),
            int(inst.label),
        )
        for inst in instances
        if inst.label is not None
    ]


def make_pooled_forward(pad_id: int):
    """forward_fn for train.fit over TokenSequence inputs (methods A and B)."""

    def forward(model: TriageEncoder, sequences: list[TokenSequence]) -> torch.Tensor:
        return _pooled_logits(model, sequences, pad_id)

    return forward


def make_segment_forward():
    """forward_fn for train.fit over SegmentBatch inputs (method C)."""

    def forward(model: TriageEncoder, batches: list[SegmentBatch]) -> torch.Tensor:
        logits_rows = []
        for batch in batches:
            hidden, mask = segment_batch_states(model, batch)
            logits, _ = classify_label_attention(model, hidden, mask)
            logits_rows.append(logits[0])
        return torch.stack(logits_rows)

    return forward


def training_config_for(strategy: str, **overrides):
    """Table-3-style defaults per strategy; callers may override any field."""
    from .train import TrainConfig

    if strategy == STRATEGY_BRUTE_FORCE or strategy == STRATEGY_CONCAT_512:
        base = dict(learning_rate=1e-5, batch_size=8, grad_accumulation_steps=2)
    elif strategy == STRATEGY_CONCAT_4096:
        base = dict(learning_rate=1e-5, batch_size=1, grad_accumulation_steps=16)
    elif strategy == STRATEGY_SEGMENT_BATCH:
        base = dict(learning_rate=1e-4, batch_size=1, grad_accumulation_steps=16)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    base.update(overrides)
    return TrainConfig(**base)
