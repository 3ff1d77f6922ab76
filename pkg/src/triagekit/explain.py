"""Presentation-layer artifacts: token-level attention evidence for one
instance, and a planar projection of the training-instance embedding space
with query placement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .corpus.types import Instance, TeamLabel
from .encoder import (
    HEAD_LABEL_ATTENTION,
    TriageEncoder,
    TriageRecommendation,
    classify_label_attention,
)
from .errors import UnsupportedHeadError
from .strategies import (
    DEFAULT_SEGMENT_SIZE,
    MAX_TOTAL_TOKENS,
    prepare_segment_batch,
    segment_batch_states,
)
from .textpipe import Tokenizer, clean_text

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TokenSpan:
    doc_index: int      # chronological index into instance.documents
    char_start: int     # offsets into the cleaned document text
    char_end: int
    token_index: int    # position in the assembled (reverse-chronological) sequence
    weight: float       # raw soft-maxed attention weight
    display_weight: float  # min-max rescaled per instance, for rendering only

    def as_dict(self) -> dict:
        return {
            "doc_index": self.doc_index,
            "char_start": self.char_start,
            "char_end": self.char_end,
            "token_index": self.token_index,
            "weight": self.weight,
            "display_weight": self.display_weight,
        }


@dataclass
class ExplanationBundle:
    instance_id: str
    predicted: TeamLabel
    probabilities: np.ndarray
    label: TeamLabel              # whose attention row the spans carry
    spans: list[TokenSpan]
    special_token_weight: float   # mass on sequence-start/separator positions
    normalization: str = "weights are soft-maxed per label over all unmasked positions"

    def as_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "instance_id": self.instance_id,
            "predicted": self.predicted.name,
            "probabilities": {t.name: float(self.probabilities[t]) for t in TeamLabel},
            "label": self.label.name,
            "spans": [s.as_dict() for s in self.spans],
            "special_token_weight": self.special_token_weight,
            "normalization": self.normalization,
        }


def explain_instance(
    instance: Instance,
    model: TriageEncoder,
    tokenizer: Tokenizer,
    segment_size: int = DEFAULT_SEGMENT_SIZE,
    label: TeamLabel | None = None,
    max_total_tokens: int = MAX_TOTAL_TOKENS,
) -> ExplanationBundle:
    """Run the segment-batch path and map one label's attention row back to
    (document, character range) spans.

    Separator and sequence-start positions are excluded from spans; their
    total mass is reported separately so span weights plus
    ``special_token_weight`` sum to 1. ``label`` defaults to the predicted
    team.
    """
    if model.config.head_kind != HEAD_LABEL_ATTENTION:
        raise UnsupportedHeadError("explanations require the label-attention head")
    batch = prepare_segment_batch(instance, tokenizer, segment_size, max_total_tokens)
    model.eval()
    with torch.no_grad():
        hidden, mask = segment_batch_states(model, batch)
        logits, attention = classify_label_attention(model, hidden, mask)
    probs = torch.softmax(logits[0].double(), dim=-1).cpu().numpy()
    probs = probs / probs.sum()
    predicted = TeamLabel(int(probs.argmax()))
    target = predicted if label is None else label
    weights = attention[0, int(target)].cpu().numpy()  # (n,)
    n = weights.shape[0]

    # walk the assembled sequence: seq_start, newest doc, sep, next doc, ...
    spans: list[TokenSpan] = []
    special_mass = float(weights[0]) if n > 0 else 0.0
    pos = 1
    doc_count = len(instance.documents)
    for rev, doc in enumerate(reversed(instance.documents)):
        if pos >= n:
            break
        if rev > 0:
            special_mass += float(weights[pos])  # document separator
            pos += 1
            if pos >= n:
                break
        doc_index = doc_count - 1 - rev
        for _, start, end in tokenizer.encode_with_offsets(doc.text):
            if pos >= n:
                break
            spans.append(
                TokenSpan(
                    doc_index=doc_index,
                    char_start=start,
                    char_end=end,
                    token_index=pos,
                    weight=float(weights[pos]),
                    display_weight=0.0,
                )
            )
            pos += 1

    if spans:
        raw = np.array([s.weight for s in spans])
        lo, hi = float(raw.min()), float(raw.max())
        scale = (raw - lo) / (hi - lo) if hi > lo else np.ones_like(raw)
        spans = [
            TokenSpan(
                doc_index=s.doc_index,
                char_start=s.char_start,
                char_end=s.char_end,
                token_index=s.token_index,
                weight=s.weight,
                display_weight=float(scale[i]),
            )
            for i, s in enumerate(spans)
        ]

    bundle = ExplanationBundle(
        instance_id=instance.instance_id,
        predicted=predicted,
        probabilities=probs,
        label=target,
        spans=spans,
        special_token_weight=special_mass,
    )
    _validate_spans(bundle, instance)
    return bundle


def _validate_spans(bundle: ExplanationBundle, instance: Instance) -> None:
    cleaned = [clean_text(d.text) for d in instance.documents]
    for span in bundle.spans:
        text = cleaned[span.doc_index]
        if not (0 <= span.char_start < span.char_end <= len(text)):
            raise AssertionError(
                f"span {span.token_index} escapes document {span.doc_index}"
            )


def embed_training_set(
    instances: list[Instance],
    model: TriageEncoder,
    tokenizer: Tokenizer,
    segment_size: int = DEFAULT_SEGMENT_SIZE,
) -> np.ndarray:
    """One embedding per instance: the label-attention value vector of the
    predicted label from the segment-batch path. Deterministic."""
    if model.config.head_kind != HEAD_LABEL_ATTENTION:
        raise UnsupportedHeadError("instance embeddings require the label-attention head")
    model.eval()
    rows = []
    with torch.no_grad():
        for inst in instances:
            batch = prepare_segment_batch(inst, tokenizer, segment_size)
            hidden, mask = segment_batch_states(model, batch)
            logits, attention = classify_label_attention(model, hidden, mask)
            pred = int(logits[0].argmax())
            value = attention[0, pred] @ hidden[0]  # (d,)
            rows.append(value.cpu().numpy())
    return np.stack(rows)


# --- planar projection ---------------------------------------------------------

@dataclass
class ProjectionMap:
    points: list[tuple[str, float, float, int | None]]  # (instance_id, x, y, label)
    method: str
    metadata: dict = field(default_factory=dict)
    # fit internals kept for query projection; not serialized
    mean: np.ndarray | None = None
    components: np.ndarray | None = None      # (2, d), pca only
    embeddings: np.ndarray | None = None      # (n, d) training embeddings, tsne only
    coords: np.ndarray | None = None          # (n, 2)

    def as_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "metadata": self.metadata,
            "points": [
                {
                    "instance_id": pid,
                    "x": x,
                    "y": y,
                    "label": TeamLabel(lab).name if lab is not None else None,
                }
                for pid, x, y, lab in self.points
            ],
        }


def fit_projection(
    embeddings: np.ndarray,
    labels: list[int | None],
    instance_ids: list[str],
    method: str = "pca",
    seed: int = 0,
    perplexity: float = 30.0,
    iterations: int = 1000,
) -> ProjectionMap:
    """Project instance embeddings onto the plane.

    ``pca`` is exact and deterministic up to a fixed sign convention; ``tsne``
    runs seeded KL-divergence gradient descent and records the initial and
    final KL in the metadata.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3:
        raise ValueError("need an (n >= 3, d) embedding matrix")
    if not (len(labels) == len(instance_ids) == X.shape[0]):
        raise ValueError("labels and instance_ids must match the embedding rows")

    if method == "pca":
        mean = X.mean(axis=0)
        centered = X - mean
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        components = vt[:2]
        # sign convention: largest-magnitude loading positive
        for i in range(components.shape[0]):
            j = int(np.abs(components[i]).argmax())
            if components[i, j] < 0:
                components[i] = -components[i]
        coords = centered @ components.T
        var = coords.var(axis=0)
        metadata = {"seed": seed, "explained_variance": var.tolist()}
        pm = ProjectionMap(
            points=_points(instance_ids, coords, labels),
            method="pca",
            metadata=metadata,
            mean=mean,
            components=components,
            coords=coords,
        )
        return pm

    if method == "tsne":
        coords, initial_kl, final_kl = _tsne(X, perplexity, iterations, seed)
        metadata = {
            "seed": seed,
            "iterations": iterations,
            "perplexity": perplexity,
            "initial_kl": initial_kl,
            "final_kl": final_kl,
            "query_placement": "nearest training neighbour (approximate)",
        }
        return ProjectionMap(
            points=_points(instance_ids, coords, labels),
            method="tsne",
            metadata=metadata,
            embeddings=X,
            coords=coords,
        )

    raise ValueError(f"unknown projection method {method!r}")


def _points(ids, coords, labels):
    return [
        (pid, float(coords[i, 0]), float(coords[i, 1]),
         int(labels[i]) if labels[i] is not None else None)
        for i, pid in enumerate(ids)
    ]


def project_query(pmap: ProjectionMap, query: np.ndarray) -> tuple[float, float]:
    """Place a query embedding on a fitted map.

    PCA projects exactly; t-SNE has no out-of-sample map, so the query takes
    the planar coordinates of its nearest training embedding (flagged
    approximate in the map metadata).
    """
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if pmap.method == "pca":
        if pmap.components is None or q.shape[0] != pmap.components.shape[1]:
            raise ValueError("query dimension does not match the fitted map")
        xy = (q - pmap.mean) @ pmap.components.T
        return float(xy[0]), float(xy[1])
    if pmap.method == "tsne":
        if pmap.embeddings is None or q.shape[0] != pmap.embeddings.shape[1]:
            raise ValueError("query dimension does not match the fitted map")
        nearest = int(np.square(pmap.embeddings - q).sum(axis=1).argmin())
        return float(pmap.coords[nearest, 0]), float(pmap.coords[nearest, 1])
    raise ValueError(f"unknown projection method {pmap.method!r}")


# --- exact t-SNE (desk scale, O(n^2)) ----------------------------------------

def _pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    sq = np.square(X).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _conditional_probs(dist_row: np.ndarray, i: int, perplexity: float) -> np.ndarray:
    """Binary search the Gaussian bandwidth so the row entropy matches
    log(perplexity)."""
    target = np.log(perplexity)
    beta_lo, beta_hi = 1e-12, 1e12
    beta = 1.0
    d = np.delete(dist_row, i)
    for _ in range(64):
        p = np.exp(-d * beta)
        total = p.sum()
        if total <= 0:
            beta /= 2.0
            beta_hi = beta * 2.0
            continue
        p = p / total
        entropy = -(p * np.log(np.maximum(p, 1e-300))).sum()
        if abs(entropy - target) < 1e-5:
            break
        if entropy > target:
            beta_lo = beta
            beta = beta * 2.0 if beta_hi >= 1e12 else (beta + beta_hi) / 2.0
        else:
            beta_hi = beta
            beta = (beta + beta_lo) / 2.0
    row = np.zeros_like(dist_row)
    row[np.arange(len(dist_row)) != i] = p
    return row


def _joint_probs(X: np.ndarray, perplexity: float) -> np.ndarray:
    n = X.shape[0]
    dists = _pairwise_sq_dists(X)
    cond = np.zeros((n, n))
    for i in range(n):
        cond[i] = _conditional_probs(dists[i], i, min(perplexity, (n - 1) / 3.0))
    joint = (cond + cond.T) / (2.0 * n)
    return np.maximum(joint, 1e-12)


def _tsne(
    X: np.ndarray, perplexity: float, iterations: int, seed: int
) -> tuple[np.ndarray, float, float]:
    n = X.shape[0]
    P = _joint_probs(X, perplexity)
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    exaggeration, exag_until = 12.0, min(250, iterations // 4)
    lr = max(50.0, n / 12.0)

    def q_matrix(y):
        num = 1.0 / (1.0 + _pairwise_sq_dists(y))
        np.fill_diagonal(num, 0.0)
        return num, np.maximum(num / num.sum(), 1e-12)

    num, Q = q_matrix(Y)
    initial_kl = float((P * np.log(P / Q)).sum())

    for it in range(iterations):
        factor = exaggeration if it < exag_until else 1.0
        momentum = 0.5 if it < 250 else 0.8
        num, Q = q_matrix(Y)
        PQ = (factor * P - Q) * num
        grad = 4.0 * ((np.diag(PQ.sum(axis=1)) - PQ) @ Y)
        update = momentum * update - lr * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)

    _, Q = q_matrix(Y)
    final_kl = float((P * np.log(P / Q)).sum())
    return Y, initial_kl, final_kl
