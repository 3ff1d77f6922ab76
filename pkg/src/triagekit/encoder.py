"""Trainable transformer encoder with pooled and label-aware attention heads,
plus low-rank adapters on the attention projections.

The encoder is deliberately small (desk-scale defaults) but structurally
standard: learned token + absolute position embeddings, pre-norm blocks with
multi-head self-attention and a GELU feed-forward, and a final layer norm.
"""
from __future__ import annotations

import hashlib
import io as _io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus.types import NUM_TEAMS, TeamLabel
from .errors import StateError, UnsupportedHeadError

CHECKPOINT_FORMAT_VERSION = 1

HEAD_POOLED = "pooled_mlp"
HEAD_LABEL_ATTENTION = "label_attention"
POOL_SEQ_START = "seq_start"
POOL_MEAN = "mean"

LORA_TARGETS = ("query", "key", "value")
_TARGET_ATTRS = {"query": "q_proj", "key": "k_proj", "value": "v_proj"}


@dataclass
class ModelConfig:
    vocab_size: int
    hidden_dim: int = 128
    num_layers: int = 4
    num_heads: int = 4
    ff_dim: int = 256
    max_positions: int = 512
    dropout: float = 0.1
    num_labels: int = NUM_TEAMS
    head_kind: str = HEAD_POOLED
    pooling: str = POOL_SEQ_START
    use_positional: bool = True  # False makes the encoder permutation-equivariant

    def validate(self) -> None:
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError("hidden_dim must be divisible by num_heads")
        if self.head_kind not in (HEAD_POOLED, HEAD_LABEL_ATTENTION):
            raise ValueError(f"unknown head_kind {self.head_kind!r}")
        if self.pooling not in (POOL_SEQ_START, POOL_MEAN):
            raise ValueError(f"unknown pooling {self.pooling!r}")


@dataclass
class EncoderOutput:
    hidden: torch.Tensor  # (n, d) final-layer states for the unmasked tokens
    pooled: torch.Tensor  # (d,)


@dataclass(frozen=True)
class TriageRecommendation:
    probabilities: np.ndarray  # (T,)
    predicted: TeamLabel
    per_label_attention: np.ndarray | None = None  # (T, n)

    def __post_init__(self):
        total = float(self.probabilities.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total}, expected 1")
        # ties are broken deterministically upstream; predicted must attain the max
        if self.probabilities[int(self.predicted)] < self.probabilities.max() - 1e-12:
            raise ValueError("predicted team must attain the maximum probability")

    def as_dict(self) -> dict:
        return {
            "probabilities": {t.name: float(self.probabilities[t]) for t in TeamLabel},
            "predicted": self.predicted.name,
        }


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.o_proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        def split(t):
            return t.view(b, n, self.heads, self.head_dim).transpose(1, 2)
        q, k, v = split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        neg = torch.finfo(scores.dtype).min
        scores = scores.masked_fill(~key_mask[:, None, None, :], neg)
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.o_proj(out)


class EncoderBlock(nn.Module):
    def __init__(self, dim: int, heads: int, ff_dim: int, dropout: float):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads)
        self.ln2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(
            nn.Linear(dim, ff_dim), nn.GELU(), nn.Linear(ff_dim, dim)
        )
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        x = x + self.drop(self.attn(self.ln1(x), key_mask))
        x = x + self.drop(self.ff(self.ln2(x)))
        return x


class PooledHead(nn.Module):
    """Two-layer perceptron over the pooled sequence embedding."""

    def __init__(self, dim: int, num_labels: int, dropout: float):
        super().__init__()
        self.dense = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)
        self.out = nn.Linear(dim, num_labels)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.out(self.drop(torch.tanh(self.dense(pooled))))


class LabelAttentionHead(nn.Module):
    """Per-label attention over token states.

    For label l: alpha_l = softmax over unmasked positions of (u_l . H),
    v_l = H alpha_l, logit_l = w_l . v_l + b_l. The alpha rows double as the
    token-evidence weights surfaced by the explanation layer.
    """

    def __init__(self, dim: int, num_labels: int):
        super().__init__()
        self.attn_query = nn.Parameter(torch.empty(num_labels, dim))
        self.out_weight = nn.Parameter(torch.empty(num_labels, dim))
        self.out_bias = nn.Parameter(torch.zeros(num_labels))
        nn.init.normal_(self.attn_query, std=0.02)
        nn.init.normal_(self.out_weight, std=0.02)

    def forward(self, hidden: torch.Tensor, mask: torch.Tensor):
        # hidden: (b, n, d), mask: (b, n) -> logits (b, T), attention (b, T, n)
        if not bool(mask.any(dim=1).all()):
            raise ValueError("label attention requires at least one unmasked position")
        scores = torch.einsum("ld,bnd->bln", self.attn_query, hidden)
        neg = torch.finfo(scores.dtype).min
        scores = scores.masked_fill(~mask[:, None, :], neg)
        attention = torch.softmax(scores, dim=-1)
        values = torch.einsum("bln,bnd->bld", attention, hidden)
        logits = (values * self.out_weight[None, :, :]).sum(-1) + self.out_bias
        return logits, attention


class TriageEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.token_embed = nn.Embedding(config.vocab_size, config.hidden_dim)
        self.pos_embed = nn.Embedding(config.max_positions, config.hidden_dim)
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(
            EncoderBlock(config.hidden_dim, config.num_heads, config.ff_dim, config.dropout)
            for _ in range(config.num_layers)
        )
        self.final_ln = nn.LayerNorm(config.hidden_dim)
        if config.head_kind == HEAD_POOLED:
            self.head = PooledHead(config.hidden_dim, config.num_labels, config.dropout)
        else:
            self.head = LabelAttentionHead(config.hidden_dim, config.num_labels)
        self.lora_rank: int | None = None
        self.lora_targets: tuple[str, ...] = ()

    @property
    def is_adapted(self) -> bool:
        return self.lora_rank is not None

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Final-layer hidden states, (b, n, d). Padding positions are
        excluded from attention via the mask; their output states are inert."""
        b, n = ids.shape
        x = self.token_embed(ids)
        if self.config.use_positional:
            positions = torch.arange(n, device=ids.device).expand(b, n)
            x = x + self.pos_embed(positions)
        x = self.drop(x)
        for block in self.blocks:
            x = block(x, mask)
        return self.final_ln(x)


def build_model(config: ModelConfig, seed: int = 0) -> TriageEncoder:
    torch.manual_seed(seed)
    return TriageEncoder(config)


# --- batched encode ----------------------------------------------------------

def pad_batch(
    sequences: list, pad_id: int, device=None
) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad variable-length id lists into (ids, mask) tensors."""
    if not sequences:
        raise ValueError("empty batch")
    lists = [list(getattr(s, "ids", s)) for s in sequences]
    width = max(1, max(len(x) for x in lists))
    ids = torch.full((len(lists), width), pad_id, dtype=torch.long, device=device)
    mask = torch.zeros((len(lists), width), dtype=torch.bool, device=device)
    for i, x in enumerate(lists):
        if x:
            ids[i, : len(x)] = torch.tensor(x, dtype=torch.long, device=device)
            mask[i, : len(x)] = True
    return ids, mask


def encode(model: TriageEncoder, sequences: list, pad_id: int) -> list[EncoderOutput]:
    """Run the encoder over variable-length sequences (inference mode).

    Raises if any id is out of range, any sequence overflows max_positions,
    or a sequence is empty.
    """
    for i, seq in enumerate(sequences):
        ids = list(getattr(seq, "ids", seq))
        if not ids:
            raise ValueError(f"sequence {i} is empty")
        if len(ids) > model.config.max_positions:
            raise ValueError(
                f"sequence {i} has length {len(ids)} > max positions "
                f"{model.config.max_positions}"
            )
        bad = [t for t in ids if not 0 <= t < model.config.vocab_size]
        if bad:
            raise ValueError(f"sequence {i} contains out-of-range id {bad[0]}")
    ids, mask = pad_batch(sequences, pad_id)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            hidden = model(ids, mask)
            pooled = pool(hidden, mask, model.config.pooling)
    finally:
        model.train(was_training)
    outputs = []
    for i in range(len(sequences)):
        n = int(mask[i].sum())
        outputs.append(EncoderOutput(hidden=hidden[i, :n], pooled=pooled[i]))
    return outputs


def pool(hidden: torch.Tensor, mask: torch.Tensor, mode: str = POOL_SEQ_START) -> torch.Tensor:
    """Sequence embedding: the sequence-start state, or the masked mean."""
    if mode == POOL_SEQ_START:
        return hidden[:, 0]
    if mode == POOL_MEAN:
        m = mask.unsqueeze(-1).to(hidden.dtype)
        return (hidden * m).sum(1) / m.sum(1).clamp(min=1.0)
    raise ValueError(f"unknown pooling mode {mode!r}")


def classify_pooled(model: TriageEncoder, pooled: torch.Tensor) -> torch.Tensor:
    if not isinstance(model.head, PooledHead):
        raise UnsupportedHeadError("model was not built with the pooled head")
    return model.head(pooled)


def classify_label_attention(
    model: TriageEncoder, hidden: torch.Tensor, mask: torch.Tensor
):
    if not isinstance(model.head, LabelAttentionHead):
        raise UnsupportedHeadError("model was not built with the label-attention head")
    return model.head(hidden, mask)


def recommendation_from_logits(
    logits: torch.Tensor, attention: torch.Tensor | None = None
) -> TriageRecommendation:
    probs = torch.softmax(logits.detach().double(), dim=-1).cpu().numpy()
    probs = probs / probs.sum()
    return TriageRecommendation(
        probabilities=probs,
        predicted=TeamLabel(int(probs.argmax())),
        per_label_attention=(
            attention.detach().cpu().numpy() if attention is not None else None
        ),
    )


# --- LoRA ---------------------------------------------------------------------

class LoraLinear(nn.Module):
    """Linear layer with a frozen base and a trainable low-rank update.

    Forward is h = Wx + b + B(Ax): the update matrix is the product BA with
    B (out x r) initialised to zero, so a freshly injected adapter leaves the
    base function untouched, and A (r x in) drawn from a small zero-mean
    normal. No extra scaling factor is applied to the product.
    """

    def __init__(self, base: nn.Linear, rank: int):
        super().__init__()
        if rank < 1:
            raise ValueError("rank must be >= 1")
        self.base = base
        self.base.weight.requires_grad_(False)
        if self.base.bias is not None:
            self.base.bias.requires_grad_(False)
        self.rank = rank
        dtype = base.weight.dtype
        self.lora_a = nn.Parameter(
            torch.randn(rank, base.in_features, dtype=dtype) * 0.02
        )
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank, dtype=dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + F.linear(F.linear(x, self.lora_a), self.lora_b)

    def merged_weight(self) -> torch.Tensor:
        return self.base.weight + self.lora_b @ self.lora_a


def inject_lora(
    model: TriageEncoder, rank: int, targets: tuple[str, ...] = LORA_TARGETS
) -> TriageEncoder:
    """Attach low-rank adapters to the attention projections (in place).

    Base weights are frozen; only adapter matrices and the classification
    head remain trainable. Injecting twice is a state error.
    """
    if model.is_adapted:
        raise StateError("model already carries LoRA adapters")
    unknown = [t for t in targets if t not in LORA_TARGETS]
    if unknown:
        raise ValueError(f"unknown LoRA targets {unknown}; choose from {LORA_TARGETS}")
    for param in model.parameters():
        param.requires_grad_(False)
    for block in model.blocks:
        for target in targets:
            attr = _TARGET_ATTRS[target]
            setattr(block.attn, attr, LoraLinear(getattr(block.attn, attr), rank))
    for param in model.head.parameters():
        param.requires_grad_(True)
    model.lora_rank = rank
    model.lora_targets = tuple(targets)
    return model


def merge_lora(model: TriageEncoder) -> TriageEncoder:
    """Fold adapters into the base weights (W0 + BA) and remove them.

    The merged model computes the same function as the adapted one and all
    parameters become trainable again. Merging an unadapted model is a state
    error.
    """
    if not model.is_adapted:
        raise StateError("model has no LoRA adapters to merge")
    for block in model.blocks:
        for target in model.lora_targets:
            attr = _TARGET_ATTRS[target]
            wrapped = getattr(block.attn, attr)
            merged = nn.Linear(
                wrapped.base.in_features, wrapped.base.out_features,
                bias=wrapped.base.bias is not None,
            )
            with torch.no_grad():
                merged.weight.copy_(wrapped.merged_weight())
                if wrapped.base.bias is not None:
                    merged.bias.copy_(wrapped.base.bias)
            setattr(block.attn, attr, merged)
    for param in model.parameters():
        param.requires_grad_(True)
    model.lora_rank = None
    model.lora_targets = ()
    return model


@dataclass(frozen=True)
class ParameterCount:
    total: int
    trainable: int


def count_parameters(model: nn.Module) -> ParameterCount:
    total = sum(p.numel() for p in model.parameters())
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    return ParameterCount(total=total, trainable=trainable)


# --- checkpoint format ----------------------------------------------------------

def save_checkpoint(
    model: TriageEncoder, path: str | Path, tokenizer_hash: str = ""
) -> None:
    """Single-file checkpoint: a JSON meta record plus one float32 array per
    parameter (row-major), written as an .npz archive."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "tokenizer_hash": tokenizer_hash,
        "lora_rank": model.lora_rank,
        "lora_targets": list(model.lora_targets),
    }
    arrays = {
        f"param/{name}": tensor.detach().cpu().to(torch.float32).numpy()
        for name, tensor in model.state_dict().items()
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = _io.BytesIO()
    np.savez(buffer, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)
    path.write_bytes(buffer.getvalue())


def load_checkpoint(path: str | Path) -> tuple[TriageEncoder, dict]:
    with np.load(Path(path)) as archive:
        meta = json.loads(bytes(archive["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format: {meta.get('format_version')}")
        state = {
            name[len("param/"):]: torch.from_numpy(np.array(archive[name]))
            for name in archive.files
            if name.startswith("param/")
        }
    model = TriageEncoder(ModelConfig(**meta["config"]))
    if meta.get("lora_rank"):
        inject_lora(model, meta["lora_rank"], tuple(meta["lora_targets"]))
    model.load_state_dict(state)
    return model, meta


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
