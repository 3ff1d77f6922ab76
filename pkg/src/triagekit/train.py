"""Training loop: cross-entropy loss, AdamW with linear warmup/decay,
gradient accumulation, macro-F1 early stopping, and a finite-difference
gradient checker."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .evalmetrics import macro_f1

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 8
    grad_accumulation_steps: int = 2
    warmup_fraction: float = 0.1
    max_epochs: int = 10
    patience: int = 3
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    log_every: int = 50

    def validate(self) -> None:
        if min(self.learning_rate, self.batch_size, self.grad_accumulation_steps,
               self.max_epochs) <= 0:
            raise ValueError("learning_rate, batch_size, accumulation, epochs must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")


def loss(logits: torch.Tensor, gold: int | torch.Tensor) -> torch.Tensor:
    """Multi-class cross-entropy, -log softmax(logits)[gold]."""
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    gold_t = torch.as_tensor(gold, dtype=torch.long).reshape(-1)
    num_labels = logits.shape[-1]
    if bool(((gold_t < 0) | (gold_t >= num_labels)).any()):
        raise ValueError(f"gold label out of range [0, {num_labels})")
    return F.cross_entropy(logits, gold_t)


def backward(
    model: torch.nn.Module,
    batch: Sequence,
    forward_fn: Callable,
    batch_id: str = "",
) -> dict[str, torch.Tensor]:
    """Exact reverse-mode gradients of the mean batch loss for every
    trainable parameter. Frozen parameters receive no gradient entry."""
    model.zero_grad(set_to_none=True)
    logits = forward_fn(model, [ex[0] for ex in batch])
    labels = torch.tensor([int(ex[1]) for ex in batch], dtype=torch.long)
    value = loss(logits, labels)
    if not torch.isfinite(value):
        raise RuntimeError(f"non-finite loss on batch {batch_id or '<unnamed>'}")
    if not value.requires_grad:
        return {}  # every parameter frozen
    value.backward()
    grads = {
        name: p.grad.detach().clone()
        for name, p in model.named_parameters()
        if p.requires_grad and p.grad is not None
    }
    model.zero_grad(set_to_none=True)
    return grads


def grad_check(
    model: torch.nn.Module,
    loss_fn: Callable[[torch.nn.Module], torch.Tensor],
    eps: float = 1e-5,
    num_coords: int = 200,
    seed: int = 0,
) -> float:
    """Compare analytic gradients against central finite differences.

    The model is copied to 64-bit and evaluated with dropout disabled;
    ``num_coords`` coordinates are sampled across all trainable tensors
    (every trainable tensor gets at least one). Returns the max relative
    error |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
    """
    model64 = copy.deepcopy(model).double().eval()
    value = loss_fn(model64)
    value.backward()
    named = [
        (name, p) for name, p in model64.named_parameters() if p.requires_grad
    ]
    if not named:
        raise ValueError("model has no trainable parameters")

    rng = np.random.default_rng(seed)
    coords: list[tuple[str, torch.nn.Parameter, int]] = []
    for name, p in named:
        coords.append((name, p, int(rng.integers(p.numel()))))
    while len(coords) < num_coords:
        name, p = named[int(rng.integers(len(named)))]
        coords.append((name, p, int(rng.integers(p.numel()))))

    worst = 0.0
    with torch.no_grad():
        for name, p, flat_idx in coords:
            analytic = float(p.grad.reshape(-1)[flat_idx])
            flat = p.data.reshape(-1)
            original = float(flat[flat_idx])
            flat[flat_idx] = original + eps
            f_plus = float(loss_fn(model64))
            flat[flat_idx] = original - eps
            f_minus = float(loss_fn(model64))
            flat[flat_idx] = original
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, rel)
    return worst


@dataclass
class OptimizerState:
    """AdamW accumulators, keyed by parameter name."""

    exp_avg: dict[str, torch.Tensor] = field(default_factory=dict)
    exp_avg_sq: dict[str, torch.Tensor] = field(default_factory=dict)
    step: int = 0
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8


def adamw_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: OptimizerState,
    lr: float,
) -> OptimizerState:
    """One decoupled-weight-decay Adam update, in place on ``params``."""
    state.step += 1
    beta1, beta2 = state.betas
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step
    with torch.no_grad():
        for name, p in params.items():
            if name not in grads:
                continue
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name}: {g.shape} vs {p.shape}")
            if name not in state.exp_avg:
                state.exp_avg[name] = torch.zeros_like(p)
                state.exp_avg_sq[name] = torch.zeros_like(p)
            m, v = state.exp_avg[name], state.exp_avg_sq[name]
            p.mul_(1.0 - lr * state.weight_decay)
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            m_hat = m / bias1
            v_hat = v / bias2
            p.addcdiv_(m_hat, v_hat.sqrt().add_(state.eps), value=-lr)
    return state


def lr_at(step: int, warmup_steps: int, total_steps: int, base_lr: float) -> float:
    """Linear ramp 0 -> base_lr over warmup, then linear decay to 0."""
    if not 0 <= step <= total_steps:
        raise ValueError("step must be within [0, total_steps]")
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    if total_steps == warmup_steps:
        return base_lr
    return base_lr * (total_steps - step) / (total_steps - warmup_steps)


@dataclass
class EpochRecord:
    epoch: int
    optimizer_steps: int
    mean_loss: float
    eval_f1: float
    lr: float


@dataclass
class FitResult:
    history: list[EpochRecord]
    best_epoch: int
    best_f1: float
    examples_consumed: int
    optimizer_steps: int


def fit(
    model: torch.nn.Module,
    train_examples: Sequence,
    eval_examples: Sequence,
    config: TrainConfig,
    forward_fn: Callable,
    eval_fn: Callable[[torch.nn.Module], float] | None = None,
    log_path: str | Path | None = None,
) -> FitResult:
    """Train with gradient accumulation and macro-F1 early stopping.

    Examples are (input, label) pairs; ``forward_fn(model, inputs)`` must
    return (B, T) logits. Evaluation runs once per epoch; training stops when
    macro F1 has failed to improve for ``patience`` evaluations, and the
    best-F1 weights are restored before returning.
    """
    config.validate()
    if not train_examples or not eval_examples:
        raise ValueError("train and eval splits must be non-empty")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    group = config.batch_size * config.grad_accumulation_steps
    groups_per_epoch = max(1, len(train_examples) // group)
    total_steps = max(1, groups_per_epoch * config.max_epochs)
    warmup_steps = int(round(config.warmup_fraction * total_steps))

    if eval_fn is None:
        eval_fn = lambda m: _default_eval(m, eval_examples, forward_fn, config.batch_size)

    trainable = {n: p for n, p in model.named_parameters() if p.requires_grad}
    state = OptimizerState(
        weight_decay=config.weight_decay, betas=config.betas, eps=config.eps
    )

    log_fh = Path(log_path).open("w", encoding="utf-8") if log_path else None

    def emit(line: str) -> None:
        if log_fh:
            log_fh.write(line + "\n")

    history: list[EpochRecord] = []
    best_f1 = -math.inf
    best_epoch = -1
    best_state: dict | None = None
    bad_evals = 0
    steps_done = 0
    examples_consumed = 0

    try:
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(len(train_examples))
            model.train()
            epoch_losses: list[float] = []
            for g in range(groups_per_epoch):
                model.zero_grad(set_to_none=True)
                group_loss = 0.0
                for a in range(config.grad_accumulation_steps):
                    lo = g * group + a * config.batch_size
                    idxs = order[lo : lo + config.batch_size]
                    if len(idxs) == 0:
                        # degenerate split smaller than one group
                        idxs = order[: config.batch_size]
                    batch = [train_examples[i] for i in idxs]
                    logits = forward_fn(model, [ex[0] for ex in batch])
                    labels = torch.tensor([int(ex[1]) for ex in batch], dtype=torch.long)
                    batch_loss = loss(logits, labels) / config.grad_accumulation_steps
                    if not torch.isfinite(batch_loss):
                        raise RuntimeError(
                            f"non-finite loss at epoch {epoch} group {g} micro-batch {a}"
                        )
                    batch_loss.backward()
                    group_loss += float(batch_loss.detach())
                    examples_consumed += len(batch)
                grads = {
                    n: p.grad for n, p in trainable.items() if p.grad is not None
                }
                lr = lr_at(steps_done, warmup_steps, total_steps, config.learning_rate)
                adamw_step(trainable, grads, state, lr)
                steps_done += 1
                epoch_losses.append(group_loss)
                if steps_done % config.log_every == 0:
                    emit(
                        f"epoch={epoch} step={steps_done} loss={group_loss:.6f} lr={lr:.3e}"
                    )
            model.zero_grad(set_to_none=True)

            f1 = float(eval_fn(model))
            record = EpochRecord(
                epoch=epoch,
                optimizer_steps=steps_done,
                mean_loss=float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
                eval_f1=f1,
                lr=lr_at(steps_done, warmup_steps, total_steps, config.learning_rate),
            )
            history.append(record)
            emit(
                f"epoch={epoch} step={steps_done} loss={record.mean_loss:.6f} "
                f"eval_f1={f1:.4f} lr={record.lr:.3e}"
            )

            if f1 > best_f1:
                best_f1 = f1
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                bad_evals = 0
            else:
                bad_evals += 1
                if bad_evals >= config.patience:
                    log.info("early stop at epoch %d (best epoch %d)", epoch, best_epoch)
                    break
    finally:
        if log_fh:
            log_fh.close()

    if best_state is not None:
        model.load_state_dict(best_state)
    return FitResult(
        history=history,
        best_epoch=best_epoch,
        best_f1=best_f1,
        examples_consumed=examples_consumed,
        optimizer_steps=steps_done,
    )


def _default_eval(model, eval_examples, forward_fn, batch_size: int) -> float:
    model.eval()
    preds: list[int] = []
    golds: list[int] = []
    with torch.no_grad():
        for lo in range(0, len(eval_examples), batch_size):
            batch = eval_examples[lo : lo + batch_size]
            logits = forward_fn(model, [ex[0] for ex in batch])
            preds.extend(int(i) for i in logits.argmax(dim=-1))
            golds.extend(int(ex[1]) for ex in batch)
    model.train()
    return macro_f1(preds, golds)
