"""Encoder forward contracts, both heads, LoRA, parameter counts, checkpoints."""
import numpy as np
import pytest
import torch

from conftest import tiny_model_config
from triagekit.encoder import (
    HEAD_LABEL_ATTENTION,
    HEAD_POOLED,
    LabelAttentionHead,
    ModelConfig,
    ParameterCount,
    TriageEncoder,
    TriageRecommendation,
    build_model,
    checkpoint_hash,
    classify_label_attention,
    classify_pooled,
    count_parameters,
    encode,
    inject_lora,
    load_checkpoint,
    merge_lora,
    pad_batch,
    pool,
    save_checkpoint,
)
from triagekit.corpus import TeamLabel
from triagekit.errors import StateError, UnsupportedHeadError


@pytest.fixture()
def model():
    return build_model(tiny_model_config(100), seed=2).eval()


class TestEncode:
    def test_identical_sequences_identical_outputs(self, model):
        out = encode(model, [[2, 7, 9], [2, 7, 9]], pad_id=0)
        assert torch.equal(out[0].hidden, out[1].hidden)

    def test_padding_does_not_change_unmasked_outputs(self, model):
        short = encode(model, [[2, 7, 9, 11]], pad_id=0)[0]
        ids, mask = pad_batch([[2, 7, 9, 11], [2] * 10], 0)
        hidden = model(ids, mask)
        assert torch.allclose(short.hidden, hidden[0, :4], atol=1e-6)

    def test_permutation_equivariance_without_positions(self):
        cfg = tiny_model_config(100, use_positional=False)
        m = build_model(cfg, seed=4).eval()
        ids = [3, 9, 14, 27, 31]
        perm = [2, 0, 4, 1, 3]
        base = encode(m, [ids], pad_id=0)[0].hidden
        permuted = encode(m, [[ids[i] for i in perm]], pad_id=0)[0].hidden
        assert torch.allclose(permuted, base[perm], atol=1e-6)

    def test_out_of_range_id_named(self, model):
        with pytest.raises(ValueError, match="sequence 1"):
            encode(model, [[2, 3], [2, 999]], pad_id=0)

    def test_length_overflow_rejected(self, model):
        with pytest.raises(ValueError, match="max positions"):
            encode(model, [list(range(1, 3)) * 400], pad_id=0)

    def test_empty_sequence_rejected(self, model):
        with pytest.raises(ValueError, match="empty"):
            encode(model, [[]], pad_id=0)


class TestPool:
    def test_single_token(self, model):
        out = encode(model, [[5]], pad_id=0)[0]
        assert torch.equal(out.pooled, out.hidden[0])

    def test_masked_mean_arithmetic(self):
        hidden = torch.tensor([[[1.0, 3.0], [3.0, 5.0], [99.0, 99.0]]])
        mask = torch.tensor([[True, True, False]])
        assert torch.allclose(pool(hidden, mask, "mean"), torch.tensor([[2.0, 4.0]]))

    def test_mode_changes_pooled_not_hidden(self, model):
        ids, mask = pad_batch([[2, 7, 9]], 0)
        hidden = model(ids, mask)
        seq_start = pool(hidden, mask, "seq_start")
        mean = pool(hidden, mask, "mean")
        assert not torch.allclose(seq_start, mean)


class TestHeads:
    def test_zero_weights_uniform_probabilities(self, model):
        with torch.no_grad():
            for p in model.head.parameters():
                p.zero_()
        logits = classify_pooled(model, torch.randn(1, 32))
        probs = torch.softmax(logits, dim=-1)
        assert torch.allclose(probs, torch.full((1, 5), 0.2), atol=1e-9)

    def test_argmax_team(self, model):
        probs = np.array([0.6, 0.1, 0.1, 0.1, 0.1])
        rec = TriageRecommendation(probabilities=probs, predicted=TeamLabel.ED)
        assert rec.predicted == TeamLabel.ED

    def test_softmax_normalised(self, rng):
        logits = torch.from_numpy(rng.normal(size=(10, 5)))
        probs = torch.softmax(logits, dim=-1)
        assert torch.allclose(probs.sum(-1), torch.ones(10, dtype=torch.float64), atol=1e-9)

    def test_label_attention_single_position(self):
        head = LabelAttentionHead(8, 5)
        hidden = torch.randn(1, 1, 8)
        mask = torch.ones(1, 1, dtype=torch.bool)
        _, attention = head(hidden, mask)
        assert torch.allclose(attention, torch.ones(1, 5, 1))

    def test_label_attention_duplicate_states_equal_weights(self):
        head = LabelAttentionHead(8, 5)
        state = torch.randn(8)
        hidden = torch.stack([state, state]).unsqueeze(0)
        mask = torch.ones(1, 2, dtype=torch.bool)
        _, attention = head(hidden, mask)
        assert torch.allclose(attention[..., 0], attention[..., 1], atol=1e-7)

    def test_label_attention_matches_dense_reimplementation(self, rng):
        head = LabelAttentionHead(6, 5).double()
        hidden = torch.from_numpy(rng.normal(size=(1, 3, 6)))
        mask = torch.ones(1, 3, dtype=torch.bool)
        with torch.no_grad():
            logits, attention = head(hidden, mask)

        U = head.attn_query.detach().numpy()
        W = head.out_weight.detach().numpy()
        b = head.out_bias.detach().numpy()
        H = hidden[0].numpy()
        for l in range(5):
            scores = U[l] @ H.T
            alpha = np.exp(scores - scores.max())
            alpha = alpha / alpha.sum()
            v = H.T @ alpha
            logit = W[l] @ v + b[l]
            assert abs(float(logits[0, l]) - logit) < 1e-10
            assert np.abs(attention[0, l].numpy() - alpha).max() < 1e-12

    def test_all_masked_rejected(self):
        head = LabelAttentionHead(8, 5)
        hidden = torch.randn(1, 2, 8)
        mask = torch.zeros(1, 2, dtype=torch.bool)
        with pytest.raises(ValueError):
            head(hidden, mask)

    def test_attention_rows_sum_to_one(self, rng):
        head = LabelAttentionHead(8, 5)
        hidden = torch.randn(2, 7, 8)
        mask = torch.tensor([[True] * 7, [True] * 4 + [False] * 3])
        _, attention = head(hidden, mask)
        assert torch.allclose(attention.sum(-1), torch.ones(2, 5), atol=1e-6)
        assert torch.all(attention[1, :, 4:] == 0)

    def test_head_mismatch_errors(self, model, attention_model):
        with pytest.raises(UnsupportedHeadError):
            classify_label_attention(model, torch.randn(1, 2, 32),
                                     torch.ones(1, 2, dtype=torch.bool))
        with pytest.raises(UnsupportedHeadError):
            classify_pooled(attention_model, torch.randn(1, 32))

    def test_argmax_invariant_to_constant_shift(self, rng):
        logits = torch.from_numpy(rng.normal(size=(20, 5)))
        shifted = logits + 3.7
        assert torch.equal(logits.argmax(-1), shifted.argmax(-1))


def _expected_param_count(cfg: ModelConfig) -> int:
    d, ff, L = cfg.hidden_dim, cfg.ff_dim, cfg.num_layers
    total = cfg.vocab_size * d + cfg.max_positions * d
    per_layer = 2 * (2 * d) + 4 * (d * d + d) + (d * ff + ff) + (ff * d + d)
    total += L * per_layer + 2 * d
    if cfg.head_kind == HEAD_POOLED:
        total += d * d + d + d * cfg.num_labels + cfg.num_labels
    else:
        total += 2 * cfg.num_labels * d + cfg.num_labels
    return total


class TestLora:
    def test_injected_output_identical_to_base(self, small_tokenizer):
        cfg = tiny_model_config(200)
        m = build_model(cfg, seed=9).eval()
        ids, mask = pad_batch([[2, 5, 6, 7, 8]], 0)
        base = m(ids, mask).clone()
        inject_lora(m, rank=4)
        m.eval()
        assert torch.equal(m(ids, mask), base)

    def test_trainable_count_closed_form(self):
        d, L, r = 128, 4, 8
        cfg = ModelConfig(vocab_size=300, hidden_dim=d, num_layers=L, num_heads=4,
                          ff_dim=256, head_kind=HEAD_LABEL_ATTENTION)
        m = build_model(cfg, seed=0)
        inject_lora(m, rank=r)
        pc = count_parameters(m)
        head_params = 2 * 5 * d + 5
        assert pc.trainable == 2 * r * d * 3 * L + head_params

    def test_paper_scale_reduction_ratio(self):
        # paper-scale shape: 768 hidden, 12 layers; adapters cut trainables
        # by two orders of magnitude
        cfg = ModelConfig(vocab_size=50_000, hidden_dim=768, num_layers=12,
                          num_heads=12, ff_dim=3072, max_positions=512)
        m = TriageEncoder(cfg)
        full = count_parameters(m).trainable
        inject_lora(m, rank=8)
        adapted = count_parameters(m).trainable
        assert full > 100 * adapted

    def test_merge_equivalence_over_random_inputs(self, rng):
        cfg = tiny_model_config(150)
        m = build_model(cfg, seed=3)
        inject_lora(m, rank=4)
        with torch.no_grad():  # give adapters non-trivial weights
            for name, p in m.named_parameters():
                if "lora" in name:
                    p.add_(torch.randn_like(p) * 0.05)
        m.eval()
        inputs = [
            [int(x) for x in rng.integers(1, 150, size=rng.integers(2, 40))]
            for _ in range(100)
        ]
        with torch.no_grad():
            before = [m(*pad_batch([seq], 0)).clone() for seq in inputs]
            merge_lora(m)
            m.eval()
            after = [m(*pad_batch([seq], 0)) for seq in inputs]
        worst = max(
            float((a - b).abs().max()) for a, b in zip(after, before)
        )
        assert worst < 1e-6

    def test_merge_of_zero_adapter_keeps_weights(self):
        m = build_model(tiny_model_config(80), seed=1)
        w0 = m.blocks[0].attn.q_proj.weight.detach().clone()
        inject_lora(m, rank=2)
        merge_lora(m)
        assert torch.equal(m.blocks[0].attn.q_proj.weight, w0)

    def test_double_inject_and_double_merge_state_errors(self):
        m = build_model(tiny_model_config(80), seed=1)
        inject_lora(m, rank=2)
        with pytest.raises(StateError):
            inject_lora(m, rank=2)
        merge_lora(m)
        with pytest.raises(StateError):
            merge_lora(m)

    def test_frozen_base_receives_no_gradient(self):
        m = build_model(tiny_model_config(80), seed=1)
        inject_lora(m, rank=2)
        ids, mask = pad_batch([[2, 5, 6]], 0)
        out = m(ids, mask).sum()
        out.backward()
        assert m.token_embed.weight.grad is None
        assert m.blocks[0].attn.q_proj.lora_a.grad is not None


class TestParameterCount:
    def test_unadapted_all_trainable(self, model):
        pc = count_parameters(model)
        assert pc.trainable == pc.total

    def test_lora_trainable_subset(self):
        m = build_model(tiny_model_config(80), seed=1)
        total = count_parameters(m).total
        inject_lora(m, rank=2)
        pc = count_parameters(m)
        assert pc.trainable < pc.total
        assert pc.total == total + 2 * 2 * 32 * 3 * 2  # adapters add params

    def test_matches_closed_form_one_layer(self):
        cfg = ModelConfig(vocab_size=11, hidden_dim=8, num_layers=1, num_heads=2,
                          ff_dim=16, max_positions=32)
        m = TriageEncoder(cfg)
        assert count_parameters(m) == ParameterCount(
            total=_expected_param_count(cfg), trainable=_expected_param_count(cfg)
        )

    def test_matches_closed_form_label_head(self):
        cfg = ModelConfig(vocab_size=11, hidden_dim=8, num_layers=1, num_heads=2,
                          ff_dim=16, max_positions=32, head_kind=HEAD_LABEL_ATTENTION)
        m = TriageEncoder(cfg)
        assert count_parameters(m).total == _expected_param_count(cfg)


class TestCheckpoint:
    def test_round_trip_with_lora(self, tmp_path):
        m = build_model(tiny_model_config(90, head_kind=HEAD_LABEL_ATTENTION), seed=8)
        inject_lora(m, rank=3)
        with torch.no_grad():
            for name, p in m.named_parameters():
                if "lora_b" in name:
                    p.add_(0.01)
        path = tmp_path / "model.npz"
        save_checkpoint(m, path, tokenizer_hash="abc123")
        back, meta = load_checkpoint(path)
        assert meta["tokenizer_hash"] == "abc123"
        assert meta["lora_rank"] == 3
        assert back.is_adapted
        ids, mask = pad_batch([[2, 4, 6, 8]], 0)
        m.eval(), back.eval()
        assert torch.allclose(m(ids, mask), back(ids, mask), atol=1e-6)

    def test_hash_is_file_hash(self, tmp_path):
        import hashlib

        m = build_model(tiny_model_config(90), seed=8)
        path = tmp_path / "model.npz"
        save_checkpoint(m, path)
        assert checkpoint_hash(path) == hashlib.sha256(path.read_bytes()).hexdigest()
