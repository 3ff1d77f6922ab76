"""Single entry point orchestrating the pipeline: corpus generation,
tokenizer training, model training, evaluation, benchmarking, explanation,
projection maps, and the HTTP service.

Every command honors --seed and --config; flags win over config-file values.
Report paths write machine-readable output plus rendered figures, and every
command drops a MANIFEST.json recording parameters and input/output hashes.
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import corpus as corpus_mod
from . import reports
from .corpus import (
    Acceptance,
    CorpusConfig,
    TeamLabel,
    generate_corpus,
    instance_token_length,
    load_corpus,
    patient_split,
    save_config,
    save_corpus,
)
from .encoder import (
    HEAD_LABEL_ATTENTION,
    HEAD_POOLED,
    ModelConfig,
    build_model,
    checkpoint_hash,
    load_checkpoint,
    save_checkpoint,
)
from .evalmetrics import bench_inference, compute_metrics, confusion_matrix, stratified_f1
from .explain import embed_training_set, explain_instance, fit_projection, project_query
from .strategies import (
    CONCAT_MAX_LEN,
    DEFAULT_SEGMENT_SIZE,
    STRATEGIES,
    STRATEGY_BRUTE_FORCE,
    STRATEGY_CONCAT_4096,
    STRATEGY_CONCAT_512,
    STRATEGY_SEGMENT_BATCH,
    document_examples,
    infer,
    instance_examples,
    make_pooled_forward,
    make_segment_forward,
    segment_examples,
    training_config_for,
)
from .textpipe import Tokenizer, train_tokenizer
from .train import fit

CHUNK_SIZES = (128, 256, 512)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, params: dict,
                    inputs: list[Path], outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "params": params,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).exists()},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs if Path(p).exists()},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "MANIFEST.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )


def _load_config_section(config_path: str | None, section: str) -> dict:
    if not config_path:
        return {}
    data = yaml.safe_load(Path(config_path).read_text(encoding="utf-8")) or {}
    return data.get(section, {}) or {}


def _effective(flag_value, config: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _parse_checkpoints(pairs: tuple[str, ...]) -> dict[str, str]:
    mapping: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(
                f"--checkpoint takes STRATEGY=PATH, got {pair!r}"
            )
        strategy, path = pair.split("=", 1)
        if strategy not in STRATEGIES:
            raise click.UsageError(f"unknown strategy {strategy!r} in --checkpoint")
        mapping[strategy] = path
    return mapping


def _eval_instances(corpus, eval_fraction: float, split_seed: int):
    _, eval_split = patient_split(corpus, eval_fraction, split_seed)
    return [i for i in eval_split if i.acceptance == Acceptance.ACCEPTED and i.label is not None]


@click.group()
def main():
    """Long-document referral triage toolkit."""


@main.command()
@click.option("--patients", type=int, default=None, help="number of synthetic patients")
@click.option("--noise-ratio", type=float, default=None)
@click.option("--signal-position", type=click.Choice(["uniform", "head", "tail"]), default=None)
@click.option("--accept-rate", type=float, default=None)
@click.option("--out", type=click.Path(), required=True, help="corpus JSONL path")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def gen(patients, noise_ratio, signal_position, accept_rate, out, seed, config_path):
    """Generate a synthetic referral corpus."""
    section = _load_config_section(config_path, "gen")
    cfg = CorpusConfig(
        n_patients=_effective(patients, section, "patients", 1000),
        noise_ratio=_effective(noise_ratio, section, "noise_ratio", 0.5),
        signal_position=_effective(signal_position, section, "signal_position", "uniform"),
        accept_rate=_effective(accept_rate, section, "accept_rate", 0.65),
        seed=_effective(seed, section, "seed", 0),
    )
    corpus = generate_corpus(cfg)
    out = Path(out)
    save_corpus(corpus, out)
    config_out = out.with_suffix(".config.yaml")
    save_config(cfg, config_out)
    stats = corpus_mod.corpus_stats(corpus)
    click.echo(
        f"wrote {len(corpus)} instances ({len(corpus.registry)} patients) to {out}; "
        f"median doc tokens {stats.per_document.percentiles[50]:.0f}, "
        f"median instance tokens {stats.per_instance.percentiles[50]:.0f}",
        err=True,
    )
    _write_manifest(out.parent, "gen",
                    {"patients": cfg.n_patients, "seed": cfg.seed,
                     "noise_ratio": cfg.noise_ratio,
                     "signal_position": cfg.signal_position},
                    [], [out, config_out])


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--vocab-size", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def tokenizer(corpus_path, vocab_size, out, seed, config_path):
    """Train and persist the word-level tokenizer."""
    section = _load_config_section(config_path, "tokenizer")
    vocab_size = _effective(vocab_size, section, "vocab_size", 8000)
    corpus = load_corpus(corpus_path)
    tok = train_tokenizer(corpus, vocab_size)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tok.save(out)
    click.echo(f"tokenizer with {tok.vocab_size} entries -> {out}", err=True)
    _write_manifest(out.parent, "tokenizer",
                    {"vocab_size": vocab_size}, [Path(corpus_path)], [out])


def _model_config_for(strategy: str, vocab_size: int, hidden_dim: int, layers: int,
                      heads: int, ff_dim: int, chunk_size: int, dropout: float) -> ModelConfig:
    if strategy == STRATEGY_SEGMENT_BATCH:
        head, max_pos = HEAD_LABEL_ATTENTION, max(chunk_size, 128)
    elif strategy == STRATEGY_CONCAT_4096:
        head, max_pos = HEAD_POOLED, 4096
    else:
        head, max_pos = HEAD_POOLED, 512
    return ModelConfig(
        vocab_size=vocab_size, hidden_dim=hidden_dim, num_layers=layers,
        num_heads=heads, ff_dim=ff_dim, max_positions=max_pos,
        dropout=dropout, head_kind=head,
    )


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), required=True)
@click.option("--strategy", type=click.Choice(STRATEGIES), required=True)
@click.option("--chunk-size", type=click.Choice([str(c) for c in CHUNK_SIZES]), default=None,
              help="segment size for segment_batch")
@click.option("--lora-rank", type=int, default=None, help="inject LoRA adapters at this rank")
@click.option("--hidden-dim", type=int, default=None)
@click.option("--layers", type=int, default=None)
@click.option("--heads", type=int, default=None)
@click.option("--ff-dim", type=int, default=None)
@click.option("--dropout", type=float, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--accum", type=int, default=None)
@click.option("--eval-fraction", type=float, default=None)
@click.option("--split-seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True, help="checkpoint path")
@click.option("--log", "log_path", type=click.Path(), default=None, help="metrics log path")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def train(corpus_path, tokenizer_path, strategy, chunk_size, lora_rank, hidden_dim,
          layers, heads, ff_dim, dropout, lr, epochs, batch_size, accum,
          eval_fraction, split_seed, out, log_path, seed, config_path):
    """Train a strategy's model and write its checkpoint."""
    from .encoder import inject_lora

    section = _load_config_section(config_path, "train")
    seed = _effective(seed, section, "seed", 0)
    chunk = int(_effective(chunk_size, section, "chunk_size", DEFAULT_SEGMENT_SIZE))
    eval_fraction = _effective(eval_fraction, section, "eval_fraction", 0.2)
    split_seed = _effective(split_seed, section, "split_seed", 0)

    corpus = load_corpus(corpus_path)
    tok = Tokenizer.load(tokenizer_path)
    train_split, eval_split = patient_split(corpus, eval_fraction, split_seed)
    train_acc = [i for i in train_split if i.label is not None]
    eval_acc = [i for i in eval_split if i.label is not None]
    if not train_acc or not eval_acc:
        raise click.ClickException("no accepted, labelled instances in a split")

    model_cfg = _model_config_for(
        strategy, tok.vocab_size,
        _effective(hidden_dim, section, "hidden_dim", 128),
        _effective(layers, section, "layers", 4),
        _effective(heads, section, "heads", 4),
        _effective(ff_dim, section, "ff_dim", 256),
        chunk,
        _effective(dropout, section, "dropout", 0.1),
    )
    model = build_model(model_cfg, seed=seed)
    if lora_rank:
        inject_lora(model, lora_rank)

    overrides = {"seed": seed}
    for key, value in (("learning_rate", lr), ("max_epochs", epochs),
                       ("batch_size", batch_size), ("grad_accumulation_steps", accum)):
        value = _effective(value, section, key, None)
        if value is not None:
            overrides[key] = value
    train_cfg = training_config_for(strategy, **overrides)

    if strategy == STRATEGY_BRUTE_FORCE:
        train_examples = document_examples(train_acc, tok, seed=seed)
        eval_examples = document_examples(eval_acc, tok, per_class_fraction=1.0, seed=seed)
        forward = make_pooled_forward(tok.pad_id)
    elif strategy in CONCAT_MAX_LEN:
        max_len = CONCAT_MAX_LEN[strategy]
        train_examples = instance_examples(train_acc, tok, max_len)
        eval_examples = instance_examples(eval_acc, tok, max_len)
        forward = make_pooled_forward(tok.pad_id)
    else:
        train_examples = segment_examples(train_acc, tok, chunk)
        eval_examples = segment_examples(eval_acc, tok, chunk)
        forward = make_segment_forward()

    result = fit(model, train_examples, eval_examples, train_cfg, forward,
                 log_path=log_path)
    out = Path(out)
    save_checkpoint(model, out, tokenizer_hash=_sha256(Path(tokenizer_path)))
    if result.history:
        reports.fig_training_history(result.history, out.with_suffix(".history.png"))
    click.echo(
        f"best epoch {result.best_epoch} macro F1 {result.best_f1:.4f} -> {out}",
        err=True,
    )
    _write_manifest(out.parent, "train",
                    {"strategy": strategy, "seed": seed, "chunk_size": chunk,
                     "lora_rank": lora_rank, "best_f1": result.best_f1},
                    [Path(corpus_path), Path(tokenizer_path)],
                    [out] + ([Path(log_path)] if log_path else []))


@main.command(name="eval")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_pairs", multiple=True,
              help="STRATEGY=PATH, repeatable")
@click.option("--strategy", "strategy_name", default="all",
              help="one strategy name or 'all'")
@click.option("--chunk-size", type=click.Choice([str(c) for c in CHUNK_SIZES]), default=None)
@click.option("--eval-fraction", type=float, default=None)
@click.option("--split-seed", type=int, default=None)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def eval_cmd(corpus_path, tokenizer_path, checkpoint_pairs, strategy_name, chunk_size,
             eval_fraction, split_seed, out_dir, seed, config_path):
    """Score strategies on the held-out split; write metrics, CSV, figures."""
    section = _load_config_section(config_path, "eval")
    eval_fraction = _effective(eval_fraction, section, "eval_fraction", 0.2)
    split_seed = _effective(split_seed, section, "split_seed", 0)
    chunk = int(_effective(chunk_size, section, "chunk_size", DEFAULT_SEGMENT_SIZE))

    checkpoints = _parse_checkpoints(checkpoint_pairs)
    wanted = list(STRATEGIES) if strategy_name == "all" else [strategy_name]
    wanted = [s for s in wanted if s in checkpoints] if strategy_name == "all" else wanted
    missing = [s for s in wanted if s not in checkpoints]
    if missing:
        raise click.UsageError(f"no --checkpoint given for: {missing}")
    if not wanted:
        raise click.UsageError("no strategies to evaluate")

    corpus = load_corpus(corpus_path)
    tok = Tokenizer.load(tokenizer_path)
    eval_instances = _eval_instances(corpus, eval_fraction, split_seed)
    if not eval_instances:
        raise click.ClickException("eval split has no accepted instances")
    lengths = [max(1, instance_token_length(i)) for i in eval_instances]
    golds = [int(i.label) for i in eval_instances]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_metrics, all_strata = {}, {}
    outputs = []
    for strategy in wanted:
        model, _ = load_checkpoint(checkpoints[strategy])
        preds = []
        for inst in eval_instances:
            if strategy == STRATEGY_BRUTE_FORCE and not inst.documents:
                preds.append(-1)
                continue
            rec, _ = infer(strategy, inst, model, tok, segment_size=chunk)
            preds.append(int(rec.predicted))
        keep = [k for k, p in enumerate(preds) if p >= 0]
        kept_preds = [preds[k] for k in keep]
        kept_golds = [golds[k] for k in keep]
        kept_lengths = [lengths[k] for k in keep]
        report = compute_metrics(kept_preds, kept_golds)
        strata = stratified_f1(kept_preds, kept_golds, kept_lengths)
        all_metrics[strategy] = report
        all_strata[strategy] = strata
        cm = confusion_matrix(kept_preds, kept_golds)
        fig_path = out_dir / "figures" / f"confusion_{strategy}.png"
        reports.fig_confusion(cm, fig_path, title=strategy)
        outputs.append(fig_path)
        np.savetxt(out_dir / f"confusion_{strategy}.csv", cm, fmt="%d", delimiter=",")
        outputs.append(out_dir / f"confusion_{strategy}.csv")

    (out_dir / "metrics.json").write_text(json.dumps(
        {s: m.as_dict() for s, m in all_metrics.items()}, indent=2), encoding="utf-8")
    (out_dir / "metrics.txt").write_text(
        reports.metrics_table(all_metrics) + "\n\n" + reports.stratified_table(all_strata) + "\n",
        encoding="utf-8")
    reports.write_stratified_csv(all_strata, out_dir / "stratified.csv")
    reports.fig_stratified_f1(all_strata, out_dir / "figures" / "stratified_f1.png")
    click.echo(reports.metrics_table(all_metrics))
    click.echo("")
    click.echo(reports.stratified_table(all_strata))
    outputs += [out_dir / "metrics.json", out_dir / "metrics.txt",
                out_dir / "stratified.csv", out_dir / "figures" / "stratified_f1.png"]
    _write_manifest(out_dir, "eval",
                    {"strategies": wanted, "eval_fraction": eval_fraction,
                     "split_seed": split_seed, "chunk_size": chunk},
                    [Path(corpus_path), Path(tokenizer_path)] +
                    [Path(checkpoints[s]) for s in wanted],
                    outputs)


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_pairs", multiple=True, required=True,
              help="STRATEGY=PATH, repeatable")
@click.option("--instances", "n_instances", type=int, default=None)
@click.option("--repetitions", type=int, default=None)
@click.option("--min-docs", type=int, default=None,
              help="benchmark only instances with at least this many documents")
@click.option("--chunk-size", type=click.Choice([str(c) for c in CHUNK_SIZES]), default=None)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def bench(corpus_path, tokenizer_path, checkpoint_pairs, n_instances, repetitions,
          min_docs, chunk_size, out_dir, seed, config_path):
    """Inference-speed benchmark over multi-document instances."""
    section = _load_config_section(config_path, "bench")
    n_instances = _effective(n_instances, section, "instances", 100)
    repetitions = _effective(repetitions, section, "repetitions", 3)
    min_docs = _effective(min_docs, section, "min_docs", 2)
    chunk = int(_effective(chunk_size, section, "chunk_size", DEFAULT_SEGMENT_SIZE))
    seed = _effective(seed, section, "seed", 0)

    corpus = load_corpus(corpus_path)
    tok = Tokenizer.load(tokenizer_path)
    checkpoints = _parse_checkpoints(checkpoint_pairs)
    pool = [i for i in corpus.accepted() if len(i.documents) >= min_docs]
    if not pool:
        raise click.ClickException(f"no accepted instances with >= {min_docs} documents")
    rng = np.random.default_rng(seed)
    if len(pool) > n_instances:
        idx = sorted(rng.choice(len(pool), n_instances, replace=False))
        pool = [pool[i] for i in idx]

    results = []
    for strategy, path in checkpoints.items():
        model, _ = load_checkpoint(path)
        results.append(bench_inference(
            lambda inst, s=strategy, m=model: infer(s, inst, m, tok, segment_size=chunk),
            pool, strategy=strategy, repetitions=repetitions,
        ))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "bench.json").write_text(
        json.dumps([r.as_dict() for r in results], indent=2), encoding="utf-8")
    reports.write_bench_csv(results, out_dir / "bench.csv")
    reports.fig_bench(results, out_dir / "figures" / "bench.png")
    click.echo(reports.bench_table(results))
    _write_manifest(out_dir, "bench",
                    {"instances": len(pool), "repetitions": repetitions,
                     "min_docs": min_docs},
                    [Path(corpus_path), Path(tokenizer_path)] +
                    [Path(p) for p in checkpoints.values()],
                    [out_dir / "bench.json", out_dir / "bench.csv",
                     out_dir / "figures" / "bench.png"])


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=True,
              help="segment_batch checkpoint")
@click.option("--instance-id", required=True)
@click.option("--label", type=click.Choice([t.name for t in TeamLabel]), default=None,
              help="attention row to export (default: predicted team)")
@click.option("--chunk-size", type=click.Choice([str(c) for c in CHUNK_SIZES]), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def explain(corpus_path, tokenizer_path, checkpoint_path, instance_id, label,
            chunk_size, out, seed, config_path):
    """Export the label-aware attention evidence for one instance."""
    section = _load_config_section(config_path, "explain")
    chunk = int(_effective(chunk_size, section, "chunk_size", DEFAULT_SEGMENT_SIZE))
    corpus = load_corpus(corpus_path)
    inst = corpus.get(instance_id)
    if inst is None:
        raise click.ClickException(f"unknown instance_id {instance_id!r}")
    tok = Tokenizer.load(tokenizer_path)
    model, _ = load_checkpoint(checkpoint_path)
    bundle = explain_instance(
        inst, model, tok, segment_size=chunk,
        label=TeamLabel[label] if label else None,
    )
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(bundle.as_dict(), indent=2), encoding="utf-8")
    click.echo(f"predicted {bundle.predicted.name}; {len(bundle.spans)} spans -> {out}", err=True)
    _write_manifest(out.parent, "explain",
                    {"instance_id": instance_id, "label": label, "chunk_size": chunk},
                    [Path(corpus_path), Path(tokenizer_path), Path(checkpoint_path)], [out])


@main.command(name="map")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=True,
              help="segment_batch checkpoint")
@click.option("--method", type=click.Choice(["pca", "tsne"]), default=None)
@click.option("--sample", type=int, default=None, help="max training instances to embed")
@click.option("--query", "query_id", default=None, help="instance to place as the query cross")
@click.option("--chunk-size", type=click.Choice([str(c) for c in CHUNK_SIZES]), default=None)
@click.option("--out", type=click.Path(), required=True, help="map JSON path")
@click.option("--figure", "figure_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def map_cmd(corpus_path, tokenizer_path, checkpoint_path, method, sample, query_id,
            chunk_size, out, figure_path, seed, config_path):
    """Fit and export the population projection map."""
    section = _load_config_section(config_path, "map")
    method = _effective(method, section, "method", "pca")
    sample = _effective(sample, section, "sample", 500)
    seed = _effective(seed, section, "seed", 0)
    chunk = int(_effective(chunk_size, section, "chunk_size", DEFAULT_SEGMENT_SIZE))

    corpus = load_corpus(corpus_path)
    tok = Tokenizer.load(tokenizer_path)
    model, _ = load_checkpoint(checkpoint_path)
    accepted = corpus.accepted()
    if len(accepted) < 3:
        raise click.ClickException("need at least 3 accepted instances")
    rng = np.random.default_rng(seed)
    if len(accepted) > sample:
        idx = sorted(rng.choice(len(accepted), sample, replace=False))
        accepted = [accepted[i] for i in idx]
    embeddings = embed_training_set(accepted, model, tok, chunk)
    pmap = fit_projection(
        embeddings,
        [int(i.label) if i.label is not None else None for i in accepted],
        [i.instance_id for i in accepted],
        method=method, seed=seed,
    )
    query_xy = None
    if query_id:
        query_inst = corpus.get(query_id)
        if query_inst is None:
            raise click.ClickException(f"unknown instance_id {query_id!r}")
        query_emb = embed_training_set([query_inst], model, tok, chunk)[0]
        query_xy = project_query(pmap, query_emb)

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = pmap.as_dict()
    if query_xy is not None:
        payload["query"] = {"instance_id": query_id, "x": query_xy[0], "y": query_xy[1]}
    out.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    outputs = [out]
    if figure_path:
        reports.fig_projection(payload["points"], figure_path, query_xy,
                               title=f"{method} projection")
        outputs.append(Path(figure_path))
    click.echo(f"{len(pmap.points)} points -> {out}", err=True)
    _write_manifest(out.parent, "map",
                    {"method": method, "sample": sample, "query": query_id},
                    [Path(corpus_path), Path(tokenizer_path), Path(checkpoint_path)],
                    outputs)


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_pairs", multiple=True, required=True,
              help="STRATEGY=PATH, repeatable")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8321)
@click.option("--project", "projection_method", type=click.Choice(["pca", "tsne", "none"]),
              default="pca")
@click.option("--map-sample", type=int, default=500)
@click.option("--chunk-size", type=click.Choice([str(c) for c in CHUNK_SIZES]), default=None)
@click.option("--ui-dir", type=click.Path(exists=True), default=None,
              help="serve a built single-page app from this directory at /")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def serve(corpus_path, tokenizer_path, checkpoint_pairs, host, port, projection_method,
          map_sample, chunk_size, ui_dir, seed, config_path):
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app, load_service_state

    section = _load_config_section(config_path, "serve")
    seed = _effective(seed, section, "seed", 0)
    chunk = int(_effective(chunk_size, section, "chunk_size", DEFAULT_SEGMENT_SIZE))
    state = load_service_state(
        corpus_path, tokenizer_path, _parse_checkpoints(checkpoint_pairs),
        projection_method=None if projection_method == "none" else projection_method,
        projection_sample=map_sample, segment_size=chunk, seed=seed,
    )
    app = create_app(state)
    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    click.echo(f"serving on http://{host}:{port}", err=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def entrypoint():
    try:
        main(standalone_mode=True)
    except Exception as exc:  # noqa: BLE001 - single top-level error surface
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
