"""Synthetic referral-corpus generator with controllable signal.

Length samplers are log-normal, calibrated so that per-document token counts
have median ~120 (IQR ~155) and per-instance totals median ~1323 (IQR ~3229)
under the default config. Text is built from templated sentences whose slot
words are drawn from the referred team's lexicon at a controllable rate, with
shared filler everywhere else.
"""
from __future__ import annotations

import math
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .heuristics import ACCEPTANCE_WINDOW_DAYS, ReferralEvent, label_acceptance, segment_history
from .lexicons import FILLER_LEXICON, SENTENCE_TEMPLATES, signal_terms
from .types import (
    DOC_CATEGORIES,
    AUTHOR_ROLES,
    Acceptance,
    ClinicalDocument,
    Corpus,
    CorpusConfig,
    Instance,
    NUM_TEAMS,
    TeamLabel,
)

EPOCH = date(2023, 1, 2)

_Z_IQR = 1.3489795  # z(0.75) - z(0.25); maps an IQR target onto a log-normal sigma


def _lognormal_params(median: float, iqr: float) -> tuple[float, float]:
    # solve exp(mu +/- 0.6745 sigma) quartiles for sigma given median and IQR
    half = iqr / (2.0 * median)
    sigma = 2.0 * math.asinh(half) / _Z_IQR
    return math.log(median), sigma


def _sample_length(rng: np.random.Generator, median: float, iqr: float, lo: int, hi: int) -> int:
    mu, sigma = _lognormal_params(median, iqr)
    return int(np.clip(round(rng.lognormal(mu, sigma)), lo, hi))


def _split_budget(rng: np.random.Generator, budget: int, cfg: CorpusConfig) -> list[int]:
    """Split an instance token budget into per-document lengths."""
    med, iqr = cfg.doc_length_target
    lengths: list[int] = []
    remaining = budget
    while remaining > 0:
        n = _sample_length(rng, med, iqr, 5, 2000)
        if remaining - n < 5:
            n = remaining
        lengths.append(n)
        remaining -= n
    return lengths


def _signal_rate(cfg: CorpusConfig, doc_index: int, doc_count: int) -> float:
    """Per-document probability that a slot word is a team-lexicon term.

    ``uniform`` spreads the (1 - noise_ratio) signal mass evenly; ``head``
    concentrates it in the earliest third of the document list, ``tail`` in
    the latest third (document indices are chronological storage order).
    """
    base = 1.0 - cfg.noise_ratio
    if cfg.signal_position == "uniform" or doc_count == 1:
        return base
    third = max(1, math.ceil(doc_count / 3))
    if cfg.signal_position == "head":
        hot = doc_index < third
    else:  # tail
        hot = doc_index >= doc_count - third
    return min(1.0, 3.0 * base) if hot else 0.0


def _make_text(rng: np.random.Generator, team: TeamLabel, n_tokens: int, rate: float) -> str:
    terms = signal_terms(team)
    words: list[str] = []
    while len(words) < n_tokens:
        template = SENTENCE_TEMPLATES[rng.integers(len(SENTENCE_TEMPLATES))]
        for part in template:
            if part == "{}":
                if rng.random() < rate:
                    words.append(terms[rng.integers(len(terms))])
                else:
                    words.append(FILLER_LEXICON[rng.integers(len(FILLER_LEXICON))])
            else:
                words.append(part)
    return " ".join(words[:n_tokens])


def _guarantee_signal(
    rng: np.random.Generator, text: str, team: TeamLabel, rate: float
) -> str:
    # construction guarantee: a hot document always carries >= 1 team term
    if rate >= 1.0 - 1e-12:
        terms = signal_terms(team)
        tokens = text.split()
        if not any(t in set(terms) for t in tokens):
            tokens[rng.integers(len(tokens))] = terms[rng.integers(len(terms))]
            return " ".join(tokens)
    return text


def _as_timestamp(day: date) -> datetime:
    # day granularity; within-day order falls back to doc_id
    return datetime(day.year, day.month, day.day, tzinfo=timezone.utc)


def _make_documents(
    rng: np.random.Generator,
    patient_id: str,
    episode_idx: int,
    team: TeamLabel,
    referral_date: date,
    doc_days: list[int],
    lengths: list[int],
    cfg: CorpusConfig,
) -> list[ClinicalDocument]:
    docs = []
    count = len(lengths)
    for i, (offset, n_tokens) in enumerate(zip(doc_days, lengths)):
        rate = _signal_rate(cfg, i, count)
        text = _make_text(rng, team, n_tokens, rate)
        text = _guarantee_signal(rng, text, team, rate)
        role = AUTHOR_ROLES[rng.integers(len(AUTHOR_ROLES))]
        category = DOC_CATEGORIES[rng.integers(len(DOC_CATEGORIES))]
        docs.append(
            ClinicalDocument(
                doc_id=f"{patient_id}-R{episode_idx}-D{i:03d}",
                timestamp=_as_timestamp(referral_date + timedelta(days=offset)),
                author_role=role,
                category=category,
                text=text,
            )
        )
    return docs


def generate_corpus(config: CorpusConfig) -> Corpus:
    """Generate a deterministic synthetic corpus for the given config."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    extraction = EPOCH + timedelta(days=config.span_days)

    teams = list(TeamLabel)
    prior_vec = np.array([config.team_priors[t] for t in teams])
    bounce = np.asarray(config.bounce_matrix, dtype=float)
    inst_med, inst_iqr = config.instance_length_target

    instances: list[Instance] = []
    for p in range(config.n_patients):
        patient_id = f"P{p:06d}"
        first_team = teams[rng.choice(NUM_TEAMS, p=prior_vec / prior_vec.sum())]
        first_ref = EPOCH + timedelta(days=int(rng.integers(0, config.span_days + 1)))

        episodes: list[tuple[TeamLabel, date, bool]] = []
        onward = int(rng.choice(NUM_TEAMS + 1, p=bounce[int(first_team)]))
        if onward < NUM_TEAMS:
            gap = int(rng.integers(1, 30))
            second_ref = first_ref + timedelta(days=gap)
            if second_ref <= extraction:
                episodes.append((first_team, first_ref, True))
                episodes.append((teams[onward], second_ref, False))
        if not episodes:
            episodes.append((first_team, first_ref, False))

        all_docs: list[ClinicalDocument] = []
        events: list[ReferralEvent] = []
        episode_teams: list[TeamLabel] = []
        for k, (team, ref_date, forced_reject) in enumerate(episodes):
            days_to_extraction = (extraction - ref_date).days
            censored = days_to_extraction < ACCEPTANCE_WINDOW_DAYS
            budget = _sample_length(rng, inst_med, inst_iqr, 30, 30_000)

            if censored:
                lengths = _split_budget(rng, max(30, budget // 4), config)[:4]
                offsets = [0] + sorted(
                    int(rng.integers(0, days_to_extraction + 1)) for _ in lengths[1:]
                )
                discharge: date | None = None
            elif forced_reject or rng.random() > config.accept_rate:
                n_docs = int(rng.integers(1, 4))
                lengths = _even_split(budget, n_docs)
                offsets = [0] * n_docs
                discharge = ref_date
            else:
                lengths = _split_budget(rng, budget, config)
                duration = _sample_length(rng, 60, 70, ACCEPTANCE_WINDOW_DAYS + 1, 400)
                horizon = min(duration, days_to_extraction)
                offsets = [0] + sorted(
                    int(rng.integers(1, horizon + 1)) for _ in lengths[1:]
                )
                discharge = None if duration > days_to_extraction else ref_date + timedelta(days=duration)

            # keep this episode's window and documents clear of the next referral
            if k + 1 < len(episodes):
                next_ref = episodes[k + 1][1]
                limit = (next_ref - ref_date).days
                offsets = [min(o, max(0, limit - 1)) for o in offsets]
                if discharge is None or discharge >= next_ref:
                    discharge = next_ref - timedelta(days=1)

            docs = _make_documents(
                rng, patient_id, k, team, ref_date, offsets, lengths, config
            )
            all_docs.extend(docs)
            events.append(ReferralEvent(referral_date=ref_date, discharge_date=discharge))
            episode_teams.append(team)

        for inst, team in zip(segment_history(patient_id, all_docs, events), episode_teams):
            inst.acceptance = label_acceptance(inst, extraction)
            inst.referred_team = team
            inst.label = team if inst.acceptance == Acceptance.ACCEPTED else None
            instances.append(inst)

    return Corpus(instances=instances)


def _even_split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def patient_split(
    corpus: Corpus, eval_fraction: float = 0.2, seed: int = 0
) -> tuple[list[Instance], list[Instance]]:
    """Patient-disjoint train/eval split; no patient_id crosses the boundary."""
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError("eval_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    patients = sorted(corpus.registry)
    rng.shuffle(patients)
    n_eval = max(1, round(eval_fraction * len(patients)))
    eval_ids = set(patients[:n_eval])
    train = [i for i in corpus.instances if i.patient_id not in eval_ids]
    evals = [i for i in corpus.instances if i.patient_id in eval_ids]
    return train, evals
