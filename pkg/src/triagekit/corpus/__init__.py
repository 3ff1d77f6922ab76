from .types import (
    Acceptance,
    AUTHOR_ROLES,
    ClinicalDocument,
    Corpus,
    CorpusConfig,
    DEFAULT_TEAM_PRIORS,
    DOC_CATEGORIES,
    Instance,
    NUM_TEAMS,
    TeamLabel,
    default_bounce_matrix,
)
from .heuristics import (
    ACCEPTANCE_WINDOW_DAYS,
    ReferralEvent,
    label_acceptance,
    segment_history,
)
from .generator import EPOCH, generate_corpus, patient_split
from .stats import (
    CorpusStats,
    bounce_matrix,
    bounce_matrix_labels,
    corpus_stats,
    instance_token_length,
)
from .io import (
    load_config,
    load_corpus,
    save_config,
    save_corpus,
)
from .lexicons import ALL_SIGNAL_TERMS, FILLER_LEXICON, TEAM_LEXICONS, is_signal_token, signal_terms

__all__ = [
    "Acceptance",
    "AUTHOR_ROLES",
    "ACCEPTANCE_WINDOW_DAYS",
    "ALL_SIGNAL_TERMS",
    "ClinicalDocument",
    "Corpus",
    "CorpusConfig",
    "CorpusStats",
    "DEFAULT_TEAM_PRIORS",
    "DOC_CATEGORIES",
    "EPOCH",
    "FILLER_LEXICON",
    "Instance",
    "NUM_TEAMS",
    "ReferralEvent",
    "TEAM_LEXICONS",
    "TeamLabel",
    "bounce_matrix",
    "bounce_matrix_labels",
    "corpus_stats",
    "default_bounce_matrix",
    "generate_corpus",
    "instance_token_length",
    "is_signal_token",
    "label_acceptance",
    "load_config",
    "load_corpus",
    "patient_split",
    "save_config",
    "save_corpus",
    "segment_history",
    "signal_terms",
]
