"""Core referral-corpus domain types.

An *instance* is the unit of ingestion everywhere downstream: a referral,
zero or more time-ordered clinical documents, and (when derivable) the team
that accepted the referral.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import date, datetime

import numpy as np

from ..errors import ConfigurationError


class TeamLabel(enum.IntEnum):
    """The five sub-specialty community teams, with stable 0..4 encoding."""

    ED = 0   # eating disorders
    ID = 1   # mental health for people with intellectual disability
    OA = 2   # older adults (memory and dementia services)
    EIP = 3  # early intervention for psychosis
    PN = 4   # peri-natal psychiatry

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]


_DISPLAY_NAMES = {
    TeamLabel.ED: "Eating Disorders",
    TeamLabel.ID: "Intellectual Disability",
    TeamLabel.OA: "Older Adults",
    TeamLabel.EIP: "Early Intervention in Psychosis",
    TeamLabel.PN: "Peri-natal Psychiatry",
}

NUM_TEAMS = len(TeamLabel)

AUTHOR_ROLES = ("doctor", "nurse", "psychologist", "OT", "admin")
DOC_CATEGORIES = ("MSE", "MDT_summary", "assessment", "admin", "contact")


class Acceptance(str, enum.Enum):
    ACCEPTED = "accepted"
    NOT_ACCEPTED = "not_accepted"
    CENSORED = "censored"


@dataclass(frozen=True)
class ClinicalDocument:
    doc_id: str
    timestamp: datetime
    author_role: str
    category: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"document {self.doc_id}: text empty after cleaning")
        if self.author_role not in AUTHOR_ROLES:
            raise ValueError(f"document {self.doc_id}: unknown author_role {self.author_role!r}")
        if self.category not in DOC_CATEGORIES:
            raise ValueError(f"document {self.doc_id}: unknown category {self.category!r}")


@dataclass
class Instance:
    """A referral-demarcated, time-ordered collection of clinical documents.

    ``referred_team`` is the team that received the referral (always known in
    generated corpora); ``label`` is the accepted-team target and is set only
    when ``acceptance == ACCEPTED``.
    """

    instance_id: str
    patient_id: str
    referral_date: date
    discharge_date: date | None
    documents: list[ClinicalDocument]
    acceptance: Acceptance | None  # None until label_acceptance has run
    label: TeamLabel | None = None
    referred_team: TeamLabel | None = None

    def __post_init__(self):
        self.documents = sorted(self.documents, key=lambda d: (d.timestamp, d.doc_id))
        for doc in self.documents:
            if doc.timestamp.date() < self.referral_date:
                raise ValueError(
                    f"instance {self.instance_id}: document {doc.doc_id} predates referral"
                )
        if self.discharge_date is not None and self.discharge_date < self.referral_date:
            raise ValueError(f"instance {self.instance_id}: discharge before referral")

    @property
    def document_count(self) -> int:
        return len(self.documents)


@dataclass
class Corpus:
    """Immutable-after-creation container: instances plus the patient registry."""

    instances: list[Instance]
    registry: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.registry:
            reg: dict[str, list[str]] = {}
            for inst in self.instances:
                reg.setdefault(inst.patient_id, []).append(inst.instance_id)
            self.registry = reg
        self._by_id = {inst.instance_id: inst for inst in self.instances}

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def get(self, instance_id: str) -> Instance | None:
        return self._by_id.get(instance_id)

    def accepted(self) -> list[Instance]:
        return [i for i in self.instances if i.acceptance == Acceptance.ACCEPTED]


DEFAULT_TEAM_PRIORS = {
    TeamLabel.ED: 0.15,
    TeamLabel.ID: 0.15,
    TeamLabel.OA: 0.35,  # older-adult services over-represented by design
    TeamLabel.EIP: 0.20,
    TeamLabel.PN: 0.15,
}

SIGNAL_POSITIONS = ("uniform", "head", "tail")


def default_bounce_matrix(no_onward: float = 0.88) -> np.ndarray:
    """Row-stochastic T x (T+1) table; last column is "no onward referral".

    Off-diagonal bounce mass is spread over the other teams in proportion to
    their priors, which keeps the accepted-label distribution close to
    ``team_priors`` even with bouncing enabled.
    """
    priors = np.array([DEFAULT_TEAM_PRIORS[t] for t in TeamLabel])
    mat = np.zeros((NUM_TEAMS, NUM_TEAMS + 1))
    for a in range(NUM_TEAMS):
        others = np.array([priors[b] if b != a else 0.0 for b in range(NUM_TEAMS)])
        mat[a, :NUM_TEAMS] = (1.0 - no_onward) * others / others.sum()
        mat[a, NUM_TEAMS] = no_onward
    return mat


@dataclass
class CorpusConfig:
    n_patients: int = 1000
    team_priors: dict[TeamLabel, float] = field(
        default_factory=lambda: dict(DEFAULT_TEAM_PRIORS)
    )
    # (median, IQR) targets in tokens for the length samplers
    doc_length_target: tuple[float, float] = (120.0, 155.0)
    instance_length_target: tuple[float, float] = (1323.0, 3229.0)
    signal_position: str = "uniform"
    noise_ratio: float = 0.5
    bounce_matrix: np.ndarray = field(default_factory=default_bounce_matrix)
    seed: int = 0
    # generation mechanics beyond the calibration targets
    accept_rate: float = 0.65
    span_days: int = 720

    def validate(self) -> None:
        if self.n_patients <= 0:
            raise ConfigurationError("n_patients must be positive")
        if set(self.team_priors) != set(TeamLabel):
            raise ConfigurationError("team_priors must cover exactly the 5 teams")
        total = sum(self.team_priors.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(f"team_priors sum to {total}, expected 1")
        if any(p < 0 for p in self.team_priors.values()):
            raise ConfigurationError("team_priors must be non-negative")
        if not 0.0 <= self.noise_ratio <= 1.0:
            raise ConfigurationError("noise_ratio must be in [0, 1]")
        if self.signal_position not in SIGNAL_POSITIONS:
            raise ConfigurationError(f"signal_position must be one of {SIGNAL_POSITIONS}")
        mat = np.asarray(self.bounce_matrix, dtype=float)
        if mat.shape != (NUM_TEAMS, NUM_TEAMS + 1):
            raise ConfigurationError(
                f"bounce_matrix must be {NUM_TEAMS}x{NUM_TEAMS + 1}, got {mat.shape}"
            )
        if np.any(mat < 0) or np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-9):
            raise ConfigurationError("bounce_matrix rows must be non-negative and sum to 1")
        if not 0.0 < self.accept_rate <= 1.0:
            raise ConfigurationError("accept_rate must be in (0, 1]")
