"""Team-specific symptom lexicons and the shared filler lexicon.

Each team lexicon holds 200+ single-token terms (hyphenated compounds count
as one whitespace token). The five team lexicons and the filler lexicon are
pairwise disjoint, which is what makes planted signal recoverable: a term's
presence identifies its team unambiguously.
"""
from __future__ import annotations

from .types import TeamLabel

_ED_SEEDS = [
    "anorexia", "bulimia", "bingeing", "purging", "laxatives", "refeeding",
    "underweight", "overexercise", "emaciation", "amenorrhoea", "osfed",
    "arfid", "bradycardia-risk", "electrolyte-watch", "scoff-positive",
    "edeq-score", "marsipan", "ns-ed-review", "bmi-tracking", "weigh-in",
]
_ED_ADJ = [
    "restrictive", "binge", "purge", "compensatory", "caloric", "dietary",
    "mealtime", "bodyshape", "nutritional", "weight-focused", "food", "intake",
]
_ED_NOUN = [
    "restriction", "vomiting", "fasting", "preoccupation", "weighing",
    "avoidance", "ritualising", "rigidity", "counting", "collapse",
    "refeed-plan", "refusal", "bloating", "fullness-fear", "chart",
    "supplementing", "compulsion", "relapse-sign",
]

_ID_SEEDS = [
    "makaton", "pecs-board", "hydrocephalus", "microcephaly", "pica",
    "dysphagia-profile", "epilepsy-plan", "genotype-review", "phenylketonuria",
    "fragile-x", "trisomy-screen", "hoist-assessment", "respite-package",
    "keyworker-visit", "positive-behaviour-plan", "easyread-letter",
    "best-interests-meeting", "annual-health-check", "stopp-start", "paid-carer",
]
_ID_ADJ = [
    "adaptive", "developmental", "communicative", "sensory", "behavioural",
    "functional", "learning", "safeguarding", "capacity", "day-centre",
    "supported-living", "augmentative",
]
_ID_NOUN = [
    "functioning", "scaffolding", "signing", "desensitisation", "profiling",
    "milestones", "attainment", "regression-watch", "advocacy", "guardianship",
    "tolerance-building", "transitions-plan", "skill-teaching", "prompting",
    "chaining", "modelling-session", "overlearning", "generalisation",
]

_OA_SEEDS = [
    "alzheimers", "anticholinergic-burden", "mmse-score", "ace-iii",
    "sundowning", "wandering-risk", "polypharmacy", "donepezil", "memantine",
    "lewy-body", "vascular-load", "frailty-index", "falls-diary",
    "pendant-alarm", "carer-strain", "powerofattorney", "memory-clinic",
    "delirium-screen", "gait-freezing", "care-home-round",
]
_OA_ADJ = [
    "cognitive", "amnestic", "geriatric", "neurodegenerative", "orientation",
    "recall", "mobility", "continence", "nocturnal", "executive",
    "visuospatial", "prompted",
]
_OA_NOUN = [
    "decline", "forgetting", "disorientation", "misplacing", "repetition",
    "confabulation", "dressing-difficulty", "kitchen-safety", "medication-muddles",
    "night-wandering", "word-finding", "route-losing", "hoarding-tendency",
    "self-neglect-flag", "scam-vulnerability", "driving-cessation", "respite-need",
    "deterioration",
]

_EIP_SEEDS = [
    "psychosis", "hallucinations", "delusions", "paranoia", "prodrome",
    "voices-commentary", "thought-broadcast", "thought-insertion", "clozapine",
    "aripiprazole-depot", "duration-untreated", "at-risk-mental-state",
    "first-episode", "panss-score", "ideas-of-reference", "persecutory-theme",
    "grandiosity", "passivity-experience", "cannabis-linked", "relapse-signature",
]
_EIP_ADJ = [
    "psychotic", "prodromal", "persecutory", "derogatory", "command",
    "referential", "disorganised", "negative-symptom", "attenuated",
    "delusional", "hallucinatory", "unusual-belief",
]
_EIP_NOUN = [
    "voices", "beliefs", "suspiciousness", "guardedness", "thought-echo",
    "perplexity", "withdrawal-state", "blunting", "alogia", "avolition",
    "salience", "misinterpretation", "surveillance-fear", "broadcasting",
    "conviction", "preoccupying-theme", "insight-loss", "derailment",
]

_PN_SEEDS = [
    "antenatal", "postnatal", "puerperal", "breastfeeding", "bonding-concern",
    "trimester-review", "obstetric-liaison", "birth-trauma", "epds-score",
    "tokophobia", "perinatal-plan", "babycheck", "health-visitor", "midwife-note",
    "infant-interaction", "mother-baby-unit", "sertraline-in-pregnancy",
    "pre-birth-planning", "feeding-distress", "postpartum-onset",
]
_PN_ADJ = [
    "perinatal", "maternal", "gestational", "postpartum", "intrusive-harm",
    "infant-focused", "attachment", "pregnancy-related", "labour", "neonatal",
    "lactation", "weaning",
]
_PN_NOUN = [
    "bonding", "attunement", "responsiveness", "co-sleeping-worry",
    "feeding-routine", "baby-blues", "birth-plan", "nursery-setup",
    "infant-safety", "night-feeds", "colic-strain", "mastitis-pain",
    "cradling", "soothing-difficulty", "separation-worry", "guilt-spiral",
    "overchecking", "confidence-loss",
]

_FILLER_BASE = [
    "patient", "seen", "today", "clinic", "review", "appointment", "telephone",
    "call", "letter", "sent", "received", "discussed", "plan", "agreed",
    "attended", "did", "not", "attend", "contact", "made", "with", "family",
    "gp", "update", "record", "notes", "entered", "by", "team", "meeting",
    "arranged", "follow", "up", "in", "weeks", "days", "next", "visit",
    "home", "address", "confirmed", "demographics", "checked", "consent",
    "obtained", "information", "leaflet", "given", "no", "changes", "to",
    "report", "stable", "ongoing", "support", "continues", "medication",
    "reviewed", "dose", "unchanged", "prescription", "issued", "bloods",
    "requested", "results", "awaited", "normal", "range", "observations",
    "recorded", "risk", "assessment", "completed", "care", "coordinator",
    "allocated", "referral", "acknowledged", "waiting", "list", "duty",
    "worker", "message", "left", "voicemail", "callback", "requested-by",
    "admin", "task", "closed", "opened", "transferred", "copy", "filed",
    "summary", "dictated", "typed", "checked-by", "secretary", "reception",
    "rebooked", "cancelled", "dna", "letter-sent", "outcome", "form",
]
_FILLER_ADJ = [
    "routine", "brief", "scheduled", "joint", "initial", "further", "general",
    "standard", "planned", "weekly", "monthly", "annual",
]
_FILLER_NOUN = [
    "discussion", "handover", "liaison", "correspondence", "documentation",
    "paperwork", "signposting", "coordination", "triage-step", "booking",
    "attendance", "availability", "timetable", "caseload", "allocation",
    "waitlist", "checklist", "template",
]


def _expand(seeds: list[str], adjectives: list[str], nouns: list[str]) -> tuple[str, ...]:
    compounds = [f"{a}-{n}" for a in adjectives for n in nouns]
    return tuple(dict.fromkeys(seeds + compounds))


TEAM_LEXICONS: dict[TeamLabel, tuple[str, ...]] = {
    TeamLabel.ED: _expand(_ED_SEEDS, _ED_ADJ, _ED_NOUN),
    TeamLabel.ID: _expand(_ID_SEEDS, _ID_ADJ, _ID_NOUN),
    TeamLabel.OA: _expand(_OA_SEEDS, _OA_ADJ, _OA_NOUN),
    TeamLabel.EIP: _expand(_EIP_SEEDS, _EIP_ADJ, _EIP_NOUN),
    TeamLabel.PN: _expand(_PN_SEEDS, _PN_ADJ, _PN_NOUN),
}

FILLER_LEXICON: tuple[str, ...] = _expand(_FILLER_BASE, _FILLER_ADJ, _FILLER_NOUN)

# sentence scaffolds; every literal word must come from the filler lexicon
SENTENCE_TEMPLATES: tuple[tuple[str, ...], ...] = (
    ("patient", "seen", "today", "{}", "{}", "discussed", "{}"),
    ("{}", "{}", "noted", "with", "{}", "plan", "agreed"),
    ("review", "of", "{}", "{}", "and", "{}", "completed"),
    ("telephone", "contact", "{}", "{}", "follow", "up", "arranged"),
    ("{}", "reported", "alongside", "{}", "{}", "no", "changes"),
    ("team", "meeting", "discussed", "{}", "{}", "{}", "{}"),
)
# scaffold literals not already in the filler word list
_SCAFFOLD_EXTRA = ("of", "and", "noted", "reported", "alongside")
FILLER_LEXICON = tuple(dict.fromkeys(FILLER_LEXICON + _SCAFFOLD_EXTRA))


def _check_disjoint() -> None:
    pools: list[tuple[str, frozenset]] = [
        (team.name, frozenset(terms)) for team, terms in TEAM_LEXICONS.items()
    ]
    pools.append(("FILLER", frozenset(FILLER_LEXICON)))
    for i, (name_a, a) in enumerate(pools):
        for name_b, b in pools[i + 1:]:
            clash = a & b
            if clash:
                raise AssertionError(f"lexicon overlap {name_a}/{name_b}: {sorted(clash)[:5]}")
    for team, terms in TEAM_LEXICONS.items():
        if len(terms) < 200:
            raise AssertionError(f"{team.name} lexicon has {len(terms)} terms, need >= 200")


_check_disjoint()

ALL_SIGNAL_TERMS: frozenset[str] = frozenset(
    term for terms in TEAM_LEXICONS.values() for term in terms
)


def signal_terms(team: TeamLabel) -> tuple[str, ...]:
    return TEAM_LEXICONS[team]


def is_signal_token(token: str) -> bool:
    return token in ALL_SIGNAL_TERMS
