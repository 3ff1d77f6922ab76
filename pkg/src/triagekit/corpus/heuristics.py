"""Referral-window segmentation and the 14-day acceptance heuristic."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date, timedelta

from .types import Acceptance, ClinicalDocument, Instance

log = logging.getLogger(__name__)

ACCEPTANCE_WINDOW_DAYS = 14


@dataclass(frozen=True)
class ReferralEvent:
    """A referral/discharge pair demarcating one episode of care."""

    referral_date: date
    discharge_date: date | None = None


def label_acceptance(instance: Instance, extraction_date: date) -> Acceptance:
    """Derive the acceptance status of a referral instance.

    A referral within 14 days of the extraction date is right-censored.
    Otherwise the referral is accepted when either clause holds:
      * a note was entered strictly after the referral date and within the
        14-day window, or
      * the episode was still open after the 14-day cut-off (no discharge,
        or discharge later than referral + 14 days).
    Documents timestamped on the referral date itself do not count as notes
    entered after the referral.
    """
    ref = instance.referral_date
    if extraction_date < ref:
        raise ValueError(
            f"extraction_date {extraction_date} precedes referral_date {ref}"
        )
    if (extraction_date - ref).days < ACCEPTANCE_WINDOW_DAYS:
        return Acceptance.CENSORED

    cutoff = ref + timedelta(days=ACCEPTANCE_WINDOW_DAYS)
    note_in_window = any(
        ref < doc.timestamp.date() <= cutoff for doc in instance.documents
    )
    open_after_cutoff = instance.discharge_date is None or instance.discharge_date > cutoff
    if note_in_window or open_after_cutoff:
        clause = "note_in_window" if note_in_window else "open_after_cutoff"
        log.debug("instance %s accepted via %s", instance.instance_id, clause)
        return Acceptance.ACCEPTED
    return Acceptance.NOT_ACCEPTED


def segment_history(
    patient_id: str,
    documents: list[ClinicalDocument],
    events: list[ReferralEvent],
) -> list[Instance]:
    """Split a patient's record into per-referral instances.

    Each instance receives exactly the documents dated within its
    [referral, discharge] window (to the end of the record when the episode
    is open). Windows never share documents: when windows overlap, a document
    is assigned to the candidate window with the latest referral date, and a
    warning is logged.
    """
    if any(
        events[i].referral_date > events[i + 1].referral_date
        for i in range(len(events) - 1)
    ):
        raise ValueError(f"patient {patient_id}: events must be sorted by referral date")

    assigned: list[list[ClinicalDocument]] = [[] for _ in events]
    for doc in documents:
        day = doc.timestamp.date()
        candidates = [
            k
            for k, ev in enumerate(events)
            if ev.referral_date <= day
            and (ev.discharge_date is None or day <= ev.discharge_date)
        ]
        if not candidates:
            continue
        if len(candidates) > 1:
            log.warning(
                "patient %s: document %s falls in %d overlapping referral windows; "
                "assigned to the later referral",
                patient_id,
                doc.doc_id,
                len(candidates),
            )
        chosen = max(candidates, key=lambda k: events[k].referral_date)
        assigned[chosen].append(doc)

    instances = []
    for k, ev in enumerate(events):
        instances.append(
            Instance(
                instance_id=f"{patient_id}-R{k}",
                patient_id=patient_id,
                referral_date=ev.referral_date,
                discharge_date=ev.discharge_date,
                documents=assigned[k],
                acceptance=None,  # caller labels via label_acceptance
            )
        )
    return instances
