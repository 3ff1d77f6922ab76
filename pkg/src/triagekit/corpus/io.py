"""Corpus persistence: newline-delimited instance records plus a YAML config."""
from __future__ import annotations

import json
from datetime import date, datetime
from pathlib import Path

import numpy as np
import yaml

from .types import (
    Acceptance,
    ClinicalDocument,
    Corpus,
    CorpusConfig,
    Instance,
    TeamLabel,
)

SCHEMA_VERSION = 1


def instance_to_record(inst: Instance) -> dict:
    return {
        "instance_id": inst.instance_id,
        "patient_id": inst.patient_id,
        "referral_date": inst.referral_date.isoformat(),
        "discharge_date": inst.discharge_date.isoformat() if inst.discharge_date else None,
        "acceptance": inst.acceptance.value if inst.acceptance else None,
        "label": inst.label.name if inst.label is not None else None,
        "referred_team": inst.referred_team.name if inst.referred_team is not None else None,
        "documents": [
            {
                "doc_id": d.doc_id,
                "timestamp": d.timestamp.isoformat(),
                "author_role": d.author_role,
                "category": d.category,
                "text": d.text,
            }
            for d in inst.documents
        ],
    }


def instance_from_record(rec: dict) -> Instance:
    docs = [
        ClinicalDocument(
            doc_id=d["doc_id"],
            timestamp=datetime.fromisoformat(d["timestamp"]),
            author_role=d["author_role"],
            category=d["category"],
            text=d["text"],
        )
        for d in rec["documents"]
    ]
    return Instance(
        instance_id=rec["instance_id"],
        patient_id=rec["patient_id"],
        referral_date=date.fromisoformat(rec["referral_date"]),
        discharge_date=(
            date.fromisoformat(rec["discharge_date"]) if rec.get("discharge_date") else None
        ),
        documents=docs,
        acceptance=Acceptance(rec["acceptance"]) if rec.get("acceptance") else None,
        label=TeamLabel[rec["label"]] if rec.get("label") else None,
        referred_team=TeamLabel[rec["referred_team"]] if rec.get("referred_team") else None,
    )


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for inst in corpus.instances:
            fh.write(json.dumps(instance_to_record(inst), sort_keys=True))
            fh.write("\n")


def load_corpus(path: str | Path) -> Corpus:
    instances = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                instances.append(instance_from_record(json.loads(line)))
    return Corpus(instances=instances)


def config_to_dict(config: CorpusConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n_patients": config.n_patients,
        "team_priors": {t.name: float(p) for t, p in config.team_priors.items()},
        "doc_length_target": list(config.doc_length_target),
        "instance_length_target": list(config.instance_length_target),
        "signal_position": config.signal_position,
        "noise_ratio": config.noise_ratio,
        "bounce_matrix": np.asarray(config.bounce_matrix, dtype=float).tolist(),
        "seed": config.seed,
        "accept_rate": config.accept_rate,
        "span_days": config.span_days,
    }


def config_from_dict(data: dict) -> CorpusConfig:
    kwargs = dict(data)
    kwargs.pop("schema_version", None)
    if "team_priors" in kwargs:
        kwargs["team_priors"] = {
            TeamLabel[name]: float(p) for name, p in kwargs["team_priors"].items()
        }
    if "bounce_matrix" in kwargs:
        kwargs["bounce_matrix"] = np.asarray(kwargs["bounce_matrix"], dtype=float)
    for key in ("doc_length_target", "instance_length_target"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return CorpusConfig(**kwargs)


def save_config(config: CorpusConfig, path: str | Path) -> None:
    Path(path).write_text(
        yaml.safe_dump(config_to_dict(config), sort_keys=True), encoding="utf-8"
    )


def load_config(path: str | Path) -> CorpusConfig:
    return config_from_dict(yaml.safe_load(Path(path).read_text(encoding="utf-8")))
