"""triagekit: long-document referral triage with variable-length ingestion
strategies, LoRA fine-tuning, and label-aware attention explanations."""

__version__ = "0.1.0"
