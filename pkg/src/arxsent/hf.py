"""Hugging Face sequence-classification adapter.

Imported lazily so the rest of the pipeline (synthetic classifiers, the
explainer, reporting) works without ``transformers``/``torch`` installed.
Batch calls run item by item on purpose: cross-item padding can perturb
low-order float bits, and the batch path must be bitwise identical to the
single path.
"""

from __future__ import annotations

from typing import Sequence

from .errors import ModelLoadError
from .inference import (
    ASPECT_SENTIMENT,
    OVERALL_SENTIMENT,
    POLARITY_LABELS,
    STAR_LABELS,
    Classifier,
    ModelSpec,
)


def load_classifier(model_id: str, task: str, revision: str = "main") -> "HFClassifier":
    try:
        import torch  # noqa: F401
        from transformers import AutoModelForSequenceClassification, AutoTokenizer
    except ImportError as exc:
        raise ModelLoadError(
            f"transformers/torch not installed; cannot load {model_id!r} "
            "(install the 'models' extra)"
        ) from exc

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id, revision=revision)
        model = AutoModelForSequenceClassification.from_pretrained(model_id, revision=revision)
    except Exception as exc:
        message = str(exc)
        kind = "version-mismatch" if "revision" in message.lower() else "missing-artifact"
        raise ModelLoadError(f"cannot load model {model_id!r}@{revision}: {exc}", kind=kind) from exc

    model.eval()
    expected = STAR_LABELS if task == OVERALL_SENTIMENT else POLARITY_LABELS
    id2label = model.config.id2label
    labels = [id2label[i] for i in range(len(id2label))]
    mapped = _map_labels(labels, expected)
    if mapped is None:
        raise ModelLoadError(
            f"{model_id!r} declares labels {labels}, expected {list(expected)}",
            kind="version-mismatch",
        )

    spec = ModelSpec(
        model_id=model_id,
        task=task,
        label_set=expected,
        max_input_units=int(getattr(tokenizer, "model_max_length", 512) or 512),
        revision_pin=revision,
    )
    return HFClassifier(spec, tokenizer, model, mapped)


def _map_labels(declared: list[str], expected: tuple[str, ...]) -> list[str] | None:
    """Match the model's declared label names onto the canonical set,
    tolerating case differences."""
    canonical = {label.lower(): label for label in expected}
    mapped = []
    for name in declared:
        hit = canonical.get(name.strip().lower())
        if hit is None:
            return None
        mapped.append(hit)
    return mapped if len(set(mapped)) == len(expected) else None


class HFClassifier(Classifier):
    concurrent_safe = False

    def __init__(self, spec: ModelSpec, tokenizer, model, index_to_label: list[str]):
        self.spec = spec
        self.tokenizer = tokenizer
        self.model = model
        self.index_to_label = index_to_label
        self.mask_token = getattr(tokenizer, "mask_token", None)

    def _encode(self, text: str, aspect: str | None):
        if aspect is not None and self.spec.task == ASPECT_SENTIMENT:
            return self.tokenizer(
                text,
                aspect,
                truncation=True,
                max_length=self.spec.max_input_units,
                return_tensors="pt",
            )
        return self.tokenizer(
            text, truncation=True, max_length=self.spec.max_input_units, return_tensors="pt"
        )

    def scores(self, text: str, aspect: str | None = None) -> dict[str, float]:
        import torch

        encoded = self._encode(text, aspect)
        with torch.no_grad():
            logits = self.model(**encoded).logits[0]
            probs = torch.softmax(logits, dim=-1).tolist()
        return {self.index_to_label[i]: float(p) for i, p in enumerate(probs)}

    def scores_batch(
        self, texts: Sequence[str], aspect: str | None = None
    ) -> list[dict[str, float]]:
        return [self.scores(text, aspect) for text in texts]

    def was_truncated(self, text: str) -> bool:
        ids = self.tokenizer(text, truncation=False)["input_ids"]
        return len(ids) > self.spec.max_input_units
