"""Content-addressed classifier score cache.

Records are keyed by (model id, revision pin, task, text digest, aspect
digest) and written atomically, so concurrent readers never observe a
partial file.  Scores round-trip through JSON bit-exactly (Python floats
serialize via repr), which keeps cached and uncached outputs identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .inference import Classifier


def cache_key(model_id: str, revision: str, task: str, text: str, aspect: str | None) -> str:
    text_digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    aspect_digest = hashlib.sha256((aspect or "").encode("utf-8")).hexdigest()
    payload = "\x1f".join([model_id, revision, task, text_digest, aspect_digest])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ScoreCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict[str, float] | None:
        path = self._path(key)
        try:
            with path.open("r", encoding="utf-8") as handle:
                record = json.load(handle)
        except (FileNotFoundError, json.JSONDecodeError):
            return None
        return record.get("entries")

    def put(self, key: str, entries: dict[str, float], **meta) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        record = dict(meta)
        record["entries"] = entries
        record["created_at"] = datetime.now(timezone.utc).isoformat()
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(record, handle, ensure_ascii=False, sort_keys=True)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise


class CachingClassifier(Classifier):
    """Wrap any classifier with cache-first lookups."""

    def __init__(self, inner: Classifier, cache: ScoreCache):
        self.inner = inner
        self.cache = cache
        self.spec = inner.spec
        self.mask_token = inner.mask_token
        self.concurrent_safe = inner.concurrent_safe

    def _key(self, text: str, aspect: str | None) -> str:
        spec = self.spec
        return cache_key(spec.model_id, spec.revision_pin, spec.task, text, aspect)

    def scores(self, text: str, aspect: str | None = None) -> dict[str, float]:
        key = self._key(text, aspect)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        fresh = self.inner.scores(text, aspect)
        self.cache.put(
            key,
            fresh,
            model_id=self.spec.model_id,
            revision_pin=self.spec.revision_pin,
            task=self.spec.task,
        )
        return fresh

    def scores_batch(
        self, texts: Sequence[str], aspect: str | None = None
    ) -> list[dict[str, float]]:
        keys = [self._key(text, aspect) for text in texts]
        results: list[dict[str, float] | None] = [self.cache.get(key) for key in keys]
        missing = [index for index, hit in enumerate(results) if hit is None]
        if missing:
            fresh = self.inner.scores_batch([texts[i] for i in missing], aspect)
            for index, scores in zip(missing, fresh):
                self.cache.put(
                    keys[index],
                    scores,
                    model_id=self.spec.model_id,
                    revision_pin=self.spec.revision_pin,
                    task=self.spec.task,
                )
                results[index] = scores
        return results  # type: ignore[return-value]

    def was_truncated(self, text: str) -> bool:
        return self.inner.was_truncated(text)
