"""Run configuration: YAML file, flag overrides, validation, run id.

The run id hashes only semantic fields (query, window, models, estimator
settings, aspect parameters, report formats).  Where outputs land, whether
the cache is consulted, the parallelism limit, and the API endpoint do not
change results, so they stay out of the hash and out of the structured
report.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .corpus import DEFAULT_ARXIV_URL
from .errors import ConfigError
from .report import ALL_FORMATS

ENV_ARXIV_URL = "ARXSENT_ARXIV_URL"

ESTIMATORS = ("exact", "permutation", "hierarchical")
SAMPLING_ESTIMATORS = ("permutation", "hierarchical")

DEFAULTS: dict[str, Any] = {
    "query_term": "ChatGPT",
    "date_start": dt.date(2022, 12, 1),
    "date_end": dt.date(2023, 7, 24),
    "overall_model": "synthetic/lexicon",
    "aspect_model": "synthetic/lexicon",
    "model_revision": "main",
    "estimator": "hierarchical",
    "samples": 2000,
    "seed": 0,
    "exact_limit": 12,
    "hierarchy_top_k": 3,
    "tau_quantile": 0.75,
    "max_candidates": 10,
    "aspects": (),
    "formats": ALL_FORMATS,
    "out_dir": Path("runs"),
    "cache_dir": None,
    "parallelism": 1,
    "use_cache": True,
    "arxiv_url": DEFAULT_ARXIV_URL,
}

_SEMANTIC_FIELDS = (
    "query_term",
    "date_start",
    "date_end",
    "overall_model",
    "aspect_model",
    "model_revision",
    "estimator",
    "samples",
    "seed",
    "exact_limit",
    "hierarchy_top_k",
    "tau_quantile",
    "max_candidates",
    "aspects",
    "formats",
)


@dataclass(frozen=True)
class RunConfig:
    query_term: str
    date_start: dt.date
    date_end: dt.date
    overall_model: str
    aspect_model: str
    model_revision: str
    estimator: str
    samples: int
    seed: int | None
    exact_limit: int
    hierarchy_top_k: int
    tau_quantile: float
    max_candidates: int
    aspects: tuple[str, ...]
    formats: tuple[str, ...]
    out_dir: Path
    cache_dir: Path | None
    parallelism: int
    use_cache: bool
    arxiv_url: str

    def semantic_dict(self) -> dict[str, Any]:
        out = {}
        for field in _SEMANTIC_FIELDS:
            value = getattr(self, field)
            if isinstance(value, dt.date):
                value = value.isoformat()
            elif isinstance(value, tuple):
                value = list(value)
            out[field] = value
        return out

    @property
    def run_id(self) -> str:
        payload = json.dumps(self.semantic_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]

    @property
    def run_dir(self) -> Path:
        return self.out_dir / self.run_id


def _coerce_date(value: Any, key: str) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    raise ConfigError(f"{key}: expected an ISO date, got {value!r}")


def _coerce_int(value: Any, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return value


def _coerce_str_list(value: Any, key: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{key}: expected a list of strings, got {value!r}")
    return tuple(value)


def load_config(
    path: str | Path | None = None, overrides: Mapping[str, Any] | None = None
) -> RunConfig:
    """Merge defaults <- config file <- overrides <- environment, validate."""
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                loaded = yaml.safe_load(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw.update(loaded)

    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    merged = dict(DEFAULTS)
    merged.update(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    env_url = os.environ.get(ENV_ARXIV_URL)
    if env_url:
        merged["arxiv_url"] = env_url

    estimator = merged["estimator"]
    if estimator not in ESTIMATORS:
        raise ConfigError(f"estimator must be one of {', '.join(ESTIMATORS)}; got {estimator!r}")

    seed = merged["seed"]
    if seed is not None:
        seed = _coerce_int(seed, "seed")
    if seed is None and estimator in SAMPLING_ESTIMATORS:
        raise ConfigError(f"seed is required for the {estimator} estimator")

    samples = _coerce_int(merged["samples"], "samples")
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    exact_limit = _coerce_int(merged["exact_limit"], "exact_limit")
    if exact_limit < 1:
        raise ConfigError("exact_limit must be >= 1")
    top_k = _coerce_int(merged["hierarchy_top_k"], "hierarchy_top_k")
    if top_k < 0:
        raise ConfigError("hierarchy_top_k must be >= 0")
    parallelism = _coerce_int(merged["parallelism"], "parallelism")
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    max_candidates = _coerce_int(merged["max_candidates"], "max_candidates")
    if max_candidates < 1:
        raise ConfigError("max_candidates must be >= 1")

    tau = merged["tau_quantile"]
    if not isinstance(tau, (int, float)) or isinstance(tau, bool) or not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau_quantile must lie in [0, 1]; got {tau!r}")

    query_term = merged["query_term"]
    if not isinstance(query_term, str) or not query_term.strip():
        raise ConfigError("query_term must be a nonempty string")

    date_start = _coerce_date(merged["date_start"], "date_start")
    date_end = _coerce_date(merged["date_end"], "date_end")
    if date_start > date_end:
        raise ConfigError(f"date window is inverted: {date_start} > {date_end}")

    formats = _coerce_str_list(merged["formats"], "formats")
    bad = sorted(set(formats) - set(ALL_FORMATS))
    if bad:
        raise ConfigError(f"unknown report formats: {', '.join(bad)}")

    for key in ("overall_model", "aspect_model", "model_revision", "arxiv_url"):
        if not isinstance(merged[key], str) or not merged[key]:
            raise ConfigError(f"{key} must be a nonempty string")

    cache_dir = merged["cache_dir"]
    return RunConfig(
        query_term=query_term.strip(),
        date_start=date_start,
        date_end=date_end,
        overall_model=merged["overall_model"],
        aspect_model=merged["aspect_model"],
        model_revision=merged["model_revision"],
        estimator=estimator,
        samples=samples,
        seed=seed,
        exact_limit=exact_limit,
        hierarchy_top_k=top_k,
        tau_quantile=float(tau),
        max_candidates=max_candidates,
        aspects=_coerce_str_list(merged["aspects"], "aspects"),
        formats=formats or tuple(ALL_FORMATS),
        out_dir=Path(merged["out_dir"]),
        cache_dir=None if cache_dir is None else Path(cache_dir),
        parallelism=parallelism,
        use_cache=bool(merged["use_cache"]),
        arxiv_url=merged["arxiv_url"],
    )
