"""Versioned, checksummed JSON persistence for fitted pipelines.

A saved file is one JSON object::

    {"schema_version": 1, "created_at": "...", "body": {...}, "checksum": "<sha256>"}

The checksum covers the canonical serialization of ``body`` only, so two
fits with the same seed and data hash identically even when saved at
different times. Floats are written with ``repr`` precision and read back
bit for bit.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from ._io import atomic_open
from .neural import MlpModel
from .preprocess import FittedPreprocessor, transform
from .schema import FundUniverse
from .trees import DecisionTreeModel, RandomForestModel

SCHEMA_VERSION = 1
MODEL_KINDS = ("dt", "rf", "mlp")
_MODEL_TYPES = {"dt": DecisionTreeModel, "rf": RandomForestModel, "mlp": MlpModel}

Model = Union[DecisionTreeModel, RandomForestModel, MlpModel]


class ArtifactError(Exception):
    """A model file could not be read back."""


class ChecksumError(ArtifactError):
    """The payload is truncated, corrupted or was edited."""


class UnsupportedVersionError(ArtifactError):
    """The file was written by an incompatible format version."""


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def body_checksum(body: dict) -> str:
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ModelArtifact:
    model_kind: str
    preprocessor: FittedPreprocessor
    model: Model
    metadata: dict = field(default_factory=dict)
    created_at: str | None = None

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
        if not isinstance(self.model, _MODEL_TYPES[self.model_kind]):
            raise TypeError(f"{type(self.model).__name__} does not match model_kind {self.model_kind!r}")

    @property
    def categories(self) -> tuple[str, ...]:
        return self.preprocessor.categories

    def body(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "categories": list(self.categories),
            "preprocessor": self.preprocessor.to_dict(),
            "model": self.model.to_dict(),
            "metadata": self.metadata,
        }

    @property
    def checksum(self) -> str:
        return body_checksum(self.body())

    def predict_proba(self, data: FundUniverse) -> np.ndarray:
        return self.model.predict_proba(transform(self.preprocessor, data))


def _column_names(prep: FittedPreprocessor) -> tuple[str, ...]:
    return tuple(spec.name for spec in prep.layout)


def artifact_from_body(body: dict, created_at: str | None = None) -> ModelArtifact:
    kind = body["model_kind"]
    if kind not in MODEL_KINDS:
        raise ArtifactError(f"unknown model kind {kind!r}")
    prep = FittedPreprocessor.from_dict(body["preprocessor"])
    if tuple(body["categories"]) != prep.categories:
        raise ArtifactError("category vocabulary disagrees with the preprocessor")
    model = _MODEL_TYPES[kind].from_dict(body["model"], _column_names(prep))
    return ModelArtifact(kind, prep, model, body.get("metadata", {}), created_at)


def save_model(artifact: ModelArtifact, path: str | os.PathLike) -> str:
    """Write ``artifact`` atomically; returns the body checksum."""
    body = artifact.body()
    created = artifact.created_at or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    checksum = body_checksum(body)
    doc = {"schema_version": SCHEMA_VERSION, "created_at": created, "body": body, "checksum": checksum}
    with atomic_open(path, "w") as fh:
        fh.write(json.dumps(doc, allow_nan=False))
    return checksum


def load_model(path: str | os.PathLike) -> ModelArtifact:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChecksumError(f"checksum error: {os.fspath(path)} is truncated or corrupted ({exc.msg})") from None
    if not isinstance(doc, dict) or not {"schema_version", "body", "checksum"} <= doc.keys():
        raise ChecksumError(f"checksum error: {os.fspath(path)} is missing required fields")
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        raise UnsupportedVersionError(
            f"unsupported artifact schema_version {version!r}; this build reads version {SCHEMA_VERSION}")
    if body_checksum(doc["body"]) != doc["checksum"]:
        raise ChecksumError(f"checksum error: {os.fspath(path)} does not match its stored checksum")
    try:
        return artifact_from_body(doc["body"], doc.get("created_at"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed artifact body: {exc}") from None
