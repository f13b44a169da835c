"""Portable data model and on-disk formats for feature packs, classifier heads
and score files.

A *pack* is one (dataset split x augmentation view) worth of penultimate
features and logits. On disk it is a directory holding ``meta.json`` plus two
headerless little-endian float32 matrices, ``features.bin`` and ``logits.bin``
(row-major). The pack directory layout is the only contract between this
package and any external feature extractor.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PackFormatError, PackValidationError

SPLITS = ("train", "val", "test_id", "test_ood")

META_FILE = "meta.json"
FEATURES_FILE = "features.bin"
LOGITS_FILE = "logits.bin"

ORIENTATION = "ood-positive"  # larger score = more OOD, everywhere


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise PackValidationError(f"non-finite value in {what}")


@dataclass
class FeaturePack:
    """Per-sample features and logits for one split under one view.

    ``labels`` holds integer class indices for in-distribution samples and
    free-form string tags for OOD samples; ``view`` is the rendered
    augmentation spec ("none" for the unaugmented view).
    """

    sample_ids: list[str]
    labels: list
    features: np.ndarray  # (n, m) float32
    logits: np.ndarray  # (n, C) float32
    view: str
    split: str
    model_id: str

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return self.logits.shape[1]

    def validate(self) -> None:
        """Check every pack invariant; raise PackValidationError with a
        distinct message per violation class."""
        if self.features.ndim != 2 or self.logits.ndim != 2:
            raise PackValidationError("features and logits must be 2-D matrices")
        n = self.features.shape[0]
        if n < 1:
            raise PackValidationError("pack must contain at least one sample")
        if self.logits.shape[0] != n or len(self.sample_ids) != n or len(self.labels) != n:
            raise PackValidationError(
                "row-count mismatch: features=%d logits=%d ids=%d labels=%d"
                % (n, self.logits.shape[0], len(self.sample_ids), len(self.labels))
            )
        if self.feature_dim < 1:
            raise PackValidationError("feature dimension must be >= 1")
        if self.class_count < 2:
            raise PackValidationError("class count must be >= 2")
        _require_finite(self.features, "features")
        _require_finite(self.logits, "logits")
        if len(set(self.sample_ids)) != n:
            raise PackValidationError("duplicate sample_id in pack")
        if self.split not in SPLITS:
            raise PackValidationError(f"unknown split {self.split!r}")
        if self.split in ("train", "val"):
            for lab in self.labels:
                if not isinstance(lab, (int, np.integer)) or not (0 <= lab < self.class_count):
                    raise PackValidationError(
                        f"split={self.split} requires integer class labels in [0, {self.class_count}), got {lab!r}"
                    )

    def equals(self, other: "FeaturePack") -> bool:
        return (
            self.sample_ids == other.sample_ids
            and list(self.labels) == list(other.labels)
            and self.features.dtype == other.features.dtype
            and self.logits.dtype == other.logits.dtype
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.logits, other.logits)
            and self.view == other.view
            and self.split == other.split
            and self.model_id == other.model_id
        )


def write_pack(pack: FeaturePack, directory) -> None:
    """Write a validated pack to ``directory`` (created if needed)."""
    pack.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "n": pack.n,
        "m": pack.feature_dim,
        "C": pack.class_count,
        "view": pack.view,
        "split": pack.split,
        "model_id": pack.model_id,
        "sample_ids": pack.sample_ids,
        "labels": [int(x) if isinstance(x, np.integer) else x for x in pack.labels],
    }
    (directory / META_FILE).write_text(json.dumps(meta, indent=2) + "\n")
    (directory / FEATURES_FILE).write_bytes(np.ascontiguousarray(pack.features, dtype="<f4").tobytes())
    (directory / LOGITS_FILE).write_bytes(np.ascontiguousarray(pack.logits, dtype="<f4").tobytes())


def _read_matrix(path: Path, rows: int, cols: int, what: str) -> np.ndarray:
    if not path.exists():
        raise PackFormatError(f"missing file {path.name}")
    raw = path.read_bytes()
    expected = rows * cols * 4
    if len(raw) != expected:
        raise PackFormatError(
            f"corrupt pack: {path.name} holds {len(raw)} bytes, expected {expected} for {rows}x{cols} {what}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(rows, cols)


def read_pack(directory) -> FeaturePack:
    """Read and validate a pack directory; byte lengths must match the
    declared dimensions exactly."""
    directory = Path(directory)
    meta_path = directory / META_FILE
    if not meta_path.exists():
        raise PackFormatError(f"missing file {META_FILE} in {directory}")
    try:
        meta = json.loads(meta_path.read_text())
        n, m, c = int(meta["n"]), int(meta["m"]), int(meta["C"])
        pack = FeaturePack(
            sample_ids=list(meta["sample_ids"]),
            labels=list(meta["labels"]),
            features=_read_matrix(directory / FEATURES_FILE, n, m, "features"),
            logits=_read_matrix(directory / LOGITS_FILE, n, c, "logits"),
            view=str(meta["view"]),
            split=str(meta["split"]),
            model_id=str(meta["model_id"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise PackFormatError(f"malformed pack metadata in {directory}: {exc}") from exc
    pack.validate()
    return pack


@dataclass
class ClassifierHead:
    """Final linear layer: ``weights`` is (C, m) with row c the class-c weight
    vector, ``bias`` is length C."""

    weights: np.ndarray  # (C, m) float32
    bias: np.ndarray  # (C,) float32

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def validate(self) -> None:
        if self.weights.ndim != 2:
            raise PackValidationError("head weights must be a 2-D matrix")
        if self.bias.shape != (self.weights.shape[0],):
            raise PackValidationError(
                f"head bias length {self.bias.shape} inconsistent with weights {self.weights.shape}"
            )
        _require_finite(self.weights, "head weights")
        _require_finite(self.bias, "head bias")

    def equals(self, other: "ClassifierHead") -> bool:
        return np.array_equal(self.weights, other.weights) and np.array_equal(self.bias, other.bias)


def write_head(head: ClassifierHead, json_path) -> None:
    """Write head.json (dims) + head.bin (W row-major then b, LE float32).

    ``json_path`` names the JSON file; the binary sits next to it with a
    ``.bin`` suffix.
    """
    head.validate()
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"C": head.class_count, "m": head.feature_dim}
    json_path.write_text(json.dumps(meta, indent=2) + "\n")
    payload = (
        np.ascontiguousarray(head.weights, dtype="<f4").tobytes()
        + np.ascontiguousarray(head.bias, dtype="<f4").tobytes()
    )
    json_path.with_suffix(".bin").write_bytes(payload)


def read_head(json_path) -> ClassifierHead:
    json_path = Path(json_path)
    if not json_path.exists():
        raise PackFormatError(f"missing head metadata {json_path}")
    bin_path = json_path.with_suffix(".bin")
    if not bin_path.exists():
        raise PackFormatError(f"missing head payload {bin_path}")
    try:
        meta = json.loads(json_path.read_text())
        c, m = int(meta["C"]), int(meta["m"])
    except (KeyError, ValueError, TypeError) as exc:
        raise PackFormatError(f"malformed head metadata {json_path}: {exc}") from exc
    raw = bin_path.read_bytes()
    expected = (c * m + c) * 4
    if len(raw) != expected:
        raise PackFormatError(
            f"corrupt head: {bin_path.name} holds {len(raw)} bytes, expected {expected} for C={c} m={m}"
        )
    flat = np.frombuffer(raw, dtype="<f4")
    head = ClassifierHead(weights=flat[: c * m].reshape(c, m), bias=flat[c * m :])
    head.validate()
    return head


def check_logit_consistency(pack: FeaturePack, head: ClassifierHead, tol: float = 1e-4) -> float:
    """Verify pack logits against ``head`` applied to pack features.

    The reference value is W @ x + b computed in float64 and cast back to
    float32 (packs store float32, so bit-exact producers reproduce the cast
    exactly; inference pipelines land within ~1e-4). Returns the max abs
    deviation; raises PackValidationError above ``tol``.
    """
    if head.feature_dim != pack.feature_dim or head.class_count != pack.class_count:
        raise PackValidationError(
            "head dims (C=%d, m=%d) do not match pack (C=%d, m=%d)"
            % (head.class_count, head.feature_dim, pack.class_count, pack.feature_dim)
        )
    ref = pack.features.astype(np.float64) @ head.weights.astype(np.float64).T + head.bias.astype(np.float64)
    ref32 = ref.astype(np.float32)
    dev = float(np.max(np.abs(ref32.astype(np.float64) - pack.logits.astype(np.float64))))
    if dev > tol:
        raise PackValidationError(f"logits inconsistent with head: max deviation {dev:g} > {tol:g}")
    return dev


@dataclass
class ScoreFile:
    """One OOD score per sample, always oriented ood-positive."""

    sample_ids: list[str]
    scores: np.ndarray  # (n,) float64
    scorer_id: str
    view: str
    orientation: str = ORIENTATION
    config: dict = field(default_factory=dict)

    def validate(self) -> None:
        if len(self.sample_ids) != len(self.scores):
            raise PackValidationError("one score per sample_id required")
        if self.scores.ndim != 1:
            raise PackValidationError("scores must be a flat vector")
        _require_finite(self.scores, "scores")
        if self.orientation != ORIENTATION:
            raise PackValidationError(f"orientation must be {ORIENTATION!r}")


def write_scores(sf: ScoreFile, csv_path) -> None:
    """Write scores as ``sample_id,score`` CSV plus a JSON sidecar
    (same stem, ``.json`` suffix). Score text round-trips bit-exactly."""
    sf.validate()
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "score"])
        for sid, s in zip(sf.sample_ids, sf.scores):
            writer.writerow([sid, repr(float(s))])
    sidecar = {
        "scorer_id": sf.scorer_id,
        "view": sf.view,
        "orientation": sf.orientation,
        "n": len(sf.sample_ids),
        "config": sf.config,
    }
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_scores(csv_path) -> ScoreFile:
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise PackFormatError(f"missing score file {csv_path}")
    sidecar_path = csv_path.with_suffix(".json")
    if not sidecar_path.exists():
        raise PackFormatError(f"missing score sidecar {sidecar_path}")
    try:
        sidecar = json.loads(sidecar_path.read_text())
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["sample_id", "score"]:
            raise PackFormatError(f"bad score CSV header in {csv_path}")
        ids = [r[0] for r in rows[1:]]
        scores = np.array([float(r[1]) for r in rows[1:]], dtype=np.float64)
        sf = ScoreFile(
            sample_ids=ids,
            scores=scores,
            scorer_id=str(sidecar["scorer_id"]),
            view=str(sidecar["view"]),
            orientation=str(sidecar["orientation"]),
            config=dict(sidecar.get("config", {})),
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise PackFormatError(f"malformed score file {csv_path}: {exc}") from exc
    sf.validate()
    return sf


def load_class_map(path) -> dict:
    """Load an ID/OOD class mapping config: JSON with ``id_classes`` (ordered
    list, index = class label) and ``ood_classes`` (list of tags)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
        id_classes = list(raw["id_classes"])
        ood_classes = list(raw["ood_classes"])
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise PackFormatError(f"malformed class map {path}: {exc}") from exc
    if not id_classes or len(set(id_classes) & set(ood_classes)):
        raise PackValidationError("class map needs disjoint, nonempty id/ood class lists")
    return {"id_classes": id_classes, "ood_classes": ood_classes}
