"""Disaggregated-annotation datasets: loading, gold labels and descriptive statistics.

A dataset lives in a directory holding one JSON document per split
(``train.json``, ``dev.json``, ``test.json``).  Each document is either a list
of records or an object ``{"meta": {...}, "records": [...]}``; a record is::

    {"id": "17", "text": "...", "annotations": {"ann1": 0, "ann3": 1}}

``text`` may also be a conversation ``{"turns": [{"speaker": "user", "text": ...}]}``,
in which case only the last user turn is kept.  The official Le-Wi-Di layout
(an object keyed by id with comma-separated ``annotators``/``annotations``
strings) is accepted as well.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

SPLITS = ("train", "dev", "test")
LABEL_MAPPINGS = ("already_binary", "convabuse_scale")


class DatasetError(ValueError):
    """Raised when an interchange file violates the expected format."""


@dataclass(frozen=True)
class Instance:
    id: str
    text: str
    annotations: dict[str, int]
    split: str


@dataclass(frozen=True)
class HardLabel:
    label: int
    tie: bool


@dataclass(frozen=True)
class SoftLabel:
    v0: float
    v1: float

    @classmethod
    def from_p1(cls, p1: float) -> "SoftLabel":
        p1 = float(p1)
        return cls(1.0 - p1, p1)

    def as_tuple(self) -> tuple[float, float]:
        return (self.v0, self.v1)


class AnnotatorRegistry:
    """Lexicographically ordered annotator ids with stable head indices."""

    def __init__(self, annotator_ids: Iterable[str], seen_in_splits: Mapping[str, Iterable[str]] | None = None):
        ids = sorted(set(annotator_ids))
        self.annotator_ids: tuple[str, ...] = tuple(ids)
        self.head_index: dict[str, int] = {a: i for i, a in enumerate(ids)}
        seen = seen_in_splits or {}
        self.seen_in_splits: dict[str, frozenset[str]] = {a: frozenset(seen.get(a, ())) for a in ids}

    def __len__(self) -> int:
        return len(self.annotator_ids)

    def __contains__(self, annotator_id: object) -> bool:
        return annotator_id in self.head_index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, AnnotatorRegistry) and self.annotator_ids == other.annotator_ids

    def __repr__(self) -> str:
        return f"AnnotatorRegistry(K={len(self)})"


@dataclass(frozen=True)
class AnnotationMatrix:
    """N x K binary labels plus a presence mask; masked entries are stored as 0."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mask.shape or self.values.ndim != 2:
            raise ValueError(f"values {self.values.shape} and mask {self.mask.shape} must be equal 2-d shapes")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def rows(self):
        for i in range(self.values.shape[0]):
            yield self.values[i], self.mask[i]


@dataclass
class Dataset:
    splits: dict[str, list[Instance]]
    registry: AnnotatorRegistry
    meta: dict = field(default_factory=dict)

    def split(self, name: str) -> list[Instance]:
        try:
            return self.splits[name]
        except KeyError:
            raise DatasetError(f"dataset has no {name!r} split") from None

    def matrix(self, name: str) -> AnnotationMatrix:
        return annotation_matrix(self.split(name), self.registry)


def annotation_matrix(instances: Sequence[Instance], registry: AnnotatorRegistry) -> AnnotationMatrix:
    values = np.zeros((len(instances), len(registry)), dtype=np.int8)
    mask = np.zeros((len(instances), len(registry)), dtype=bool)
    for i, inst in enumerate(instances):
        for ann, label in inst.annotations.items():
            k = registry.head_index[ann]
            values[i, k] = label
            mask[i, k] = True
    return AnnotationMatrix(values, mask)


# --------------------------------------------------------------------------- labels


def binarize_convabuse(raw: int) -> int:
    """Map the ConvAbuse scale [-3, 1] to binary: negative severities are abusive."""
    if isinstance(raw, bool) or not isinstance(raw, (int, np.integer)) or not -3 <= raw <= 1:
        raise ValueError(f"ConvAbuse label must be an integer in [-3, 1], got {raw!r}")
    return 1 if raw < 0 else 0


def extract_last_user_utterance(conversation) -> str:
    """Return the text of the final user turn.

    Accepts ``{"turns": [...]}``, a bare list of turns, or the Le-Wi-Di ConvAbuse
    dict with ``prev_user``/``user`` keys.
    """
    if isinstance(conversation, Mapping) and "turns" not in conversation:
        for key in ("user", "prev_user"):
            text = conversation.get(key)
            if isinstance(text, str) and text.strip():
                return text
        raise DatasetError("conversation has no user turn")
    turns = conversation["turns"] if isinstance(conversation, Mapping) else conversation
    for turn in reversed(list(turns)):
        if turn.get("speaker") == "user":
            return turn["text"]
    raise DatasetError("conversation has no user turn")


def _present(row: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    row = np.asarray(row)
    if mask is None:
        present = row
    else:
        present = row[np.asarray(mask, dtype=bool)]
    if present.size == 0:
        raise ValueError("annotation row has no present entries")
    return present


def derive_hard_label(row, mask=None, tie_break: int = 0) -> HardLabel:
    present = _present(row, mask)
    ones = int(np.count_nonzero(present == 1))
    zeros = present.size - ones
    if ones == zeros:
        return HardLabel(int(tie_break), True)
    return HardLabel(int(ones > zeros), False)


def derive_soft_label(row, mask=None) -> SoftLabel:
    present = _present(row, mask)
    return SoftLabel.from_p1(np.count_nonzero(present == 1) / present.size)


def gold_labels(matrix: AnnotationMatrix, tie_break: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Gold hard labels (N,) and soft labels (N, 2) for every row of a matrix."""
    hard = np.empty(matrix.shape[0], dtype=np.int64)
    soft = np.empty((matrix.shape[0], 2), dtype=np.float64)
    for i, (row, mask) in enumerate(matrix.rows()):
        hard[i] = derive_hard_label(row, mask, tie_break).label
        soft[i] = derive_soft_label(row, mask).as_tuple()
    return hard, soft


# --------------------------------------------------------------------------- I/O


def _parse_label(raw, label_mapping: str, inst_id: str, annotator: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise DatasetError(f"instance {inst_id!r}: annotation of {annotator!r} must be an integer, got {raw!r}")
    if label_mapping == "convabuse_scale":
        try:
            return binarize_convabuse(raw)
        except ValueError as e:
            raise DatasetError(f"instance {inst_id!r}: annotator {annotator!r}: {e}") from None
    if raw not in (0, 1):
        raise DatasetError(f"instance {inst_id!r}: annotator {annotator!r} label {raw} outside binary scale")
    return raw


def _lewidi_records(doc: dict) -> list[dict]:
    records = []
    for key, item in doc.items():
        annotators = [a.strip() for a in str(item.get("annotators", "")).split(",") if a.strip()]
        labels = [s.strip() for s in str(item.get("annotations", "")).split(",") if s.strip()]
        if len(annotators) != len(labels):
            raise DatasetError(f"instance {key!r}: {len(annotators)} annotators but {len(labels)} annotations")
        text = item.get("text")
        if isinstance(text, str) and text.lstrip().startswith("{"):
            try:
                text = json.loads(text)
            except json.JSONDecodeError:
                pass
        records.append({
            "id": str(key),
            "text": text,
            "annotations": {a: int(l) for a, l in zip(annotators, labels)},
        })
    return records


def _document_records(doc) -> tuple[list, dict]:
    if isinstance(doc, list):
        return doc, {}
    if isinstance(doc, dict) and "records" in doc:
        return doc["records"], doc.get("meta", {})
    if isinstance(doc, dict) and all(isinstance(v, dict) and "annotators" in v for v in doc.values()):
        return _lewidi_records(doc), {}
    raise DatasetError("document must be a list of records or an object with a 'records' list")


def parse_records(records: Sequence, split: str, label_mapping: str = "already_binary") -> list[Instance]:
    if label_mapping not in LABEL_MAPPINGS:
        raise ValueError(f"unknown label mapping {label_mapping!r}")
    instances: list[Instance] = []
    seen_ids: set[str] = set()
    for n, rec in enumerate(records):
        if not isinstance(rec, Mapping):
            raise DatasetError(f"{split} record #{n} is not an object")
        inst_id = rec.get("id")
        if not isinstance(inst_id, str):
            raise DatasetError(f"{split} record #{n}: field 'id' must be a string, got {inst_id!r}")
        if inst_id in seen_ids:
            raise DatasetError(f"duplicate instance id {inst_id!r} in {split} split")
        seen_ids.add(inst_id)

        text = rec.get("text")
        if isinstance(text, (Mapping, list)):
            try:
                text = extract_last_user_utterance(text)
            except (DatasetError, KeyError, AttributeError, TypeError) as e:
                raise DatasetError(f"instance {inst_id!r}: field 'text': {e}") from None
        if not isinstance(text, str):
            raise DatasetError(f"instance {inst_id!r}: field 'text' must be a string or conversation")

        raw_annotations = rec.get("annotations", {})
        if not isinstance(raw_annotations, Mapping):
            raise DatasetError(f"instance {inst_id!r}: field 'annotations' must be an object")
        annotations = {}
        for ann, raw in raw_annotations.items():
            annotations[str(ann)] = _parse_label(raw, label_mapping, inst_id, str(ann))
        if not annotations and split in ("train", "dev"):
            raise DatasetError(f"instance {inst_id!r}: field 'annotations' is empty in {split} split")
        instances.append(Instance(inst_id, text, annotations, split))
    return instances


def _find_split_file(directory: Path, split: str) -> Path | None:
    for candidate in (directory / f"{split}.json", *sorted(directory.glob(f"*_{split}.json"))):
        if candidate.is_file():
            return candidate
    return None


def load_dataset(path, label_mapping: str = "already_binary") -> Dataset:
    """Load every split found under ``path`` and build the annotator registry.

    ``path`` is a directory with ``train.json`` / ``dev.json`` / ``test.json``
    (or ``<name>_train.json`` etc.), or a single split file whose stem names the split.
    """
    path = Path(path)
    files: dict[str, Path] = {}
    if path.is_dir():
        for split in SPLITS:
            found = _find_split_file(path, split)
            if found is not None:
                files[split] = found
    elif path.is_file():
        stem = path.stem.rsplit("_", 1)[-1]
        files[stem if stem in SPLITS else "train"] = path
    else:
        raise DatasetError(f"no dataset at {str(path)!r}")
    if not files:
        raise DatasetError(f"no split files found under {str(path)!r}")

    splits: dict[str, list[Instance]] = {}
    meta: dict = {}
    for split, file in files.items():
        try:
            doc = json.loads(file.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DatasetError(f"{file}: not valid JSON ({e})") from None
        records, doc_meta = _document_records(doc)
        meta.update(doc_meta)
        splits[split] = parse_records(records, split, label_mapping)
    return build_dataset(splits, meta)


def build_dataset(splits: Mapping[str, list[Instance]], meta: dict | None = None) -> Dataset:
    seen: dict[str, set[str]] = {}
    for split, instances in splits.items():
        for inst in instances:
            for ann in inst.annotations:
                seen.setdefault(ann, set()).add(split)
    registry = AnnotatorRegistry(seen.keys(), seen)
    ordered = {s: list(splits[s]) for s in SPLITS if s in splits}
    return Dataset(ordered, registry, dict(meta or {}))


def split_document(instances: Sequence[Instance], meta: dict | None = None) -> str:
    records = [{"id": i.id, "text": i.text, "annotations": dict(i.annotations)} for i in instances]
    doc = {"meta": meta, "records": records} if meta else records
    return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"


def save_dataset(dataset: Dataset, directory, meta: dict | None = None) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for split, instances in dataset.splits.items():
        out = directory / f"{split}.json"
        out.write_text(split_document(instances, meta), encoding="utf-8")
        written.append(out)
    return written


# --------------------------------------------------------------------------- statistics

# Key order of the flat statistics document; per-split keys are expanded for every split present.
STATS_KEYS = (
    "instances.{split}",
    "utterance_length.{split}.mean",
    "utterance_length.{split}.std",
    "annotators_per_instance.{split}",
    "annotators_per_instance.mean",
    "utterance_length.mean",
    "utterance_length.std",
    "krippendorff_alpha",
    "krippendorff_alpha.split",
    "total_annotators",
    "unseen_annotators_pct",
    "instances_per_annotator.min",
    "instances_per_annotator.max",
    "instances_per_annotator.mean",
    "instances_per_annotator.std",
)


@dataclass(frozen=True)
class StatsReport:
    instance_counts: dict[str, int]
    length_mean: dict[str, float]
    length_std: dict[str, float]
    annotators_per_instance: dict[str, float]
    overall_length_mean: float
    overall_length_std: float
    overall_annotators_per_instance: float
    alpha: float
    alpha_split: str
    total_annotators: int
    unseen_pct: float
    per_annotator_min: int
    per_annotator_max: int
    per_annotator_mean: float
    per_annotator_std: float

    def to_flat(self) -> dict[str, object]:
        flat: dict[str, object] = {}
        for split in self.instance_counts:
            flat[f"instances.{split}"] = self.instance_counts[split]
            flat[f"utterance_length.{split}.mean"] = self.length_mean[split]
            flat[f"utterance_length.{split}.std"] = self.length_std[split]
            flat[f"annotators_per_instance.{split}"] = self.annotators_per_instance[split]
        flat["annotators_per_instance.mean"] = self.overall_annotators_per_instance
        flat["utterance_length.mean"] = self.overall_length_mean
        flat["utterance_length.std"] = self.overall_length_std
        flat["krippendorff_alpha"] = self.alpha
        flat["krippendorff_alpha.split"] = self.alpha_split
        flat["total_annotators"] = self.total_annotators
        flat["unseen_annotators_pct"] = self.unseen_pct
        flat["instances_per_annotator.min"] = self.per_annotator_min
        flat["instances_per_annotator.max"] = self.per_annotator_max
        flat["instances_per_annotator.mean"] = self.per_annotator_mean
        flat["instances_per_annotator.std"] = self.per_annotator_std
        return flat


def unseen_annotator_pct(dataset: Dataset) -> float:
    present = set(dataset.splits)
    missing = sum(1 for a in dataset.registry.annotator_ids if dataset.registry.seen_in_splits[a] != present)
    return 100.0 * missing / len(dataset.registry) if len(dataset.registry) else 0.0


def dataset_stats(dataset: Dataset, alpha_split: str = "train") -> StatsReport:
    # local imports keep corpus importable without the metric/feature modules loaded first
    from .features import tokenize
    from .metrics import krippendorff_alpha_nominal

    counts, lmean, lstd, api = {}, {}, {}, {}
    all_lengths: list[int] = []
    all_api: list[int] = []
    per_annotator = dict.fromkeys(dataset.registry.annotator_ids, 0)
    for split, instances in dataset.splits.items():
        lengths = [len(tokenize(i.text)) for i in instances]
        n_ann = [len(i.annotations) for i in instances]
        counts[split] = len(instances)
        lmean[split] = float(np.mean(lengths)) if lengths else math.nan
        lstd[split] = float(np.std(lengths)) if lengths else math.nan
        api[split] = float(np.mean(n_ann)) if n_ann else math.nan
        all_lengths += lengths
        all_api += n_ann
        for inst in instances:
            for ann in inst.annotations:
                per_annotator[ann] += 1

    alpha = krippendorff_alpha_nominal(dataset.matrix(alpha_split))
    per = np.array(list(per_annotator.values()), dtype=np.float64)
    return StatsReport(
        instance_counts=counts,
        length_mean=lmean,
        length_std=lstd,
        annotators_per_instance=api,
        overall_length_mean=float(np.mean(all_lengths)) if all_lengths else math.nan,
        overall_length_std=float(np.std(all_lengths)) if all_lengths else math.nan,
        overall_annotators_per_instance=float(np.mean(all_api)) if all_api else math.nan,
        alpha=float(alpha),
        alpha_split=alpha_split,
        total_annotators=len(dataset.registry),
        unseen_pct=unseen_annotator_pct(dataset),
        per_annotator_min=int(per.min()) if per.size else 0,
        per_annotator_max=int(per.max()) if per.size else 0,
        per_annotator_mean=float(per.mean()) if per.size else math.nan,
        per_annotator_std=float(per.std()) if per.size else math.nan,
    )
