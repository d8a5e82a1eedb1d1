"""Benchmark corpus: taxonomy, manifest records, Real/Virtual split, MiniSet
sampling, and ingestion of per-image OCR detections.

Manifests are JSON Lines, one sample per line. OCR detection files are a
single JSON object keyed by ``"<sample_id>/source"`` or ``"<sample_id>/edited"``.
"""

from __future__ import annotations

import json
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from .geometry import Polygon

LANGUAGES = ("en", "zh", "mixed")
OCR_ROLES = ("source", "edited")

REQUIRED_FIELDS = ("id", "category_id", "source_image", "raw_text", "target_text", "target_region")


class CorpusError(ValueError):
    """Invalid manifest, taxonomy or OCR input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnknownCategoryError(CorpusError):
    pass


# ---------------------------------------------------------------------------
# taxonomy


@dataclass(frozen=True)
class TaxonomyNode:
    id: str
    major: str  # "Virtual" | "Real"
    mid_id: str
    mid_name: str
    sub_id: str | None
    sub_name: str | None
    count: int

    @property
    def is_virtual(self) -> bool:
        return self.major == "Virtual"


# (leaf id, mid name, sub name, count)
_DEFAULT_ROWS = [
    ("1.1.1", "Poster Scenes", "Activities & Promotions Posters", 57),
    ("1.1.2", "Poster Scenes", "Product & Advertising Posters", 74),
    ("1.1.3", "Poster Scenes", "Movie & Art Posters", 107),
    ("1.2.1", "Comic Scenes", "Dialogue & Narration", 65),
    ("1.2.2", "Comic Scenes", "Onomatopoeia & Special-effects Text", 26),
    ("1.3.1", "Slide / Presentation", "Titles & Subtitles", 71),
    ("1.3.2", "Slide / Presentation", "Charts & Explanatory Text", 73),
    ("1.4.1", "GUI Scenes", "Game Interfaces", 138),
    ("1.4.2", "GUI Scenes", "Browser Interfaces", 44),
    ("1.4.3", "GUI Scenes", "App Interfaces (Mobile/TV)", 45),
    ("1.4.4", "GUI Scenes", "Operating-System Desktops", 61),
    ("2.1", "Objects Surface", None, 168),
    ("2.2", "Signage Surface", None, 339),
    ("2.3", "Board-like Media Surface", None, 235),
    ("2.4", "Personal Accessories Surface", None, 192),
    ("2.5", "Transport Surface", None, 257),
    ("2.6", "Watermarks", None, 69),
    ("2.7", "Paper Media Surface", None, 127),
]


def _major_of(leaf_id: str) -> str:
    if leaf_id.startswith("1."):
        return "Virtual"
    if leaf_id.startswith("2."):
        return "Real"
    raise UnknownCategoryError(f"unknown category {leaf_id!r}")


def _make_node(leaf_id: str, mid_name: str, sub_name: str | None, count: int) -> TaxonomyNode:
    major = _major_of(leaf_id)
    parts = leaf_id.split(".")
    if major == "Virtual" and len(parts) != 3:
        raise CorpusError(f"virtual category {leaf_id!r} must have the form 1.x.y")
    if major == "Real" and len(parts) != 2:
        raise CorpusError(f"real category {leaf_id!r} must have the form 2.x")
    if count < 0:
        raise CorpusError(f"negative count for {leaf_id!r}")
    mid_id = ".".join(parts[:2])
    sub_id = leaf_id if major == "Virtual" else None
    return TaxonomyNode(leaf_id, major, mid_id, mid_name, sub_id, sub_name, count)


class Taxonomy:
    """Leaf scenario categories, keyed by dotted id."""

    def __init__(self, nodes: Iterable[TaxonomyNode]):
        self.nodes: dict[str, TaxonomyNode] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise CorpusError(f"duplicate taxonomy id {node.id!r}")
            self.nodes[node.id] = node

    @classmethod
    def default(cls) -> "Taxonomy":
        return cls(_make_node(*row) for row in _DEFAULT_ROWS)

    @classmethod
    def from_records(cls, records: Sequence[Mapping]) -> "Taxonomy":
        nodes = []
        for rec in records:
            node = _make_node(str(rec["id"]), rec["mid_name"], rec.get("sub_name"), int(rec.get("count", 0)))
            if "major" in rec and rec["major"] != node.major:
                raise CorpusError(f"taxonomy id {node.id!r} declared {rec['major']!r}, prefix says {node.major!r}")
            nodes.append(node)
        return cls(nodes)

    @classmethod
    def load(cls, path) -> "Taxonomy":
        with open(path, encoding="utf-8") as fh:
            return cls.from_records(json.load(fh))

    def to_records(self) -> list[dict]:
        return [
            {"id": n.id, "major": n.major, "mid_name": n.mid_name, "sub_name": n.sub_name, "count": n.count}
            for n in self.nodes.values()
        ]

    @property
    def total(self) -> int:
        return sum(n.count for n in self.nodes.values())

    def leaf_ids(self) -> list[str]:
        return list(self.nodes)

    def __contains__(self, category_id: str) -> bool:
        return category_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def classify(self, category_id: str) -> TaxonomyNode:
        try:
            return self.nodes[category_id]
        except KeyError:
            raise UnknownCategoryError(f"unknown category {category_id!r}") from None


DEFAULT_TAXONOMY = Taxonomy.default()


def classify_category(category_id: str, taxonomy: Taxonomy | None = None) -> TaxonomyNode:
    return (taxonomy or DEFAULT_TAXONOMY).classify(category_id)


# ---------------------------------------------------------------------------
# samples and manifests


@dataclass(frozen=True)
class Sample:
    id: str
    category_id: str
    source_image: str
    raw_text: str
    target_text: str
    target_region: Polygon
    gt_image: str | None = None
    edited_image: str | None = None
    gt_caption: str = ""
    language: str = "en"

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "category_id": self.category_id,
            "source_image": self.source_image,
            "gt_image": self.gt_image,
            "edited_image": self.edited_image,
            "raw_text": self.raw_text,
            "target_text": self.target_text,
            "target_region": self.target_region.to_list(),
            "gt_caption": self.gt_caption,
            "language": self.language,
        }


def _sample_from_record(rec: Mapping, taxonomy: Taxonomy) -> Sample:
    for name in REQUIRED_FIELDS:
        if name not in rec or rec[name] is None:
            raise CorpusError(f"missing required field {name!r}")
    for name in ("id", "category_id", "source_image", "raw_text", "target_text"):
        if not isinstance(rec[name], str):
            raise CorpusError(f"field {name!r} must be a string")
    if not rec["id"]:
        raise CorpusError("field 'id' must be non-empty")
    if not rec["raw_text"]:
        raise CorpusError("field 'raw_text' must be non-empty")
    taxonomy.classify(rec["category_id"])
    try:
        region = Polygon.from_points(rec["target_region"])
    except (TypeError, ValueError) as exc:
        raise CorpusError(f"field 'target_region': {exc}") from None
    if any(x < 0 or y < 0 for x, y in region.vertices):
        raise CorpusError("field 'target_region' has negative coordinates")
    language = rec.get("language") or "en"
    if language not in LANGUAGES:
        raise CorpusError(f"field 'language' must be one of {LANGUAGES}, got {language!r}")
    return Sample(
        id=rec["id"],
        category_id=rec["category_id"],
        source_image=rec["source_image"],
        raw_text=rec["raw_text"],
        target_text=rec["target_text"],
        target_region=region,
        gt_image=rec.get("gt_image"),
        edited_image=rec.get("edited_image"),
        gt_caption=rec.get("gt_caption") or "",
        language=language,
    )


def parse_manifest(
    stream: Iterable[str],
    taxonomy: Taxonomy | None = None,
    errors: list[CorpusError] | None = None,
) -> list[Sample]:
    """Parse a JSON Lines manifest into samples, in input order.

    Raises CorpusError naming the offending line. If ``errors`` is given,
    problems are appended to it instead and the bad lines are skipped.
    """
    taxonomy = taxonomy or DEFAULT_TAXONOMY
    samples: list[Sample] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed record: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise CorpusError("record must be a JSON object")
            sample = _sample_from_record(rec, taxonomy)
            if sample.id in seen:
                raise CorpusError(f"duplicate id {sample.id!r} (first seen on line {seen[sample.id]})")
        except CorpusError as exc:
            err = type(exc)(str(exc), line=lineno)
            if errors is None:
                raise err from None
            errors.append(err)
            continue
        seen[sample.id] = lineno
        samples.append(sample)
    return samples


def emit_manifest(samples: Iterable[Sample], fh: IO[str] | None = None) -> str:
    lines = [json.dumps(s.to_record(), ensure_ascii=False) + "\n" for s in samples]
    text = "".join(lines)
    if fh is not None:
        fh.write(text)
    return text


def load_manifest(path, taxonomy: Taxonomy | None = None) -> list[Sample]:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh, taxonomy)


def split_real_virtual(
    samples: Iterable[Sample], taxonomy: Taxonomy | None = None
) -> tuple[list[Sample], list[Sample]]:
    real, virtual = [], []
    for s in samples:
        (virtual if classify_category(s.category_id, taxonomy).is_virtual else real).append(s)
    return real, virtual


# ---------------------------------------------------------------------------
# MiniSet sampling


def apportion(
    counts: Mapping[str, int], total: int, *, uniform: bool = False
) -> dict[str, int]:
    """Largest-remainder quotas per class, floored at one and capped at class size.

    Classes whose exact share falls below one are pinned to one (as long as
    ``total`` covers every class); classes whose share exceeds their population
    are pinned to their population. The remaining seats are re-apportioned
    among the free classes until nothing changes. Remainder ties go to the
    larger class, then to the smaller id.
    """
    populated = {k: n for k, n in counts.items() if n > 0}
    population = sum(populated.values())
    if total < 0:
        raise ValueError("total must be non-negative")
    if total > population:
        raise ValueError(f"requested {total} samples but only {population} are available")
    floor_one = total >= len(populated)

    fixed: dict[str, int] = {}
    while True:
        free = {k: n for k, n in populated.items() if k not in fixed}
        seats = total - sum(fixed.values())
        if not free:
            break
        weights = {k: (1 if uniform else n) for k, n in free.items()}
        wsum = sum(weights.values())
        pinned = False
        for k, w in weights.items():
            # exact share = seats * w / wsum, compared in integers
            if floor_one and seats * w < wsum:
                fixed[k] = 1
                pinned = True
            elif seats * w > free[k] * wsum:
                fixed[k] = free[k]
                pinned = True
        if pinned:
            continue
        quotas = {k: seats * w // wsum for k, w in weights.items()}
        leftover = seats - sum(quotas.values())
        order = sorted(weights, key=lambda k: (-(seats * weights[k] % wsum), -free[k], k))
        for k in order[:leftover]:
            quotas[k] += 1
        fixed.update(quotas)
        break

    return {k: fixed.get(k, 0) for k in counts}


def sample_miniset(
    samples: Sequence[Sample], total: int, seed: int, *, uniform: bool = False
) -> list[Sample]:
    """Stratified subset of ``total`` samples, stratified by leaf category.

    Selection inside a category is uniform without replacement from a
    ``random.Random(seed)`` stream; the output keeps corpus order.
    """
    if total <= 0:
        raise ValueError("total must be positive")
    by_cat: dict[str, list[Sample]] = defaultdict(list)
    for s in samples:
        by_cat[s.category_id].append(s)
    quotas = apportion({k: len(v) for k, v in by_cat.items()}, total, uniform=uniform)

    rng = random.Random(seed)
    chosen: set[str] = set()
    for cat in sorted(by_cat):
        members = sorted(by_cat[cat], key=lambda s: s.id)
        chosen.update(s.id for s in rng.sample(members, quotas[cat]))
    return [s for s in samples if s.id in chosen]


# ---------------------------------------------------------------------------
# OCR detections


@dataclass(frozen=True)
class OcrDetection:
    text: str
    confidence: float
    polygon: Polygon

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0) or math.isnan(self.confidence):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def to_record(self) -> dict:
        return {"text": self.text, "confidence": self.confidence, "polygon": self.polygon.to_list()}


@dataclass
class OcrFile:
    detections: dict[str, list[OcrDetection]] = field(default_factory=dict)
    roi_text: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.detections)

    @staticmethod
    def key(sample_id: str, role: str) -> str:
        return f"{sample_id}/{role}"

    def get(self, sample_id: str, role: str) -> list[OcrDetection] | None:
        return self.detections.get(self.key(sample_id, role))

    def get_roi_text(self, sample_id: str, role: str = "edited") -> str | None:
        return self.roi_text.get(self.key(sample_id, role))

    def merge(self, other: "OcrFile") -> None:
        self.detections.update(other.detections)
        self.roi_text.update(other.roi_text)

    def sample_ids(self) -> set[str]:
        return {split_ocr_key(k)[0] for k in self.detections}

    def to_json(self) -> dict:
        out = {}
        for key, dets in self.detections.items():
            recs = [d.to_record() for d in dets]
            if key in self.roi_text:
                out[key] = {"detections": recs, "roi_text": self.roi_text[key]}
            else:
                out[key] = recs
        return out


def split_ocr_key(key: str) -> tuple[str, str]:
    sample_id, sep, role = key.rpartition("/")
    if not sep or not sample_id or role not in OCR_ROLES:
        raise CorpusError(f"OCR key {key!r} must look like '<sample_id>/source' or '<sample_id>/edited'")
    return sample_id, role


def _parse_detection(rec: Mapping, key: str, idx: int) -> OcrDetection:
    where = f"{key}[{idx}]"
    try:
        text = rec["text"]
        conf = float(rec["confidence"])
        poly = Polygon.from_points(rec["polygon"])
    except KeyError as exc:
        raise CorpusError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise CorpusError(f"{where}: {exc}") from None
    if not isinstance(text, str):
        raise CorpusError(f"{where}: text must be a string")
    if not 0.0 <= conf <= 1.0:
        raise CorpusError(f"{where}: confidence {conf} outside [0, 1]")
    return OcrDetection(text, conf, poly)


def load_ocr_detections(stream: IO[str] | str | Mapping, sample_ids: Iterable[str] | None = None) -> OcrFile:
    """Read and validate an OCR detections file.

    Each value is either a list of ``{text, confidence, polygon}`` or an
    object ``{"detections": [...], "roi_text": "..."}``. When ``sample_ids``
    is given, keys naming any other sample are rejected.
    """
    if isinstance(stream, Mapping):
        data = stream
    else:
        raw = stream if isinstance(stream, str) else stream.read()
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"malformed OCR file: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(data, Mapping):
        raise CorpusError("OCR file must be a JSON object keyed by '<sample_id>/<role>'")

    known = set(sample_ids) if sample_ids is not None else None
    ocr = OcrFile()
    for key, value in data.items():
        sample_id, _ = split_ocr_key(key)
        if known is not None and sample_id not in known:
            raise CorpusError(f"OCR key {key!r} references unknown sample id {sample_id!r}")
        roi = None
        if isinstance(value, Mapping):
            roi = value.get("roi_text")
            value = value.get("detections", [])
            if roi is not None and not isinstance(roi, str):
                raise CorpusError(f"{key}: roi_text must be a string")
        if not isinstance(value, list):
            raise CorpusError(f"{key}: expected a list of detections")
        ocr.detections[key] = [_parse_detection(rec, key, i) for i, rec in enumerate(value)]
        if roi is not None:
            ocr.roi_text[key] = roi
    return ocr


def load_ocr_file(path, sample_ids: Iterable[str] | None = None) -> OcrFile:
    with open(path, encoding="utf-8") as fh:
        return load_ocr_detections(fh, sample_ids)
