"""Classic text-centric metrics: OCR accuracy, precision, recall, F1 and ROI-aware NED.

All strings are whitespace-normalized before comparison; case is preserved.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Sequence

from .corpus import OcrDetection, OcrFile, Sample
from .geometry import assign_regions, center_in_region, polygon_bbox
from .textsim import normalize_text, normalized_similarity

if TYPE_CHECKING:
    from .semantic import SemanticScorer


class OcrMissingError(LookupError):
    pass


class ProviderError(RuntimeError):
    pass


@dataclass(frozen=True)
class PenaltyConfig:
    fail_penalty: float = 0.2
    residual_sim_threshold: float = 0.9
    target_presence_threshold: float = 0.7
    iou_threshold: float = 0.5
    min_confidence: float = 0.0

    def __post_init__(self) -> None:
        for name in ("fail_penalty", "residual_sim_threshold", "target_presence_threshold", "iou_threshold"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if not 0 <= self.min_confidence <= 1:
            raise ValueError(f"min_confidence must lie in [0, 1], got {self.min_confidence}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ClassicScores:
    ocr_accuracy: float
    ocr_precision: float
    ocr_recall: float
    ocr_f1: float
    roi_ned: float
    clip_score: float | None = None
    aesthetic: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _texts(dets: Sequence[OcrDetection | str]) -> list[str]:
    return [normalize_text(d if isinstance(d, str) else d.text) for d in dets]


def ocr_accuracy(
    target_dets: Sequence[OcrDetection | str], t_tgt: str, t_src: str, cfg: PenaltyConfig = PenaltyConfig()
) -> float:
    """Best similarity of target-region text to the target string, with a failed-edit penalty.

    The penalty applies when some detection still matches the source text
    (similarity >= residual threshold) while no detection reaches the
    target-presence threshold. For pure erasure (empty target) the score is
    1 when the region holds no text and 0 otherwise.
    """
    texts = [t for t in _texts(target_dets) if t]
    t_tgt, t_src = normalize_text(t_tgt), normalize_text(t_src)
    if not t_tgt:
        return 0.0 if texts else 1.0
    if not texts:
        return 0.0
    best = max(normalized_similarity(t, t_tgt) for t in texts)
    residual = any(normalized_similarity(t, t_src) >= cfg.residual_sim_threshold for t in texts)
    if residual and best < cfg.target_presence_threshold:
        return best * cfg.fail_penalty
    return best


def _mean_best_match(queries: list[str], pool: list[str]) -> float:
    if not queries:
        return 1.0
    if not pool:
        return 0.0
    return math.fsum(max(normalized_similarity(q, p) for p in pool) for q in queries) / len(queries)


def ocr_precision(bg_gen: Sequence[OcrDetection | str], bg_orig: Sequence[OcrDetection | str]) -> float:
    """Mean over generated background texts of their best match in the original background."""
    return _mean_best_match(_texts(bg_gen), _texts(bg_orig))


def ocr_recall(bg_gen: Sequence[OcrDetection | str], bg_orig: Sequence[OcrDetection | str]) -> float:
    """Mean over original background texts of their best match in the generated background."""
    return _mean_best_match(_texts(bg_orig), _texts(bg_gen))


def ocr_f1(p: float, r: float) -> float:
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def roi_ned(roi_text: str, t_tgt: str, t_src: str, cfg: PenaltyConfig = PenaltyConfig()) -> float:
    roi_text, t_tgt, t_src = normalize_text(roi_text), normalize_text(t_tgt), normalize_text(t_src)
    score = normalized_similarity(roi_text, t_tgt)
    if normalized_similarity(roi_text, t_src) > cfg.residual_sim_threshold:
        score *= cfg.fail_penalty
    return score


def fallback_roi_text(dets: Sequence[OcrDetection], region) -> str:
    """Join detections centred in the region, top-to-bottom then left-to-right."""
    inside = [d for d in dets if center_in_region(d, region)]
    inside.sort(key=lambda d: (polygon_bbox(d.polygon).center[1], polygon_bbox(d.polygon).center[0]))
    return " ".join(normalize_text(d.text) for d in inside if normalize_text(d.text))


def evaluate_classic(
    sample: Sample,
    ocr: OcrFile,
    embeddings: "SemanticScorer | None" = None,
    cfg: PenaltyConfig = PenaltyConfig(),
) -> ClassicScores:
    """All classic metrics for one sample.

    Raises OcrMissingError when either image's OCR entry is absent and
    ProviderError when the embedding source cannot serve the sample.
    """
    src = ocr.get(sample.id, "source")
    gen = ocr.get(sample.id, "edited")
    for role, dets in (("source", src), ("edited", gen)):
        if dets is None:
            raise OcrMissingError(f"{sample.id}: no OCR entry for {OcrFile.key(sample.id, role)!r}")
    if cfg.min_confidence > 0:
        src = [d for d in src if d.confidence >= cfg.min_confidence]
        gen = [d for d in gen if d.confidence >= cfg.min_confidence]

    src_regions = assign_regions(src, sample.target_region, cfg.iou_threshold)
    gen_regions = assign_regions(gen, sample.target_region, cfg.iou_threshold)

    oa = ocr_accuracy(gen_regions.target_detections, sample.target_text, sample.raw_text, cfg)
    op = ocr_precision(gen_regions.background_detections, src_regions.background_detections)
    orc = ocr_recall(gen_regions.background_detections, src_regions.background_detections)
    f1 = ocr_f1(op, orc)

    roi = ocr.get_roi_text(sample.id, "edited")
    if roi is None:
        roi = fallback_roi_text(gen, sample.target_region)
    ned = roi_ned(roi, sample.target_text, sample.raw_text, cfg)

    clip = aes = None
    if embeddings is not None:
        try:
            clip, aes = embeddings.score(sample.id)
        except Exception as exc:
            raise ProviderError(f"{sample.id}: {exc}") from exc
    return ClassicScores(oa, op, orc, f1, ned, clip, aes)
