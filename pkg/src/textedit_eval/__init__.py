"""Offline evaluation toolkit for text-centric image editing."""

__version__ = "0.1.0"

from .corpus import (
    OcrDetection,
    OcrFile,
    Sample,
    Taxonomy,
    TaxonomyNode,
    classify_category,
    load_ocr_detections,
    parse_manifest,
    sample_miniset,
    split_real_virtual,
)
from .geometry import Box, Polygon, assign_regions, center_in_region, iou, polygon_bbox
from .judge import (
    JudgeRaw,
    JudgeScores,
    JudgeWeights,
    build_judge_prompt,
    evaluate_judge,
    normalize_likert,
    parse_judge_response,
    weighted_vscore,
)
from .metrics import (
    ClassicScores,
    PenaltyConfig,
    evaluate_classic,
    ocr_accuracy,
    ocr_f1,
    ocr_precision,
    ocr_recall,
    roi_ned,
)
from .report import AggregateReport, SampleResult, aggregate, emit_report
from .semantic import AestheticHead, Embedding, aesthetic_score, clip_score, fetch_embedding
from .textsim import levenshtein, normalize_text, normalized_similarity
