"""Batch evaluation over a worker pool. Results come back in input order and
do not depend on the number of workers."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

from ._http import TransportFailure
from .corpus import OcrFile, Sample
from .judge import JudgeClient, JudgeError, JudgeWeights, ResponseCache, evaluate_judge
from .metrics import OcrMissingError, PenaltyConfig, ProviderError, evaluate_classic
from .report import SampleResult
from .semantic import SemanticScorer

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def pmap(fn: Callable[[T], R], items: Sequence[T], parallelism: int = 1) -> list[R]:
    if parallelism <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def classic_result(
    sample: Sample, ocr: OcrFile, scorer: SemanticScorer | None, cfg: PenaltyConfig
) -> SampleResult:
    try:
        scores = evaluate_classic(sample, ocr, scorer, cfg)
    except OcrMissingError as exc:
        return SampleResult(sample.id, sample.category_id, "ocr-missing", error=str(exc))
    except ProviderError as exc:
        return SampleResult(sample.id, sample.category_id, "provider-failed", error=str(exc))
    return SampleResult(sample.id, sample.category_id, "ok", classic=scores)


def run_classic(
    samples: Sequence[Sample],
    ocr: OcrFile,
    scorer: SemanticScorer | None = None,
    cfg: PenaltyConfig = PenaltyConfig(),
    parallelism: int = 1,
) -> list[SampleResult]:
    return pmap(lambda s: classic_result(s, ocr, scorer, cfg), samples, parallelism)


def judge_result(
    sample: Sample, client: JudgeClient, w: JudgeWeights, cache: ResponseCache | None
) -> SampleResult:
    try:
        scores = evaluate_judge(sample, client, w, cache)
    except (JudgeError, TransportFailure) as exc:
        log.warning("judge failed for %s: %s", sample.id, exc)
        return SampleResult(sample.id, sample.category_id, "judge-failed", error=str(exc))
    return SampleResult(sample.id, sample.category_id, "ok", judge=scores)


def run_judge(
    samples: Sequence[Sample],
    client: JudgeClient,
    w: JudgeWeights = JudgeWeights(),
    cache: ResponseCache | None = None,
    parallelism: int = 1,
) -> list[SampleResult]:
    return pmap(lambda s: judge_result(s, client, w, cache), samples, parallelism)
