"""Per-sample results, grouped means (overall / Real / Virtual / leaf category),
and report rendering as JSON, CSV or an aligned console table."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

from .corpus import DEFAULT_TAXONOMY, Taxonomy
from .judge import DIMENSION_COLUMNS, JudgeScores
from .metrics import ClassicScores

STATUSES = ("ok", "ocr-missing", "judge-failed", "provider-failed")
FAILED_STATUSES = STATUSES[1:]

CLASSIC_TEXT_COLUMNS = ("OA", "OP", "OR", "F1", "NED")
CLASSIC_SEMANTIC_COLUMNS = ("CLIP", "AES")
JUDGE_COLUMNS = DIMENSION_COLUMNS + ("Avg",)
ALL_COLUMNS = CLASSIC_TEXT_COLUMNS + CLASSIC_SEMANTIC_COLUMNS + JUDGE_COLUMNS

_CLASSIC_FIELDS = {
    "OA": "ocr_accuracy",
    "OP": "ocr_precision",
    "OR": "ocr_recall",
    "F1": "ocr_f1",
    "NED": "roi_ned",
    "CLIP": "clip_score",
    "AES": "aesthetic",
}


@dataclass
class SampleResult:
    sample_id: str
    category_id: str
    status: str = "ok"
    classic: ClassicScores | None = None
    judge: JudgeScores | None = None
    error: str | None = None

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "ok" and self.classic is None and self.judge is None:
            raise ValueError(f"{self.sample_id}: ok result without any scores")

    def values(self, apply_cutoff: bool = False) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        if self.classic is not None:
            for col, attr in _CLASSIC_FIELDS.items():
                out[col] = getattr(self.classic, attr)
        if self.judge is not None:
            out.update(zip(DIMENSION_COLUMNS, self.judge.dimension_values(apply_cutoff)))
            out["Avg"] = self.judge.v_score
        return out

    def to_record(self) -> dict:
        rec: dict = {"id": self.sample_id, "category_id": self.category_id, "status": self.status}
        if self.error:
            rec["error"] = self.error
        if self.classic is not None:
            rec["classic"] = self.classic.to_dict()
        if self.judge is not None:
            rec["judge"] = {
                "scores": dict(self.judge.raw.scores),
                "reasons": dict(self.judge.raw.reasons),
                "normalized": dict(self.judge.normalized),
                "v_score": self.judge.v_score,
            }
        return rec


def merge_results(classic: Sequence[SampleResult], judged: Sequence[SampleResult]) -> list[SampleResult]:
    """Combine classic and judge results per sample; the first failure wins."""
    by_id = {r.sample_id: r for r in judged}
    merged = []
    for c in classic:
        j = by_id.pop(c.sample_id, None)
        if j is None:
            merged.append(c)
            continue
        status = c.status if c.status != "ok" else j.status
        error = c.error or j.error
        merged.append(SampleResult(c.sample_id, c.category_id, status, c.classic, j.judge, error))
    merged.extend(by_id.values())
    return merged


@dataclass
class GroupStats:
    count: int = 0
    ok: int = 0
    failed: dict[str, int] = field(default_factory=lambda: {s: 0 for s in FAILED_STATUSES})
    means: dict[str, float | None] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"count": self.count, "ok": self.ok, "failed": dict(self.failed), "means": dict(self.means)}


@dataclass
class AggregateReport:
    columns: list[str]
    groups: dict[str, GroupStats]
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "groups": {k: g.to_dict() for k, g in self.groups.items()},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AggregateReport":
        groups = {
            k: GroupStats(g["count"], g["ok"], dict(g["failed"]), dict(g["means"])) for k, g in data["groups"].items()
        }
        return cls(list(data["columns"]), groups, dict(data.get("metadata", {})))


def infer_columns(results: Iterable[SampleResult]) -> list[str]:
    has_classic = has_clip = has_aes = has_judge = False
    for r in results:
        if r.classic is not None:
            has_classic = True
            has_clip |= r.classic.clip_score is not None
            has_aes |= r.classic.aesthetic is not None
        has_judge |= r.judge is not None
    cols: list[str] = []
    if has_classic:
        cols += CLASSIC_TEXT_COLUMNS
    if has_clip:
        cols.append("CLIP")
    if has_aes:
        cols.append("AES")
    if has_judge:
        cols += JUDGE_COLUMNS
    return cols


def aggregate(
    results: Iterable[SampleResult],
    taxonomy: Taxonomy | None = None,
    *,
    columns: Sequence[str] | None = None,
    apply_cutoff_dims: bool = False,
    metadata: dict | None = None,
) -> AggregateReport:
    """Mean of each metric over status-ok samples in every group.

    Groups are ``overall``, ``Real``, ``Virtual`` and each leaf category of
    the taxonomy. Values are summed with ``math.fsum`` in ascending sample id
    order, so the result does not depend on input order.
    """
    taxonomy = taxonomy or DEFAULT_TAXONOMY
    ordered = sorted(results, key=lambda r: r.sample_id)
    cols = list(columns) if columns is not None else infer_columns(ordered)

    keys = ["overall", "Real", "Virtual", *taxonomy.leaf_ids()]
    groups = {k: GroupStats() for k in keys}
    values: dict[str, dict[str, list[float]]] = {k: {c: [] for c in cols} for k in keys}

    for r in ordered:
        node = taxonomy.classify(r.category_id)
        vals = r.values(apply_cutoff_dims) if r.status == "ok" else {}
        for key in ("overall", node.major, node.id):
            g = groups[key]
            g.count += 1
            if r.status == "ok":
                g.ok += 1
                for c in cols:
                    v = vals.get(c)
                    if v is not None:
                        values[key][c].append(v)
            else:
                g.failed[r.status] += 1

    for key, g in groups.items():
        g.means = {c: (math.fsum(v) / len(v) if v else None) for c, v in values[key].items()}
    return AggregateReport(cols, groups, dict(metadata or {}))


# ---------------------------------------------------------------------------
# rendering


def round_half_up(x: float, places: int = 2) -> str:
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


def _header(report: AggregateReport) -> list[str]:
    return ["group", "count", "ok", *(s.replace("-", "_") for s in FAILED_STATUSES), *report.columns]


def _rows(report: AggregateReport, empty: str) -> list[list[str]]:
    rows = []
    for key, g in report.groups.items():
        row = [key, str(g.count), str(g.ok), *(str(g.failed.get(s, 0)) for s in FAILED_STATUSES)]
        for c in report.columns:
            v = g.means.get(c)
            row.append(empty if v is None else round_half_up(v))
        rows.append(row)
    return rows


def emit_report(report: AggregateReport, format: str = "structured") -> str:
    """Render as ``structured`` (JSON, full precision), ``tabular`` (CSV, 2 dp) or ``human``."""
    if format == "structured":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if format == "tabular":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_header(report))
        writer.writerows(_rows(report, ""))
        return buf.getvalue()
    if format == "human":
        table = [_header(report), *_rows(report, "-")]
        widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
        lines = []
        for n, row in enumerate(table):
            cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
            if n == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}; expected structured, tabular or human")


def emit_samples(results: Iterable[SampleResult]) -> str:
    ordered = sorted(results, key=lambda r: r.sample_id)
    return "".join(json.dumps(r.to_record(), sort_keys=True, ensure_ascii=False) + "\n" for r in ordered)
