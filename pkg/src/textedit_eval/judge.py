"""MLLM judge: prompt rendering, response parsing, Likert normalization and
the cutoff-gated weighted score.

The judge model itself sits behind :class:`JudgeClient`. Responses are
cached on disk per (sample id, model id) together with the prompt hash, so
re-runs and offline replays give identical scores.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import math
import mimetypes
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx

from ._http import TransportFailure, auth_headers, with_retries
from .corpus import Sample
from .semantic import _safe_name, atomic_write

log = logging.getLogger(__name__)

DIMENSIONS = ("Q1", "Q2", "Q3", "Q4", "Q5")
# report column names for Q1..Q5
DIMENSION_COLUMNS = ("TA", "TP", "SI", "LR", "VC")
CUTOFF_SCORE = 4

PROMPT_TEMPLATE = """\
You are an expert Forensic Image Analyst and Design QA Specialist.

Your task is to evaluate the quality of an AI-edited image by comparing three images.

**Images Provided (in order):**
1. **Original Image**: The unedited source image containing the text "{raw_text}".
2. **Ground Truth Image**: A human-created reference showing the ideal result with text "{target_text}".
3. **Edited Image**: The AI-generated result to be evaluated.

**Editing Task Information:**
- **Text to Remove**: "{raw_text}"
- **Text to Add**: "{target_text}"

**EVALUATION RUBRIC (1-5 SCORING SYSTEM)**

Please evaluate the **Edited Image** based on the following 5 dimensions. Use the strict criteria below to assign a score from 1 to 5.

**Q1. [Target Text Accuracy]**
*Focus: Spelling, erasure correctness, and legibility of "{target_text}".*
- **5 (Perfect)**: Exact spelling match (case-sensitive). Old text completely erased. No ghosting.
- **4 (Minor Flaw)**: Text is correct but has 1 character error/typo, OR slight casing issue, OR extremely faint ghosting visible only on close inspection.
- **3 (Readable but Flawed)**: 2-3 character errors but word is recognizable. OR visible ghosting/remnants of old text that affect cleanness.
- **2 (Major Error)**: >3 character errors (misspelled heavily). OR old text is still clearly readable (failed erasure).
- **1 (Failed)**: Text is missing, gibberish, or completely wrong word. Old text remains fully intact.

**Q2. [Non-Target Text Preservation]**
*Focus: Preservation/legibility of background text other than the edited target.*
- **5 (Perfect)**: All non-target text is 100% preserved and legible, identical to Original/GT.
- **4 (Good)**: Main background text is preserved. Minor distant text is slightly softened/blurred but still readable.
- **3 (Fair)**: One or two secondary text elements are blurred, damaged, or missing.
- **2 (Poor)**: Critical nearby text (directly adjacent to target) is damaged, erased, or hallucinated.
- **1 (Destructive)**: Widespread destruction or hallucination of background text.

**Q3. [Global Scene Integrity]**
*Focus: Geometric stability of non-edited areas (background, objects, people).*
- **5 (Perfect)**: Pixel-perfect preservation of background geometry. No distortions.
- **4 (Good)**: Almost perfect, but very minor shift (<1%) in background lines or perspective.
- **3 (Noticeable)**: Visible distortion in straight lines (wavy), or slight warping of objects/faces.
- **2 (Severe)**: Major structural damage (e.g., a person's face is melted, a building collapsed).
- **1 (Chaos)**: The scene structure is completely changed or nonsensical compared to Original.

**Q4. [Local Realism & Artifacts]**
*Focus: Inpainting quality, edge cleanliness, and seamlessness around the edited area.*
- **5 (Excellent)**: Invisible edit. Clean edges, no halos, no smudges. Professional quality.
- **4 (Good)**: Very minor artifacts (e.g., slight pixelation on zoom-in), but looks natural at a glance.
- **3 (Fair)**: Visible seams, blurry rectangular patch, or "smudged" look around the text.
- **2 (Poor)**: Obvious artifacts, messy edges, or white/black box artifacts.
- **1 (Garbage)**: The edited area looks like a corrupted file or pure noise.

**Q5. [Aesthetic & Lighting Harmony]**
*Focus: Style matching (font), lighting, shadow, and texture harmony.*
- **5 (Seamless)**: Font style matches the GT/Context perfectly. Lighting/shadows are physically correct. Texture (grain) matches the photo.
- **4 (Integrated)**: Good style match. Lighting is mostly correct. Texture is slightly too smooth but acceptable.
- **3 (Artificial)**: Text looks "pasted on" (digital sticker look). Font style is generic (e.g., Arial) and clashes with the scene.
- **2 (Disjointed)**: Wrong color, wrong perspective, or no shading where needed.
- **1 (Mismatch)**: Text floats awkwardly, completely ignoring the scene's physics and style.

**FINAL OUTPUT FORMAT (JSON ONLY)**
You must output a valid JSON object containing two dictionaries: score (integers) and reason (strings).

Example Output:
Instruction: "Replace the text 'MUSIC' with 'PARTY'."
{
  "score": {"Q1": 5, "Q2": 1, "Q3": 2, "Q4": 5, "Q5": 4},
  "reason": {
    "Q1": "The target text 'PARTY' is spelled correctly and is clearly legible. The specific target text to remove ('MUSIC') is completely gone with no ghosting.",
    "Q2": "The model caused widespread destruction of non-target text. 'NIGHT CLUB', '31 OCT', 'FREE DRINKS', 'LIVE', and 'PRICE' were all erroneously removed, and '10$' was corrupted into the hallucinated text '1TY'.",
    "Q3": "Global scene integrity is severely compromised. The skeleton's arm holding the maraca was erased, leaving the maraca floating in mid-air, which breaks the physical logic of the illustration.",
    "Q4": "Despite the semantic failures, the technical quality of the image is excellent. The edges are sharp, the background inpainting is smooth, and there are no visible pixel artifacts, blur, or noise.",
    "Q5": "The font style selected for 'PARTY' integrates well with the hand-drawn vector aesthetic of the poster, although the color is a darker maroon compared to the bright red of the original text."
  }
}

Do not output any markdown or conversational text outside the JSON block.
"""


class JudgeError(RuntimeError):
    """Judge response could not be obtained or understood."""


class JudgeParseError(JudgeError, ValueError):
    pass


class JudgeUnavailable(JudgeError):
    pass


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class JudgePrompt:
    system_text: str
    image_slots: tuple[str, str, str]  # original, ground truth, edited

    @property
    def prompt_hash(self) -> str:
        return hashlib.sha256(self.system_text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class JudgeRaw:
    scores: Mapping[str, int]
    reasons: Mapping[str, str] = field(default_factory=dict)

    def score_tuple(self) -> tuple[int, ...]:
        return tuple(self.scores[q] for q in DIMENSIONS)


@dataclass(frozen=True)
class JudgeWeights:
    w: tuple[float, float, float, float, float] = (0.4, 0.3, 0.1, 0.1, 0.1)

    def __post_init__(self) -> None:
        if len(self.w) != len(DIMENSIONS):
            raise ValueError(f"need {len(DIMENSIONS)} weights, got {len(self.w)}")
        if any(x < 0 for x in self.w):
            raise ValueError(f"weights must be non-negative: {self.w}")
        if abs(math.fsum(self.w) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {math.fsum(self.w)}")
        object.__setattr__(self, "w", tuple(float(x) for x in self.w))

    @classmethod
    def parse(cls, text: str) -> "JudgeWeights":
        return cls(tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip()))


@dataclass(frozen=True)
class JudgeScores:
    raw: JudgeRaw
    normalized: Mapping[str, float]
    v_score: float

    def dimension_values(self, apply_cutoff: bool = False) -> tuple[float, ...]:
        """Normalized Q1..Q5; with ``apply_cutoff`` Q2..Q5 drop to 0 when Q1 < 4."""
        vals = [self.normalized[q] for q in DIMENSIONS]
        if apply_cutoff and self.raw.scores["Q1"] < CUTOFF_SCORE:
            vals[1:] = [0.0] * (len(vals) - 1)
        return tuple(vals)


# ---------------------------------------------------------------------------
# prompt and parsing


def render_prompt(raw_text: str, target_text: str) -> str:
    return PROMPT_TEMPLATE.replace("{raw_text}", raw_text).replace("{target_text}", target_text)


def build_judge_prompt(sample: Sample) -> JudgePrompt:
    if not sample.gt_image:
        raise JudgeError(f"{sample.id}: judge needs a ground-truth image")
    if not sample.edited_image:
        raise JudgeError(f"{sample.id}: judge needs an edited image")
    return JudgePrompt(
        render_prompt(sample.raw_text, sample.target_text),
        (sample.source_image, sample.gt_image, sample.edited_image),
    )


_FENCE = re.compile(r"^\s*```[A-Za-z0-9_-]*\s*\n?(.*?)\n?\s*```\s*$", re.S)


def _balanced_objects(text: str):
    """Yield every top-level ``{...}`` substring, skipping braces inside strings."""
    i = 0
    while True:
        start = text.find("{", i)
        if start < 0:
            return
        depth, in_str, esc = 0, False, False
        for j in range(start, len(text)):
            c = text[j]
            if in_str:
                if esc:
                    esc = False
                elif c == "\\":
                    esc = True
                elif c == '"':
                    in_str = False
            elif c == '"':
                in_str = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    yield text[start : j + 1]
                    break
        else:
            return
        i = start + 1


def _extract_object(text: str) -> dict:
    stripped = text.strip()
    m = _FENCE.match(stripped)
    if m:
        log.debug("judge response wrapped in a code fence")
        stripped = m.group(1).strip()
    try:
        obj = json.loads(stripped)
        if isinstance(obj, dict):
            return obj
    except json.JSONDecodeError:
        pass
    for candidate in _balanced_objects(stripped):
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            log.debug("judge response had text outside the JSON object")
            return obj
    raise JudgeParseError("no JSON object found in judge response")


def parse_judge_response(text: str) -> JudgeRaw:
    """Parse ``{"score": {Q1..Q5: int}, "reason": {Q1..Q5: str}}`` from judge output.

    Tolerates a surrounding code fence and prose around the object. Missing
    reasons default to empty strings; scores are strict.
    """
    obj = _extract_object(text)
    scores_in = obj.get("score")
    if not isinstance(scores_in, dict):
        raise JudgeParseError("judge response has no 'score' object")
    reasons_in = obj.get("reason") or {}
    if not isinstance(reasons_in, dict):
        raise JudgeParseError("'reason' must be an object")

    scores, reasons = {}, {}
    for q in DIMENSIONS:
        if q not in scores_in:
            raise JudgeParseError(f"missing score {q}")
        s = scores_in[q]
        if isinstance(s, bool) or not isinstance(s, (int, float)):
            raise JudgeParseError(f"score {q} is not an integer: {s!r}")
        if isinstance(s, float):
            if not s.is_integer():
                raise JudgeParseError(f"score {q} is not an integer: {s!r}")
            s = int(s)
        if not 1 <= s <= 5:
            raise JudgeParseError(f"score {q} = {s} outside [1, 5]")
        scores[q] = s
        r = reasons_in.get(q, "")
        reasons[q] = r if isinstance(r, str) else json.dumps(r, ensure_ascii=False)
    return JudgeRaw(scores, reasons)


def serialize_judge_raw(raw: JudgeRaw) -> str:
    return json.dumps(
        {"score": {q: raw.scores[q] for q in DIMENSIONS}, "reason": {q: raw.reasons.get(q, "") for q in DIMENSIONS}},
        ensure_ascii=False,
        indent=2,
    )


# ---------------------------------------------------------------------------
# scoring


def normalize_likert(s: int) -> float:
    if isinstance(s, bool) or not isinstance(s, int) or not 1 <= s <= 5:
        raise ValueError(f"Likert score must be an integer in [1, 5], got {s!r}")
    return (s - 1) / 4


def weighted_vscore(raw: JudgeRaw | Sequence[int], w: JudgeWeights = JudgeWeights()) -> float:
    """``w1*s1' + [s1 >= 4] * sum(w_i * s_i')`` over normalized scores."""
    s = raw.score_tuple() if isinstance(raw, JudgeRaw) else tuple(raw)
    norm = [normalize_likert(x) for x in s]
    v = w.w[0] * norm[0]
    if s[0] >= CUTOFF_SCORE:
        for wi, ni in zip(w.w[1:], norm[1:]):
            v += wi * ni
    return v


def score_judge_raw(raw: JudgeRaw, w: JudgeWeights = JudgeWeights()) -> JudgeScores:
    norm = {q: normalize_likert(raw.scores[q]) for q in DIMENSIONS}
    return JudgeScores(raw, norm, weighted_vscore(raw, w))


# ---------------------------------------------------------------------------
# clients and cache


class JudgeClient(Protocol):
    model_id: str

    def complete(self, prompt: JudgePrompt) -> str: ...


class ReplayJudgeClient:
    """Offline client: every cache miss is an error."""

    def __init__(self, model_id: str):
        self.model_id = model_id

    def complete(self, prompt: JudgePrompt) -> str:
        raise JudgeUnavailable("no cached response and network access is disabled")


class HttpJudgeClient:
    """OpenAI-compatible chat-completions judge.

    Images are sent inline as base64 data URLs, in (original, ground truth,
    edited) order, resolved against ``image_root`` when relative.
    """

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        *,
        token_env: str | None = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff: float = 2.0,
        image_root: str | Path | None = None,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.model_id = model_id
        self.max_retries = max_retries
        self.backoff = backoff
        self.image_root = Path(image_root) if image_root else None
        self.client = client or httpx.Client(timeout=timeout, headers=auth_headers(token_env))
        self.request_count = 0
        self._lock = threading.Lock()

    def _image_part(self, ref: str) -> dict:
        if ref.startswith(("http://", "https://", "data:")):
            url = ref
        else:
            path = Path(ref)
            if not path.is_absolute() and self.image_root is not None:
                path = self.image_root / path
            mime = mimetypes.guess_type(path.name)[0] or "image/png"
            url = f"data:{mime};base64," + base64.b64encode(path.read_bytes()).decode("ascii")
        return {"type": "image_url", "image_url": {"url": url}}

    def complete(self, prompt: JudgePrompt) -> str:
        labels = ("Original Image", "Ground Truth Image", "Edited Image")
        content: list[dict] = []
        for label, ref in zip(labels, prompt.image_slots):
            content.append({"type": "text", "text": label})
            content.append(self._image_part(ref))
        payload = {
            "model": self.model_id,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": content},
            ],
        }

        def call():
            with self._lock:
                self.request_count += 1
            resp = self.client.post(self.endpoint, json=payload)
            resp.raise_for_status()
            return resp.json()

        body = with_retries(call, max_retries=self.max_retries, backoff=self.backoff)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise JudgeError("unexpected response shape from judge endpoint") from None


class ResponseCache:
    """One JSON file per (sample id, model id) holding the raw response text."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, sample_id: str, model_id: str) -> Path:
        tag = hashlib.sha1(f"{sample_id}\0{model_id}".encode("utf-8")).hexdigest()[:8]
        return self.root / f"{_safe_name(sample_id)}__{_safe_name(model_id)}__{tag}.json"

    def get(self, sample_id: str, model_id: str, prompt_hash: str) -> str | None:
        p = self.path(sample_id, model_id)
        if not p.exists():
            return None
        entry = json.loads(p.read_text(encoding="utf-8"))
        if entry.get("prompt_hash") != prompt_hash:
            return None
        return entry["response"]

    def put(self, sample_id: str, model_id: str, prompt_hash: str, response: str) -> None:
        entry = {"sample_id": sample_id, "model_id": model_id, "prompt_hash": prompt_hash, "response": response}
        atomic_write(self.path(sample_id, model_id), json.dumps(entry, ensure_ascii=False, indent=2))


def evaluate_judge(
    sample: Sample,
    client: JudgeClient,
    w: JudgeWeights = JudgeWeights(),
    cache: ResponseCache | None = None,
) -> JudgeScores:
    """Score one sample, consulting the cache before calling the client.

    Raises JudgeError subclasses or TransportFailure; callers record those
    as a judge-failed sample.
    """
    prompt = build_judge_prompt(sample)
    text = cache.get(sample.id, client.model_id, prompt.prompt_hash) if cache else None
    if text is None:
        try:
            text = client.complete(prompt)
        except TransportFailure as exc:
            raise JudgeUnavailable(f"{sample.id}: {exc}") from exc
        if cache is not None:
            cache.put(sample.id, client.model_id, prompt.prompt_hash, text)
    try:
        raw = parse_judge_response(text)
    except JudgeParseError as exc:
        raise JudgeParseError(f"{sample.id}: {exc}") from exc
    return score_judge_raw(raw, w)
