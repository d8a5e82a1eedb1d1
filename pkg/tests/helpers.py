"""Builders for samples, detections and synthetic corpora used across tests."""

from __future__ import annotations

import json
import random
from pathlib import Path

from textedit_eval.corpus import DEFAULT_TAXONOMY, OcrDetection, OcrFile, Sample, load_manifest
from textedit_eval.geometry import Polygon
from textedit_eval.judge import ResponseCache, build_judge_prompt

WORDS = ["OPEN", "SALE", "MUSIC", "PARTY", "CAFE", "24HR", "EXIT", "MENU", "HOTEL", "BAR", "PIZZA", "TAXI"]


def rect(x0, y0, x1, y1) -> Polygon:
    return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def det(text, box=(0, 0, 10, 10), conf=0.95) -> OcrDetection:
    return OcrDetection(text, conf, rect(*box))


def sample(sid="s1", cat="1.1.2", raw="MUSIC", target="PARTY", region=(100, 100, 200, 140), **kw) -> Sample:
    kw.setdefault("gt_image", f"gt/{sid}.png")
    kw.setdefault("edited_image", f"edited/{sid}.png")
    return Sample(
        id=sid,
        category_id=cat,
        source_image=f"src/{sid}.png",
        raw_text=raw,
        target_text=target,
        target_region=rect(*region),
        **kw,
    )


def synth_corpus(counts: dict[str, int] | None = None) -> list[Sample]:
    """One sample per taxonomy count, ids zero-padded so sort order is stable."""
    counts = counts or {n.id: n.count for n in DEFAULT_TAXONOMY.nodes.values()}
    out = []
    i = 0
    for cat, n in counts.items():
        for _ in range(n):
            out.append(sample(f"s{i:05d}", cat, raw=WORDS[i % len(WORDS)], target=WORDS[(i + 3) % len(WORDS)]))
            i += 1
    return out


def synth_ocr(samples: list[Sample], seed: int = 0) -> OcrFile:
    """Plausible OCR for each sample: target text (sometimes wrong), a few background words."""
    rng = random.Random(seed)
    ocr = OcrFile()
    for s in samples:
        bg = [det(rng.choice(WORDS), (10 + 60 * k, 300, 60 + 60 * k, 330)) for k in range(rng.randint(1, 5))]
        src = [det(s.raw_text, (100, 100, 200, 140))] + bg
        mode = rng.random()
        if mode < 0.6:
            tgt_text = s.target_text
        elif mode < 0.8:
            tgt_text = s.target_text[:-1] + "X"
        else:
            tgt_text = s.raw_text
        gen_bg = [d if rng.random() < 0.8 else det(d.text[:-1], (10, 400, 50, 420)) for d in bg]
        gen = [det(tgt_text, (102, 101, 198, 141))] + gen_bg
        ocr.detections[OcrFile.key(s.id, "source")] = src
        ocr.detections[OcrFile.key(s.id, "edited")] = gen
    return ocr


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


E2E_DIR = Path(__file__).parent / "data" / "e2e"
E2E_MODEL = "fixture-judge"


def e2e_replay_cache(cache_dir) -> Path:
    """Fill a judge cache with the fixture's canned responses keyed by real prompt hashes."""
    cache = ResponseCache(cache_dir)
    replies = json.loads((E2E_DIR / "judge_responses.json").read_text(encoding="utf-8"))
    samples = load_manifest(E2E_DIR / "manifest.jsonl")
    for s in samples:
        cache.put(s.id, E2E_MODEL, build_judge_prompt(s).prompt_hash, replies[s.id])
    return Path(cache_dir)


def e2e_eval_args(out_dir, cache_dir, command="eval") -> list[str]:
    args = [command, "--manifest", str(E2E_DIR / "manifest.jsonl"), "--out", str(out_dir), "--format", "structured"]
    if command in ("eval", "eval-classic"):
        args += ["--ocr", str(E2E_DIR / "ocr.json"), "--embeddings", str(E2E_DIR / "embeddings.json"),
                 "--aesthetic", str(E2E_DIR / "aesthetic.json")]
    if command in ("eval", "eval-judge"):
        args += ["--judge-replay", str(cache_dir), "--judge-model", E2E_MODEL]
    return args
