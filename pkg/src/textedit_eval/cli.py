"""Command-line entry point.

Exit codes: 0 success, 1 validation failure (or per-sample failures with
``--strict``), 2 configuration or runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .corpus import (
    CorpusError,
    OcrFile,
    Sample,
    Taxonomy,
    emit_manifest,
    load_ocr_detections,
    parse_manifest,
    sample_miniset,
)
from .judge import HttpJudgeClient, JudgeWeights, ReplayJudgeClient, ResponseCache
from .metrics import PenaltyConfig
from .report import CLASSIC_TEXT_COLUMNS, FAILED_STATUSES, JUDGE_COLUMNS, aggregate, emit_report, emit_samples, merge_results
from .runner import run_classic, run_judge
from .semantic import FileEmbeddingProvider, HttpEmbeddingProvider, SemanticScorer, load_aesthetic

log = logging.getLogger("textedit_eval")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


@dataclass
class Inputs:
    taxonomy: Taxonomy
    samples: list[Sample]
    manifest_sha: str


# ---------------------------------------------------------------------------
# option parsing helpers


def parse_thresholds(value: str | None) -> PenaltyConfig:
    """``key=value,...`` pairs or a path to a JSON object with the same keys."""
    if not value:
        return PenaltyConfig()
    path = Path(value)
    if path.is_file():
        values = json.loads(path.read_text(encoding="utf-8"))
    else:
        values = {}
        for part in value.split(","):
            if not part.strip():
                continue
            key, sep, val = part.partition("=")
            if not sep:
                raise ConfigError(f"--thresholds expects key=value pairs, got {part!r}")
            values[key.strip()] = float(val)
    try:
        return PenaltyConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"bad --thresholds: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_weights(value: str | None) -> JudgeWeights:
    if not value:
        return JudgeWeights()
    try:
        path = Path(value)
        if path.is_file():
            return JudgeWeights(tuple(json.loads(path.read_text(encoding="utf-8"))))
        return JudgeWeights.parse(value)
    except ValueError as exc:
        raise ConfigError(f"bad --weights: {exc}") from None


def select_subset(samples: list[Sample], subset: str, seed: int) -> list[Sample]:
    """``full``, ``miniset:<total>`` (seeded by --seed) or ``ids:a,b,...`` / ``ids:@file``."""
    if subset == "full":
        return samples
    kind, _, arg = subset.partition(":")
    if kind == "miniset":
        try:
            total = int(arg)
        except ValueError:
            raise ConfigError(f"bad --subset {subset!r}; expected miniset:<total>") from None
        try:
            return sample_miniset(samples, total, seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if kind == "ids":
        if arg.startswith("@"):
            ids = Path(arg[1:]).read_text(encoding="utf-8").split()
        else:
            ids = [x for x in arg.split(",") if x]
        known = {s.id for s in samples}
        missing = [i for i in ids if i not in known]
        if missing:
            raise ConfigError(f"--subset names unknown sample ids: {', '.join(missing[:5])}")
        wanted = set(ids)
        return [s for s in samples if s.id in wanted]
    raise ConfigError(f"bad --subset {subset!r}; expected full, miniset:<total> or ids:...")


def _sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_inputs(args) -> Inputs:
    taxonomy = Taxonomy.load(args.taxonomy) if args.taxonomy else Taxonomy.default()
    with open(args.manifest, encoding="utf-8") as fh:
        samples = parse_manifest(fh, taxonomy)
    return Inputs(taxonomy, samples, _sha256_file(args.manifest))


def load_ocr(paths: Sequence[str], sample_ids) -> OcrFile:
    ocr = OcrFile()
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            ocr.merge(load_ocr_detections(fh, sample_ids))
    return ocr


def build_scorer(args) -> SemanticScorer | None:
    provider = None
    if args.embeddings:
        provider = FileEmbeddingProvider.load(args.embeddings)
    elif args.embed_endpoint:
        provider = HttpEmbeddingProvider(
            args.embed_endpoint,
            provider_id=args.embed_provider_id,
            cache_dir=args.embed_cache,
            token_env=args.embed_token_env,
            timeout=args.timeout,
            max_retries=args.max_retries,
        )
    aesthetic = load_aesthetic(args.aesthetic) if args.aesthetic else None
    if provider is None and aesthetic is None:
        return None
    return SemanticScorer(provider, aesthetic)


def build_judge(args, image_root: Path):
    if args.judge_replay:
        replay = Path(args.judge_replay)
        if not replay.is_dir():
            raise ConfigError(f"--judge-replay directory {replay} does not exist")
        return ReplayJudgeClient(args.judge_model), ResponseCache(replay)
    if args.judge_endpoint:
        client = HttpJudgeClient(
            args.judge_endpoint,
            args.judge_model,
            token_env=args.judge_token_env,
            timeout=args.timeout,
            max_retries=args.max_retries,
            image_root=image_root,
        )
        cache = ResponseCache(args.judge_cache) if args.judge_cache else None
        return client, cache
    raise ConfigError("judge evaluation needs --judge-endpoint or --judge-replay")


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


def write_outputs(out_dir: Path, results, report, fmt: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.json").write_text(emit_report(report, "structured"), encoding="utf-8")
    (out_dir / "summary.csv").write_text(emit_report(report, "tabular"), encoding="utf-8")
    (out_dir / "summary.txt").write_text(emit_report(report, "human"), encoding="utf-8")
    (out_dir / "samples.jsonl").write_text(emit_samples(results), encoding="utf-8")
    sys.stdout.write(emit_report(report, fmt))


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    problems: list[str] = []
    taxonomy = Taxonomy.load(args.taxonomy) if args.taxonomy else Taxonomy.default()
    errors: list[CorpusError] = []
    with open(args.manifest, encoding="utf-8") as fh:
        samples = parse_manifest(fh, taxonomy, errors=errors)
    problems += [f"{args.manifest}: {e}" for e in errors]

    ids = {s.id for s in samples}
    for path in args.ocr or []:
        try:
            with open(path, encoding="utf-8") as fh:
                load_ocr_detections(fh, ids)
        except CorpusError as exc:
            problems.append(f"{path}: {exc}")

    present = {s.category_id for s in samples}
    empty = [c for c in taxonomy.leaf_ids() if c not in present]
    for p in problems:
        print(f"error: {p}", file=sys.stderr)
    if problems:
        print(f"{len(problems)} problem(s) found", file=sys.stderr)
        return EXIT_INVALID
    msg = f"{len(samples)} samples OK across {len(present)}/{len(taxonomy)} categories"
    if empty:
        msg += f" (no samples for {', '.join(empty)})"
    print(msg)
    return EXIT_OK


def _run_eval(args, *, classic: bool, judge: bool) -> int:
    cfg = parse_thresholds(getattr(args, "thresholds", None))
    weights = parse_weights(getattr(args, "weights", None))
    judge_client = judge_cache = None
    if judge:
        judge_client, judge_cache = build_judge(args, Path(args.manifest).resolve().parent)

    inputs = load_inputs(args)
    samples = select_subset(inputs.samples, args.subset, args.seed)
    ids = {s.id for s in inputs.samples}

    config = {
        "command": args.command,
        "manifest_sha256": inputs.manifest_sha,
        "subset": args.subset,
        "seed": args.seed,
        "taxonomy": inputs.taxonomy.to_records(),
    }
    classic_results = judge_results = None
    if classic:
        ocr = load_ocr(args.ocr, ids)
        scorer = build_scorer(args)
        config["thresholds"] = cfg.to_dict()
        config["ocr_sha256"] = [_sha256_file(p) for p in args.ocr]
        config["semantic"] = {
            "embeddings": _sha256_file(args.embeddings) if args.embeddings else args.embed_endpoint,
            "aesthetic": _sha256_file(args.aesthetic) if args.aesthetic else None,
        }
        classic_results = run_classic(samples, ocr, scorer, cfg, args.parallelism)
    if judge:
        config["weights"] = list(weights.w)
        config["judge_model"] = judge_client.model_id
        config["cutoff_dims"] = args.cutoff_dims
        judge_results = run_judge(samples, judge_client, weights, judge_cache, args.parallelism)

    if classic_results is not None and judge_results is not None:
        results = merge_results(classic_results, judge_results)
    else:
        results = classic_results if classic_results is not None else judge_results

    columns: list[str] = []
    if classic:
        columns += CLASSIC_TEXT_COLUMNS
        if args.embeddings or args.embed_endpoint:
            columns.append("CLIP")
        if args.aesthetic:
            columns.append("AES")
    if judge:
        columns += JUDGE_COLUMNS
    metadata = {
        "toolkit_version": __version__,
        "config_hash": config_hash(config),
        "thresholds": cfg.to_dict() if classic else None,
        "weights": list(weights.w) if judge else None,
        "cutoff_dims": args.cutoff_dims if judge else None,
        "subset": args.subset,
        "seed": args.seed,
        "samples": len(samples),
    }
    report = aggregate(
        results, inputs.taxonomy, columns=columns, apply_cutoff_dims=getattr(args, "cutoff_dims", False), metadata=metadata
    )
    write_outputs(Path(args.out), results, report, args.format)

    failed = report.groups["overall"].count - report.groups["overall"].ok
    if failed:
        detail = ", ".join(f"{report.groups['overall'].failed[s]} {s}" for s in FAILED_STATUSES if report.groups["overall"].failed[s])
        print(f"{failed} sample(s) excluded from means: {detail}", file=sys.stderr)
        if args.strict:
            return EXIT_INVALID
    return EXIT_OK


def cmd_eval_classic(args) -> int:
    return _run_eval(args, classic=True, judge=False)


def cmd_eval_judge(args) -> int:
    return _run_eval(args, classic=False, judge=True)


def cmd_eval(args) -> int:
    return _run_eval(args, classic=True, judge=True)


def cmd_sample_miniset(args) -> int:
    inputs = load_inputs(args)
    try:
        subset = sample_miniset(inputs.samples, args.total, args.seed, uniform=args.uniform)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    text = emit_manifest(subset)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        cats = len({s.category_id for s in subset})
        print(f"wrote {len(subset)} samples across {cats} categories to {args.out}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="JSON Lines manifest")
    p.add_argument("--taxonomy", help="taxonomy JSON overriding the built-in table")
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice (default: 0)")


def _add_eval(p: argparse.ArgumentParser) -> None:
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subset", default="full", help="full | miniset:<total> | ids:a,b,... | ids:@file")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--strict", action="store_true", help="exit 1 if any sample failed")
    p.add_argument("--format", choices=("structured", "tabular", "human"), default="human",
                   help="report format printed to stdout")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--max-retries", type=int, default=3)


def _add_classic(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ocr", action="append", required=True, help="OCR detections JSON (repeatable)")
    emb = p.add_mutually_exclusive_group()
    emb.add_argument("--embeddings", help="embedding file")
    emb.add_argument("--embed-endpoint", help="embedding service URL")
    p.add_argument("--embed-provider-id", default="http")
    p.add_argument("--embed-cache", help="disk cache directory for fetched embeddings")
    p.add_argument("--embed-token-env", help="environment variable holding the embedding API token")
    p.add_argument("--aesthetic", help="aesthetic head {dim, weights, bias} or {key: score} JSON")
    p.add_argument("--thresholds", help="key=value,... or JSON file overriding penalty thresholds")


def _add_judge(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--judge-endpoint", help="chat-completions URL of the judge model")
    src.add_argument("--judge-replay", help="score from this cache directory only; no network")
    p.add_argument("--judge-model", default="judge", help="judge model id (part of the cache key)")
    p.add_argument("--judge-cache", help="cache directory for live judge responses")
    p.add_argument("--judge-token-env", help="environment variable holding the judge API token")
    p.add_argument("--weights", help="five comma-separated weights or a JSON list file")
    p.add_argument("--cutoff-dims", action="store_true",
                   help="apply the Q1 cutoff to the per-dimension columns too")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textedit-eval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check manifest, taxonomy coverage and OCR references")
    _add_common(p)
    p.add_argument("--ocr", action="append", help="OCR detections JSON (repeatable)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval-classic", help="OCR and embedding metrics")
    _add_eval(p)
    _add_classic(p)
    p.set_defaults(func=cmd_eval_classic, cutoff_dims=False)

    p = sub.add_parser("eval-judge", help="MLLM judge metrics")
    _add_eval(p)
    _add_judge(p)
    p.set_defaults(func=cmd_eval_judge)

    p = sub.add_parser("eval", help="classic and judge metrics in one report")
    _add_eval(p)
    _add_classic(p)
    _add_judge(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample-miniset", help="write a stratified subset manifest")
    _add_common(p)
    p.add_argument("--total", type=int, default=500)
    p.add_argument("--uniform", action="store_true", help="equal quota per category instead of proportional")
    p.add_argument("--out", help="output manifest path (default: stdout)")
    p.set_defaults(func=cmd_sample_miniset)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
