"""CLIPScore and aesthetic score over precomputed embeddings.

No encoder runs here. Vectors come from an :class:`EmbeddingProvider`,
either a JSON file or an HTTP endpoint with an on-disk cache. Keys follow
``"<sample_id>/edited_image"`` and ``"<sample_id>/caption"``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import httpx
import numpy as np

from ._http import auth_headers, with_retries

log = logging.getLogger(__name__)

EMBED_KINDS = ("edited_image", "caption")


class EmbeddingError(LookupError):
    pass


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    source_key: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"embedding {self.source_key!r} must be a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"embedding {self.source_key!r} has non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class AestheticHead:
    """Linear aesthetic predictor: ``weights . v + bias``."""

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])


def _vec(v: Embedding | Sequence[float] | np.ndarray) -> np.ndarray:
    return v.values if isinstance(v, Embedding) else np.asarray(v, dtype=np.float64)


def clip_score(v_img: Embedding | Sequence[float], v_text: Embedding | Sequence[float]) -> float:
    """Cosine similarity between an image embedding and a caption embedding."""
    a, b = _vec(v_img), _vec(v_text)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    cos = float(np.dot(a / na, b / nb))
    return min(1.0, max(-1.0, cos))


def aesthetic_score(v_img: Embedding | Sequence[float], head: AestheticHead) -> float:
    v = _vec(v_img)
    if v.shape[0] != head.dim:
        raise ValueError(f"dimension mismatch: embedding {v.shape[0]} vs head {head.dim}")
    return float(np.dot(head.weights, v) + head.bias)


class PrecomputedAesthetic:
    """Aesthetic scores supplied directly per key, bypassing any head."""

    def __init__(self, scores: Mapping[str, float]):
        self.scores = {k: float(v) for k, v in scores.items()}

    def score(self, key: str) -> float:
        try:
            return self.scores[key]
        except KeyError:
            raise EmbeddingError(f"no precomputed aesthetic score for {key!r}") from None


def load_aesthetic(path) -> AestheticHead | PrecomputedAesthetic:
    """Read either ``{dim, weights, bias}`` or a ``{key: score}`` mapping."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "weights" in data:
        head = AestheticHead(data["weights"], data.get("bias", 0.0))
        if "dim" in data and int(data["dim"]) != head.dim:
            raise ValueError(f"aesthetic head declares dim {data['dim']} but has {head.dim} weights")
        return head
    return PrecomputedAesthetic(data)


# ---------------------------------------------------------------------------
# providers


class EmbeddingProvider:
    """Deterministic key -> vector lookup. Subclasses implement ``_lookup``."""

    provider_id: str = "provider"

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._memo: dict[str, Embedding] = {}
        self._dim: int | None = None

    def fetch(self, key: str) -> Embedding:
        with self._lock:
            hit = self._memo.get(key)
        if hit is not None:
            return hit
        emb = Embedding(self._lookup(key), key)
        with self._lock:
            if self._dim is None:
                self._dim = emb.dim
            elif emb.dim != self._dim:
                raise EmbeddingError(f"{key!r} has dim {emb.dim}, expected {self._dim}")
            # first writer wins so repeat fetches stay identical
            return self._memo.setdefault(key, emb)

    def _lookup(self, key: str) -> Sequence[float]:
        raise NotImplementedError


def fetch_embedding(provider: EmbeddingProvider, key: str) -> Embedding:
    _, sep, kind = key.rpartition("/")
    if not sep or kind not in EMBED_KINDS:
        raise EmbeddingError(f"key {key!r} must look like '<sample_id>/edited_image' or '<sample_id>/caption'")
    return provider.fetch(key)


class FileEmbeddingProvider(EmbeddingProvider):
    """Embeddings read from ``{"dim": d, "provider_id": s, "embeddings": {key: [...]}}``."""

    def __init__(self, data: Mapping):
        super().__init__()
        self.provider_id = str(data.get("provider_id", "file"))
        self.vectors: Mapping[str, Sequence[float]] = data.get("embeddings", {})
        declared = data.get("dim")
        if declared is not None:
            self._dim = int(declared)

    @classmethod
    def load(cls, path) -> "FileEmbeddingProvider":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def _lookup(self, key: str) -> Sequence[float]:
        try:
            return self.vectors[key]
        except KeyError:
            raise EmbeddingError(f"embedding not found: {key!r}") from None


class HttpEmbeddingProvider(EmbeddingProvider):
    """Embeddings fetched from ``POST {keys: [...]} -> {key: vector}``.

    Every vector is cached on disk under ``cache_dir/<provider_id>/`` so that a
    key is requested at most once across runs.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        provider_id: str = "http",
        cache_dir: str | os.PathLike | None = None,
        token_env: str | None = None,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        client: httpx.Client | None = None,
    ):
        super().__init__()
        self.endpoint = endpoint
        self.provider_id = provider_id
        self.cache_dir = Path(cache_dir) / _safe_name(provider_id) if cache_dir else None
        self.max_retries = max_retries
        self.backoff = backoff
        self.client = client or httpx.Client(timeout=timeout, headers=auth_headers(token_env))
        self.request_count = 0

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / (hashlib.sha256(key.encode("utf-8")).hexdigest() + ".json")

    def _lookup(self, key: str) -> Sequence[float]:
        path = self._cache_path(key)
        if path is not None and path.exists():
            return json.loads(path.read_text(encoding="utf-8"))["vector"]

        def call():
            with self._lock:
                self.request_count += 1
            resp = self.client.post(self.endpoint, json={"keys": [key]})
            resp.raise_for_status()
            return resp.json()

        body = with_retries(call, max_retries=self.max_retries, backoff=self.backoff)
        if key not in body:
            raise EmbeddingError(f"embedding not found: {key!r}")
        vector = [float(x) for x in body[key]]
        if path is not None:
            atomic_write(path, json.dumps({"key": key, "provider_id": self.provider_id, "vector": vector}))
        return vector


def _safe_name(s: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in s) or "_"


def atomic_write(path: Path, text: str) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class SemanticScorer:
    """CLIPScore and aesthetic score for a sample id."""

    def __init__(
        self,
        provider: EmbeddingProvider | None,
        aesthetic: AestheticHead | PrecomputedAesthetic | None = None,
    ):
        self.provider = provider
        self.aesthetic = aesthetic

    def score(self, sample_id: str) -> tuple[float | None, float | None]:
        img_key = f"{sample_id}/edited_image"
        clip = aes = None
        v_img = None
        if self.provider is not None:
            v_img = fetch_embedding(self.provider, img_key)
            v_txt = fetch_embedding(self.provider, f"{sample_id}/caption")
            clip = clip_score(v_img, v_txt)
        if isinstance(self.aesthetic, PrecomputedAesthetic):
            aes = self.aesthetic.score(img_key)
        elif isinstance(self.aesthetic, AestheticHead) and v_img is not None:
            aes = aesthetic_score(v_img, self.aesthetic)
        return clip, aes
