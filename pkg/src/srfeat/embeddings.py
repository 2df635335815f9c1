"""Text-embedding providers for the semantic and filler features.

Three interchangeable providers share one small interface
(``embed_tokens`` / ``embed_sentence``):

* :class:`HashingProvider` - deterministic offline fallback built from hashed
  character trigrams, no model required;
* :class:`FileProvider` - precomputed vectors looked up by exact text;
* :class:`HttpProvider` - a remote embedding service (JSON over HTTP POST).
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_DIMENSION = 256


class EmbeddingError(RuntimeError):
    pass


class TransportError(EmbeddingError):
    pass


@dataclass(frozen=True)
class TokenEmbeddings:
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (n_tokens, dimension), rows unit-normalized

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])


@dataclass(frozen=True)
class SentenceEmbedding:
    vector: np.ndarray


def normalize_rows(vectors, dimension: int | None = None) -> np.ndarray:
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise EmbeddingError("expected a non-empty 2-D array of vectors")
    if dimension is not None and arr.shape[1] != dimension:
        raise EmbeddingError(f"dimension mismatch: got {arr.shape[1]}, configured {dimension}")
    if not np.all(np.isfinite(arr)):
        raise EmbeddingError("embedding contains non-finite values")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0):
        raise EmbeddingError("zero-norm embedding vector")
    return arr / norms[:, None]


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


class EmbeddingProvider:
    """Base class; subclasses implement :meth:`_tokens` and may override
    :meth:`_sentence`. Results are memoized per instance."""

    name = "base"

    def __init__(self, dimension: int | None = None):
        self.dimension = dimension
        self._cache: dict[tuple[str, str], object] = {}
        self._lock = threading.Lock()

    def embed_tokens(self, text: str) -> TokenEmbeddings:
        if not text or not text.strip():
            raise EmbeddingError("cannot embed empty text")
        return self._memo("tokens", text, self._tokens)

    def embed_sentence(self, text: str) -> SentenceEmbedding:
        if not text or not text.strip():
            raise EmbeddingError("cannot embed empty text")
        return self._memo("sentence", text, self._sentence)

    def _memo(self, mode, text, fn):
        key = (mode, text)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = fn(text)
        with self._lock:
            self._cache[key] = value
        return value

    def _tokens(self, text: str) -> TokenEmbeddings:
        raise NotImplementedError

    def _sentence(self, text: str) -> SentenceEmbedding:
        vectors = self._tokens(text).vectors
        return SentenceEmbedding(normalize_rows(vectors.mean(axis=0))[0])

    def describe(self) -> dict:
        return {"provider": self.name, "dimension": self.dimension}


def _bucket(trigram: str, dimension: int) -> int:
    digest = hashlib.blake2b(trigram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dimension


class HashingProvider(EmbeddingProvider):
    """Hashed character-trigram count vectors over whitespace words.

    Each word is padded with ``#`` on both sides before trigrams are taken,
    so single-character words still produce one trigram. The hash is
    blake2b, which makes vectors identical across processes and platforms.
    """

    name = "fallback"

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        super().__init__(dimension)

    def word_vector(self, word: str) -> np.ndarray:
        padded = f"#{word}#"
        vec = np.zeros(self.dimension)
        for k in range(len(padded) - 2):
            vec[_bucket(padded[k:k + 3], self.dimension)] += 1.0
        return vec / np.linalg.norm(vec)

    def _tokens(self, text: str) -> TokenEmbeddings:
        words = tuple(text.split())
        return TokenEmbeddings(words, np.vstack([self.word_vector(w) for w in words]))


class FileProvider(EmbeddingProvider):
    """Vectors from a line-delimited file of ``{"text", "vectors"[, "tokens"]}``.

    ``embed_sentence`` uses an optional ``"sentence"`` vector when the entry
    has one and the normalized mean of the token vectors otherwise.
    """

    name = "file"

    def __init__(self, entries: dict[str, dict], dimension: int | None = None):
        super().__init__(dimension)
        self._entries = entries

    @classmethod
    def from_path(cls, path: str | Path, dimension: int | None = None) -> FileProvider:
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    entries[obj["text"]] = obj
                except (json.JSONDecodeError, KeyError) as exc:
                    raise EmbeddingError(f"{path}:{lineno}: malformed embedding entry") from exc
        return cls(entries, dimension)

    def _entry(self, text: str) -> dict:
        try:
            return self._entries[text]
        except KeyError:
            raise EmbeddingError(f"no precomputed embedding for text {text!r}") from None

    def _tokens(self, text: str) -> TokenEmbeddings:
        entry = self._entry(text)
        vectors = normalize_rows(entry["vectors"], self.dimension)
        tokens = entry.get("tokens")
        if tokens is None:
            words = text.split()
            tokens = words if len(words) == len(vectors) else [f"<{k}>" for k in range(len(vectors))]
        if len(tokens) != len(vectors):
            raise EmbeddingError(f"token/vector count mismatch for {text!r}")
        return TokenEmbeddings(tuple(tokens), vectors)

    def _sentence(self, text: str) -> SentenceEmbedding:
        entry = self._entry(text)
        if "sentence" in entry:
            return SentenceEmbedding(normalize_rows(entry["sentence"], self.dimension)[0])
        return super()._sentence(text)


class HttpProvider(EmbeddingProvider):
    """Client for a remote embedding service.

    Request body: ``{"texts": [text], "mode": "tokens" | "sentence"}``.
    Response: ``{"dimension": d, "embeddings": [[...], ...]}`` holding one
    vector per token (tokens mode) or one per text (sentence mode); an
    optional ``"tokens"`` list names the token vectors.
    """

    name = "remote"

    def __init__(self, url: str, dimension: int | None = None, timeout: float = 10.0, retries: int = 2,
                 backoff: float = 0.2):
        super().__init__(dimension)
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def _post(self, text: str, mode: str) -> dict:
        body = json.dumps({"texts": [text], "mode": mode}, ensure_ascii=False).encode("utf-8")
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(self.url, data=body, method="POST",
                                         headers={"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                break
            except (urllib.error.URLError, TimeoutError, ConnectionError, json.JSONDecodeError) as exc:
                last_exc = exc
                log.warning("embedding request failed (attempt %d/%d): %s", attempt + 1, self.retries + 1, exc)
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        else:
            raise TransportError(f"embedding service at {self.url} unreachable: {last_exc}") from last_exc

        if not isinstance(payload, dict) or "embeddings" not in payload:
            raise EmbeddingError("embedding response lacks 'embeddings'")
        declared = payload.get("dimension")
        if self.dimension is not None and declared is not None and declared != self.dimension:
            raise EmbeddingError(f"dimension mismatch: service reports {declared}, configured {self.dimension}")
        return payload

    def _tokens(self, text: str) -> TokenEmbeddings:
        payload = self._post(text, "tokens")
        vectors = normalize_rows(payload["embeddings"], self.dimension or payload.get("dimension"))
        tokens = payload.get("tokens") or [f"<{k}>" for k in range(len(vectors))]
        if len(tokens) != len(vectors):
            raise EmbeddingError("token/vector count mismatch in service response")
        return TokenEmbeddings(tuple(tokens), vectors)

    def _sentence(self, text: str) -> SentenceEmbedding:
        payload = self._post(text, "sentence")
        vectors = normalize_rows(payload["embeddings"], self.dimension or payload.get("dimension"))
        if len(vectors) != 1:
            raise EmbeddingError("sentence mode must return exactly one vector")
        return SentenceEmbedding(vectors[0])

    def describe(self) -> dict:
        return {"provider": self.name, "dimension": self.dimension, "url": self.url}


def make_provider(kind: str = "fallback", *, dimension: int | None = None, path: str | None = None,
                  url: str | None = None, timeout: float = 10.0, retries: int = 2) -> EmbeddingProvider:
    if kind == "fallback":
        return HashingProvider(dimension or DEFAULT_DIMENSION)
    if kind == "file":
        if not path:
            raise ValueError("file provider needs an embeddings path")
        return FileProvider.from_path(path, dimension)
    if kind == "remote":
        if not url:
            raise ValueError("remote provider needs a url")
        return HttpProvider(url, dimension, timeout=timeout, retries=retries)
    raise ValueError(f"unknown embedding provider {kind!r}")
