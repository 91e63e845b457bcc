"""Email embeddings: JSONL-backed tables, cosine similarity, and a provider
client that caches fetched vectors for offline-reproducible runs."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


class EmbeddingError(Exception):
    pass


class DimensionMismatch(EmbeddingError):
    pass


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """(a . b) / (|a| |b|); requires equal dims and non-zero vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dims {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine similarity undefined for zero vectors")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def similarity_01(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity clamped into [0, 1] (negatives floor at 0)."""
    return max(0.0, cosine_similarity(a, b))


@dataclass
class EmbeddingTable:
    """Immutable-after-load mapping email_id -> vector, one dim per table."""

    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    dim: Optional[int] = None
    provenance: str = "file"

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, email_id: str) -> bool:
        return email_id in self.vectors

    def get(self, email_id: str) -> np.ndarray:
        try:
            return self.vectors[email_id]
        except KeyError:
            raise EmbeddingError(f"no embedding for email id {email_id!r}") from None

    def add(self, email_id: str, vector) -> None:
        vec = np.asarray(vector, dtype=float)
        if vec.ndim != 1 or vec.size == 0:
            raise EmbeddingError(f"embedding for {email_id!r} must be a flat vector")
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError(f"non-finite values in embedding {email_id!r}")
        if np.linalg.norm(vec) == 0.0:
            raise EmbeddingError(f"zero-norm embedding for {email_id!r}")
        if email_id in self.vectors:
            raise EmbeddingError(f"duplicate embedding id {email_id!r}")
        if self.dim is None:
            self.dim = vec.size
        elif vec.size != self.dim:
            raise DimensionMismatch(
                f"embedding {email_id!r} has dim {vec.size}, table has dim {self.dim}"
            )
        self.vectors[email_id] = vec

    def similarity(self, id_a: str, id_b: str) -> float:
        return similarity_01(self.get(id_a), self.get(id_b))

    def validate_ids(self, ids: Iterable[str]) -> None:
        missing = [i for i in ids if i not in self.vectors]
        if missing:
            raise EmbeddingError(f"missing embeddings for ids: {missing[:5]}")


class EmbeddingSimilarity:
    """Attribute-similarity callable over email ids, backed by a table.

    Precomputes the normalized matrix so pairwise similarities are cached
    lookups; this is the hot path of both simulation and selection.
    """

    def __init__(self, table: EmbeddingTable):
        self.table = table
        ids = sorted(table.vectors)
        self.index = {e: i for i, e in enumerate(ids)}
        self.ids = ids
        if ids:
            mat = np.stack([table.vectors[e] for e in ids])
            mat = mat / np.linalg.norm(mat, axis=1, keepdims=True)
            self.matrix = np.clip(mat @ mat.T, 0.0, 1.0)
        else:
            self.matrix = np.zeros((0, 0))

    def __call__(self, id_a: str, id_b: str) -> float:
        return float(self.matrix[self.index[id_a], self.index[id_b]])

    def row(self, email_id: str, other_ids: Sequence[str]) -> np.ndarray:
        """Similarities of one email against many, as a vector."""
        r = self.matrix[self.index[email_id]]
        return r[[self.index[o] for o in other_ids]]


def load_embeddings(path) -> EmbeddingTable:
    """Load a JSONL file of {"id": ..., "vector": [...]} records."""
    table = EmbeddingTable(provenance="file")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise EmbeddingError(f"{path}:{lineno}: malformed JSON: {e}") from e
            if "id" not in rec or "vector" not in rec:
                raise EmbeddingError(f"{path}:{lineno}: record needs 'id' and 'vector'")
            try:
                table.add(rec["id"], rec["vector"])
            except EmbeddingError as e:
                raise EmbeddingError(f"{path}:{lineno}: {e}") from e
    return table


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Write JSONL atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for email_id in sorted(table.vectors):
            fh.write(
                json.dumps({"id": email_id, "vector": table.vectors[email_id].tolist()})
                + "\n"
            )
    os.replace(tmp, path)


@dataclass
class ProviderConfig:
    """Embedding-provider endpoint settings; read from env when not given."""

    url: str = ""
    token: str = ""
    model: str = ""
    max_retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 30.0

    @classmethod
    def from_env(cls, prefix: str = "PHISHTRAIN_EMBED_") -> "ProviderConfig":
        return cls(
            url=os.environ.get(prefix + "URL", ""),
            token=os.environ.get(prefix + "TOKEN", ""),
            model=os.environ.get(prefix + "MODEL", ""),
        )


def fetch_embeddings(
    config: ProviderConfig,
    texts: Sequence[tuple[str, str]],
    cache_path,
    sleep=time.sleep,
) -> EmbeddingTable:
    """Embed (id, text) pairs via the provider, serving repeats from cache.

    The cache file is the JSONL format of :func:`load_embeddings`; it is
    rewritten atomically only after all fetches succeed, so a transient
    provider failure never corrupts it.
    """
    import httpx

    cache_path = Path(cache_path)
    table = load_embeddings(cache_path) if cache_path.exists() else EmbeddingTable()
    pending = [(i, txt) for i, txt in texts if i not in table]
    if not pending:
        out = EmbeddingTable(provenance="file")
        for i, _ in texts:
            out.add(i, table.get(i))
        return out

    if not config.url:
        raise EmbeddingError("no provider URL configured")

    headers = {"Authorization": f"Bearer {config.token}"} if config.token else {}
    payload = {"input": [txt for _, txt in pending]}
    if config.model:
        payload["model"] = config.model

    last_error: Optional[Exception] = None
    for attempt in range(config.max_retries):
        try:
            resp = httpx.post(
                config.url, json=payload, headers=headers, timeout=config.timeout_s
            )
            if resp.status_code in (429, 500, 502, 503, 504):
                last_error = EmbeddingError(f"provider returned {resp.status_code}")
                sleep(config.backoff_s * 2**attempt)
                continue
            if resp.status_code == 401 or resp.status_code == 403:
                raise EmbeddingError(f"provider auth failure ({resp.status_code})")
            resp.raise_for_status()
            vectors = _extract_vectors(resp.json())
            break
        except httpx.TransportError as e:
            last_error = e
            sleep(config.backoff_s * 2**attempt)
    else:
        raise EmbeddingError(f"provider failed after {config.max_retries} attempts: {last_error}")

    if len(vectors) != len(pending):
        raise EmbeddingError(
            f"provider returned {len(vectors)} vectors for {len(pending)} texts"
        )
    for (email_id, _), vec in zip(pending, vectors):
        table.add(email_id, vec)
    save_embeddings(table, cache_path)

    out = EmbeddingTable(provenance="provider")
    for i, _ in texts:
        out.add(i, table.get(i))
    return out


def _extract_vectors(body) -> list:
    # accept either {"data": [{"embedding": [...]}, ...]} or {"vectors": [[...], ...]}
    if isinstance(body, dict):
        if "vectors" in body:
            return body["vectors"]
        if "data" in body:
            return [item["embedding"] for item in body["data"]]
    raise EmbeddingError("unrecognized provider response shape")


def embedding_text(subject: str, body_plain: str) -> str:
    """Canonical text that gets embedded for an email."""
    return subject + "\n" + body_plain
