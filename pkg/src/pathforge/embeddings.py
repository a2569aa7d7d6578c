"""Keyword embedding stores.

The on-disk format is one entry per line: the token, then the vector
components, whitespace-separated. Lookups of unknown tokens raise; a
missing embedding is a corpus-ingestion bug, not a zero vector.

SyntheticStore stands in for a real pretrained table when none is on
disk. Every token maps to a unit-norm Gaussian vector seeded from a
stable digest of the token itself, so the same token always gets the
same vector, in any process, with no global state.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


class EmbeddingError(ValueError):
    pass


class EmbeddingStore:
    def __init__(self, dim: int, vectors: dict[str, np.ndarray] | None = None):
        self.dim = int(dim)
        self._vectors: dict[str, np.ndarray] = {}
        if vectors:
            for token, vec in vectors.items():
                self.add(token, vec)

    def add(self, token: str, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise EmbeddingError(
                f"vector for {token!r} has shape {vec.shape}, expected ({self.dim},)"
            )
        self._vectors[token] = vec

    def lookup(self, token: str) -> np.ndarray:
        try:
            return self._vectors[token]
        except KeyError:
            raise EmbeddingError(f"no embedding for keyword {token!r}") from None

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def tokens(self) -> list[str]:
        return sorted(self._vectors)


class SyntheticStore(EmbeddingStore):
    """Deterministic pseudo-embeddings; knows every token by construction."""

    def __init__(self, dim: int = 100):
        super().__init__(dim)

    def lookup(self, token: str) -> np.ndarray:
        vec = self._vectors.get(token)
        if vec is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._vectors[token] = vec
        return vec

    def __contains__(self, token: str) -> bool:
        return True


def load_embeddings(path: str | Path, dim: int | None = None) -> EmbeddingStore:
    store: EmbeddingStore | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            # Tolerate a "count dim" header, a common convention in w2v dumps.
            if lineno == 1 and len(fields) == 2:
                try:
                    int(fields[0]), int(fields[1])
                    continue
                except ValueError:
                    pass
            token = fields[0]
            try:
                vec = np.array([float(x) for x in fields[1:]])
            except ValueError as exc:
                raise EmbeddingError(f"{path}:{lineno}: {exc}") from None
            if store is None:
                store = EmbeddingStore(dim if dim is not None else vec.size)
            if vec.size != store.dim:
                raise EmbeddingError(
                    f"{path}:{lineno}: vector has {vec.size} components, expected {store.dim}"
                )
            store.add(token, vec)
    if store is None:
        raise EmbeddingError(f"{path}: no embeddings found")
    return store


def save_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token in store.tokens():
            vec = store.lookup(token)
            fh.write(token + " " + " ".join(repr(float(x)) for x in vec) + "\n")
