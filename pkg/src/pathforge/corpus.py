"""Corpora: knowledge components, documents, prerequisite structure.

A corpus is a set of knowledge components (KCs) with values, a DAG of
prerequisite edges over them, and documents that each teach a set of KCs
and carry a bag of keywords. Keywords are stored as indices into a
per-corpus vocabulary that pairs each token with its embedding vector, so
a saved corpus is self-contained.

Two families ship with the package: sequential chain corpora (KC i is the
sole prerequisite of KC i+1, document i teaches exactly KC i) used for
pre-training, and a grid corpus for adaptive sessions: `rows` tiers of
`columns` topics plus one background KC. In the grid, tier-2 and tier-3
KCs form left-to-right chains, the background KC gates every tier-3 KC,
and each column has two documents: a general one teaching tiers 1 and 2,
and a specialised one teaching tiers 2 and 3. Vertical (tier i -> tier
i+1) pairs within a column are the candidate taste edges that individual
students may or may not have.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingStore


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class KnowledgeComponent:
    id: int
    label: str
    value: float = 1.0
    background: bool = False


@dataclass(frozen=True)
class Document:
    id: int
    teaches: frozenset[int]
    keywords: tuple[int, ...]  # indices into the corpus keyword vocabulary


@dataclass(eq=False)
class Corpus:
    """Immutable after construction; derived arrays are built eagerly."""

    kcs: tuple[KnowledgeComponent, ...]
    docs: tuple[Document, ...]
    prereq_edges: frozenset[tuple[int, int]]
    keyword_tokens: tuple[str, ...]
    keyword_vectors: np.ndarray  # (n_tokens, dim)
    kind: str = "sequential"
    pref_candidates: frozenset[tuple[int, int]] = frozenset()
    name: str = "corpus"

    def __post_init__(self):
        self.n_kcs = len(self.kcs)
        self.n_docs = len(self.docs)
        self.kc_values = np.array([k.value for k in self.kcs], dtype=np.float64)
        self.background_ids = frozenset(k.id for k in self.kcs if k.background)
        preds: list[list[int]] = [[] for _ in range(self.n_kcs)]
        for a, b in sorted(self.prereq_edges):
            if 0 <= a < self.n_kcs and 0 <= b < self.n_kcs:
                preds[b].append(a)  # out-of-range edges are validation findings
        self.prereq_preds: tuple[tuple[int, ...], ...] = tuple(
            tuple(p) for p in preds
        )
        self.doc_teaches: tuple[tuple[int, ...], ...] = tuple(
            tuple(sorted(d.teaches)) for d in self.docs
        )
        # Bipartite doc<->keyword edge list, one pair per (doc, keyword).
        doc_side: list[int] = []
        kw_side: list[int] = []
        for d in self.docs:
            for kw in d.keywords:
                doc_side.append(d.id)
                kw_side.append(kw)
        self.edge_doc = np.asarray(doc_side, dtype=np.intp)
        self.edge_kw = np.asarray(kw_side, dtype=np.intp)
        n_tokens = self.keyword_vectors.shape[0]
        feats = np.zeros((self.n_docs, self.keyword_vectors.shape[1]))
        for d in self.docs:
            kws = [k for k in d.keywords if 0 <= k < n_tokens]
            if kws:
                feats[d.id] = self.keyword_vectors[kws].mean(axis=0)
        self.doc_features = feats


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_corpus(corpus: Corpus) -> ValidationReport:
    rep = ValidationReport()
    n = corpus.n_kcs
    ids = [k.id for k in corpus.kcs]
    if ids != list(range(n)):
        rep.violations.append("KC ids are not dense 0..n-1 in order")
    if [d.id for d in corpus.docs] != list(range(corpus.n_docs)):
        rep.violations.append("document ids are not dense 0..n-1 in order")
    for k in corpus.kcs:
        if k.value < 0:
            rep.violations.append(f"KC {k.id} has negative value")
    for a, b in corpus.prereq_edges | corpus.pref_candidates:
        if not (0 <= a < n and 0 <= b < n):
            rep.violations.append(f"edge ({a}, {b}) references unknown KC")
    for d in corpus.docs:
        if not d.teaches:
            rep.violations.append(f"document {d.id} teaches nothing")
        if not d.keywords:
            rep.violations.append(f"document {d.id} has no keywords")
        for k in d.teaches:
            if not 0 <= k < n:
                rep.violations.append(f"document {d.id} teaches unknown KC {k}")
        for kw in d.keywords:
            if not 0 <= kw < len(corpus.keyword_tokens):
                rep.violations.append(f"document {d.id} uses unknown keyword id {kw}")
    # Cycle check over prerequisite edges (Kahn).
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in corpus.prereq_edges:
        if 0 <= a < n and 0 <= b < n:
            indeg[b] += 1
            succ[a].append(b)
    queue = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for nxt in succ[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                queue.append(nxt)
    if seen != n:
        rep.violations.append("prerequisite edges contain a cycle")
    if corpus.kind == "sequential":
        expected = frozenset((i, i + 1) for i in range(n - 1))
        if corpus.prereq_edges != expected:
            rep.violations.append("sequential corpus is not a single chain")
        for d in corpus.docs:
            if d.teaches != frozenset({d.id}):
                rep.violations.append(
                    f"sequential document {d.id} does not teach exactly KC {d.id}"
                )
    return rep


# ---------------------------------------------------------------------------
# construction


def _build_vocab(
    keyword_lists: Sequence[Sequence[str]], store: EmbeddingStore
) -> tuple[tuple[str, ...], np.ndarray, list[tuple[int, ...]]]:
    token_ids: dict[str, int] = {}
    doc_kw_ids: list[tuple[int, ...]] = []
    for tokens in keyword_lists:
        ids = []
        for tok in tokens:
            if tok not in token_ids:
                if tok not in store:
                    raise CorpusError(f"keyword {tok!r} has no embedding")
                token_ids[tok] = len(token_ids)
            ids.append(token_ids[tok])
        doc_kw_ids.append(tuple(ids))
    tokens = tuple(token_ids)
    vectors = np.array([store.lookup(t) for t in tokens]) if tokens else np.zeros((0, store.dim))
    return tokens, vectors, doc_kw_ids


def build_sequential_corpus(
    keyword_lists: Sequence[Sequence[str]],
    store: EmbeddingStore,
    name: str = "chain",
) -> Corpus:
    """Chain of len(keyword_lists) KCs; document i teaches exactly KC i."""
    n = len(keyword_lists)
    tokens, vectors, doc_kw = _build_vocab(keyword_lists, store)
    return Corpus(
        kcs=tuple(KnowledgeComponent(i, f"kc{i}") for i in range(n)),
        docs=tuple(
            Document(i, frozenset({i}), doc_kw[i]) for i in range(n)
        ),
        prereq_edges=frozenset((i, i + 1) for i in range(n - 1)),
        keyword_tokens=tokens,
        keyword_vectors=vectors,
        kind="sequential",
        name=name,
    )


def grid_kc_id(row: int, col: int, columns: int = 11) -> int:
    """KC id for 1-based (row, col); the background KC is id 0."""
    return 1 + (row - 1) * columns + (col - 1)


def grid_doc_id(col: int, specialised: bool) -> int:
    """Document id for 1-based column; general doc first, specialised second."""
    return 2 * (col - 1) + (1 if specialised else 0)


def token_pool(pool_size: int = 240) -> list[str]:
    """Shared keyword universe. Both the sequential chains and the grid draw
    their keywords from this pool: the grid's documents are new, but their
    keywords are ones the chains already use, which is what lets a model
    pre-trained on chains carry anything over to the grid."""
    return [f"w{i:03d}" for i in range(pool_size)]


def default_grid_keywords(columns: int = 11) -> dict[int, list[str]]:
    """Each angle forms its own band of the shared token pool, walked left to
    right two tokens per column with four tokens per document, so consecutive
    same-angle documents overlap by half just like adjacent documents of a
    sequential course. The general band sits at the front of the pool (entry
    vocabulary); the specialised band follows it (deeper vocabulary, matching
    the deeper material those documents teach)."""
    pool = token_pool()
    out: dict[int, list[str]] = {}
    special_base = 2 * columns + 2
    for j in range(1, columns + 1):
        out[grid_doc_id(j, False)] = pool[2 * (j - 1) : 2 * (j - 1) + 4]
        start = special_base + 2 * (j - 1)
        out[grid_doc_id(j, True)] = pool[start : start + 4]
    return out


def build_grid_corpus(
    store: EmbeddingStore,
    columns: int = 11,
    rows: int = 3,
    keyword_assignment: Mapping[int, Sequence[str]] | None = None,
    name: str = "grid",
) -> Corpus:
    if rows != 3:
        raise CorpusError("grid corpus is defined for exactly 3 tiers")
    kcs = [KnowledgeComponent(0, "background", value=0.0, background=True)]
    for row in range(1, rows + 1):
        for col in range(1, columns + 1):
            kcs.append(
                KnowledgeComponent(
                    grid_kc_id(row, col, columns), f"k{row}_{col}", value=float(row)
                )
            )

    edges: set[tuple[int, int]] = set()
    for row in (2, 3):
        for col in range(1, columns):
            edges.add((grid_kc_id(row, col, columns), grid_kc_id(row, col + 1, columns)))
    for col in range(1, columns + 1):
        edges.add((0, grid_kc_id(3, col, columns)))

    prefs: set[tuple[int, int]] = set()
    for row in (1, 2):
        for col in range(1, columns + 1):
            prefs.add((grid_kc_id(row, col, columns), grid_kc_id(row + 1, col, columns)))

    if keyword_assignment is None:
        keyword_assignment = default_grid_keywords(columns)
    docs_teach: list[frozenset[int]] = []
    kw_lists: list[Sequence[str]] = []
    for col in range(1, columns + 1):
        for specialised in (False, True):
            doc_id = grid_doc_id(col, specialised)
            if specialised:
                teaches = frozenset({grid_kc_id(3, col, columns), grid_kc_id(2, col, columns)})
            else:
                teaches = frozenset({grid_kc_id(1, col, columns), grid_kc_id(2, col, columns)})
            docs_teach.append(teaches)
            try:
                kw_lists.append(list(keyword_assignment[doc_id]))
            except KeyError:
                raise CorpusError(f"no keywords assigned to document {doc_id}") from None
    tokens, vectors, doc_kw = _build_vocab(kw_lists, store)

    return Corpus(
        kcs=tuple(kcs),
        docs=tuple(
            Document(i, docs_teach[i], doc_kw[i]) for i in range(len(docs_teach))
        ),
        prereq_edges=frozenset(edges),
        keyword_tokens=tokens,
        keyword_vectors=vectors,
        kind="graph",
        pref_candidates=frozenset(prefs),
        name=name,
    )


def synthetic_chain_corpora(
    store: EmbeddingStore,
    rng: np.random.Generator,
    lengths: Sequence[int] = (6, 7, 8, 8, 9, 10, 10, 11, 12, 12, 13, 14, 15, 16),
    pool_size: int = 240,
) -> list[Corpus]:
    """Chain corpora with locally overlapping keyword bags.

    Tokens come from a shared pool; each corpus walks a window along the
    pool so adjacent documents share at least one keyword, which is the
    structure the graph layers are meant to pick up on.
    """
    pool = token_pool(pool_size)
    corpora = []
    for c_idx, n in enumerate(lengths):
        # Related courses open on shared foundational vocabulary and branch
        # toward their own material: every walk starts in the same low-index
        # band, so early documents look alike across corpora and position in
        # the pool correlates with depth into the course.
        pos = int(rng.integers(0, 6))
        kw_lists: list[list[str]] = []
        prev: list[str] = []
        for _ in range(n):
            window = [pool[(pos + k) % pool_size] for k in range(12)]
            n_kw = int(rng.integers(3, 9))
            chosen: list[str] = []
            if prev:
                chosen.append(prev[int(rng.integers(0, len(prev)))])
            fresh = [t for t in window if t not in chosen]
            picks = rng.choice(len(fresh), size=min(n_kw - len(chosen), len(fresh)), replace=False)
            chosen.extend(fresh[i] for i in sorted(picks))
            kw_lists.append(chosen)
            prev = chosen
            pos = (pos + int(rng.integers(1, 4))) % pool_size
        corpora.append(build_sequential_corpus(kw_lists, store, name=f"chain{c_idx:02d}"))
    return corpora


# ---------------------------------------------------------------------------
# serialization


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    payload = {
        "kind": corpus.kind,
        "name": corpus.name,
        "kcs": [
            {
                "id": k.id,
                "label": k.label,
                "value": k.value,
                **({"background": True} if k.background else {}),
            }
            for k in corpus.kcs
        ],
        "docs": [
            {
                "id": d.id,
                "teaches": sorted(d.teaches),
                "keywords": [corpus.keyword_tokens[i] for i in d.keywords],
            }
            for d in corpus.docs
        ],
        "prereq_edges": sorted(map(list, corpus.prereq_edges)),
        "pref_candidates": sorted(map(list, corpus.pref_candidates)),
        "keyword_vocab": [
            {"token": tok, "vector": list(corpus.keyword_vectors[i])}
            for i, tok in enumerate(corpus.keyword_tokens)
        ],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_corpus(path: str | Path, store: EmbeddingStore | None = None) -> Corpus:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: {exc}") from None

    vocab_store: EmbeddingStore | None = None
    if payload.get("keyword_vocab"):
        entries = payload["keyword_vocab"]
        dim = len(entries[0]["vector"])
        vocab_store = EmbeddingStore(
            dim, {e["token"]: np.array(e["vector"]) for e in entries}
        )
    lookup = vocab_store or store
    if lookup is None:
        raise CorpusError(f"{path}: no keyword_vocab and no embedding store given")

    kw_lists = [d["keywords"] for d in payload["docs"]]
    tokens, vectors, doc_kw = _build_vocab(kw_lists, lookup)
    corpus = Corpus(
        kcs=tuple(
            KnowledgeComponent(
                k["id"], k["label"], float(k.get("value", 1.0)), bool(k.get("background", False))
            )
            for k in payload["kcs"]
        ),
        docs=tuple(
            Document(d["id"], frozenset(d["teaches"]), doc_kw[i])
            for i, d in enumerate(payload["docs"])
        ),
        prereq_edges=frozenset(tuple(e) for e in payload["prereq_edges"]),
        keyword_tokens=tokens,
        keyword_vectors=vectors,
        kind=payload.get("kind", "sequential"),
        pref_candidates=frozenset(tuple(e) for e in payload.get("pref_candidates", [])),
        name=payload.get("name", Path(path).stem),
    )
    report = validate_corpus(corpus)
    if not report.ok:
        raise CorpusError(f"{path}: " + "; ".join(report.violations))
    return corpus


def structurally_equal(a: Corpus, b: Corpus) -> bool:
    return (
        a.kcs == b.kcs
        and a.kind == b.kind
        and a.prereq_edges == b.prereq_edges
        and a.pref_candidates == b.pref_candidates
        and [(d.id, d.teaches) for d in a.docs] == [(d.id, d.teaches) for d in b.docs]
        and [
            tuple(a.keyword_tokens[i] for i in d.keywords) for d in a.docs
        ]
        == [tuple(b.keyword_tokens[i] for i in d.keywords) for d in b.docs]
        and np.allclose(
            a.doc_features, b.doc_features, rtol=0, atol=1e-12
        )
    )
