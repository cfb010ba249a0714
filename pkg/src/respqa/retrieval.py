"""Corpus ingestion, a persistent BM25 inverted index, and top-k retrieval.

The corpus is JSONL with keys ``id``, ``title``, ``contents`` (one document
per line). The index lives in a directory of JSON files tagged with a format
version, so a rebuilt or reopened index returns byte-identical rankings.

An alternative dense retriever (cosine over externally computed vectors) is
provided behind the same ``retrieve(query, k)`` surface.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Protocol

import requests

from .errors import CorpusError, RetrieverError

INDEX_FORMAT_TAG = "respqa-bm25"
INDEX_FORMAT_VERSION = 1

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

_MANIFEST_FILE = "manifest.json"
_DOCUMENTS_FILE = "documents.jsonl"
_POSTINGS_FILE = "postings.json"

_punct_cache: dict[str, bool] = {}


def is_punctuation_char(ch: str) -> bool:
    """True for characters in any Unicode punctuation category."""
    cached = _punct_cache.get(ch)
    if cached is None:
        cached = unicodedata.category(ch).startswith("P")
        _punct_cache[ch] = cached
    return cached


def strip_punctuation(text: str) -> str:
    """Remove all Unicode punctuation characters."""
    return "".join(ch for ch in text if not is_punctuation_char(ch))


def tokenize(text: str) -> list[str]:
    """Lowercased tokens: strip punctuation, then split on whitespace.

    Deterministic; shared by the index and the answer-overlap metric.
    Empty or punctuation-only input yields an empty list.
    """
    return strip_punctuation(text).lower().split()


@dataclass(frozen=True)
class Document:
    """A corpus unit: unique id, title, and plain-text passage."""

    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class RetrievedDocument:
    """A scored retrieval hit; ranks are 1-based and dense."""

    doc_id: str
    title: str
    text: str
    score: float
    rank: int

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "text": self.text,
            "score": self.score,
            "rank": self.rank,
        }


@dataclass(frozen=True)
class IndexStats:
    num_documents: int
    num_terms: int
    avg_doc_length: float


class Retriever(Protocol):
    """Anything that can serve ranked hits for a query string."""

    def retrieve(self, query: str, k: int) -> list[RetrievedDocument]: ...


def read_corpus(path: str | Path) -> Iterator[Document]:
    """Yield documents from a JSONL corpus file.

    Each line must be an object with non-empty string values for ``id``,
    ``title`` may be empty, and ``contents`` must be non-empty after
    trimming. Malformed lines raise CorpusError naming the line number.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict):
                raise CorpusError(f"{path}:{lineno}: expected an object")
            missing = [key for key in ("id", "title", "contents") if key not in row]
            if missing:
                raise CorpusError(f"{path}:{lineno}: missing key(s): {', '.join(missing)}")
            doc_id = row["id"]
            if not isinstance(doc_id, str) or not doc_id:
                raise CorpusError(f"{path}:{lineno}: 'id' must be a non-empty string")
            text = row["contents"]
            if not isinstance(text, str) or not text.strip():
                raise CorpusError(f"{path}:{lineno}: 'contents' must be non-empty")
            yield Document(doc_id=doc_id, title=str(row["title"]), text=text)


class BM25Index:
    """Inverted index with BM25 ranking (k1/b configurable, Lucene-style IDF).

    Immutable after build; concurrent retrieval is safe. Scores are always
    non-negative because the IDF uses log(1 + (N - df + 0.5) / (df + 0.5)).
    Ties are broken by ascending doc_id so rankings are deterministic.
    """

    def __init__(
        self,
        documents: list[Document],
        postings: dict[str, list[tuple[int, int]]],
        doc_lengths: list[int],
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
    ) -> None:
        self._documents = documents
        self._postings = postings
        self._doc_lengths = doc_lengths
        total = sum(doc_lengths)
        self._avgdl = total / len(documents) if documents else 0.0
        self.k1 = k1
        self.b = b

    @property
    def stats(self) -> IndexStats:
        return IndexStats(
            num_documents=len(self._documents),
            num_terms=len(self._postings),
            avg_doc_length=self._avgdl,
        )

    @property
    def documents(self) -> list[Document]:
        return list(self._documents)

    @classmethod
    def build(
        cls,
        documents: Iterable[Document],
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
    ) -> "BM25Index":
        """Build an in-memory index from a document stream.

        Raises CorpusError for duplicate doc_ids, empty passages, or an
        empty stream.
        """
        docs: list[Document] = []
        seen_ids: set[str] = set()
        postings: dict[str, list[tuple[int, int]]] = {}
        lengths: list[int] = []
        for doc in documents:
            if doc.doc_id in seen_ids:
                raise CorpusError(f"duplicate doc_id in corpus: {doc.doc_id!r}")
            if not doc.text.strip():
                raise CorpusError(f"document {doc.doc_id!r} has empty text")
            seen_ids.add(doc.doc_id)
            idx = len(docs)
            docs.append(doc)
            tokens = tokenize(doc.text)
            lengths.append(len(tokens))
            for term, tf in Counter(tokens).items():
                postings.setdefault(term, []).append((idx, tf))
        if not docs:
            raise CorpusError("corpus is empty: at least one document is required")
        return cls(docs, postings, lengths, k1=k1, b=b)

    def _idf(self, term: str) -> float:
        df = len(self._postings[term])
        n = len(self._documents)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def retrieve(self, query: str, k: int) -> list[RetrievedDocument]:
        """Top-k documents by BM25 score over the tokenized query.

        Query term repetitions contribute once per occurrence. Only documents
        with nonzero score are returned, so the result may be shorter than k.
        A query that tokenizes to nothing yields an empty list.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        terms = tokenize(query)
        if not terms:
            return []
        avgdl = self._avgdl or 1.0
        scores: dict[int, float] = {}
        for term in terms:
            posting = self._postings.get(term)
            if not posting:
                continue
            idf = self._idf(term)
            for idx, tf in posting:
                norm = 1.0 - self.b + self.b * self._doc_lengths[idx] / avgdl
                gain = idf * (tf * (self.k1 + 1.0)) / (tf + self.k1 * norm)
                scores[idx] = scores.get(idx, 0.0) + gain
        ranked = sorted(
            scores.items(), key=lambda item: (-item[1], self._documents[item[0]].doc_id)
        )
        hits = []
        for rank, (idx, score) in enumerate(ranked[:k], start=1):
            if score <= 0.0:
                break
            doc = self._documents[idx]
            hits.append(
                RetrievedDocument(
                    doc_id=doc.doc_id, title=doc.title, text=doc.text, score=score, rank=rank
                )
            )
        return hits

    def save(self, index_dir: str | Path) -> None:
        """Persist to a directory (manifest + documents + postings)."""
        index_dir = Path(index_dir)
        index_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "format_tag": INDEX_FORMAT_TAG,
            "format_version": INDEX_FORMAT_VERSION,
            "num_documents": len(self._documents),
            "num_terms": len(self._postings),
            "avg_doc_length": self._avgdl,
        }
        (index_dir / _MANIFEST_FILE).write_text(
            json.dumps(manifest, indent=2), encoding="utf-8"
        )
        with (index_dir / _DOCUMENTS_FILE).open("w", encoding="utf-8") as handle:
            for doc, length in zip(self._documents, self._doc_lengths):
                handle.write(
                    json.dumps(
                        {
                            "id": doc.doc_id,
                            "title": doc.title,
                            "contents": doc.text,
                            "length": length,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        with (index_dir / _POSTINGS_FILE).open("w", encoding="utf-8") as handle:
            json.dump(
                {term: [[idx, tf] for idx, tf in posting] for term, posting in self._postings.items()},
                handle,
                ensure_ascii=False,
            )

    @classmethod
    def open(
        cls,
        index_dir: str | Path,
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
    ) -> "BM25Index":
        """Open a persisted index; validates the format tag and version."""
        index_dir = Path(index_dir)
        manifest_path = index_dir / _MANIFEST_FILE
        if not manifest_path.exists():
            raise CorpusError(f"not an index directory (no manifest): {index_dir}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if manifest.get("format_tag") != INDEX_FORMAT_TAG:
            raise CorpusError(f"unrecognized index format tag: {manifest.get('format_tag')!r}")
        if manifest.get("format_version") != INDEX_FORMAT_VERSION:
            raise CorpusError(
                f"unsupported index format version: {manifest.get('format_version')!r}"
            )
        documents: list[Document] = []
        lengths: list[int] = []
        with (index_dir / _DOCUMENTS_FILE).open("r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                row = json.loads(line)
                documents.append(
                    Document(doc_id=row["id"], title=row["title"], text=row["contents"])
                )
                lengths.append(int(row["length"]))
        with (index_dir / _POSTINGS_FILE).open("r", encoding="utf-8") as handle:
            raw = json.load(handle)
        postings = {term: [(int(i), int(tf)) for i, tf in posting] for term, posting in raw.items()}
        return cls(documents, postings, lengths, k1=k1, b=b)


def build_index(
    documents: Iterable[Document],
    index_dir: str | Path | None = None,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> tuple[BM25Index, IndexStats]:
    """Build (and optionally persist) an index; returns it with its stats."""
    index = BM25Index.build(documents, k1=k1, b=b)
    if index_dir is not None:
        index.save(index_dir)
    return index, index.stats


class EmbeddingEndpointClient:
    """Minimal client for an external embeddings endpoint.

    POSTs ``{"model": ..., "input": [text]}`` and expects the de-facto
    ``{"data": [{"embedding": [...]}]}`` response shape.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ) -> None:
        endpoint = endpoint.rstrip("/")
        if not endpoint.endswith("/embeddings"):
            endpoint = endpoint + "/embeddings"
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._session = session or requests.Session()

    def __call__(self, text: str) -> list[float]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._session.post(
                self.endpoint,
                json={"model": self.model, "input": [text]},
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            payload = response.json()
            return [float(x) for x in payload["data"][0]["embedding"]]
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise RetrieverError(f"embedding endpoint failed: {exc}") from exc


def load_vectors(path: str | Path) -> dict[str, list[float]]:
    """Load per-document vectors from JSONL rows {"id": ..., "vector": [...]}."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"vectors file not found: {path}")
    vectors: dict[str, list[float]] = {}
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                vectors[row["id"]] = [float(x) for x in row["vector"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: invalid vector row ({exc})") from exc
    return vectors


class EmbeddingRetriever:
    """Exact cosine-similarity retrieval over precomputed document vectors.

    The pluggable dense alternative to BM25: query vectors come from an
    external embedding callable, document vectors are supplied up front.
    Cosine scores are clamped at zero to keep hit scores non-negative.
    """

    def __init__(
        self,
        documents: list[Document],
        vectors: dict[str, list[float]],
        embed: Callable[[str], list[float]],
    ) -> None:
        missing = [doc.doc_id for doc in documents if doc.doc_id not in vectors]
        if missing:
            raise CorpusError(f"missing vectors for document(s): {', '.join(missing[:5])}")
        self._documents = list(documents)
        self._units = {doc.doc_id: _unit(vectors[doc.doc_id]) for doc in documents}
        self._embed = embed

    def retrieve(self, query: str, k: int) -> list[RetrievedDocument]:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        query_unit = _unit(self._embed(query))
        scored = []
        for doc in self._documents:
            cos = sum(a * b for a, b in zip(query_unit, self._units[doc.doc_id]))
            scored.append((max(cos, 0.0), doc))
        scored.sort(key=lambda item: (-item[0], item[1].doc_id))
        hits = []
        for rank, (score, doc) in enumerate(scored[:k], start=1):
            if score <= 0.0:
                break
            hits.append(
                RetrievedDocument(
                    doc_id=doc.doc_id, title=doc.title, text=doc.text, score=score, rank=rank
                )
            )
        return hits


def _unit(vector: list[float]) -> list[float]:
    norm = math.sqrt(sum(x * x for x in vector))
    if norm == 0.0:
        return [0.0] * len(vector)
    return [x / norm for x in vector]
