"""Layout data model and corpus serialization.

Documents are collections of segments (text regions) made of words, each
carrying an integer bounding box. Coordinates use the OCR image convention:
top-left origin, y growing downward, normalized to [0, 1000]. A document may
carry an ``isdr`` relation over its segments (immediate succession during
reading) and, for form corpora, a ``links`` relation (key -> value pairs).

The corpus file format is JSON-lines, one document per line. Acyclicity of
``isdr`` is enforced by the strict loader and reported by
:func:`validate_annotation`, not by the ``Document`` constructor, so that raw
model predictions (which may contain cycles) remain representable and
serializable for downstream validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .relations import Relation, is_acyclic, transitive_closure

COORD_MAX = 1000

SPLITS = ("train", "validation", "test")


class ValidationError(ValueError):
    """An invariant breach in layout data, naming the offending document."""


class CorpusParseError(ValueError):
    """Malformed corpus file; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


@dataclass(frozen=True)
class BBox:
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (0 <= self.x0 <= self.x1 <= COORD_MAX):
            raise ValidationError(f"bad x extent: {self.as_list()}")
        if not (0 <= self.y0 <= self.y1 <= COORD_MAX):
            raise ValidationError(f"bad y extent: {self.as_list()}")

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    def contains(self, other: "BBox") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def overlaps(self, other: "BBox") -> bool:
        return not (
            self.x1 <= other.x0
            or other.x1 <= self.x0
            or self.y1 <= other.y0
            or other.y1 <= self.y0
        )

    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class Word:
    text: str
    box: BBox

    def __post_init__(self):
        if not self.text:
            raise ValidationError("word text must be non-empty")


@dataclass(frozen=True)
class Segment:
    id: int
    words: tuple[Word, ...]
    box: BBox

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "words", tuple(self.words))
        if not self.words:
            raise ValidationError(f"segment {self.id} has no words")
        for w in self.words:
            if not self.box.contains(w.box):
                raise ValidationError(
                    f"segment {self.id} box does not contain word box {w.box.as_list()}"
                )


@dataclass(frozen=True)
class Document:
    id: str
    page_width: int
    page_height: int
    segments: tuple[Segment, ...]
    isdr: Optional[Relation] = None
    links: Optional[Relation] = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "page_width", int(self.page_width))
        object.__setattr__(self, "page_height", int(self.page_height))
        if self.page_width <= 0 or self.page_height <= 0:
            raise ValidationError(f"document {self.id}: non-positive page size")
        ids = [s.id for s in self.segments]
        if ids != list(range(len(ids))):
            raise ValidationError(
                f"document {self.id}: segment ids must be 0..{len(ids) - 1}, got {ids}"
            )
        for rel_name in ("isdr", "links"):
            rel = getattr(self, rel_name)
            if rel is not None and rel.element_count != len(self.segments):
                raise ValidationError(
                    f"document {self.id}: {rel_name} covers {rel.element_count} "
                    f"elements, document has {len(self.segments)} segments"
                )

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def n_words(self) -> int:
        return sum(len(s.words) for s in self.segments)

    def word_spans(self) -> list[tuple[int, int]]:
        """Global word-index range per segment, in segment-id order."""
        spans = []
        offset = 0
        for seg in self.segments:
            spans.append((offset, offset + len(seg.words)))
            offset += len(seg.words)
        return spans

    def all_words(self) -> list[Word]:
        return [w for seg in self.segments for w in seg.words]

    def word_segment_index(self) -> list[int]:
        """Owning segment id for each global word index."""
        return [seg.id for seg in self.segments for _ in seg.words]


@dataclass
class Corpus:
    documents: tuple[Document, ...]
    split: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.documents = tuple(self.documents)
        if not self.split:
            self.split = {d.id: "train" for d in self.documents}
        missing = [d.id for d in self.documents if d.id not in self.split]
        if missing:
            raise ValidationError(f"split missing documents: {missing}")
        bad = {v for v in self.split.values()} - set(SPLITS)
        if bad:
            raise ValidationError(f"unknown split names: {sorted(bad)}")

    def subset(self, split_name: str) -> list[Document]:
        return [d for d in self.documents if self.split[d.id] == split_name]

    def __len__(self) -> int:
        return len(self.documents)


# ---------------------------------------------------------------------------
# JSON (de)serialization


def document_to_dict(doc: Document, split: Optional[str] = None) -> dict:
    # Field order is part of the file format; do not reorder.
    out: dict = {
        "id": doc.id,
        "page": [doc.page_width, doc.page_height],
        "segments": [
            {
                "id": seg.id,
                "box": seg.box.as_list(),
                "words": [{"text": w.text, "box": w.box.as_list()} for w in seg.words],
            }
            for seg in doc.segments
        ],
        "isdr": [list(p) for p in doc.isdr.sorted_pairs()] if doc.isdr is not None else None,
    }
    if doc.links is not None:
        out["links"] = [list(p) for p in doc.links.sorted_pairs()]
    if split is not None:
        out["split"] = split
    return out


def document_from_dict(obj: dict, allow_cyclic: bool = False) -> Document:
    doc_id = str(obj.get("id", "<missing id>"))
    try:
        page = obj["page"]
        segments = []
        for raw_seg in obj["segments"]:
            words = tuple(
                Word(w["text"], BBox(*w["box"])) for w in raw_seg["words"]
            )
            segments.append(Segment(raw_seg["id"], words, BBox(*raw_seg["box"])))
        n = len(segments)
        isdr = None
        if obj.get("isdr") is not None:
            isdr = Relation.from_pairs(n, obj["isdr"])
        links = None
        if obj.get("links") is not None:
            links = Relation.from_pairs(n, obj["links"])
        doc = Document(doc_id, page[0], page[1], tuple(segments), isdr, links)
    except (KeyError, IndexError, TypeError) as exc:
        raise ValidationError(f"document {doc_id}: malformed field ({exc})") from exc
    except ValueError as exc:
        raise ValidationError(f"document {doc_id}: {exc}") from exc
    if not allow_cyclic and doc.isdr is not None:
        ok, violation = is_acyclic(doc.isdr)
        if not ok:
            raise ValidationError(
                f"document {doc_id}: cyclic isdr, witness {list(violation.witness)}"
            )
    return doc


def load_corpus(path, allow_cyclic: bool = False) -> Corpus:
    """Load a JSON-lines corpus, validating every invariant.

    Raises :class:`CorpusParseError` with the line number on malformed JSON
    and :class:`ValidationError` naming the document on invariant breaches.
    """
    documents = []
    split: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(lineno, str(exc)) from exc
            doc = document_from_dict(obj, allow_cyclic=allow_cyclic)
            documents.append(doc)
            split[doc.id] = obj.get("split", "train")
    return Corpus(tuple(documents), split)


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            obj = document_to_dict(doc, split=corpus.split[doc.id])
            fh.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# Label derivation and statistics


def derive_word_level(doc: Document) -> Relation:
    """Word-level succession derived from segment-level annotation.

    Inside each segment, consecutive words chain; for every segment pair
    (A, B) in the isdr, the last word of A links to the first word of B.
    Acyclicity is inherited from the segment relation.
    """
    if doc.isdr is None:
        raise ValidationError(f"document {doc.id}: missing isdr")
    ok, violation = is_acyclic(doc.isdr)
    if not ok:
        raise ValidationError(
            f"document {doc.id}: cyclic isdr, witness {list(violation.witness)}"
        )
    spans = doc.word_spans()
    pairs = set()
    for start, end in spans:
        pairs.update((k, k + 1) for k in range(start, end - 1))
    for a, b in doc.isdr.pairs:
        last_of_a = spans[a][1] - 1
        first_of_b = spans[b][0]
        pairs.add((last_of_a, first_of_b))
    return Relation(doc.n_words, frozenset(pairs))


@dataclass(frozen=True)
class DocumentNonlinearity:
    doc_id: str
    nonlinear: int
    total: int

    @property
    def fraction(self) -> float:
        return self.nonlinear / self.total if self.total else 0.0


@dataclass(frozen=True)
class NonlinearStats:
    fraction: Optional[float]  # None when the corpus has no segments
    per_document: tuple[DocumentNonlinearity, ...]


def nonlinear_stats(corpus: Corpus, literal: bool = False) -> NonlinearStats:
    """Fraction of segments involved in non-linear reading order.

    Default definition: a segment counts when its in-degree or out-degree in
    the isdr is at least 2 (it branches or joins). ``literal=True`` instead
    counts segments whose predecessor and successor both uniquely exist,
    which marks every interior element of a plain chain.
    """
    offenders = [d.id for d in corpus.documents if d.isdr is None]
    if offenders:
        raise ValidationError(f"documents missing isdr: {offenders}")
    per_doc = []
    nonlinear = 0
    total = 0
    for doc in corpus.documents:
        indeg = doc.isdr.in_degrees()
        outdeg = doc.isdr.out_degrees()
        if literal:
            count = sum(
                1 for i in range(doc.n_segments) if indeg[i] == 1 and outdeg[i] == 1
            )
        else:
            count = sum(
                1 for i in range(doc.n_segments) if indeg[i] >= 2 or outdeg[i] >= 2
            )
        per_doc.append(DocumentNonlinearity(doc.id, count, doc.n_segments))
        nonlinear += count
        total += doc.n_segments
    fraction = nonlinear / total if total else None
    return NonlinearStats(fraction, tuple(per_doc))


@dataclass(frozen=True)
class CorpusStats:
    documents: int
    segments: int
    words: int
    pairs: int
    nonlinear_fraction: Optional[float]


def corpus_stats(corpus: Corpus, literal_nonlinearity: bool = False) -> CorpusStats:
    n_pairs = sum(len(d.isdr.pairs) for d in corpus.documents if d.isdr is not None)
    if corpus.documents and all(d.isdr is not None for d in corpus.documents):
        fraction = nonlinear_stats(corpus, literal=literal_nonlinearity).fraction
    else:
        fraction = None
    return CorpusStats(
        documents=len(corpus.documents),
        segments=sum(d.n_segments for d in corpus.documents),
        words=sum(d.n_words for d in corpus.documents),
        pairs=n_pairs,
        nonlinear_fraction=fraction,
    )


# ---------------------------------------------------------------------------
# Annotation validation


@dataclass(frozen=True)
class AnnotationReport:
    doc_id: str
    cycle: Optional[tuple[int, ...]]  # witness, None when acyclic
    index_errors: tuple[tuple[int, int], ...]
    duplicate_pairs: tuple[tuple[int, int], ...]
    self_pairs: tuple[int, ...]
    schema_errors: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return (
            self.cycle is None
            and not self.index_errors
            and not self.duplicate_pairs
            and not self.self_pairs
            and not self.schema_errors
        )

    def to_dict(self) -> dict:
        return {
            "id": self.doc_id,
            "ok": self.ok,
            "cycle": list(self.cycle) if self.cycle else None,
            "index_errors": [list(p) for p in self.index_errors],
            "duplicate_pairs": [list(p) for p in self.duplicate_pairs],
            "self_pairs": list(self.self_pairs),
            "schema_errors": list(self.schema_errors),
        }


def validate_annotation(doc) -> AnnotationReport:
    """Report isdr problems in a document: cycles, ranges, duplicates, self-pairs.

    Accepts either a parsed :class:`Document` (duplicates are then impossible,
    set semantics) or a raw JSON dict, which additionally surfaces duplicate
    pairs and schema problems instead of raising.
    """
    if isinstance(doc, Document):
        doc_id = doc.id
        n = doc.n_segments
        raw_pairs = doc.isdr.sorted_pairs() if doc.isdr is not None else []
        schema_errors: list[str] = []
    else:
        doc_id = str(doc.get("id", "<missing id>"))
        schema_errors = []
        try:
            n = len(doc["segments"])
        except (KeyError, TypeError):
            n = 0
            schema_errors.append("missing or malformed 'segments'")
        raw = doc.get("isdr") or []
        raw_pairs = []
        for p in raw:
            try:
                raw_pairs.append((int(p[0]), int(p[1])))
            except (TypeError, ValueError, IndexError):
                schema_errors.append(f"malformed pair {p!r}")

    index_errors = tuple(
        (a, b) for a, b in raw_pairs if not (0 <= a < n and 0 <= b < n)
    )
    seen = set()
    duplicates = []
    for p in raw_pairs:
        if p in seen:
            duplicates.append(p)
        else:
            seen.add(p)
    self_pairs = tuple(sorted({a for a, b in seen if a == b}))
    in_range = [(a, b) for a, b in seen if 0 <= a < n and 0 <= b < n]
    ok, violation = is_acyclic(Relation.from_pairs(n, in_range))
    cycle = None if ok else violation.witness
    return AnnotationReport(
        doc_id=doc_id,
        cycle=cycle,
        index_errors=index_errors,
        duplicate_pairs=tuple(duplicates),
        self_pairs=self_pairs,
        schema_errors=tuple(schema_errors),
    )


def collapse_word_relation(doc: Document, word_rel: Relation) -> Relation:
    """Project a word-level relation back onto segments, dropping intra-segment pairs."""
    owner = doc.word_segment_index()
    pairs = set()
    for a, b in word_rel.pairs:
        sa, sb = owner[a], owner[b]
        if sa != sb:
            pairs.add((sa, sb))
    return Relation(doc.n_segments, frozenset(pairs))


def gsdr(doc: Document) -> Relation:
    """Generalized succession: transitive closure of the document's isdr."""
    if doc.isdr is None:
        raise ValidationError(f"document {doc.id}: missing isdr")
    return transitive_closure(doc.isdr)
