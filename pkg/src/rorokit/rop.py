"""Reading-order prediction with a global pair-scoring head.

The encoder turns (token, box) pairs into contextual states, mean pooling
maps token states onto task elements (segments or words), and a pointer-style
head scores every ordered element pair in one shot. Training minimizes a
ranking loss that pushes non-successor scores below zero and successor scores
above zero, so decoding is a per-pair sign test rather than a sequence search.
Everything is float64 and single-threaded: the same corpus, config, and seed
always produce the same parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .autodiff import AutodiffError, Tensor, as_tensor
from .layout import (
    BBox,
    Corpus,
    Document,
    collapse_word_relation,
    derive_word_level,
)
from .metrics import corpus_f1
from .nn import (
    EncoderConfig,
    ParameterStore,
    encoder_forward,
    init_encoder_params,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)
from .relations import Relation, is_acyclic

TASK_LEVELS = ("segment", "word")

# Default element budgets per task level, used when max_elements is 0.
DEFAULT_MAX_ELEMENTS = {"segment": 256, "word": 512}


@dataclass(frozen=True)
class ROPConfig:
    """Task framing plus optimization knobs for the pair-scoring predictor."""

    task_level: str = "segment"
    bbox_level: str = "segment"
    max_elements: int = 0  # 0 means the per-level default
    max_tokens: int = 2048
    threshold: float = 0.0
    head_dim: int = 128
    learning_rate: float = 1e-3
    epochs: int = 200
    patience: int = 20
    batch_size: int = 20
    val_fraction: float = 0.1
    include_diagonal_negatives: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.task_level not in TASK_LEVELS:
            raise ValueError(f"unknown task_level {self.task_level!r}")
        if self.bbox_level not in TASK_LEVELS:
            raise ValueError(f"unknown bbox_level {self.bbox_level!r}")
        if self.max_elements < 0 or self.max_tokens < 1:
            raise ValueError("element and token budgets must be positive")
        if self.head_dim < 1:
            raise ValueError("head_dim must be positive")
        if self.epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("epochs, patience, and batch_size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")

    @property
    def effective_max_elements(self) -> int:
        if self.max_elements > 0:
            return self.max_elements
        return DEFAULT_MAX_ELEMENTS[self.task_level]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ROPConfig":
        return cls(**obj)


# ---------------------------------------------------------------------------
# Document -> model inputs


def tokens_for_document(
    doc: Document, task_level: str = "segment", bbox_level: str = "segment"
) -> tuple[list[str], list[BBox], list[tuple[int, int]]]:
    """Flatten a document into (texts, boxes, element spans).

    Tokens are the document's words in segment order. ``bbox_level`` selects
    whether each token embeds its own box or its segment's box; ``task_level``
    selects whether spans group tokens by segment or leave them one per word.
    """
    if task_level not in TASK_LEVELS:
        raise ValueError(f"unknown task_level {task_level!r}")
    if bbox_level not in TASK_LEVELS:
        raise ValueError(f"unknown bbox_level {bbox_level!r}")
    words = doc.all_words()
    texts = [w.text for w in words]
    if bbox_level == "word":
        boxes = [w.box for w in words]
    else:
        boxes = [doc.segments[k].box for k in doc.word_segment_index()]
    if task_level == "segment":
        spans = doc.word_spans()
    else:
        spans = [(i, i + 1) for i in range(len(words))]
    return texts, boxes, spans


def target_relation(doc: Document, task_level: str = "segment") -> Relation:
    """The supervision relation at the requested granularity."""
    if doc.isdr is None:
        raise ValueError(f"document {doc.id} has no succession annotation")
    if task_level == "segment":
        return doc.isdr
    if task_level == "word":
        return derive_word_level(doc)
    raise ValueError(f"unknown task_level {task_level!r}")


def pool_elements(states: Tensor, spans: Sequence[tuple[int, int]]) -> Tensor:
    """Mean-pool token states into element states via one constant matmul.

    Spans must be non-empty and tile the token axis exactly, in order.
    """
    states = as_tensor(states)
    if states.ndim != 2:
        raise ValueError(f"states must be (tokens, dim), got {states.shape}")
    n_tokens = states.shape[0]
    cursor = 0
    for start, end in spans:
        if start != cursor or end <= start:
            raise ValueError(f"span ({start}, {end}) breaks the token tiling")
        cursor = end
    if cursor != n_tokens:
        raise ValueError(f"spans cover {cursor} tokens, states have {n_tokens}")
    pool = np.zeros((len(spans), n_tokens))
    for i, (start, end) in enumerate(spans):
        pool[i, start:end] = 1.0 / (end - start)
    return Tensor(pool) @ states


# ---------------------------------------------------------------------------
# Pair scoring head


@dataclass
class GlobalPointerHead:
    """Scores every ordered element pair as (Wq h_i + bq) . (Wk h_j + bk)."""

    store: ParameterStore
    prefix: str = "gp."

    @classmethod
    def create(
        cls,
        model_dim: int,
        head_dim: int = 128,
        store: Optional[ParameterStore] = None,
        seed: Union[int, np.random.Generator] = 0,
        prefix: str = "gp.",
    ) -> "GlobalPointerHead":
        if store is None:
            store = ParameterStore()
        rng = np.random.default_rng(seed)
        store.add(prefix + "Wq", rng.normal(0.0, 0.02, size=(model_dim, head_dim)))
        store.add(prefix + "bq", np.zeros(head_dim))
        store.add(prefix + "Wk", rng.normal(0.0, 0.02, size=(model_dim, head_dim)))
        store.add(prefix + "bk", np.zeros(head_dim))
        return cls(store, prefix)

    def scores(self, pooled: Tensor) -> Tensor:
        """(n, d) element states -> (n, n) pair score matrix."""
        p = self.prefix
        q = pooled @ self.store[p + "Wq"] + self.store[p + "bq"]
        k = pooled @ self.store[p + "Wk"] + self.store[p + "bk"]
        return q @ k.transpose()


def _logsumexp_with_zero(values: np.ndarray) -> float:
    """log(1 + sum(exp(values))), overflow-safe.

    The implicit zero logit keeps the result nonnegative and lets it saturate
    smoothly to 0 when every value is strongly negative.
    """
    if values.size == 0:
        return 0.0
    m = float(max(values.max(), 0.0))
    return m + float(np.log1p(np.expm1(-m) + np.exp(values - m).sum()))


def gp_loss(
    scores: Tensor,
    labels: Relation,
    include_diagonal_negatives: bool = True,
) -> Tensor:
    """Class-imbalance-aware pair ranking loss with a closed-form gradient.

        loss = log(1 + sum over non-pairs of e^{s})
             + log(1 + sum over pairs of e^{-s})

    Non-pairs run over all ordered (i, j) not labeled, including the diagonal
    unless ``include_diagonal_negatives`` is off. The implicit 1 inside each
    log acts as a zero-score anchor, so both terms vanish only when every
    labeled score is far above zero and every other score far below.
    """
    scores = as_tensor(scores)
    s = scores.data
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"scores must be square, got {s.shape}")
    n = s.shape[0]
    if labels.element_count != n:
        raise ValueError(
            f"labels cover {labels.element_count} elements, scores {n}"
        )
    pos = np.zeros((n, n), dtype=bool)
    for i, j in labels.pairs:
        pos[i, j] = True
    neg = ~pos
    if not include_diagonal_negatives:
        np.fill_diagonal(neg, False)
    lse_neg = _logsumexp_with_zero(s[neg])
    lse_pos = _logsumexp_with_zero(-s[pos])
    value = lse_neg + lse_pos
    if not np.isfinite(value):
        raise AutodiffError(f"non-finite pair loss: {value}")
    out = Tensor(value, scores.requires_grad, (scores,))

    def backward(grad):
        g = np.zeros_like(s)
        g[neg] = np.exp(s[neg] - lse_neg)
        g[pos] = -np.exp(-s[pos] - lse_pos)
        scores._accumulate(grad * g)

    out._backward = backward
    return out


def decode(
    scores,
    threshold: float = 0.0,
    enforce_acyclic: bool = False,
) -> Relation:
    """Keep every off-diagonal pair scoring above the threshold.

    With ``enforce_acyclic`` the result is repaired into a directed acyclic
    relation by repeatedly deleting the lowest-scoring edge on a witness
    cycle (ties broken by pair order). Off by default: cyclic output is a
    legitimate, measurable prediction.
    """
    s = scores.data if isinstance(scores, Tensor) else np.asarray(scores, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"scores must be square, got {s.shape}")
    n = s.shape[0]
    mask = s > threshold
    np.fill_diagonal(mask, False)
    pairs = {(int(i), int(j)) for i, j in np.argwhere(mask)}
    if enforce_acyclic:
        while True:
            rel = Relation.from_pairs(n, pairs)
            ok, violation = is_acyclic(rel)
            if ok:
                return rel
            cycle = violation.witness
            edges = list(zip(cycle, cycle[1:]))
            drop = min(edges, key=lambda e: (s[e[0], e[1]], e))
            pairs.discard(drop)
    return Relation.from_pairs(n, pairs)


# ---------------------------------------------------------------------------
# Model bundle


@dataclass
class ROPModel:
    """Encoder plus pointer head plus the task framing they were trained for."""

    encoder_config: EncoderConfig
    config: ROPConfig
    store: ParameterStore

    def head(self) -> GlobalPointerHead:
        return GlobalPointerHead(self.store)

    def _forward_scores(self, doc: Document) -> Tensor:
        texts, boxes, spans = tokens_for_document(
            doc, self.config.task_level, self.config.bbox_level
        )
        states = encoder_forward(self.encoder_config, self.store, texts, boxes)
        pooled = pool_elements(states, spans)
        return self.head().scores(pooled)

    def score_document(self, doc: Document) -> np.ndarray:
        """(n, n) raw pair scores; n counts task elements."""
        return self._forward_scores(doc).data

    def predict(self, doc: Document, enforce_acyclic: bool = False) -> Relation:
        return decode(
            self.score_document(doc), self.config.threshold, enforce_acyclic
        )

    def save(self, path) -> None:
        config = {"encoder": self.encoder_config.to_dict(), "rop": self.config.to_dict()}
        save_checkpoint(path, config, self.store)

    @classmethod
    def load(cls, path) -> "ROPModel":
        config, store = load_checkpoint(path)
        return cls(
            EncoderConfig.from_dict(config["encoder"]),
            ROPConfig.from_dict(config["rop"]),
            store,
        )


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    best_val_f1: float
    train_losses: list[float]
    val_f1: list[float]
    skipped: list[dict]
    train_docs: int
    val_docs: int

    def to_dict(self) -> dict:
        return asdict(self)


def _skip_reason(
    doc: Document, config: ROPConfig, encoder_config: EncoderConfig
) -> Optional[str]:
    """Why a document cannot be used as-is; None when it fits.

    Oversized documents are dropped whole rather than truncated: a cut
    sequence would orphan pair labels and distort both loss and metrics.
    """
    n_elements = doc.n_segments if config.task_level == "segment" else doc.n_words
    if n_elements > config.effective_max_elements:
        return (
            f"{n_elements} {config.task_level} elements exceed the budget of "
            f"{config.effective_max_elements}"
        )
    token_budget = min(config.max_tokens, encoder_config.max_tokens)
    if doc.n_words > token_budget:
        return f"{doc.n_words} tokens exceed the budget of {token_budget}"
    return None


def _filter_usable(
    docs: list[Document],
    config: ROPConfig,
    encoder_config: EncoderConfig,
    skipped: list[dict],
) -> list[Document]:
    keep = []
    for doc in docs:
        reason = _skip_reason(doc, config, encoder_config)
        if reason is None:
            keep.append(doc)
        else:
            warnings.warn(f"skipping document {doc.id}: {reason}")
            skipped.append({"id": doc.id, "reason": reason})
    return keep


def train(
    corpus: Corpus,
    config: Optional[ROPConfig] = None,
    encoder_config: Optional[EncoderConfig] = None,
) -> tuple[ROPModel, TrainReport]:
    """Fit a predictor on the corpus's train split; fully deterministic.

    Validation uses the corpus's validation split when present, otherwise a
    seeded ``val_fraction`` carve-out from the train split. Early stopping
    tracks validation pair F1 with the configured patience, stops immediately
    on a perfect score, and restores the best snapshot before returning.
    """
    config = config if config is not None else ROPConfig()
    if encoder_config is None:
        encoder_config = EncoderConfig(max_tokens=config.max_tokens)
    rng = np.random.default_rng(config.seed)

    skipped: list[dict] = []
    train_docs = _filter_usable(corpus.subset("train"), config, encoder_config, skipped)
    val_docs = _filter_usable(
        corpus.subset("validation"), config, encoder_config, skipped
    )
    if not val_docs and config.val_fraction > 0.0 and len(train_docs) > 1:
        n_val = max(1, round(len(train_docs) * config.val_fraction))
        n_val = min(n_val, len(train_docs) - 1)
        chosen = set(rng.permutation(len(train_docs))[:n_val].tolist())
        val_docs = [d for i, d in enumerate(train_docs) if i in chosen]
        train_docs = [d for i, d in enumerate(train_docs) if i not in chosen]
    if not train_docs:
        raise ValueError("no trainable documents after filtering")

    examples = [
        (
            tokens_for_document(d, config.task_level, config.bbox_level),
            target_relation(d, config.task_level),
        )
        for d in train_docs
    ]
    val_examples = [(d, target_relation(d, config.task_level)) for d in val_docs]

    store = ParameterStore()
    init_encoder_params(encoder_config, rng, store)
    head = GlobalPointerHead.create(
        encoder_config.model_dim, config.head_dim, store, rng
    )
    model = ROPModel(encoder_config, config, store)

    def validation_f1() -> float:
        pairs = [(gold, model.predict(doc)) for doc, gold in val_examples]
        return corpus_f1(pairs).f1

    best_f1 = -1.0
    best_epoch = -1
    best_params: Optional[dict[str, np.ndarray]] = None
    since_best = 0
    train_losses: list[float] = []
    val_f1s: list[float] = []
    order = np.arange(len(examples))
    epochs_run = 0

    for epoch in range(config.epochs):
        epochs_run = epoch + 1
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            store.zero_grads()
            scale = 1.0 / len(batch)
            for idx in batch:
                (texts, boxes, spans), labels = examples[idx]
                states = encoder_forward(encoder_config, store, texts, boxes)
                pooled = pool_elements(states, spans)
                loss = gp_loss(
                    head.scores(pooled), labels, config.include_diagonal_negatives
                )
                epoch_loss += loss.item()
                (loss * scale).backward()
            optimizer_step(store, config.learning_rate)
        train_losses.append(epoch_loss / len(examples))

        if val_examples:
            f1 = validation_f1()
            val_f1s.append(f1)
            if f1 > best_f1:
                best_f1 = f1
                best_epoch = epoch
                best_params = {n: t.data.copy() for n, t in store.items()}
                since_best = 0
            else:
                since_best += 1
            if f1 == 1.0 or since_best >= config.patience:
                break

    if best_params is not None:
        for name, values in best_params.items():
            store[name].data[...] = values
    else:
        best_epoch = epochs_run - 1
        best_f1 = float("nan")

    report = TrainReport(
        epochs_run=epochs_run,
        best_epoch=best_epoch,
        best_val_f1=best_f1,
        train_losses=train_losses,
        val_f1=val_f1s,
        skipped=skipped,
        train_docs=len(train_docs),
        val_docs=len(val_docs),
    )
    return model, report


def predict_pseudo_labels(
    model: ROPModel, corpus: Corpus
) -> tuple[Corpus, dict[str, dict]]:
    """Replace every document's succession annotation with model output.

    Returns the relabeled corpus plus a per-document sidecar recording
    whether the prediction was acyclic and how many pairs it kept. Word-level
    predictions are projected back onto segments first.
    """
    documents = []
    sidecar: dict[str, dict] = {}
    for doc in corpus.documents:
        rel = model.predict(doc)
        if model.config.task_level == "word":
            rel = collapse_word_relation(doc, rel)
        ok, _ = is_acyclic(rel)
        sidecar[doc.id] = {"acyclic": ok, "num_pairs": len(rel)}
        documents.append(replace(doc, isdr=rel))
    return Corpus(tuple(documents), dict(corpus.split)), sidecar
