"""Ideal associative memory: per-class prototypes, similarity and winner-take-all."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from imhdc import hdvec
from imhdc.encoder import EncoderConfig, encode_words, sequence_words
from imhdc.errors import TrainingError
from imhdc.hdvec import Hypervector
from imhdc.itemmem import EmgItemMemory, ItemMemory

METRICS = ("dotp", "invhamm")


def _check_metric(metric: str) -> str:
    m = metric.lower()
    if m not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return m


@dataclass(frozen=True, eq=False)
class AssociativeMemoryModel:
    labels: tuple[Hashable, ...]
    prototypes: tuple[Hypervector, ...]
    with_complements: bool = True
    complements: tuple[Hypervector, ...] | None = field(init=False)
    words: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.labels) != len(self.prototypes) or not self.labels:
            raise ValueError("need one prototype per label and at least one class")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate class labels")
        dim = self.prototypes[0].dim
        if any(p.dim != dim for p in self.prototypes):
            raise ValueError("prototypes have different dimensions")
        words = np.stack([p.words for p in self.prototypes])
        words.flags.writeable = False
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "complements",
                           tuple(p.not_() for p in self.prototypes) if self.with_complements else None)

    @property
    def dim(self) -> int:
        return self.prototypes[0].dim

    @property
    def c(self) -> int:
        return len(self.labels)

    def index_of(self, label: Hashable) -> int:
        return self.labels.index(label)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AssociativeMemoryModel):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.words, other.words)


def _group(data) -> dict:
    if isinstance(data, Mapping):
        items: Iterable = ((lab, seq) for lab, seqs in data.items() for seq in seqs)
    else:
        items = data
    groups: dict = {}
    for label, seq in items:
        groups.setdefault(label, []).append(seq)
    return groups


def train(data, memory: ItemMemory | EmgItemMemory, cfg: EncoderConfig,
          labels: Sequence[Hashable] | None = None, with_complements: bool = True) -> AssociativeMemoryModel:
    """Single-pass training: each class's sequences are concatenated and encoded once.

    ``data`` is an iterable of ``(label, sequence)`` pairs or a mapping from
    label to a list of sequences. Class order follows first appearance unless
    ``labels`` is given.
    """
    groups = _group(data)
    order = tuple(labels) if labels is not None else tuple(groups)
    prototypes = []
    for label in order:
        seqs = groups.get(label)
        if not seqs:
            raise TrainingError(f"class {label!r} has no training data")
        words = np.concatenate([sequence_words(s, memory) for s in seqs if len(s)])
        if words.shape[0] < cfg.n:
            raise TrainingError(f"class {label!r} has {words.shape[0]} symbols, fewer than n={cfg.n}")
        prototypes.append(encode_words(words, memory.dim, cfg))
    extra = set(groups) - set(order)
    if extra:
        raise TrainingError(f"training data has labels outside the class list: {sorted(map(str, extra))}")
    return AssociativeMemoryModel(labels=order, prototypes=tuple(prototypes), with_complements=with_complements)


def similarity_words(q_words: np.ndarray, model: AssociativeMemoryModel, metric: str = "dotp") -> np.ndarray:
    """Similarities of packed queries ``(m, n_words)`` against all classes, shape ``(m, c)``."""
    metric = _check_metric(metric)
    q = np.asarray(q_words, dtype=hdvec.WORD_DTYPE)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if q.shape[1] != model.words.shape[1]:
        raise ValueError("query and model dimensions differ")
    out = np.empty((q.shape[0], model.c), dtype=np.int64)
    q_not = hdvec.not_words(q, model.dim) if metric == "invhamm" else None
    for i in range(model.c):
        out[:, i] = hdvec.popcount_words(q & model.words[i])
        if q_not is not None:
            out[:, i] += hdvec.popcount_words(q_not & hdvec.not_words(model.words[i], model.dim))
    return out[0] if single else out


def similarity(q: Hypervector, model: AssociativeMemoryModel, metric: str = "dotp") -> np.ndarray:
    """``dotp_i = Q.P_i``; ``invhamm_i = Q.P_i + (not Q).(not P_i) = d - hamming(Q, P_i)``."""
    if q.dim != model.dim:
        raise ValueError(f"dimension mismatch: query {q.dim}, model {model.dim}")
    return similarity_words(q.words, model, metric)


def winner(scores: np.ndarray) -> np.ndarray | int:
    """Argmax along the last axis; ties go to the lowest class index."""
    return np.argmax(scores, axis=-1)


def classify(q: Hypervector, model: AssociativeMemoryModel, metric: str = "dotp") -> Hashable:
    return model.labels[int(winner(similarity(q, model, metric)))]


def classify_words(q_words: np.ndarray, model: AssociativeMemoryModel, metric: str = "dotp") -> np.ndarray:
    """Winning class *indices* for a packed batch of queries."""
    return winner(similarity_words(q_words, model, metric))
