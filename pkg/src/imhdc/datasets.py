"""Dataset ingestion, text normalization and seeded synthetic corpora.

Text is reduced to 27 symbols: ``a``-``z`` and a single whitespace. Real
corpora are described by a JSON manifest::

    {"train": [{"label": "en", "path": "train/en.txt"}, ...],
     "test":  [{"label": "en", "path": "test/en.txt"}, ...]}

Relative paths resolve against the manifest's directory. Training files are
merged into one record per class; every non-empty line of a test file is one
query.
"""

from __future__ import annotations

import csv
import json
import os
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from imhdc import rng
from imhdc.errors import IngestError
from imhdc.itemmem import EMG_CHANNELS, EMG_LEVELS, TEXT_SYMBOLS, WHITESPACE_INDEX

DATA_ROOT_ENV = "IMHDC_DATA_ROOT"
MANIFEST_NAME = "manifest.json"
EMG_DOWNSAMPLE = 175
EMG_RAW_RATE_HZ = 500

_NON_LETTERS = re.compile(r"[^a-z]+")
_ASCII_LOWER = str.maketrans("ABCDEFGHIJKLMNOPQRSTUVWXYZ", "abcdefghijklmnopqrstuvwxyz")
_SYMBOL_INDEX = {s: i for i, s in enumerate(TEXT_SYMBOLS)}


@dataclass(frozen=True, eq=False)
class TextRecord:
    label: Hashable
    symbols: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=np.int64)
        if s.ndim != 1 or (s.size and (s.min() < 0 or s.max() > WHITESPACE_INDEX)):
            raise ValueError("text symbols must be indices in [0, 26]")
        s.flags.writeable = False
        object.__setattr__(self, "symbols", s)

    @property
    def text(self) -> str:
        return "".join(TEXT_SYMBOLS[i] for i in self.symbols)

    def __len__(self) -> int:
        return self.symbols.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TextRecord):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.symbols, other.symbols)


@dataclass(frozen=True, eq=False)
class EmgRecord:
    label: int
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.int64)
        if s.ndim != 2 or s.shape[1] != EMG_CHANNELS:
            raise ValueError(f"EMG samples must have shape (L, {EMG_CHANNELS})")
        if s.size and (s.min() < 0 or s.max() >= EMG_LEVELS):
            raise ValueError(f"EMG levels must lie in [0, {EMG_LEVELS - 1}]")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmgRecord):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.samples, other.samples)


# ── text normalization ─────────────────────────────────────────────────────


def preprocess_text(raw: bytes | str) -> str:
    """Keep ASCII letters (lowercased); everything else becomes one space between words."""
    if isinstance(raw, (bytes, bytearray)):
        raw = raw.decode("utf-8", errors="replace")
    return _NON_LETTERS.sub(" ", raw.translate(_ASCII_LOWER)).strip()


def default_stopwords() -> frozenset[str]:
    text = resources.files("imhdc").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def preprocess_news(raw: bytes | str, stopwords: Iterable[str] | None = None, min_len: int = 3) -> str:
    """``preprocess_text``, then drop words shorter than ``min_len`` and stop words."""
    stop = default_stopwords() if stopwords is None else frozenset(stopwords)
    return " ".join(w for w in preprocess_text(raw).split() if len(w) >= min_len and w not in stop)


def to_symbols(text: str) -> np.ndarray:
    try:
        return np.fromiter((_SYMBOL_INDEX[ch] for ch in text), dtype=np.int64, count=len(text))
    except KeyError as exc:
        raise ValueError(f"text is not normalized: {exc.args[0]!r}") from None


def text_record(label: Hashable, raw: bytes | str, news: bool = False,
                stopwords: Iterable[str] | None = None) -> TextRecord | None:
    """Normalized record, or ``None`` (with a warning) when nothing survives preprocessing."""
    text = preprocess_news(raw, stopwords) if news else preprocess_text(raw)
    if not text:
        warnings.warn(f"empty record for class {label!r} skipped", stacklevel=2)
        return None
    return TextRecord(label, to_symbols(text))


# ── manifests ──────────────────────────────────────────────────────────────


def resolve_path(path: str | os.PathLike) -> Path:
    """Relative paths resolve against ``$IMHDC_DATA_ROOT`` when it is set."""
    p = Path(path)
    root = os.environ.get(DATA_ROOT_ENV)
    if not p.is_absolute() and root:
        return Path(root) / p
    return p


def read_manifest(path: str | os.PathLike) -> tuple[dict, Path]:
    p = resolve_path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    if not p.is_file():
        raise IngestError(f"manifest not found: {p}")
    try:
        manifest = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read manifest {p}: {exc}") from exc
    return manifest, p.parent


def _entries(manifest: dict, split: str, base: Path) -> list[tuple[Hashable, Path]]:
    try:
        entries = manifest[split]
    except KeyError:
        raise IngestError(f"manifest has no {split!r} split") from None
    if not entries:
        raise IngestError(f"manifest split {split!r} is empty")
    out = []
    for e in entries:
        p = Path(e["path"])
        out.append((e["label"], p if p.is_absolute() else base / p))
    return out


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _load_text(path, split: str, news: bool, stopwords) -> list[TextRecord]:
    manifest, base = read_manifest(path)
    entries = _entries(manifest, split, base)
    records: list[TextRecord] = []
    if split == "train":
        merged: dict = {}
        for label, p in entries:
            merged.setdefault(label, []).append(_read(p))
        for label, chunks in merged.items():
            rec = text_record(label, b"\n".join(chunks), news, stopwords)
            if rec is not None:
                records.append(rec)
    else:
        for label, p in entries:
            for line in _read(p).splitlines():
                text = preprocess_news(line, stopwords) if news else preprocess_text(line)
                if text:
                    records.append(TextRecord(label, to_symbols(text)))
    return records


def load_language(path, split: str = "train") -> list[TextRecord]:
    return _load_text(path, split, news=False, stopwords=None)


def load_news(path, split: str = "train", stopwords: Iterable[str] | None = None) -> list[TextRecord]:
    return _load_text(path, split, news=True, stopwords=stopwords)


# ── EMG ────────────────────────────────────────────────────────────────────


def _quantize_levels(values: np.ndarray, levels: int) -> np.ndarray:
    """Integer inputs already in ``[0, levels)`` pass through; others get per-channel min-max binning."""
    if np.all(values == np.round(values)) and values.min() >= 0 and values.max() < levels:
        return values.astype(np.int64)
    lo, hi = values.min(axis=0), values.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.clip(((values - lo) / span * levels).astype(np.int64), 0, levels - 1)


def window_label(labels: Sequence[int]) -> int:
    """Majority label of a window; ties go to the smallest label."""
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    return int(values[np.argmax(counts)])


def load_emg(path, downsample: int = EMG_DOWNSAMPLE, n: int = 5, train_fraction: float = 0.25,
             levels: int = EMG_LEVELS) -> tuple[list[EmgRecord], list[EmgRecord]]:
    """Read ``ch1..ch4,label`` rows, keep every ``downsample``-th, split per class into train/inference.

    For each label, the first ``train_fraction`` of its kept samples form the
    training record. The remaining samples, in file order, are cut into
    non-overlapping ``n``-sample queries labelled by majority.
    """
    p = resolve_path(path)
    try:
        with p.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise IngestError(f"cannot read {p}: {exc.strerror or exc}") from exc
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    try:
        table = np.array([[float(x) for x in r[: EMG_CHANNELS + 1]] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise IngestError(f"malformed EMG row in {p}: {exc}") from exc
    if table.ndim != 2 or table.shape[0] == 0 or table.shape[1] != EMG_CHANNELS + 1:
        raise IngestError(f"{p}: expected {EMG_CHANNELS} channel columns and a label column")
    kept = table[: (table.shape[0] // downsample) * downsample : downsample]
    if kept.shape[0] < n:
        raise IngestError(f"{p}: {kept.shape[0]} samples after downsampling, need at least {n}")
    samples = _quantize_levels(kept[:, :EMG_CHANNELS], levels)
    labels = kept[:, EMG_CHANNELS].astype(np.int64)
    return split_emg(samples, labels, n, train_fraction)


def split_emg(samples: np.ndarray, labels: np.ndarray, n: int = 5,
              train_fraction: float = 0.25) -> tuple[list[EmgRecord], list[EmgRecord]]:
    """Per-class training records and majority-labelled ``n``-sample queries (see ``load_emg``)."""
    samples = np.asarray(samples, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size < n:
        raise IngestError(f"{labels.size} samples, need at least {n}")
    in_train = np.zeros(labels.size, dtype=bool)
    train: list[EmgRecord] = []
    for lab in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == lab)
        k = int(round(train_fraction * idx.size))
        in_train[idx[:k]] = True
        if k:
            train.append(EmgRecord(lab, samples[idx[:k]]))
    rest = np.flatnonzero(~in_train)
    queries = [EmgRecord(window_label(labels[w]), samples[w])
               for w in (rest[i : i + n] for i in range(0, rest.size - n + 1, n))]
    return train, queries


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


# ── synthetic corpora ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class SyntheticCorpus:
    train: list[TextRecord]
    test: list[TextRecord]
    params: dict = field(default_factory=dict)


def _class_alphabets(classes: int, mixing: float) -> list[np.ndarray]:
    letters = np.arange(WHITESPACE_INDEX + 1)
    if mixing == 0 and classes <= 13:
        width = (WHITESPACE_INDEX + 1) // classes
        return [letters[i * width : (i + 1) * width] for i in range(classes)]
    return [letters] * classes


def transition_matrices(classes: int, seed: int, mixing: float = 0.5,
                        concentration: float = 0.1) -> np.ndarray:
    """Per-class first-order transition matrices ``(classes, 27, 27)``.

    Each class has its own Dirichlet rows; ``mixing`` blends them with one
    shared matrix. At ``mixing=0`` and at most 13 classes the alphabets are
    disjoint.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    if not 0.0 <= mixing <= 1.0:
        raise ValueError("mixing must lie in [0, 1]")
    h = WHITESPACE_INDEX + 1
    shared = rng.generator(seed, "synth/shared").dirichlet(np.full(h, concentration), size=h)
    out = np.empty((classes, h, h))
    for c, alphabet in enumerate(_class_alphabets(classes, mixing)):
        gen = rng.generator(seed, "synth/class", c)
        own = np.zeros((h, h))
        own[:, alphabet] = gen.dirichlet(np.full(alphabet.size, concentration), size=h)
        out[c] = (1.0 - mixing) * own + mixing * shared
    # forbid consecutive whitespace, as in normalized text
    out[:, WHITESPACE_INDEX, WHITESPACE_INDEX] = 0.0
    row_sums = out.sum(axis=2, keepdims=True)
    dead = row_sums[..., 0] == 0
    out = np.where(row_sums > 0, out / np.where(row_sums > 0, row_sums, 1.0), 0.0)
    for c, alphabet in enumerate(_class_alphabets(classes, mixing)):
        out[c, dead[c]] = 0.0
        out[c][np.ix_(dead[c], alphabet)] = 1.0 / alphabet.size
    return out


def _sample_chain(T: np.ndarray, length: int, gen: np.random.Generator, start: int) -> np.ndarray:
    cdf = np.cumsum(T, axis=1)
    cdf[:, -1] = 1.0
    u = gen.random(length)
    out = np.empty(length, dtype=np.int64)
    s = start
    for i in range(length):
        s = int(np.searchsorted(cdf[s], u[i], side="right"))
        out[i] = s
    return out


def synth_corpus(classes: int, seed: int, length: int = 20000, mixing: float = 0.5,
                 test_per_class: int = 50, query_length: int = 100,
                 concentration: float = 0.1) -> SyntheticCorpus:
    """Seeded Markov-chain corpus: one training text and ``test_per_class`` queries per class.

    Labels are ``"c00"``, ``"c01"``, ... Higher ``mixing`` makes classes harder
    to tell apart.
    """
    if length <= 0 or query_length <= 0:
        raise IngestError("synthetic corpus length must be positive")
    T = transition_matrices(classes, seed, mixing, concentration)
    alphabets = _class_alphabets(classes, mixing)
    train, test = [], []
    for c in range(classes):
        label = f"c{c:02d}"
        gen = rng.generator(seed, "synth/text", c)
        start = int(alphabets[c][0])
        train.append(TextRecord(label, _sample_chain(T[c], length, gen, start)))
        for q in range(test_per_class):
            qgen = rng.generator(seed, "synth/query", c * 1_000_003 + q)
            test.append(TextRecord(label, _sample_chain(T[c], query_length, qgen,
                                                        int(qgen.choice(alphabets[c])))))
    params = dict(classes=classes, seed=seed, length=length, mixing=mixing,
                  test_per_class=test_per_class, query_length=query_length, concentration=concentration)
    return SyntheticCorpus(train=train, test=test, params=params)


def synth_emg(seed: int, classes: int = 5, samples_per_class: int = 1200, noise_levels: float = 2.0,
              levels: int = EMG_LEVELS) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic (already downsampled) EMG: per-class channel intensity profiles plus jitter.

    Returns ``(samples (L, 4) levels, labels (L,))`` with labels ``1..classes``
    in contiguous gesture blocks.
    """
    if classes < 2 or samples_per_class <= 0:
        raise IngestError("need at least two classes and a positive sample count")
    gen = rng.generator(seed, "synth/emg")
    profiles = gen.uniform(0, levels - 1, size=(classes, EMG_CHANNELS))
    labels = np.repeat(np.arange(1, classes + 1), samples_per_class)
    base = profiles[labels - 1]
    jitter = noise_levels * gen.standard_normal(base.shape)
    samples = np.clip(np.rint(base + jitter), 0, levels - 1).astype(np.int64)
    return samples, labels


def write_emg_csv(path, samples: np.ndarray, labels: np.ndarray, repeat: int = 1) -> None:
    """Write ``ch1..ch4,label`` rows, each sample repeated ``repeat`` times (pre-downsampling rate)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"ch{i + 1}" for i in range(EMG_CHANNELS)] + ["label"])
        for s, lab in zip(samples, labels):
            row = [int(x) for x in s] + [int(lab)]
            for _ in range(repeat):
                w.writerow(row)


def write_text_corpus(corpus: SyntheticCorpus, directory) -> Path:
    """Materialize a corpus as text files plus a manifest; returns the manifest path."""
    root = Path(directory)
    manifest: dict = {"train": [], "test": []}
    grouped: dict = {}
    for rec in corpus.test:
        grouped.setdefault(rec.label, []).append(rec.text)
    for split, records in (("train", {r.label: [r.text] for r in corpus.train}), ("test", grouped)):
        (root / split).mkdir(parents=True, exist_ok=True)
        for label, texts in records.items():
            rel = f"{split}/{label}.txt"
            (root / rel).write_text("\n".join(texts) + "\n", encoding="utf-8")
            manifest[split].append({"label": label, "path": rel})
    out = root / MANIFEST_NAME
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out
