"""Item memories: seeded tables of basis hypervectors.

``ItemMemory`` holds one i.i.d. random vector per discrete symbol.
``ContinuousItemMemory`` holds level vectors obtained by flipping a growing,
nested subset of the components that differ between two random endpoints,
so the distance between two levels grows linearly with their gap.
``EmgItemMemory`` pairs a 4-channel IM with a level CIM and a tie-break
vector for the spatial encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from imhdc import hdvec, rng
from imhdc.errors import InvariantError, UnknownSymbolError
from imhdc.hdvec import Hypervector

#: 'a'..'z' then whitespace at index 26.
TEXT_SYMBOLS: tuple[str, ...] = tuple("abcdefghijklmnopqrstuvwxyz") + (" ",)
WHITESPACE_INDEX = 26

EMG_CHANNELS = 4
EMG_LEVELS = 22


def _pairwise_hamming(words: np.ndarray, dim: int) -> np.ndarray:
    bits = hdvec.unpack_bits(words, dim).astype(np.int64)
    ones = bits.sum(axis=1)
    overlap = bits @ bits.T
    return ones[:, None] + ones[None, :] - 2 * overlap


@dataclass(frozen=True, eq=False)
class ItemMemory:
    symbols: tuple[Hashable, ...]
    words: np.ndarray  # (h, n_words), read-only
    dim: int
    seed: int
    vectors: tuple[Hypervector, ...] = field(init=False, repr=False)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        words = np.array(self.words, dtype=hdvec.WORD_DTYPE, copy=True)
        words.flags.writeable = False
        if words.shape != (len(self.symbols), hdvec.n_words(self.dim)):
            raise ValueError(f"words shape {words.shape} does not match {len(self.symbols)} symbols at dim={self.dim}")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in item memory")
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "vectors", tuple(Hypervector._wrap(words[i], self.dim) for i in range(len(words))))
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    @property
    def h(self) -> int:
        return len(self.symbols)

    def index_of(self, symbol: Hashable) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownSymbolError(symbol) from None

    def lookup(self, symbol: Hashable) -> Hypervector:
        return self.vectors[self.index_of(symbol)]

    def __getitem__(self, symbol: Hashable) -> Hypervector:
        return self.lookup(symbol)

    def __len__(self) -> int:
        return len(self.symbols)

    def sequence_words(self, indices: Sequence[int] | np.ndarray) -> np.ndarray:
        """Packed vectors for a sequence of symbol *indices*, shape ``(L, n_words)``."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.h):
            bad = idx[(idx < 0) | (idx >= self.h)][0]
            raise UnknownSymbolError(int(bad))
        return self.words[idx]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ItemMemory):
            return NotImplemented
        return (self.symbols == other.symbols and self.dim == other.dim
                and np.array_equal(self.words, other.words))


def generate_im(h: int, d: int, seed: int, symbols: Sequence[Hashable] | None = None,
                purpose: str = "im") -> ItemMemory:
    """Draw ``h`` i.i.d. basis vectors and verify their mutual distances.

    With ``h == 27`` and no explicit symbols, the text alphabet is used.
    Every pairwise distance must fall inside ``d/2 +- 7*sqrt(d/4)``.
    """
    if h < 1 or d < 1:
        raise ValueError(f"h and d must be >= 1 (h={h}, d={d})")
    if symbols is None:
        symbols = TEXT_SYMBOLS if h == len(TEXT_SYMBOLS) else tuple(range(h))
    symbols = tuple(symbols)
    if len(symbols) != h:
        raise ValueError(f"got {len(symbols)} symbols for h={h}")
    W = hdvec.n_words(d)
    words = np.stack([hdvec.canonicalize(rng.random_words(W, seed, purpose, i), d) for i in range(h)])
    if h > 1:
        dist = _pairwise_hamming(words, d)
        band = 7 * math.sqrt(d / 4)
        off = dist[np.triu_indices(h, 1)]
        if np.any(np.abs(off - d / 2) > band):
            raise InvariantError(f"item memory (seed={seed}) has a pair outside d/2 +- 7 sigma")
    return ItemMemory(symbols=symbols, words=words, dim=d, seed=seed)


def lookup(im: ItemMemory, symbol: Hashable) -> Hypervector:
    return im.lookup(symbol)


@dataclass(frozen=True, eq=False)
class ContinuousItemMemory:
    words: np.ndarray  # (m, n_words)
    dim: int
    seed: int
    vectors: tuple[Hypervector, ...] = field(init=False, repr=False)

    def __post_init__(self):
        words = np.array(self.words, dtype=hdvec.WORD_DTYPE, copy=True)
        words.flags.writeable = False
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "vectors", tuple(Hypervector._wrap(words[i], self.dim) for i in range(len(words))))

    @property
    def levels(self) -> int:
        return len(self.vectors)

    @property
    def endpoints(self) -> tuple[Hypervector, Hypervector]:
        return self.vectors[0], self.vectors[-1]

    def __getitem__(self, level: int) -> Hypervector:
        if not 0 <= level < self.levels:
            raise ValueError(f"level {level} outside [0, {self.levels - 1}]")
        return self.vectors[level]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ContinuousItemMemory):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.words, other.words)


def generate_cim(m: int, d: int, seed: int, purpose: str = "cim") -> ContinuousItemMemory:
    """Level vectors interpolating between two independent random endpoints.

    Level ``i`` equals endpoint A with the first ``floor(i * D_AB / (m - 1))``
    entries of a seeded ordering of the differing components flipped.
    """
    if m < 2:
        raise ValueError(f"need at least 2 levels, got {m}")
    if d < 2 or d % 2:
        raise ValueError(f"d must be even, got {d}")
    W = hdvec.n_words(d)
    a = hdvec.unpack_bits(hdvec.canonicalize(rng.random_words(W, seed, purpose, 0), d), d)
    b = hdvec.unpack_bits(hdvec.canonicalize(rng.random_words(W, seed, purpose, 1), d), d)
    differing = np.flatnonzero(a != b)
    order = rng.generator(seed, purpose + "/flip-order").permutation(differing)
    levels = np.empty((m, d), dtype=np.uint8)
    for i in range(m):
        flips = order[: (i * len(order)) // (m - 1)]
        level = a.copy()
        level[flips] ^= 1
        levels[i] = level
    return ContinuousItemMemory(words=hdvec.pack_bits(levels), dim=d, seed=seed)


@dataclass(frozen=True, eq=False)
class EmgItemMemory:
    """Channel IM + level CIM + tie-break vector used by the EMG spatial encoder."""

    channels: ItemMemory
    levels: ContinuousItemMemory
    tie: Hypervector

    @property
    def dim(self) -> int:
        return self.channels.dim

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmgItemMemory):
            return NotImplemented
        return self.channels == other.channels and self.levels == other.levels and self.tie == other.tie


def generate_emg_memory(d: int, seed: int, channels: int = EMG_CHANNELS, levels: int = EMG_LEVELS) -> EmgItemMemory:
    return EmgItemMemory(
        channels=generate_im(channels, d, seed, purpose="emg/channels"),
        levels=generate_cim(levels, d, seed, purpose="emg/levels"),
        tie=Hypervector.random(d, seed, "emg/tie"),
    )
