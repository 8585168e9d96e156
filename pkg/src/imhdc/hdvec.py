"""Bit-packed binary hypervectors and their algebra.

Component ``j`` of a vector lives in bit ``j % 64`` of word ``j // 64``
(little-endian words). Bits past ``dim - 1`` in the last word are always
zero; every operation re-establishes that before returning.

Two layers live here:

* array kernels (``pack_bits``, ``shift_up``, ``popcount_words``, ...) that
  work on the last axis of ``uint64`` arrays so the encoder and the crossbar
  simulator can process thousands of vectors at once, and
* the immutable :class:`Hypervector` value type plus module-level functions
  mirroring its methods.

Permutation convention: a circular shift by ``k`` maps component ``j`` to
``(j + k) mod dim``. ``plain_right`` moves components the same way but drops
the ones pushed past ``dim - 1`` and fills the low end with zeros;
``plain_left`` is its mirror image.
"""

from __future__ import annotations

import struct
from numbers import Real
from typing import Iterable

import numpy as np

from imhdc import rng
from imhdc.errors import InvalidStateError

WORD_BITS = 64
WORD_DTYPE = np.dtype("<u8")
PERMUTE_MODES = ("circular", "plain_right", "plain_left")

_ALL_ONES = np.uint64(0xFFFF_FFFF_FFFF_FFFF)


# ── array kernels ──────────────────────────────────────────────────────────


def n_words(dim: int) -> int:
    return -(-dim // WORD_BITS)


def tail_mask(dim: int) -> np.uint64:
    """Mask of the live bits in the last word of a ``dim``-bit vector."""
    r = dim % WORD_BITS
    return _ALL_ONES if r == 0 else np.uint64((1 << r) - 1)


def canonicalize(words: np.ndarray, dim: int) -> np.ndarray:
    """Zero the padding bits of ``words`` in place and return it."""
    words[..., -1] &= tail_mask(dim)
    return words


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a ``(..., dim)`` 0/1 array into ``(..., n_words(dim))`` uint64."""
    bits = np.asarray(bits)
    dim = bits.shape[-1]
    W = n_words(dim)
    padded = np.zeros(bits.shape[:-1] + (W * WORD_BITS,), dtype=np.uint8)
    padded[..., :dim] = bits != 0
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view(WORD_DTYPE)


def unpack_bits(words: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns uint8 with shape ``(..., dim)``."""
    words = np.ascontiguousarray(words, dtype=WORD_DTYPE)
    as_bytes = words.view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1, bitorder="little")[..., :dim]


def popcount_words(words: np.ndarray) -> np.ndarray:
    """Number of set bits along the last axis."""
    return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)


def shift_up(words: np.ndarray, k: int, dim: int) -> np.ndarray:
    """Move component ``j`` to ``j + k``; components pushed past ``dim - 1`` drop out."""
    if k == 0:
        return words.copy()
    out = np.zeros_like(words)
    W = words.shape[-1]
    q, r = divmod(k, WORD_BITS)
    if q < W:
        if r == 0:
            out[..., q:] = words[..., : W - q]
        else:
            out[..., q:] = words[..., : W - q] << np.uint64(r)
            out[..., q + 1 :] |= words[..., : W - q - 1] >> np.uint64(WORD_BITS - r)
    return canonicalize(out, dim)


def shift_down(words: np.ndarray, k: int, dim: int) -> np.ndarray:
    """Move component ``j`` to ``j - k``; zeros enter at the top.

    Relies on canonical (zero) padding of the input.
    """
    if k == 0:
        return words.copy()
    out = np.zeros_like(words)
    W = words.shape[-1]
    q, r = divmod(k, WORD_BITS)
    if q < W:
        if r == 0:
            out[..., : W - q] = words[..., q:]
        else:
            out[..., : W - q] = words[..., q:] >> np.uint64(r)
            out[..., : W - q - 1] |= words[..., q + 1 :] << np.uint64(WORD_BITS - r)
    return canonicalize(out, dim)


def rotate_up(words: np.ndarray, k: int, dim: int) -> np.ndarray:
    """Circular shift toward higher component indices."""
    k %= dim
    if k == 0:
        return words.copy()
    return shift_up(words, k, dim) | shift_down(words, dim - k, dim)


def permute_words(words: np.ndarray, k: int, dim: int, mode: str) -> np.ndarray:
    if mode == "circular":
        return rotate_up(words, k, dim)
    if mode == "plain_right":
        return shift_up(words, k, dim)
    if mode == "plain_left":
        return shift_down(words, k, dim)
    raise ValueError(f"unknown permutation mode {mode!r}; expected one of {PERMUTE_MODES}")


def not_words(words: np.ndarray, dim: int) -> np.ndarray:
    return canonicalize(~words, dim)


# ── value type ─────────────────────────────────────────────────────────────


class Hypervector:
    """Immutable ``dim``-component binary vector, bit-packed into uint64 words."""

    __slots__ = ("dim", "words")

    dim: int
    words: np.ndarray

    def __init__(self, words: np.ndarray, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        words = np.array(words, dtype=WORD_DTYPE, copy=True).reshape(-1)
        if words.shape[0] != n_words(dim):
            raise ValueError(f"expected {n_words(dim)} words for dim={dim}, got {words.shape[0]}")
        canonicalize(words, dim)
        words.flags.writeable = False
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "words", words)

    @classmethod
    def _wrap(cls, words: np.ndarray, dim: int) -> Hypervector:
        # Trusted fast path: caller guarantees shape, dtype and canonical padding.
        obj = object.__new__(cls)
        if words.flags.writeable:
            words.flags.writeable = False
        object.__setattr__(obj, "dim", dim)
        object.__setattr__(obj, "words", words)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("Hypervector is immutable")

    # ── constructors ──

    @classmethod
    def random(cls, dim: int, seed: int, purpose: str = "random", index: int = 0) -> Hypervector:
        """I.i.d. fair-coin components; identical for identical arguments."""
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        words = rng.random_words(n_words(dim), seed, purpose, index)
        return cls._wrap(canonicalize(words, dim), dim)

    @classmethod
    def zeros(cls, dim: int) -> Hypervector:
        return cls(np.zeros(n_words(dim), dtype=WORD_DTYPE), dim)

    @classmethod
    def ones(cls, dim: int) -> Hypervector:
        return cls(np.full(n_words(dim), _ALL_ONES, dtype=WORD_DTYPE), dim)

    @classmethod
    def from_bits(cls, bits: Iterable[int] | str) -> Hypervector:
        """Build from components in index order; strings like ``"1010"`` or ``"1100_1010"`` work."""
        if isinstance(bits, str):
            bits = [int(ch) for ch in bits if ch not in "_ "]
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("bits must be a non-empty 1-D sequence")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("bits must be 0 or 1")
        return cls._wrap(pack_bits(arr), arr.size)

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.dim)

    # ── serialization: u32 dim + little-endian packed bits ──

    def to_bytes(self) -> bytes:
        n_bytes = -(-self.dim // 8)
        return struct.pack("<I", self.dim) + self.words.tobytes()[:n_bytes]

    @classmethod
    def from_bytes(cls, data: bytes) -> Hypervector:
        (dim,) = struct.unpack_from("<I", data, 0)
        n_bytes = -(-dim // 8)
        body = data[4 : 4 + n_bytes]
        if len(body) != n_bytes:
            raise ValueError("truncated hypervector payload")
        buf = np.zeros(n_words(dim) * 8, dtype=np.uint8)
        buf[:n_bytes] = np.frombuffer(body, dtype=np.uint8)
        words = buf.view(WORD_DTYPE)
        if (words[-1] & ~tail_mask(dim)) != 0:
            raise ValueError("non-canonical padding in serialized hypervector")
        return cls._wrap(words, dim)

    @staticmethod
    def serialized_size(dim: int) -> int:
        return 4 + -(-dim // 8)

    # ── algebra ──

    def _check(self, other: Hypervector) -> None:
        if not isinstance(other, Hypervector):
            raise TypeError(f"expected Hypervector, got {type(other).__name__}")
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def xnor(self, other: Hypervector) -> Hypervector:
        self._check(other)
        return Hypervector._wrap(not_words(self.words ^ other.words, self.dim), self.dim)

    def xor(self, other: Hypervector) -> Hypervector:
        self._check(other)
        return Hypervector._wrap(self.words ^ other.words, self.dim)

    def and_(self, other: Hypervector) -> Hypervector:
        self._check(other)
        return Hypervector._wrap(self.words & other.words, self.dim)

    def or_(self, other: Hypervector) -> Hypervector:
        self._check(other)
        return Hypervector._wrap(self.words | other.words, self.dim)

    def not_(self) -> Hypervector:
        return Hypervector._wrap(not_words(self.words, self.dim), self.dim)

    __and__ = and_
    __or__ = or_
    __xor__ = xor
    __invert__ = not_

    def permute(self, k: int = 1, mode: str = "circular") -> Hypervector:
        if not 0 <= k < self.dim:
            raise ValueError(f"shift k must satisfy 0 <= k < dim={self.dim}, got {k}")
        return Hypervector._wrap(permute_words(self.words, k, self.dim, mode), self.dim)

    def popcount(self) -> int:
        return int(popcount_words(self.words))

    def hamming(self, other: Hypervector) -> int:
        self._check(other)
        return int(popcount_words(self.words ^ other.words))

    def dot(self, other: Hypervector) -> int:
        self._check(other)
        return int(popcount_words(self.words & other.words))

    # ── dunder ──

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Hypervector):
            return NotImplemented
        return self.dim == other.dim and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self.dim, self.words.tobytes()))

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        if self.dim <= 32:
            return f"Hypervector('{''.join(map(str, self.to_bits()))}')"
        return f"Hypervector(dim={self.dim}, popcount={self.popcount()})"


# ── functional API ─────────────────────────────────────────────────────────


def random(dim: int, seed: int) -> Hypervector:
    return Hypervector.random(dim, seed)


def xnor(a: Hypervector, b: Hypervector) -> Hypervector:
    return a.xnor(b)


def and_(a: Hypervector, b: Hypervector) -> Hypervector:
    return a.and_(b)


def or_(a: Hypervector, b: Hypervector) -> Hypervector:
    return a.or_(b)


def not_(a: Hypervector) -> Hypervector:
    return a.not_()


def permute(a: Hypervector, k: int, mode: str = "circular") -> Hypervector:
    return a.permute(k, mode)


def popcount(a: Hypervector) -> int:
    return a.popcount()


def hamming(a: Hypervector, b: Hypervector) -> int:
    return a.hamming(b)


def dot(a: Hypervector, b: Hypervector) -> int:
    return a.dot(b)


# ── bundling ───────────────────────────────────────────────────────────────

_UNPACK_CHUNK = 2048


class Accumulator:
    """Per-component tally of bundled vectors (single writer)."""

    __slots__ = ("dim", "counts", "total_added")

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.counts = np.zeros(dim, dtype=np.int64)
        self.total_added = 0

    def add(self, v: Hypervector) -> Accumulator:
        if v.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {v.dim}")
        self.counts += v.to_bits()
        self.total_added += 1
        return self

    def add_words(self, batch: np.ndarray) -> Accumulator:
        """Add every row of a ``(m, n_words)`` packed batch."""
        batch = np.asarray(batch, dtype=WORD_DTYPE)
        if batch.ndim != 2 or batch.shape[1] != n_words(self.dim):
            raise ValueError(f"expected shape (m, {n_words(self.dim)}), got {batch.shape}")
        for start in range(0, batch.shape[0], _UNPACK_CHUNK):
            chunk = unpack_bits(batch[start : start + _UNPACK_CHUNK], self.dim)
            self.counts += chunk.sum(axis=0, dtype=np.int64)
        self.total_added += batch.shape[0]
        return self

    def binarize(self, threshold: Real) -> Hypervector:
        """Component ``j`` is 1 iff ``counts[j] > threshold`` (strict)."""
        if self.total_added == 0:
            raise InvalidStateError("cannot binarize an empty accumulator")
        if threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {threshold}")
        return Hypervector._wrap(pack_bits(self.counts > threshold), self.dim)

    def __repr__(self) -> str:
        return f"Accumulator(dim={self.dim}, total_added={self.total_added})"


def accumulate(acc: Accumulator, v: Hypervector) -> Accumulator:
    return acc.add(v)


def binarize(acc: Accumulator, threshold: Real) -> Hypervector:
    return acc.binarize(threshold)
