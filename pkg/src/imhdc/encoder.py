"""Digital reference n-gram encoders and sequence bundling.

Three ways of turning ``n`` basis vectors into an n-gram vector:

``exact``
    XNOR chain ``B[1] xnor rho(B[2]) xnor ... rho^(n-1)(B[n])``.
``all_minterm``
    The same function written as an OR of ``2**(n-1)`` AND-terms; each term
    picks ``B[k]`` or its complement according to the parity of
    ``z_index(k, j)``. With circular permutation it is bit-identical to
    ``exact``.
``two_minterm``
    Only the all-direct and the all-complemented terms are kept. This is what
    the crossbar encoder computes.

A sequence is encoded by sliding a length-``n`` window with stride 1,
accumulating every window's n-gram and binarizing at ``l * k / 2**n`` where
``l`` is the number of windows and ``k`` the number of minterms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from imhdc import hdvec
from imhdc.errors import EncodeError
from imhdc.hdvec import Accumulator, Hypervector
from imhdc.itemmem import ContinuousItemMemory, EmgItemMemory, ItemMemory

ENCODER_KINDS = ("exact", "all_minterm", "two_minterm")
PERMUTATION_MODES = ("circular", "plain_shift")
MAX_MINTERM_N = 20

_HDVEC_MODE = {"circular": "circular", "plain_shift": "plain_right"}
_WINDOW_CHUNK = 4096


@dataclass(frozen=True)
class EncoderConfig:
    n: int
    kind: str = "exact"
    permutation_mode: str = "circular"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n-gram size must be >= 1, got {self.n}")
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}; expected one of {ENCODER_KINDS}")
        if self.permutation_mode not in PERMUTATION_MODES:
            raise ValueError(f"unknown permutation mode {self.permutation_mode!r}")
        if self.kind == "all_minterm" and self.n > MAX_MINTERM_N:
            raise ValueError(f"all-minterm expansion refused for n={self.n} > {MAX_MINTERM_N}")

    @property
    def k_minterms(self) -> int | None:
        if self.kind == "all_minterm":
            return 2 ** (self.n - 1)
        if self.kind == "two_minterm":
            return 2
        return None

    def threshold(self, l: int) -> float:
        """Bundling threshold ``l / 2**(n - log2 k)``; the XNOR chain counts as ``k = 2**(n-1)``."""
        k = self.k_minterms or 2 ** (self.n - 1)
        return l * k / 2**self.n


# ── minterm indexing ───────────────────────────────────────────────────────


def z_index(k: int, j: int, n: int | None = None) -> int:
    """``floor((2j + 2**(k-1)) / 2**k)``; its parity selects B[k] (even) or not B[k] (odd)."""
    if k < 1 or (n is not None and k > n):
        raise ValueError(f"k out of range: {k}")
    if j < 0 or (n is not None and j > 2 ** (n - 1) - 1):
        raise ValueError(f"minterm index out of range: {j}")
    return (2 * j + 2 ** (k - 1)) // 2**k


def l_operator(b: Hypervector, k: int, j: int, n: int | None = None) -> Hypervector:
    return b if z_index(k, j, n) % 2 == 0 else b.not_()


def minterm_selections(n: int) -> np.ndarray:
    """Boolean ``(2**(n-1), n)`` table; True where minterm ``j`` complements position ``k``."""
    return np.array([[z_index(k, j) % 2 == 1 for k in range(1, n + 1)] for j in range(2 ** (n - 1))],
                    dtype=bool)


# ── window kernel ──────────────────────────────────────────────────────────


def ngram_windows(seq_words: np.ndarray, dim: int, cfg: EncoderConfig) -> np.ndarray:
    """n-gram vectors of every stride-1 window of a packed sequence.

    ``seq_words`` has shape ``(L, n_words)``; the result has shape
    ``(L - n + 1, n_words)``.
    """
    n = cfg.n
    L = seq_words.shape[0]
    if L < n:
        raise EncodeError(f"sequence of length {L} is shorter than n={n}")
    l = L - n + 1
    mode = _HDVEC_MODE[cfg.permutation_mode]

    def direct(k):
        return hdvec.permute_words(seq_words[k : k + l], k, dim, mode)

    def complement(k):
        return hdvec.permute_words(hdvec.not_words(seq_words[k : k + l], dim), k, dim, mode)

    if cfg.kind == "exact":
        out = direct(0)
        for k in range(1, n):
            out = hdvec.not_words(out ^ direct(k), dim)
        return out

    if cfg.kind == "two_minterm":
        pos = direct(0)
        neg = complement(0)
        for k in range(1, n):
            pos &= direct(k)
            neg &= complement(k)
        return pos | neg

    pos = [direct(k) for k in range(n)]
    neg = [complement(k) for k in range(n)]
    out = np.zeros_like(pos[0])
    for row in minterm_selections(n):
        term = (neg if row[0] else pos)[0].copy()
        for k in range(1, n):
            term &= (neg if row[k] else pos)[k]
        out |= term
    return out


def _basis_words(basis: Sequence[Hypervector]) -> tuple[np.ndarray, int]:
    if len(basis) == 0:
        raise ValueError("need at least one basis vector")
    dim = basis[0].dim
    if any(b.dim != dim for b in basis):
        raise ValueError("basis vectors have different dimensions")
    return np.stack([b.words for b in basis]), dim


def _single(basis: Sequence[Hypervector], cfg: EncoderConfig) -> Hypervector:
    words, dim = _basis_words(basis)
    return Hypervector._wrap(ngram_windows(words, dim, cfg)[0], dim)


def ngram_exact(basis: Sequence[Hypervector], mode: str = "circular") -> Hypervector:
    """XNOR chain of progressively permuted basis vectors."""
    if len(basis) == 0:
        raise ValueError("need at least one basis vector")
    return _single(basis, EncoderConfig(len(basis), "exact", mode))


def ngram_all_minterm(basis: Sequence[Hypervector], mode: str = "circular") -> Hypervector:
    n = len(basis)
    if n > MAX_MINTERM_N:
        raise ValueError(f"all-minterm expansion refused for n={n} > {MAX_MINTERM_N}")
    if n == 0:
        raise ValueError("need at least one basis vector")
    return _single(basis, EncoderConfig(n, "all_minterm", mode))


def ngram_two_minterm(basis: Sequence[Hypervector], mode: str = "circular") -> Hypervector:
    if len(basis) == 0:
        raise ValueError("need at least one basis vector")
    return _single(basis, EncoderConfig(len(basis), "two_minterm", mode))


def minterm_recurrence(basis: Sequence[Hypervector], complement: bool = False,
                       mode: str = "plain_shift") -> Hypervector:
    """Cycle-by-cycle form of one 2-minterm term: ``M <- rho(M) & B[n-j+1]`` from ``M = B[n]``."""
    words, dim = _basis_words(basis)
    if complement:
        words = hdvec.not_words(words, dim)
    hv_mode = _HDVEC_MODE[mode]
    n = len(basis)
    m = words[n - 1].copy()
    for j in range(2, n + 1):
        m = hdvec.permute_words(m, 1, dim, hv_mode) & words[n - j]
    return Hypervector._wrap(m, dim)


# ── sequences ──────────────────────────────────────────────────────────────


def sequence_words(seq, memory: ItemMemory | EmgItemMemory) -> np.ndarray:
    """Resolve a symbol sequence (indices, a string, or EMG samples) to packed rows."""
    if isinstance(memory, EmgItemMemory):
        return spatial_encode_batch(np.asarray(seq), memory.channels, memory.levels, memory.tie)
    if isinstance(seq, str):
        seq = [memory.index_of(ch) for ch in seq]
    return memory.sequence_words(seq)


def accumulate_words(acc: Accumulator, seq_words: np.ndarray, cfg: EncoderConfig) -> Accumulator:
    """Add every n-gram of a packed sequence to ``acc``."""
    L = seq_words.shape[0]
    if L < cfg.n:
        raise EncodeError(f"sequence of length {L} is shorter than n={cfg.n}")
    l = L - cfg.n + 1
    for start in range(0, l, _WINDOW_CHUNK):
        stop = min(start + _WINDOW_CHUNK, l)
        acc.add_words(ngram_windows(seq_words[start : stop + cfg.n - 1], acc.dim, cfg))
    return acc


def encode_words(seq_words: np.ndarray, dim: int, cfg: EncoderConfig) -> Hypervector:
    acc = accumulate_words(Accumulator(dim), seq_words, cfg)
    return acc.binarize(cfg.threshold(acc.total_added))


def encode_sequence(symbols, memory: ItemMemory | EmgItemMemory, cfg: EncoderConfig) -> Hypervector:
    """Bundle all n-grams of ``symbols`` into one prototype or query vector."""
    if len(symbols) < cfg.n:
        raise EncodeError(f"sequence of length {len(symbols)} is shorter than n={cfg.n}")
    return encode_words(sequence_words(symbols, memory), memory.dim, cfg)


# ── EMG spatial encoding ───────────────────────────────────────────────────


def spatial_encode_batch(samples: np.ndarray, channel_im: ItemMemory, level_cim: ContinuousItemMemory,
                         tie: Hypervector) -> np.ndarray:
    """Spatial vectors for ``(L, channels)`` level samples, packed ``(L, n_words)``."""
    samples = np.asarray(samples, dtype=np.int64)
    if samples.ndim != 2 or samples.shape[1] != len(channel_im):
        raise ValueError(f"samples must have shape (L, {len(channel_im)}), got {samples.shape}")
    if samples.size and (samples.min() < 0 or samples.max() >= level_cim.levels):
        raise ValueError(f"levels must lie in [0, {level_cim.levels - 1}]")
    dim = channel_im.dim
    C = samples.shape[1]
    out = np.empty((samples.shape[0], hdvec.n_words(dim)), dtype=hdvec.WORD_DTYPE)
    tie_bits = tie.to_bits().astype(bool)
    for start in range(0, samples.shape[0], _WINDOW_CHUNK):
        block = samples[start : start + _WINDOW_CHUNK]
        counts = np.zeros((block.shape[0], dim), dtype=np.int16)
        for c in range(C):
            bound = hdvec.not_words(level_cim.words[block[:, c]] ^ channel_im.words[c], dim)
            counts += hdvec.unpack_bits(bound, dim)
        bits = (2 * counts > C) | ((2 * counts == C) & tie_bits)
        out[start : start + block.shape[0]] = hdvec.pack_bits(bits)
    return out


def spatial_encode_emg(sample: Sequence[int], channel_im: ItemMemory, level_cim: ContinuousItemMemory,
                       tie: Hypervector) -> Hypervector:
    """Bind each channel vector with its level vector, then take the component-wise majority."""
    words = spatial_encode_batch(np.asarray(sample)[None, :], channel_im, level_cim, tie)
    return Hypervector._wrap(words[0], channel_im.dim)

