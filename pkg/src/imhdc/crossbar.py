"""Behavioral simulator of PCM crossbars for in-memory HDC.

Two read primitives are modelled:

* **read AND** (IM crossbars): one wordline is selected, the bitline gates
  carry a binary vector, and a sense amplifier thresholds each bitline
  current. With ideal devices this is the logical AND of the gates and the
  stored row.
* **analog dot product** (AM crossbar): query components drive wordlines at
  ``read_voltage`` and each enabled bitline integrates ``sum V * g``; the
  current goes through an ``adc_bits`` ADC.

Device model: a cell storing 1 (SET) is drawn from
``Normal(g_set_mean * (1 + gradient(r, c)), g_set_sigma)``, a 0 (RESET) from
``Normal(g_reset_mean, g_reset_sigma)``, both clamped at zero. The gradient
is a deterministic linear ramp over the array. Reads multiply the current by
``1 + eta`` with ``eta ~ Normal(0, read_noise_sigma)``.

Internally, AM currents are handled in units of ``V * g_set_mean`` (the
current of one ideal SET cell) so that the noise-free limit produces exact
integer sums.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from imhdc import hdvec, rng
from imhdc.assocmem import AssociativeMemoryModel, METRICS, winner
from imhdc.encoder import EncoderConfig
from imhdc.errors import UnknownSymbolError
from imhdc.hdvec import Accumulator, Hypervector
from imhdc.itemmem import ItemMemory

#: Cells whose noise-free sense margin exceeds this many read-noise sigmas are
#: resolved deterministically (flip probability below 1e-16).
SENSE_MARGIN_SIGMAS = 8.5

COMPLEMENT_SHIFTS = ("right", "left")


@dataclass(frozen=True)
class NoiseModel:
    """PCM programming variability, spatial gradient and read noise.

    Conductances in siemens. ``col_gradient``/``row_gradient`` are the
    end-to-end fractional change of the SET conductance across the array
    columns/rows (a centred linear ramp). ``drift_nu`` and ``drift_time``
    (``t / t0``) scale every conductance by ``drift_time ** -drift_nu``;
    the hook is off by default.
    """

    g_set_mean: float = 20e-6
    g_set_sigma: float = 2e-6
    g_reset_mean: float = 0.1e-6
    g_reset_sigma: float = 0.05e-6
    col_gradient: float = 0.10
    row_gradient: float = 0.0
    read_noise_sigma: float = 0.02
    drift_nu: float = 0.0
    drift_time: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("g_set_sigma", "g_reset_sigma", "read_noise_sigma", "drift_nu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.g_set_mean > self.g_reset_mean >= 0:
            raise ValueError("need g_set_mean > g_reset_mean >= 0")
        if self.drift_time <= 0:
            raise ValueError("drift_time must be > 0")

    @classmethod
    def ideal(cls, seed: int = 0, g_set_mean: float = 20e-6) -> NoiseModel:
        """No variability, no leakage, no gradient, no read noise."""
        return cls(g_set_mean=g_set_mean, g_set_sigma=0.0, g_reset_mean=0.0, g_reset_sigma=0.0,
                   col_gradient=0.0, row_gradient=0.0, read_noise_sigma=0.0, seed=seed)

    def replace(self, **changes) -> NoiseModel:
        return dataclasses.replace(self, **changes)

    def gradient(self, rows: int, cols: int) -> np.ndarray:
        r = np.linspace(-0.5, 0.5, rows) if rows > 1 else np.zeros(1)
        c = np.linspace(-0.5, 0.5, cols) if cols > 1 else np.zeros(1)
        return self.row_gradient * r[:, None] + self.col_gradient * c[None, :]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class CrossbarArray:
    """A programmed array plus its peripheral parameters.

    ``adc_bits=None`` bypasses the ADC. ``adc_full_scale`` defaults to
    ``rows * read_voltage * g_set_mean``; ``sense_threshold`` to half the
    current of one ideal SET cell.
    """

    conductance: np.ndarray
    noise: NoiseModel
    read_voltage: float = 0.3
    adc_bits: int | None = 8
    adc_full_scale: float | None = None
    sense_threshold: float | None = None
    tag: str = "array"
    _sense: dict = field(init=False, repr=False)

    def __post_init__(self):
        g = np.array(self.conductance, dtype=np.float64, copy=True)
        if g.ndim != 2 or np.any(g < 0):
            raise ValueError("conductance must be a non-negative 2-D matrix")
        g.flags.writeable = False
        object.__setattr__(self, "conductance", g)
        if self.adc_full_scale is None:
            object.__setattr__(self, "adc_full_scale", self.rows * self.unit_current)
        if self.sense_threshold is None:
            object.__setattr__(self, "sense_threshold", 0.5 * self.unit_current)
        if self.adc_bits is not None and self.adc_bits < 1:
            raise ValueError("adc_bits must be >= 1 or None")
        object.__setattr__(self, "_sense", {})

    @property
    def rows(self) -> int:
        return self.conductance.shape[0]

    @property
    def cols(self) -> int:
        return self.conductance.shape[1]

    @property
    def unit_current(self) -> float:
        """Current of one ideal SET cell, ``read_voltage * g_set_mean``."""
        return self.read_voltage * self.noise.g_set_mean

    @property
    def normalized(self) -> np.ndarray:
        """Conductance in units of ``g_set_mean``."""
        cached = self._sense.get("normalized")
        if cached is None:
            cached = self.conductance / self.noise.g_set_mean
            cached.flags.writeable = False
            self._sense["normalized"] = cached
        return cached

    def _sense_tables(self):
        """Noise-free sense result per cell (packed per row) and the marginal cells."""
        if "det" not in self._sense:
            current = self.read_voltage * self.conductance
            det = current > self.sense_threshold
            sigma = self.noise.read_noise_sigma
            if sigma > 0:
                with np.errstate(divide="ignore", invalid="ignore"):
                    z = (self.sense_threshold / current - 1.0) / sigma
                marginal = np.abs(z) < SENSE_MARGIN_SIGMAS
            else:
                marginal = np.zeros_like(det)
            self._sense["det"] = hdvec.pack_bits(det)
            self._sense["marginal"] = [np.flatnonzero(row) for row in marginal]
        return self._sense["det"], self._sense["marginal"]

    def column_currents(self, activations: np.ndarray, columns=slice(None),
                        noise_rng: np.random.Generator | None = None) -> np.ndarray:
        """Bitline currents in amperes for wordline activations ``(m, rows)`` of 0/1."""
        act = np.atleast_2d(np.asarray(activations, dtype=np.float64))
        out = self.read_voltage * (act @ self.conductance[:, columns])
        if noise_rng is not None and self.noise.read_noise_sigma > 0:
            out = out * (1.0 + self.noise.read_noise_sigma * noise_rng.standard_normal(out.shape))
        return out


def quantize(x: np.ndarray, full_scale: float, bits: int) -> np.ndarray:
    """ADC codes for non-negative inputs; saturates at ``2**bits - 1`` for ``x >= full_scale``."""
    levels = 2**bits - 1
    return np.clip(np.rint(np.asarray(x) * (levels / full_scale)), 0, levels).astype(np.int64)


def dequantize(codes: np.ndarray, full_scale: float, bits: int) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) * (full_scale / (2**bits - 1))


def program(pattern: np.ndarray, noise: NoiseModel, *, shape: tuple[int, int] | None = None,
            tag: str = "array", read_voltage: float = 0.3, adc_bits: int | None = 8,
            adc_full_scale: float | None = None, sense_threshold: float | None = None) -> CrossbarArray:
    """Single-shot programming of a bit pattern; unused cells of a larger array stay RESET."""
    pattern = np.asarray(pattern).astype(bool)
    if pattern.ndim != 2:
        raise ValueError("pattern must be a 2-D bit matrix")
    rows, cols = shape if shape is not None else pattern.shape
    if pattern.shape[0] > rows or pattern.shape[1] > cols:
        raise ValueError(f"pattern {pattern.shape} does not fit array {(rows, cols)}")
    bits = np.zeros((rows, cols), dtype=bool)
    bits[: pattern.shape[0], : pattern.shape[1]] = pattern
    gen = rng.generator(noise.seed, f"program/{tag}")
    set_mean = noise.g_set_mean * (1.0 + noise.gradient(rows, cols))
    g_set = set_mean + noise.g_set_sigma * gen.standard_normal((rows, cols))
    g_reset = noise.g_reset_mean + noise.g_reset_sigma * gen.standard_normal((rows, cols))
    g = np.clip(np.where(bits, g_set, g_reset), 0.0, None)
    if noise.drift_nu:
        g = g * noise.drift_time ** (-noise.drift_nu)
    return CrossbarArray(conductance=g, noise=noise, read_voltage=read_voltage, adc_bits=adc_bits,
                         adc_full_scale=adc_full_scale, sense_threshold=sense_threshold, tag=tag)


# ── in-memory read logic ───────────────────────────────────────────────────


def and_read_words(array: CrossbarArray, rows: np.ndarray, gates: np.ndarray,
                   noise_rng: np.random.Generator | None = None) -> np.ndarray:
    """Batched read-AND: row ``rows[i]`` gated by packed ``gates[i]``, sensed to bits.

    Only cells whose sense margin is within ``SENSE_MARGIN_SIGMAS`` of the
    read-noise sigma draw noise; the rest are decided by their noise-free
    current.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= array.rows):
        raise ValueError(f"wordline out of range [0, {array.rows - 1}]")
    det, marginal = array._sense_tables()
    gates = np.asarray(gates, dtype=hdvec.WORD_DTYPE)
    if gates.shape != (rows.size, det.shape[1]):
        raise ValueError(f"gates must have shape {(rows.size, det.shape[1])}, got {gates.shape}")
    out = gates & det[rows]
    if noise_rng is None or array.noise.read_noise_sigma == 0:
        return out
    sigma = array.noise.read_noise_sigma
    V, thr = array.read_voltage, array.sense_threshold
    for i, r in enumerate(rows):
        cols = marginal[r]
        if cols.size == 0:
            continue
        w, b = np.divmod(cols, hdvec.WORD_BITS)
        b = b.astype(np.uint64)
        gate_on = ((gates[i, w] >> b) & np.uint64(1)).astype(bool)
        cur = V * array.conductance[r, cols] * (1.0 + sigma * noise_rng.standard_normal(cols.size))
        sensed = gate_on & (cur > thr)
        for wi, bi, s in zip(w, b, sensed):
            bit = np.uint64(1) << bi
            out[i, wi] = (out[i, wi] | bit) if s else (out[i, wi] & ~bit)
    return out


def read_and(array: CrossbarArray, wordline: int, gates: Hypervector, read_index: int | None = None) -> Hypervector:
    """Sense ``gates AND stored row``; ``read_index`` selects the read-noise draw (None = noiseless)."""
    if gates.dim != array.cols:
        raise ValueError(f"gates dim {gates.dim} != array cols {array.cols}")
    if not 0 <= wordline < array.rows:
        raise ValueError(f"wordline {wordline} out of range [0, {array.rows - 1}]")
    gen = None if read_index is None else rng.generator(array.noise.seed, f"{array.tag}/read", read_index)
    words = and_read_words(array, np.array([wordline]), gates.words[None, :], gen)
    return Hypervector._wrap(words[0], gates.dim)


# ── in-memory 2-minterm encoder ────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class CrossbarEncoder:
    """IM crossbar (basis vectors) and complementary IM crossbar with minterm buffers.

    ``complement_shift`` is the shift applied to the complementary minterm
    buffer between cycles. ``"right"`` (the default) makes both buffers
    permute the same way, which is what the 2-minterm algebra requires;
    ``"left"`` mirrors it.
    """

    direct: CrossbarArray
    complement: CrossbarArray
    symbols: tuple[Hashable, ...]
    complement_shift: str = "right"

    def __post_init__(self):
        if self.complement_shift not in COMPLEMENT_SHIFTS:
            raise ValueError(f"complement_shift must be one of {COMPLEMENT_SHIFTS}")
        if self.direct.conductance.shape != self.complement.conductance.shape:
            raise ValueError("direct and complementary arrays differ in shape")

    @classmethod
    def from_item_memory(cls, im: ItemMemory, noise: NoiseModel, complement_shift: str = "right",
                         **peripherals) -> CrossbarEncoder:
        bits = hdvec.unpack_bits(im.words, im.dim)
        return cls(direct=program(bits, noise, tag="im", **peripherals),
                   complement=program(1 - bits, noise, tag="im-complement", **peripherals),
                   symbols=im.symbols, complement_shift=complement_shift)

    @property
    def dim(self) -> int:
        return self.direct.cols

    def rows_for(self, symbols) -> np.ndarray:
        index = {s: i for i, s in enumerate(self.symbols)}
        out = []
        for s in symbols:
            if isinstance(s, (int, np.integer)) and not isinstance(s, bool) and s not in index:
                if not 0 <= s < len(self.symbols):
                    raise UnknownSymbolError(s)
                out.append(int(s))
            else:
                try:
                    out.append(index[s])
                except KeyError:
                    raise UnknownSymbolError(s) from None
        return np.asarray(out, dtype=np.int64)

    def ngram_windows(self, seq_rows: np.ndarray, n: int, read_index: int | None = None) -> np.ndarray:
        """Run the n-cycle procedure for every stride-1 window at once; returns ``(l, n_words)``."""
        if n < 2:
            raise ValueError("the crossbar encoder needs n >= 2")
        seq_rows = np.asarray(seq_rows, dtype=np.int64)
        L = seq_rows.size
        if L < n:
            raise ValueError(f"sequence of length {L} is shorter than n={n}")
        l = L - n + 1
        d = self.dim
        gen_d = gen_c = None
        if read_index is not None:
            gen_d = rng.generator(self.direct.noise.seed, f"{self.direct.tag}/read", read_index)
            gen_c = rng.generator(self.complement.noise.seed, f"{self.complement.tag}/read", read_index)
        ones = np.broadcast_to(hdvec.Hypervector.ones(d).words, (l, hdvec.n_words(d))).copy()
        first = seq_rows[n - 1 : n - 1 + l]
        buf_d = and_read_words(self.direct, first, ones, gen_d)
        buf_c = and_read_words(self.complement, first, ones, gen_c)
        shift_c = hdvec.shift_up if self.complement_shift == "right" else hdvec.shift_down
        for j in range(2, n + 1):
            rows = seq_rows[n - j : n - j + l]
            buf_d = and_read_words(self.direct, rows, hdvec.shift_up(buf_d, 1, d), gen_d)
            buf_c = and_read_words(self.complement, rows, shift_c(buf_c, 1, d), gen_c)
        return buf_d | buf_c

    def ngram(self, symbols: Sequence, read_index: int | None = None) -> Hypervector:
        rows = self.rows_for(symbols)
        return Hypervector._wrap(self.ngram_windows(rows, len(rows), read_index)[0], self.dim)

    def encode_sequence(self, symbols, cfg: EncoderConfig, read_index: int | None = None) -> Hypervector:
        """Encode with in-memory n-grams and a digital bundler (threshold ``l * 2 / 2**n``)."""
        if cfg.kind != "two_minterm":
            raise ValueError("the crossbar encoder only implements the two_minterm encoder")
        rows = self.rows_for(symbols)
        acc = Accumulator(self.dim).add_words(self.ngram_windows(rows, cfg.n, read_index))
        return acc.binarize(cfg.threshold(acc.total_added))


def encode_two_minterm_crossbar(symbols: Sequence, encoder: CrossbarEncoder,
                                read_index: int | None = None) -> Hypervector:
    """One n-gram through the IM crossbars: ``n`` read-AND cycles, then OR of the buffers."""
    return encoder.ngram(symbols, read_index)


# ── partitioned associative memory ─────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class PartitionLayout:
    """``slots[p, i]`` is the column, within partition ``p``, holding class ``i``'s segment."""

    f: int
    segment_len: int
    slots: np.ndarray

    def __post_init__(self):
        slots = np.array(self.slots, dtype=np.int64, copy=True)
        if slots.ndim != 2 or slots.shape[0] != self.f:
            raise ValueError("slots must have shape (f, c)")
        c = slots.shape[1]
        for row in slots:
            if not np.array_equal(np.sort(row), np.arange(c)):
                raise ValueError("each partition's slot map must be a permutation")
        slots.flags.writeable = False
        object.__setattr__(self, "slots", slots)

    @property
    def n_classes(self) -> int:
        return self.slots.shape[1]

    @property
    def dim(self) -> int:
        return self.f * self.segment_len

    def column(self, partition: int, cls: int) -> int:
        return partition * self.n_classes + int(self.slots[partition, cls])

    def permutation(self, partition: int) -> np.ndarray:
        """Class stored at each column of a partition (the permutation E)."""
        return np.argsort(self.slots[partition])


@dataclass(frozen=True, eq=False)
class PartitionedAM:
    layout: PartitionLayout
    array: CrossbarArray
    complement_array: CrossbarArray | None
    labels: tuple[Hashable, ...]


def make_layout(c: int, d: int, f: int, seed: int) -> PartitionLayout:
    if f < 1 or d % f:
        raise ValueError(f"partition factor f={f} must divide d={d}")
    slots = np.empty((f, c), dtype=np.int64)
    if f == 1:
        slots[0] = np.arange(c)
        return PartitionLayout(f=1, segment_len=d, slots=slots)
    for p in range(f):
        E = rng.generator(seed, "partition/E", p).permutation(c)
        slots[p, E] = np.arange(c)
    return PartitionLayout(f=f, segment_len=d // f, slots=slots)


def _layout_pattern(bits: np.ndarray, layout: PartitionLayout) -> np.ndarray:
    c, s = layout.n_classes, layout.segment_len
    pattern = np.zeros((s, layout.f * c), dtype=np.uint8)
    for p in range(layout.f):
        for i in range(c):
            pattern[:, layout.column(p, i)] = bits[i, p * s : (p + 1) * s]
    return pattern


def build_partition_layout(model: AssociativeMemoryModel, f: int, seed: int, noise: NoiseModel, *,
                           read_voltage: float = 0.3, adc_bits: int | None = 8,
                           complement: bool | None = None) -> PartitionedAM:
    """Program the AM as ``f`` partitions of ``c`` columns, each column a ``d/f`` prototype segment.

    Column order within each partition comes from a fresh random permutation;
    ``f=1`` keeps the plain class order.
    The complementary array is built when the model carries complements.
    """
    layout = make_layout(model.c, model.dim, f, seed)
    bits = hdvec.unpack_bits(model.words, model.dim)
    s = layout.segment_len
    periph = dict(read_voltage=read_voltage, adc_bits=adc_bits,
                  adc_full_scale=s * read_voltage * noise.g_set_mean)
    array = program(_layout_pattern(bits, layout), noise, tag="am", **periph)
    comp = None
    if complement if complement is not None else model.with_complements:
        comp = program(_layout_pattern(1 - bits, layout), noise, tag="am-complement", **periph)
    return PartitionedAM(layout=layout, array=array, complement_array=comp, labels=model.labels)


def _partition_sums(qbits: np.ndarray, array: CrossbarArray, layout: PartitionLayout,
                    read_indices: np.ndarray | None) -> np.ndarray:
    """Per-class sums (units of one SET-cell current) accumulated over partitions."""
    m = qbits.shape[0]
    c, s, f = layout.n_classes, layout.segment_len, layout.f
    G = array.normalized
    raw = np.empty((m, f, c), dtype=np.float64)
    for p in range(f):
        raw[:, p, :] = qbits[:, p * s : (p + 1) * s] @ G[:, p * c : (p + 1) * c]
    sigma = array.noise.read_noise_sigma
    if read_indices is not None and sigma > 0:
        eta = np.stack([rng.generator(array.noise.seed, f"{array.tag}/read", int(k)).standard_normal(f * c)
                        for k in read_indices]).reshape(m, f, c)
        raw *= 1.0 + sigma * eta
    if array.adc_bits is not None:
        fs = array.adc_full_scale / array.unit_current
        raw = dequantize(quantize(raw, fs, array.adc_bits), fs, array.adc_bits)
    sums = np.zeros((m, c), dtype=np.float64)
    for p in range(f):
        sums += raw[:, p, layout.slots[p]]
    return sums


_QUERY_CHUNK = 256


def class_sums_words(q_words: np.ndarray, am: PartitionedAM, metric: str = "dotp",
                     read_offset: int | None = 0) -> np.ndarray:
    """Crossbar similarity of packed queries ``(m, n_words)``; ``read_offset=None`` disables read noise."""
    metric = metric.lower()
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    q = np.atleast_2d(np.asarray(q_words, dtype=hdvec.WORD_DTYPE))
    d = am.layout.dim
    if q.shape[1] != hdvec.n_words(d):
        raise ValueError(f"query words do not match AM dimension {d}")
    if metric == "invhamm" and am.complement_array is None:
        raise ValueError("invhamm needs the complementary AM array")
    out = np.empty((q.shape[0], am.layout.n_classes), dtype=np.float64)
    for start in range(0, q.shape[0], _QUERY_CHUNK):
        block = q[start : start + _QUERY_CHUNK]
        idx = None if read_offset is None else read_offset + start + np.arange(block.shape[0])
        qbits = hdvec.unpack_bits(block, d).astype(np.float64)
        sums = _partition_sums(qbits, am.array, am.layout, idx)
        if metric == "invhamm":
            sums += _partition_sums(1.0 - qbits, am.complement_array, am.layout, idx)
        out[start : start + block.shape[0]] = sums
    return out


def am_search_crossbar(q: Hypervector, am: PartitionedAM, metric: str = "dotp",
                       read_index: int | None = 0) -> Hashable:
    if q.dim != am.layout.dim:
        raise ValueError(f"query dim {q.dim} does not match AM dim {am.layout.dim}")
    return am.labels[int(winner(class_sums_words(q.words[None, :], am, metric, read_index)[0]))]


def classify_words_crossbar(q_words: np.ndarray, am: PartitionedAM, metric: str = "dotp",
                            read_offset: int | None = 0) -> np.ndarray:
    return winner(class_sums_words(q_words, am, metric, read_offset))


def sweep_partitions(model: AssociativeMemoryModel, q_words: np.ndarray, truth: np.ndarray,
                     f_values: Sequence[int], noise: NoiseModel, metric: str = "dotp",
                     layout_seed: int = 0, adc_bits: int | None = 8,
                     read_offset: int | None = 0) -> dict[int, float]:
    """Accuracy per partition factor, every factor using the same noise seed."""
    truth = np.asarray(truth)
    result = {}
    for f in f_values:
        am = build_partition_layout(model, f, layout_seed, noise, adc_bits=adc_bits,
                                    complement=metric.lower() == "invhamm")
        pred = classify_words_crossbar(q_words, am, metric, read_offset)
        result[f] = float(np.mean(pred == truth))
    return result


def export_conductance_csv(array: CrossbarArray, path) -> None:
    """Write the conductance matrix (siemens) as CSV for inspection."""
    np.savetxt(path, array.conductance, delimiter=",", fmt="%.6e")
