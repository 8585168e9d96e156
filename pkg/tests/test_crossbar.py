import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imhdc import crossbar as cb, hdvec
from imhdc.assocmem import AssociativeMemoryModel, classify_words, similarity_words
from imhdc.encoder import EncoderConfig, encode_sequence, ngram_two_minterm
from imhdc.errors import UnknownSymbolError
from imhdc.hdvec import Hypervector
from imhdc.itemmem import ItemMemory, generate_im

hv = Hypervector.from_bits
IDEAL = cb.NoiseModel.ideal()


def random_model(seed, c, d, with_complements=True):
    protos = tuple(Hypervector.random(d, seed, "proto", i) for i in range(c))
    return AssociativeMemoryModel(labels=tuple(range(1, c + 1)), prototypes=protos,
                                  with_complements=with_complements)


def random_queries(seed, m, d):
    return hdvec.pack_bits(np.random.default_rng(seed).integers(0, 2, (m, d), dtype=np.uint8))


# ── noise model and programming ───────────────────────────────────────────


def test_noise_model_validation():
    with pytest.raises(ValueError):
        cb.NoiseModel(g_set_sigma=-1e-6)
    with pytest.raises(ValueError):
        cb.NoiseModel(g_set_mean=1e-7, g_reset_mean=1e-6)
    ideal = cb.NoiseModel.ideal()
    assert ideal.read_noise_sigma == 0 and ideal.g_reset_mean == 0


def test_program_ideal_values():
    arr = cb.program(np.array([[1, 0], [0, 1]]), IDEAL)
    assert np.array_equal(arr.conductance, [[20e-6, 0], [0, 20e-6]])
    leaky = cb.program(np.array([[0]]), cb.NoiseModel(g_set_sigma=0, g_reset_sigma=0, read_noise_sigma=0))
    assert leaky.conductance[0, 0] == pytest.approx(0.1e-6)


def test_program_statistics_and_clamp():
    noise = cb.NoiseModel(col_gradient=0.0, seed=3)
    arr = cb.program(np.ones((200, 200)), noise)
    g = arr.conductance
    assert abs(g.mean() - 20e-6) < 5 * 2e-6 / 200
    assert abs(g.std() - 2e-6) < 0.05e-6
    reset = cb.program(np.zeros((200, 200)), noise).conductance
    assert reset.min() >= 0
    # a clamped normal(0.1, 0.05) puts ~2.3% of cells at exactly zero
    assert 0.01 < np.mean(reset == 0) < 0.04


def test_program_gradient():
    noise = cb.NoiseModel.ideal().replace(col_gradient=0.10)
    g = cb.program(np.ones((3, 11)), noise).conductance
    assert g[0, 0] == pytest.approx(20e-6 * 0.95)
    assert g[0, -1] == pytest.approx(20e-6 * 1.05)
    assert g[0, 5] == pytest.approx(20e-6)
    assert np.array_equal(g[0], g[2])


def test_program_deterministic_and_seeded():
    pat = np.random.default_rng(0).integers(0, 2, (30, 40))
    a = cb.program(pat, cb.NoiseModel(seed=5))
    b = cb.program(pat, cb.NoiseModel(seed=5))
    c = cb.program(pat, cb.NoiseModel(seed=6))
    assert np.array_equal(a.conductance, b.conductance)
    assert not np.array_equal(a.conductance, c.conductance)


def test_program_larger_array_and_fit():
    arr = cb.program(np.ones((2, 2)), IDEAL, shape=(3, 4))
    assert arr.conductance.shape == (3, 4)
    assert arr.conductance[2].sum() == 0 and arr.conductance[:, 2:].sum() == 0
    with pytest.raises(ValueError):
        cb.program(np.ones((4, 2)), IDEAL, shape=(3, 4))


def test_array_is_immutable():
    arr = cb.program(np.ones((2, 2)), IDEAL)
    with pytest.raises(ValueError):
        arr.conductance[0, 0] = 1.0


def test_drift_hook():
    noise = IDEAL.replace(drift_nu=0.05, drift_time=100.0)
    g = cb.program(np.ones((1, 1)), noise).conductance[0, 0]
    assert g == pytest.approx(20e-6 * 100 ** -0.05)


# ── Ohm's law and ADC ──────────────────────────────────────────────────────


def test_single_set_cell_current():
    arr = cb.program(np.array([[1]]), IDEAL)
    assert arr.column_currents(np.array([[1]]))[0, 0] == pytest.approx(6e-6)
    assert arr.unit_current == pytest.approx(6e-6)
    assert arr.sense_threshold == pytest.approx(3e-6)
    assert arr.adc_full_scale == pytest.approx(6e-6)


def test_quantize_examples():
    assert list(cb.quantize(np.array([0.0, 0.5, 1.0, 2.0]), 1.0, 8)) == [0, 128, 255, 255]
    assert cb.dequantize(np.array([255]), 1.0, 8)[0] == pytest.approx(1.0)


@given(st.lists(st.floats(0, 3, allow_nan=False), min_size=2, max_size=50), st.integers(1, 12))
@settings(max_examples=100, deadline=None)
def test_adc_monotone(xs, bits):
    xs = np.sort(np.array(xs))
    codes = cb.quantize(xs, 1.0, bits)
    assert np.all(np.diff(codes) >= 0)
    top = 2**bits - 1
    assert np.all(codes[xs >= 1.0] == top)
    # clipping happens only at or above full scale
    below = xs < 1.0 - 0.5 / top
    assert np.all(codes[below] < top)


# ── read AND ────────────────────────────────────────────────────────────────


def test_read_and_examples():
    arr = cb.program(np.array([[1, 0, 1, 0], [0, 1, 1, 0]]), IDEAL)
    assert cb.read_and(arr, 0, hv("1100")) == hv("1000")
    assert cb.read_and(arr, 0, Hypervector.ones(4)) == hv("1010")
    assert cb.read_and(arr, 1, Hypervector.zeros(4)) == Hypervector.zeros(4)
    with pytest.raises(ValueError):
        cb.read_and(arr, 2, hv("1111"))
    with pytest.raises(ValueError):
        cb.read_and(arr, 0, hv("111"))


def test_read_and_default_noise_is_exact_logic():
    # SET cells sit 5 sigma above the sense threshold, RESET cells far below
    rng = np.random.default_rng(1)
    bits = rng.integers(0, 2, (27, 1000))
    arr = cb.program(bits, cb.NoiseModel(seed=2))
    gates = Hypervector.random(1000, 9)
    for r in range(27):
        expected = gates.and_(hv(bits[r]))
        got = cb.read_and(arr, r, gates, read_index=r)
        assert got.hamming(expected) <= 2


def test_read_and_marginal_cells_flip_at_expected_rate():
    # a cell exactly at the threshold senses 1 half of the time
    noise = IDEAL.replace(read_noise_sigma=0.05)
    g = np.full((1, 64), 0.5 * 20e-6)
    arr = cb.CrossbarArray(conductance=g, noise=noise, tag="marginal")
    ones = np.broadcast_to(Hypervector.ones(64).words, (400, 1)).copy()
    out = cb.and_read_words(arr, np.zeros(400, dtype=int), ones, np.random.default_rng(0))
    frac = hdvec.popcount_words(out).sum() / (400 * 64)
    assert abs(frac - 0.5) < 5 * math.sqrt(0.25 / (400 * 64))
    # at a 1 sigma margin the analytic rate is Phi(1)
    g1 = np.full((1, 64), 0.5 * 20e-6 / (1 - 0.05))
    arr1 = cb.CrossbarArray(conductance=g1, noise=noise, tag="marginal1")
    out1 = cb.and_read_words(arr1, np.zeros(400, dtype=int), ones, np.random.default_rng(1))
    p = 0.5 * (1 + math.erf(1 / math.sqrt(2)))
    assert abs(hdvec.popcount_words(out1).sum() / (400 * 64) - p) < 5 * math.sqrt(p * (1 - p) / (400 * 64))


def test_read_and_padding_stays_zero():
    arr = cb.program(np.ones((1, 70)), cb.NoiseModel(read_noise_sigma=0.5, seed=1))
    out = cb.read_and(arr, 0, Hypervector.ones(70), read_index=3)
    assert (int(out.words[-1]) >> 6) == 0


def test_reads_are_deterministic():
    arr = cb.program(np.ones((1, 300)), IDEAL.replace(read_noise_sigma=0.3, g_set_mean=20e-6))
    a = cb.read_and(arr, 0, Hypervector.ones(300), read_index=7)
    b = cb.read_and(arr, 0, Hypervector.ones(300), read_index=7)
    assert a == b


# ── 2-minterm crossbar encoder ─────────────────────────────────────────────


def hand_built_im():
    b = [hv("1011_0010"), hv("0110_1101"), hv("1100_0111")]
    return ItemMemory(symbols=("x", "y", "z"), words=np.stack([v.words for v in b]), dim=8, seed=0), b


def test_crossbar_encoder_hand_trace_n2():
    im, b = hand_built_im()
    enc = cb.CrossbarEncoder.from_item_memory(im, IDEAL, adc_bits=None)
    b1, b2 = b[0], b[1]
    expected = b1.and_(b2.permute(1, "plain_right")).or_(b1.not_().and_(b2.not_().permute(1, "plain_right")))
    assert cb.encode_two_minterm_crossbar(["x", "y"], enc) == expected


def test_crossbar_encoder_rejects_n1_and_unknown():
    im, _ = hand_built_im()
    enc = cb.CrossbarEncoder.from_item_memory(im, IDEAL)
    with pytest.raises(ValueError):
        cb.encode_two_minterm_crossbar(["x"], enc)
    with pytest.raises(UnknownSymbolError):
        cb.encode_two_minterm_crossbar(["x", "w"], enc)
    with pytest.raises(ValueError):
        cb.CrossbarEncoder(enc.direct, enc.complement, enc.symbols, complement_shift="up")


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_crossbar_encoder_matches_plain_shift_two_minterm(n):
    im = generate_im(27, 1000, seed=11)
    enc = cb.CrossbarEncoder.from_item_memory(im, IDEAL, adc_bits=None)
    rng = np.random.default_rng(n)
    for _ in range(100):
        sym = rng.integers(0, 27, n)
        expected = ngram_two_minterm([im.vectors[s] for s in sym], "plain_shift")
        assert cb.encode_two_minterm_crossbar(sym, enc) == expected


def test_left_complement_shift_differs_from_algebra():
    im = generate_im(27, 500, seed=11)
    enc = cb.CrossbarEncoder.from_item_memory(im, IDEAL, complement_shift="left")
    sym = [1, 2, 3, 4]
    direct = im.vectors[1]
    for k in range(1, 4):
        direct = direct.and_(im.vectors[sym[k]].permute(k, "plain_right"))
    comp = im.vectors[1].not_()
    for k in range(1, 4):
        comp = comp.and_(im.vectors[sym[k]].not_().permute(k, "plain_left"))
    assert cb.encode_two_minterm_crossbar(sym, enc) == direct.or_(comp)
    assert cb.encode_two_minterm_crossbar(sym, enc) != ngram_two_minterm(
        [im.vectors[s] for s in sym], "plain_shift")


def test_crossbar_sequence_encoding_matches_digital():
    im = generate_im(27, 2000, seed=3)
    enc = cb.CrossbarEncoder.from_item_memory(im, IDEAL)
    seq = np.random.default_rng(4).integers(0, 27, 300)
    cfg = EncoderConfig(4, "two_minterm", "plain_shift")
    assert enc.encode_sequence(seq, cfg) == encode_sequence(seq, im, cfg)
    with pytest.raises(ValueError):
        enc.encode_sequence(seq, EncoderConfig(4, "exact"))


def test_crossbar_encoder_with_default_noise_is_close():
    im = generate_im(27, 2000, seed=3)
    enc = cb.CrossbarEncoder.from_item_memory(im, cb.NoiseModel(seed=1))
    seq = np.random.default_rng(4).integers(0, 27, 300)
    cfg = EncoderConfig(4, "two_minterm", "plain_shift")
    noisy = enc.encode_sequence(seq, cfg, read_index=0)
    assert noisy == enc.encode_sequence(seq, cfg, read_index=0)
    assert noisy.hamming(encode_sequence(seq, im, cfg)) < 20


# ── partitioned associative memory ─────────────────────────────────────────


def test_layout_f2_c3_d4():
    protos = (hv("1100"), hv("0110"), hv("1011"))
    model = AssociativeMemoryModel(labels=("a", "b", "c"), prototypes=protos)
    am = cb.build_partition_layout(model, f=2, seed=3, noise=IDEAL, adc_bits=None)
    lay = am.layout
    assert lay.segment_len == 2 and am.array.conductance.shape == (2, 6)
    bits = am.array.conductance / 20e-6
    for p in range(2):
        E = lay.permutation(p)
        assert sorted(E) == [0, 1, 2]
        for i, proto in enumerate(protos):
            col = lay.column(p, i)
            assert p * 3 <= col < (p + 1) * 3
            assert E[col - p * 3] == i
            assert np.array_equal(bits[:, col], proto.to_bits()[2 * p : 2 * p + 2])
    comp = am.complement_array.conductance / 20e-6
    assert np.array_equal(comp, 1 - bits)


def test_layout_f1_is_plain_and_full_scale_shape():
    model = random_model(1, 22, 10000, with_complements=False)
    am1 = cb.build_partition_layout(model, 1, 0, IDEAL)
    assert np.array_equal(am1.layout.slots[0], np.arange(22))
    am10 = cb.build_partition_layout(model, 10, 0, IDEAL)
    assert am10.array.conductance.shape == (1000, 220)
    assert am10.complement_array is None
    assert am10.array.adc_full_scale == pytest.approx(1000 * 6e-6)


def test_layout_errors():
    model = random_model(1, 3, 100)
    with pytest.raises(ValueError):
        cb.build_partition_layout(model, 3, 0, IDEAL)
    with pytest.raises(ValueError):
        cb.PartitionLayout(f=1, segment_len=4, slots=np.array([[0, 0, 1]]))


def test_ideal_sums_equal_dotp_and_partition_invariant():
    d, c = 1000, 6
    model = random_model(2, c, d)
    Q = random_queries(3, 200, d)
    for metric in ("dotp", "invhamm"):
        ideal = similarity_words(Q, model, metric)
        for f in (1, 2, 5, 10):
            am = cb.build_partition_layout(model, f, seed=f, noise=IDEAL, adc_bits=None)
            sums = cb.class_sums_words(Q, am, metric)
            assert np.array_equal(sums, ideal)


def test_query_equal_to_prototype_wins():
    model = random_model(4, 5, 2000)
    am = cb.build_partition_layout(model, 10, 1, IDEAL, adc_bits=None)
    for metric in ("dotp", "invhamm"):
        assert cb.am_search_crossbar(model.prototypes[2], am, metric) == 3
    with pytest.raises(ValueError):
        cb.am_search_crossbar(Hypervector.random(1000, 1), am)
    with pytest.raises(ValueError):
        cb.class_sums_words(model.words, am, "cosine")


def test_crossbar_predictions_deterministic_under_noise():
    model = random_model(5, 8, 2000)
    Q = random_queries(6, 50, 2000)
    noise = cb.NoiseModel(seed=9)
    a = cb.classify_words_crossbar(Q, cb.build_partition_layout(model, 2, 0, noise), "invhamm")
    b = cb.classify_words_crossbar(Q, cb.build_partition_layout(model, 2, 0, noise), "invhamm")
    assert np.array_equal(a, b)


def test_sweep_zero_noise_is_constant():
    d, c = 1000, 5
    model = random_model(7, c, d)
    Q = random_queries(8, 100, d)
    truth = classify_words(Q, model)
    result = cb.sweep_partitions(model, Q, truth, [1, 2, 10], IDEAL, adc_bits=None)
    assert result == {1: 1.0, 2: 1.0, 10: 1.0}


def test_export_csv(tmp_path):
    arr = cb.program(np.array([[1, 0]]), IDEAL)
    path = tmp_path / "g.csv"
    cb.export_conductance_csv(arr, path)
    assert np.allclose(np.loadtxt(path, delimiter=","), [20e-6, 0.0])
