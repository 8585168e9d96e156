"""Acceptance criteria 1-11, each printing one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""

from __future__ import annotations

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from imhdc import cli, config as cfgmod, crossbar as cb, datasets, hdvec, pipeline
from imhdc.assocmem import AssociativeMemoryModel, classify_words, similarity_words
from imhdc.config import RunConfig
from imhdc.encoder import ngram_all_minterm, ngram_exact, ngram_two_minterm
from imhdc.hdvec import Hypervector
from imhdc.itemmem import generate_im

D = 10000


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def _real_language_manifest() -> Path | None:
    root = os.environ.get(datasets.DATA_ROOT_ENV)
    if root and (Path(root) / "language" / datasets.MANIFEST_NAME).is_file():
        return Path(root) / "language"
    return None


@pytest.fixture(scope="module")
def partition_sweep():
    """The bundled gradient-noise setup, trained once.

    Uses the language corpus under ``$IMHDC_DATA_ROOT/language`` when present,
    otherwise the synthetic 22-class corpus.
    """
    start = time.perf_counter()
    cfg = cfgmod.merge({}, cfgmod.bundled_config("partition_sweep"))
    real = _real_language_manifest()
    if real is not None:
        cfg = cfg.replace(task="language", data=str(real))
    data = pipeline.load_task_data(cfg)
    model = pipeline.train_model(cfg, data.train)
    q = pipeline.encode_queries(model, data.test, cfg)
    truth = pipeline.truth_indices(model, data.test)
    return cfg, data, model, q, truth, time.perf_counter() - start


def accuracy(pred, truth) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(truth)))


# ── 1 ──────────────────────────────────────────────────────────────────────


def test_c01_all_minterm_equals_exact(verdict):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    mismatches = checked = 0
    for n in range(1, 6):
        for d in (63, 64, 1000):
            for _ in range(500):
                basis = [Hypervector.from_bits(rng.integers(0, 2, d, dtype=np.uint8)) for _ in range(n)]
                mismatches += ngram_all_minterm(basis, "circular") != ngram_exact(basis, "circular")
                checked += 1
    elapsed = time.perf_counter() - start
    verdict(1, mismatches == 0 and elapsed < 10,
            f"{checked} bases, {mismatches} mismatches, {elapsed:.2f}s (limit 10s)")


# ── 2 ──────────────────────────────────────────────────────────────────────


def test_c02_two_minterm_n2_is_exact(verdict):
    mismatches = boundary_only = 0
    for i in range(1000):
        a, b = Hypervector.random(D, 202, "a", i), Hypervector.random(D, 202, "b", i)
        mismatches += ngram_two_minterm([a, b]) != ngram_exact([a, b])
        # plain shift: the zero-filled component is not complemented, so only component 0 may differ
        diff = ngram_two_minterm([a, b], "plain_shift").xor(ngram_exact([a, b], "plain_shift")).to_bits()
        boundary_only += not diff[1:].any()
    verdict(2, mismatches == 0 and boundary_only == 1000,
            f"1000 circular pairs, {mismatches} mismatches; plain shift differs only at component 0 "
            f"in {boundary_only}/1000")


# ── 3 ──────────────────────────────────────────────────────────────────────


def test_c03_crossbar_encoder_matches_digital(verdict):
    im = generate_im(27, D, seed=303)
    enc = cb.CrossbarEncoder.from_item_memory(im, cb.NoiseModel.ideal(), adc_bits=None)
    rng = np.random.default_rng(303)
    mismatches = {}
    for n in (2, 4, 5):
        bad = 0
        for i in range(1000):
            sym = rng.integers(0, 27, n)
            digital = ngram_two_minterm([im.vectors[s] for s in sym], "plain_shift")
            bad += cb.encode_two_minterm_crossbar(sym, enc, read_index=i) != digital
        mismatches[n] = bad
    verdict(3, not any(mismatches.values()), f"1000 n-grams per n, mismatches by n: {mismatches}")


# ── 4 ──────────────────────────────────────────────────────────────────────


def test_c04_ideal_limit_am_equivalence(verdict, partition_sweep):
    cfg, data, model, q, truth, setup = partition_sweep
    extra = datasets.synth_corpus(22, seed=404, length=500, mixing=0.38, test_per_class=50, query_length=100)
    q_all = np.concatenate([q, pipeline.encode_queries(model, extra.test, cfg)])
    agree = {}
    for metric in ("dotp", "invhamm"):
        ideal = classify_words(q_all, model.am, metric)
        for f in (1, 2, 10):
            am = cb.build_partition_layout(model.am, f, seed=4, noise=cb.NoiseModel.ideal(), adc_bits=None)
            agree[(metric, f)] = accuracy(cb.classify_words_crossbar(q_all, am, metric, read_offset=None), ideal)
    ok = len(q_all) >= 2000 and all(v == 1.0 for v in agree.values())
    verdict(4, ok, f"{len(q_all)} queries; agreement {min(agree.values()):.4f} minimum over metrics x f={{1,2,10}}")


# ── 5 ──────────────────────────────────────────────────────────────────────


def test_c05_metric_identity(verdict):
    rng = np.random.default_rng(505)
    c, m = 10, 1000
    P = hdvec.pack_bits(rng.integers(0, 2, (c, D), dtype=np.uint8))
    Q = hdvec.pack_bits(rng.integers(0, 2, (m, D), dtype=np.uint8))
    model = AssociativeMemoryModel(labels=tuple(range(c)), prototypes=tuple(Hypervector(w, D) for w in P))
    dotp = similarity_words(Q, model, "dotp")
    inv = similarity_words(Q, model, "invhamm")
    identity = D - hdvec.popcount_words(Q)[:, None] - hdvec.popcount_words(P)[None, :] + 2 * dotp
    identity_ok = np.array_equal(inv, identity)
    # equal prototype popcounts: both metrics pick the same winner
    rows = np.zeros((c, D), dtype=np.uint8)
    for i in range(c):
        rows[i, rng.choice(D, 4900, replace=False)] = 1
    eq = AssociativeMemoryModel(labels=tuple(range(c)),
                                prototypes=tuple(Hypervector(w, D) for w in hdvec.pack_bits(rows)))
    argmax_ok = np.array_equal(classify_words(Q, eq, "dotp"), classify_words(Q, eq, "invhamm"))
    verdict(5, identity_ok and argmax_ok,
            f"{c * m} pairs identity {'exact' if identity_ok else 'violated'}; "
            f"equal-popcount argmax {'agrees' if argmax_ok else 'differs'} on {m} queries")


# ── 6 ──────────────────────────────────────────────────────────────────────


def test_c06_quasiorthogonality(verdict):
    sigma = math.sqrt(D / 4)
    rnd = np.array([Hypervector.random(D, 600 + i).hamming(Hypervector.random(D, 1600 + i)) for i in range(1000)])
    rnd_ok = abs(rnd.mean() - D / 2) <= 15 and np.all(np.abs(rnd - D / 2) <= 7 * sigma)

    im = generate_im(27, D, seed=7)
    ham = [im.vectors[i].hamming(im.vectors[j]) for i in range(27) for j in range(i + 1, 27)]
    im_ok = min(ham) >= D / 2 - 7 * sigma and max(ham) <= D / 2 + 7 * sigma

    rng = np.random.default_rng(606)
    tri = []
    while len(tri) < 1000:
        s1, s2 = rng.integers(0, 27, 3), rng.integers(0, 27, 3)
        if np.array_equal(s1, s2):
            continue
        tri.append(ngram_exact([im.vectors[s] for s in s1]).hamming(ngram_exact([im.vectors[s] for s in s2])))
    tri = np.array(tri)
    tri_ok = np.all(np.abs(tri - D / 2) <= 7 * sigma)

    sparse_bad = 0
    for n in (3, 4, 5):
        p = 2 / 2**n
        bound = 1.3 * p * p + 5 * math.sqrt(p * p * (1 - p * p) / D)
        done = 0
        while done < 1000:
            s1, s2 = rng.integers(0, 27, n), rng.integers(0, 27, n)
            if np.any(s1 == s2):  # position-wise distinct n-grams only
                continue
            g1 = ngram_two_minterm([im.vectors[s] for s in s1], "plain_shift")
            g2 = ngram_two_minterm([im.vectors[s] for s in s2], "plain_shift")
            sparse_bad += g1.dot(g2) / D >= bound
            done += 1
    ok = rnd_ok and im_ok and tri_ok and sparse_bad == 0
    verdict(6, ok, f"random pairs mean {rnd.mean():.1f}, range [{rnd.min()}, {rnd.max()}]; "
                   f"IM range [{min(ham)}, {max(ham)}]; trigram range [{tri.min()}, {tri.max()}]; "
                   f"2-minterm overlap violations {sparse_bad}/3000")


# ── 7 ──────────────────────────────────────────────────────────────────────


def test_c07_partitioning_recovers_accuracy(verdict, partition_sweep):
    start = time.perf_counter()
    cfg, data, model, q, truth, setup = partition_sweep
    start -= setup  # corpus generation, training and query encoding count toward the budget
    clean = accuracy(classify_words(q, model.am, cfg.metric), truth)
    acc = cb.sweep_partitions(model.am, q, truth, cfg.f_values, cfg.noise_model(), cfg.metric,
                              layout_seed=cfg.layout_seed, adc_bits=cfg.adc_bits)
    elapsed = time.perf_counter() - start
    gap = acc[10] - acc[1]
    ok = gap >= 0.05 and clean - acc[10] <= 0.03 and elapsed < 300
    verdict(7, ok, f"{cfg.task} corpus, clean {clean:.4f}; f=1 {acc[1]:.4f}, f=2 {acc[2]:.4f}, "
                   f"f=10 {acc[10]:.4f}; gain {100 * gap:.1f} pts (>=5), f=10 deficit "
                   f"{100 * (clean - acc[10]):.1f} pts (<=3); {elapsed:.1f}s")


# ── 8 ──────────────────────────────────────────────────────────────────────


def test_c08_two_minterm_close_to_all_minterm(verdict, partition_sweep):
    cfg, data, *_ = partition_sweep
    results = {}
    for kind, mode in (("all_minterm", "circular"), ("two_minterm", "plain_shift")):
        kcfg = cfg.replace(encoder=kind, permutation_mode=mode, backend="ideal")
        model = pipeline.train_model(kcfg, data.train)
        q = pipeline.encode_queries(model, data.test, kcfg)
        results[kind] = accuracy(classify_words(q, model.am, cfg.metric), pipeline.truth_indices(model, data.test))
    ok = results["two_minterm"] >= results["all_minterm"] - 0.03
    verdict(8, ok, f"{cfg.task} corpus, ideal backend: all-minterm {results['all_minterm']:.4f}, "
                   f"two-minterm (plain shift) {results['two_minterm']:.4f}; tolerance 3 pts")


# ── 9 ──────────────────────────────────────────────────────────────────────


def test_c09_invhamm_not_worse_than_dotp(verdict, partition_sweep):
    cfg, _, model, q, truth, _ = partition_sweep
    acc = {"dotp": [], "invhamm": []}
    for seed in range(5):
        noise = cfg.noise_model().replace(seed=900 + seed)
        for metric in acc:
            am = cb.build_partition_layout(model.am, 10, seed, noise, adc_bits=cfg.adc_bits,
                                           complement=metric == "invhamm")
            acc[metric].append(accuracy(cb.classify_words_crossbar(q, am, metric), truth))
    mean = {k: float(np.mean(v)) for k, v in acc.items()}
    verdict(9, mean["invhamm"] >= mean["dotp"] - 0.005,
            f"5 noisy runs at f=10: mean invHamm {mean['invhamm']:.4f}, mean dotp {mean['dotp']:.4f}")


# ── 10 ─────────────────────────────────────────────────────────────────────


def test_c10_full_scale_pipeline(verdict):
    start = time.perf_counter()
    cfg = RunConfig(task="synth", d=10000, n=4, synth={"test_per_class": 46, "seed": 1010})
    data = pipeline.load_task_data(cfg)
    model = pipeline.train_model(cfg, data.train)
    test = data.test[:1000]
    pred = pipeline.classify_queries(model, pipeline.encode_queries(model, test, cfg), cfg)
    acc = accuracy(pred, pipeline.truth_indices(model, test))
    elapsed = time.perf_counter() - start
    ok = model.am.c == 22 and model.dim == 10000 and len(test) == 1000 and elapsed < 600
    detail = f"d=10000 n=4 h=27 c=22, 1000 synthetic queries, accuracy {acc:.4f}, {elapsed:.1f}s (limit 600s)"
    real = _real_language_manifest()
    if real is not None:
        rcfg = RunConfig(task="language", data=str(real))
        rdata = pipeline.load_task_data(rcfg)
        rmodel = pipeline.train_model(rcfg, rdata.train)
        racc = accuracy(pipeline.classify_queries(rmodel, pipeline.encode_queries(rmodel, rdata.test, rcfg), rcfg),
                        pipeline.truth_indices(rmodel, rdata.test))
        ok = ok and racc >= 0.90
        detail += f"; real corpus accuracy {racc:.4f} (floor 0.90)"
    else:
        detail += "; no real corpus supplied"
    verdict(10, ok, detail)


# ── 11 ─────────────────────────────────────────────────────────────────────


def test_c11_byte_identical_reports(verdict, tmp_path):
    synth = ["--config", str(tmp_path / "cfg.json")]
    (tmp_path / "cfg.json").write_text(
        '{"synth": {"classes": 4, "length": 2000, "test_per_class": 10, "query_length": 60}}')
    model = tmp_path / "m.bin"
    assert cli.main(["train", "--task", "synth", "--d", "2000", "--model", str(model), *synth]) == 0
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert cli.main(["infer", "--task", "synth", "--model", str(model), "--backend", "crossbar", "--f", "4",
                         "--metric", "invhamm", "--noise", "col_gradient=0.1", "--out", str(out), *synth]) == 0
        assert cli.main(["sweep", "--task", "synth", "--d", "2000", "--f-values", "1,2,4", "--gradients", "0,0.1",
                         "--metrics", "dotp,invhamm", "--out", str(out / "sweep"), *synth]) == 0
        runs.append(out)
    names = ["report.csv", "confusion.csv", "report.json", "sweep/sweep.csv", "sweep/sweep.json"]
    same = [(runs[0] / n).read_bytes() == (runs[1] / n).read_bytes() for n in names]
    verdict(11, all(same), f"{sum(same)}/{len(names)} report files byte-identical across two runs")
