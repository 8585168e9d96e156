"""End-to-end train / infer / sweep on top of the ideal and crossbar backends."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

import imhdc
from imhdc import crossbar as cb, datasets, hdvec, rng
from imhdc.assocmem import classify_words, train
from imhdc.config import RunConfig
from imhdc.datasets import EmgRecord, TextRecord
from imhdc.encoder import EncoderConfig, encode_words, sequence_words
from imhdc.errors import IngestError, ModelMismatchError
from imhdc.itemmem import TEXT_SYMBOLS, generate_emg_memory, generate_im
from imhdc.modelfile import TrainedModel

Record = TextRecord | EmgRecord
_CHUNK = 64


@dataclass(frozen=True)
class TaskData:
    train: list
    test: list


def _records(recs: Sequence[Record]):
    return [(r.label, r.symbols if isinstance(r, TextRecord) else r.samples) for r in recs]


def load_task_data(cfg: RunConfig) -> TaskData:
    """Training and query records for the configured task."""
    if cfg.task == "synth":
        s = cfg.synth
        corpus = datasets.synth_corpus(s["classes"], s["seed"], s["length"], s["mixing"],
                                       s["test_per_class"], s["query_length"])
        return TaskData(corpus.train, corpus.test)
    if cfg.task == "emg":
        if cfg.data is None:
            samples, labels = datasets.synth_emg(cfg.synth["seed"])
            tr, te = datasets.split_emg(samples, labels, n=cfg.n)
        else:
            tr, te = datasets.load_emg(cfg.data, n=cfg.n)
        return TaskData(tr, te)
    if cfg.data is None:
        raise IngestError(f"task {cfg.task!r} needs a data manifest (--data)")
    load = datasets.load_language if cfg.task == "language" else datasets.load_news
    return TaskData(load(cfg.data, "train"), load(cfg.data, "test"))


def build_memory(cfg: RunConfig):
    if cfg.task == "emg":
        return generate_emg_memory(cfg.d, cfg.im_seed)
    return generate_im(len(TEXT_SYMBOLS), cfg.d, cfg.im_seed)


def encoder_config(cfg: RunConfig) -> EncoderConfig:
    return EncoderConfig(cfg.n, cfg.encoder, cfg.permutation_mode)


def train_model(cfg: RunConfig, records: Sequence[Record]) -> TrainedModel:
    memory = build_memory(cfg)
    enc = encoder_config(cfg)
    am = train(_records(records), memory, enc)
    counts: dict = {}
    for r in records:
        counts[str(r.label)] = counts.get(str(r.label), 0) + len(r)
    stats = {
        "symbols_per_class": counts,
        "prototype_popcount": {str(lab): p.popcount() for lab, p in zip(am.labels, am.prototypes)},
        "im_seed": cfg.im_seed,
        "generator": rng.GENERATOR_NAME,
    }
    return TrainedModel(task=cfg.task, encoder=enc, memory=memory, am=am, stats=stats)


def check_compatible(model: TrainedModel, cfg: RunConfig, explicit: set[str]) -> None:
    """Raise if a value given explicitly on the command line or in a config disagrees with the model."""
    pairs = {"d": model.dim, "n": model.encoder.n, "encoder": model.encoder.kind,
             "permutation_mode": model.encoder.permutation_mode, "task": model.task}
    for key, value in pairs.items():
        if key in explicit and getattr(cfg, key) != value:
            raise ModelMismatchError(f"config {key}={getattr(cfg, key)!r} but model has {key}={value!r}")


def model_config(model: TrainedModel, cfg: RunConfig) -> RunConfig:
    """``cfg`` with the model's encoder settings."""
    return cfg.replace(task=model.task, d=model.dim, n=model.encoder.n, encoder=model.encoder.kind,
                       permutation_mode=model.encoder.permutation_mode)


# ── query encoding and classification ──────────────────────────────────────


def _map_chunks(fn, total: int, workers: int) -> list:
    starts = list(range(0, total, _CHUNK))
    if workers <= 1 or len(starts) <= 1:
        return [fn(s) for s in starts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, starts))


def make_crossbar_encoder(model: TrainedModel, cfg: RunConfig) -> cb.CrossbarEncoder | None:
    """IM crossbars for the 2-minterm encoder; ``None`` when encoding stays digital."""
    if cfg.backend != "crossbar" or model.encoder.kind != "two_minterm" or model.task == "emg":
        return None
    return cb.CrossbarEncoder.from_item_memory(model.memory, cfg.noise_model(), cfg.complement_shift,
                                               adc_bits=cfg.adc_bits)


def encode_queries(model: TrainedModel, records: Sequence[Record], cfg: RunConfig) -> np.ndarray:
    """Packed query vectors ``(m, n_words)``; identical for any worker count."""
    enc_cb = make_crossbar_encoder(model, cfg)
    seqs = [s for _, s in _records(records)]
    for i, s in enumerate(seqs):
        if len(s) < model.encoder.n:
            raise IngestError(f"query {i} has {len(s)} symbols, fewer than n={model.encoder.n}")

    def run(start: int) -> np.ndarray:
        rows = []
        for i in range(start, min(start + _CHUNK, len(seqs))):
            if enc_cb is not None:
                rows.append(enc_cb.encode_sequence(seqs[i], model.encoder, read_index=i).words)
            else:
                rows.append(encode_words(sequence_words(seqs[i], model.memory), model.dim, model.encoder).words)
        return np.stack(rows)

    if not seqs:
        return np.zeros((0, hdvec.n_words(model.dim)), dtype=hdvec.WORD_DTYPE)
    return np.concatenate(_map_chunks(run, len(seqs), cfg.workers))


def classify_queries(model: TrainedModel, q_words: np.ndarray, cfg: RunConfig, f: int | None = None,
                     noise: cb.NoiseModel | None = None) -> np.ndarray:
    """Winning class indices under the configured backend."""
    if cfg.backend == "ideal":
        return np.concatenate([classify_words(q_words[s : s + _CHUNK], model.am, cfg.metric)
                               for s in range(0, len(q_words), _CHUNK)] or [np.zeros(0, dtype=np.int64)])
    am = cb.build_partition_layout(model.am, cfg.f if f is None else f, cfg.layout_seed,
                                   noise or cfg.noise_model(), adc_bits=cfg.adc_bits,
                                   complement=cfg.metric == "invhamm")

    def run(start: int) -> np.ndarray:
        return cb.classify_words_crossbar(q_words[start : start + _CHUNK], am, cfg.metric, read_offset=start)

    return np.concatenate(_map_chunks(run, len(q_words), cfg.workers) or [np.zeros(0, dtype=np.int64)])


def truth_indices(model: TrainedModel, records: Sequence[Record]) -> np.ndarray:
    index = {lab: i for i, lab in enumerate(model.am.labels)}
    try:
        return np.array([index[r.label] for r in records], dtype=np.int64)
    except KeyError as exc:
        raise ModelMismatchError(f"query label {exc.args[0]!r} is not a trained class") from None


# ── reports ────────────────────────────────────────────────────────────────


def report_config(cfg: RunConfig) -> dict:
    """Config echo for reports; the worker count does not affect results and is left out."""
    out = cfg.to_dict()
    del out["workers"]
    return out


@dataclass(frozen=True)
class Report:
    labels: tuple
    truth: np.ndarray
    predicted: np.ndarray

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.truth == self.predicted)) if self.truth.size else 0.0

    def confusion(self) -> np.ndarray:
        c = len(self.labels)
        m = np.zeros((c, c), dtype=np.int64)
        np.add.at(m, (self.truth, self.predicted), 1)
        return m

    def per_class(self) -> list[dict]:
        rows = []
        conf = self.confusion()
        for i, lab in enumerate(self.labels):
            total = int(conf[i].sum())
            correct = int(conf[i, i])
            rows.append({"label": lab, "queries": total, "correct": correct,
                         "accuracy": round(correct / total, 6) if total else None})
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "queries", "correct", "accuracy"])
        for r in self.per_class():
            w.writerow([r["label"], r["queries"], r["correct"], "" if r["accuracy"] is None else f"{r['accuracy']:.6f}"])
        w.writerow(["__overall__", int(self.truth.size), int(np.sum(self.truth == self.predicted)),
                    f"{self.accuracy:.6f}"])
        return buf.getvalue()

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.labels])
        for lab, row in zip(self.labels, self.confusion()):
            w.writerow([lab, *row.tolist()])
        return buf.getvalue()

    def to_json(self, cfg: RunConfig, model_hash: str) -> str:
        payload = {
            "package_version": imhdc.__version__,
            "config": report_config(cfg),
            "model_sha1": model_hash,
            "generator": rng.GENERATOR_NAME,
            "accuracy": round(self.accuracy, 6),
            "queries": int(self.truth.size),
            "per_class": self.per_class(),
            "confusion": {"labels": list(self.labels), "matrix": self.confusion().tolist()},
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def sweep_rows(model: TrainedModel, q_words: np.ndarray, truth: np.ndarray, cfg: RunConfig,
               metrics: Sequence[str], gradients: Sequence[float] | None) -> list[dict]:
    """One row per (metric, backend, f, gradient) setting for an already-encoded query set."""
    rows = []
    for metric in metrics:
        mcfg = cfg.replace(metric=metric)
        ideal = classify_queries(model, q_words, mcfg.replace(backend="ideal"))
        rows.append({"encoder": model.encoder.kind, "metric": metric, "backend": "ideal", "f": "",
                     "col_gradient": "", "accuracy": float(np.mean(ideal == truth))})
        grads = gradients if gradients is not None else [mcfg.noise_model().col_gradient]
        for g in grads:
            noise = mcfg.noise_model().replace(col_gradient=float(g))
            for f in cfg.f_values:
                pred = classify_queries(model, q_words, mcfg.replace(backend="crossbar"), f=f, noise=noise)
                rows.append({"encoder": model.encoder.kind, "metric": metric, "backend": "crossbar", "f": f,
                             "col_gradient": float(g), "accuracy": float(np.mean(pred == truth))})
    return rows


SWEEP_COLUMNS = ("encoder", "metric", "backend", "f", "col_gradient", "accuracy")


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([f"{r[k]:.6f}" if k == "accuracy" else r[k] for k in SWEEP_COLUMNS])
    return buf.getvalue()
