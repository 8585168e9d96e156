"""``imhdc`` command line: train, infer, sweep, synth-gen.

Exit codes: 0 ok, 2 ingest/data error, 3 config or model mismatch,
4 internal invariant breach. Values in a ``--config`` JSON file take
precedence over flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from imhdc import config as cfgmod, datasets, modelfile, pipeline
from imhdc.config import RunConfig
from imhdc.errors import EncodeError, IngestError, InvariantError, ModelMismatchError, TrainingError, UnknownSymbolError

EXIT_OK, EXIT_INGEST, EXIT_MISMATCH, EXIT_INVARIANT = 0, 2, 3, 4


def _noise_pair(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), float(value)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _str_list(text: str) -> list[str]:
    return [v for v in text.split(",") if v]


def _adc(text: str) -> int | None:
    return None if text.lower() in ("none", "off", "0") else int(text)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (or a bundled name such as partition_sweep); overrides flags")
    p.add_argument("--task", choices=cfgmod.TASKS)
    p.add_argument("--data", help="manifest (language/news) or CSV file (emg); relative to $IMHDC_DATA_ROOT if set")
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--encoder", choices=("exact", "all_minterm", "two_minterm"))
    p.add_argument("--permutation-mode", dest="permutation_mode", choices=("circular", "plain_shift"))
    p.add_argument("--im-seed", dest="im_seed", type=int)
    p.add_argument("--workers", type=int)


def _backend(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=cfgmod.BACKENDS)
    p.add_argument("--metric", choices=("dotp", "invhamm"))
    p.add_argument("--f", type=int, help="partition factor for the crossbar AM")
    p.add_argument("--adc-bits", dest="adc_bits", type=_adc, help="ADC resolution, or 'none' to bypass")
    p.add_argument("--layout-seed", dest="layout_seed", type=int)
    p.add_argument("--complement-shift", dest="complement_shift", choices=("right", "left"))
    p.add_argument("--noise", action="append", type=_noise_pair, default=[], metavar="KEY=VALUE",
                   help="noise model parameter, e.g. col_gradient=0.05 (repeatable)")
    p.add_argument("--out", default="imhdc-out", help="report directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imhdc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train prototypes and write a model file")
    _common(p)
    p.add_argument("--model", required=True, help="output model file")

    p = sub.add_parser("infer", help="classify the query split and write reports")
    _common(p)
    _backend(p)
    p.add_argument("--model", required=True)

    p = sub.add_parser("sweep", help="accuracy grid over partition factor, metric, gradient and encoder")
    _common(p)
    _backend(p)
    p.add_argument("--model", help="use this model instead of training (single encoder)")
    p.add_argument("--f-values", dest="f_values", type=_int_list)
    p.add_argument("--metrics", type=_str_list, default=None)
    p.add_argument("--gradients", type=_float_list, default=None)
    p.add_argument("--encoders", type=_str_list, default=None)

    p = sub.add_parser("synth-gen", help="write a synthetic corpus (text manifest or EMG CSV)")
    p.add_argument("--task", choices=("synth", "emg"), default="synth")
    p.add_argument("--out", required=True, help="output directory (synth) or CSV path (emg)")
    p.add_argument("--classes", type=int, help="class count (default 22 for synth, 5 for emg)")
    p.add_argument("--seed", type=int, default=cfgmod.DEFAULT_SYNTH["seed"])
    p.add_argument("--length", type=int, default=cfgmod.DEFAULT_SYNTH["length"])
    p.add_argument("--mixing", type=float, default=cfgmod.DEFAULT_SYNTH["mixing"])
    p.add_argument("--test-per-class", dest="test_per_class", type=int, default=cfgmod.DEFAULT_SYNTH["test_per_class"])
    p.add_argument("--query-length", dest="query_length", type=int, default=cfgmod.DEFAULT_SYNTH["query_length"])
    p.add_argument("--samples-per-class", dest="samples_per_class", type=int, default=1200)
    return parser


def _file_values(name: str | None) -> dict:
    if name is None:
        return {}
    p = Path(name)
    if not p.exists() and "/" not in name and not name.endswith(".json"):
        try:
            return cfgmod.bundled_config(name)
        except FileNotFoundError:
            pass
    return cfgmod.load_json(p)


def resolve_config(args: argparse.Namespace) -> tuple[RunConfig, set[str]]:
    """Merged config and the set of keys given explicitly (flags or config file)."""
    flags = {k: v for k, v in vars(args).items() if k not in ("noise", "command", "config", "model", "out")}
    if getattr(args, "noise", None):
        flags["noise"] = dict(args.noise)
    file_values = _file_values(args.config)
    explicit = {k for k, v in flags.items() if v is not None} | set(file_values)
    return cfgmod.merge(flags, file_values), explicit


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_train(args) -> int:
    cfg, _ = resolve_config(args)
    data = pipeline.load_task_data(cfg)
    model = pipeline.train_model(cfg, data.train)
    digest = modelfile.save(model, args.model)
    print(f"trained {model.am.c} prototypes, d={model.dim}, n={model.encoder.n}, "
          f"encoder={model.encoder.kind}; model {args.model} sha1={digest}")
    for lab in model.am.labels:
        key = str(lab)
        print(f"  {key}: {model.stats['symbols_per_class'][key]} symbols, "
              f"prototype popcount {model.stats['prototype_popcount'][key]}")
    return EXIT_OK


def _load_model(args, cfg: RunConfig, explicit: set[str]):
    model = modelfile.load(args.model)
    pipeline.check_compatible(model, cfg, explicit)
    return model, pipeline.model_config(model, cfg), modelfile.content_hash(Path(args.model).read_bytes())


def cmd_infer(args) -> int:
    cfg, explicit = resolve_config(args)
    model, cfg, digest = _load_model(args, cfg, explicit)
    data = pipeline.load_task_data(cfg)
    q = pipeline.encode_queries(model, data.test, cfg)
    truth = pipeline.truth_indices(model, data.test)
    report = pipeline.Report(model.am.labels, truth, pipeline.classify_queries(model, q, cfg))
    out = Path(args.out)
    _write(out / "report.csv", report.to_csv())
    _write(out / "confusion.csv", report.confusion_csv())
    _write(out / "report.json", report.to_json(cfg, digest))
    print(f"accuracy {report.accuracy:.4f} on {truth.size} queries "
          f"(backend={cfg.backend}, metric={cfg.metric}{', f=%d' % cfg.f if cfg.backend == 'crossbar' else ''})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, explicit = resolve_config(args)
    metrics = args.metrics or [cfg.metric]
    rows: list[dict] = []
    hashes: dict = {}
    if args.model:
        model, cfg, digest = _load_model(args, cfg, explicit)
        models = [(model, digest)]
        data = pipeline.load_task_data(cfg)
    else:
        data = pipeline.load_task_data(cfg)
        models = []
        for kind in args.encoders or [cfg.encoder]:
            m = pipeline.train_model(cfg.replace(encoder=kind), data.train)
            models.append((m, modelfile.content_hash(modelfile.to_bytes(m))))
    for model, digest in models:
        mcfg = pipeline.model_config(model, cfg)
        q = pipeline.encode_queries(model, data.test, mcfg)
        truth = pipeline.truth_indices(model, data.test)
        rows += pipeline.sweep_rows(model, q, truth, mcfg, metrics, args.gradients)
        hashes[model.encoder.kind] = digest
    out = Path(args.out)
    _write(out / "sweep.csv", pipeline.sweep_csv(rows))
    meta = {"config": pipeline.report_config(cfg), "model_sha1": hashes, "metrics": metrics,
            "gradients": args.gradients, "rows": rows}
    _write(out / "sweep.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(pipeline.sweep_csv(rows))
    return EXIT_OK


def cmd_synth_gen(args) -> int:
    if args.task == "emg":
        samples, labels = datasets.synth_emg(args.seed, classes=args.classes or 5,
                                             samples_per_class=args.samples_per_class)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        datasets.write_emg_csv(out, samples, labels, repeat=datasets.EMG_DOWNSAMPLE)
        print(f"wrote {labels.size * datasets.EMG_DOWNSAMPLE} raw EMG rows to {out}")
        return EXIT_OK
    corpus = datasets.synth_corpus(args.classes or cfgmod.DEFAULT_SYNTH["classes"], args.seed, args.length, args.mixing,
                                   args.test_per_class, args.query_length)
    manifest = datasets.write_text_corpus(corpus, args.out)
    print(f"wrote {len(corpus.train)} classes, {len(corpus.test)} queries; manifest {manifest}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "infer": cmd_infer, "sweep": cmd_sweep, "synth-gen": cmd_synth_gen}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (IngestError, TrainingError, EncodeError, UnknownSymbolError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except InvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ModelMismatchError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
