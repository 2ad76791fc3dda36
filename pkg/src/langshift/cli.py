"""The ``langshift`` command line: reproducible experiment pipelines.

Exit codes: 0 success, 1 runtime/data error, 2 usage or config error. Every
JSON report echoes its full configuration; the only non-deterministic field
is the timestamp, isolated in the report header.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import jsonschema

from . import __version__
from .embedstore import (
    load_dump,
    read_vocabulary,
    validate_dump,
    vocabulary_from_dataset,
    write_dump,
    write_vocabulary,
)
from .errors import ConfigError, LangshiftError
from .langrep import (
    ShiftSpec,
    apply_shift_dataset,
    compute_language_mean,
    load_mean,
    save_mean,
)
from .retrieval import pool_dataset, retrieve, tatoeba_accuracy
from .synthlab import (
    SynthConfig,
    generate,
    run_sensitivity_seeds,
    summarize_sensitivity,
)
from .tokentrans import (
    load_decode_table,
    merge_decode_tables,
    read_references,
    reports_to_csv,
    save_decode_table,
    sweep_alpha,
    translate_and_score,
    write_references,
)

log = logging.getLogger("langshift")

SYNTH_CONFIG_SCHEMA = {
    "type": "object",
    "required": ["dim", "n_pairs"],
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "n_pairs": {"type": "integer", "minimum": 1},
        "languages": {
            "type": "array",
            "items": {"type": "string", "minLength": 1},
            "minItems": 2,
            "maxItems": 2,
        },
        "offset_norm": {"type": "number", "minimum": 0},
        "offsets": {
            "type": ["array", "null"],
            "items": {"type": "array", "items": {"type": "number"}},
            "minItems": 2,
            "maxItems": 2,
        },
        "semantic_spread": {"type": "number", "minimum": 0},
        "noise_sigma": {"type": "number", "minimum": 0},
        "mean_sample_size": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "sentence_length": {"type": "integer", "minimum": 1},
        "n_types": {"type": "integer", "minimum": 1},
        "layer": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}


def _load_synth_config(path: str, seed_override: int | None) -> SynthConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, SYNTH_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema error in {path}: {exc.message}") from exc
    config = SynthConfig.from_dict(raw)
    if seed_override is not None:
        config = replace(config, seed=seed_override)
    return config


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _make_report(command: str, config: dict, results) -> dict:
    return {
        "header": {"timestamp": _timestamp(), "tool": "langshift", "version": __version__},
        "command": command,
        "config": config,
        "results": results,
    }


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _write_text(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _read_gold_tsv(path: str) -> dict[int, int]:
    gold: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'query<TAB>candidate'")
            gold[int(parts[0])] = int(parts[1])
    return gold


def _write_gold_tsv(gold: dict[int, int], path: str) -> None:
    _write_text(path, "".join(f"{q}\t{c}\n" for q, c in sorted(gold.items())))


def _load_means(paths: list[str]) -> dict:
    means = {}
    for p in paths:
        mean = load_mean(p)
        means[mean.language] = mean
    return means


def _parse_alphas(spec: str) -> list[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"alpha range must be start:stop:step, got {spec!r}")
        start, stop, step = (float(x) for x in parts)
        if step <= 0:
            raise ConfigError("alpha range step must be positive")
        values = []
        x = start
        while x <= stop + 1e-9:
            values.append(round(x, 10))
            x += step
        return values
    try:
        return [float(x) for x in spec.split(",") if x != ""]
    except ValueError as exc:
        raise ConfigError(f"bad alpha list {spec!r}") from exc


def _parse_layers(spec: str) -> list[int]:
    try:
        return [int(x) for x in spec.split(",") if x != ""]
    except ValueError as exc:
        raise ConfigError(f"bad layer list {spec!r}") from exc


def _fill_layer(template: str, layer: int) -> str:
    return template.replace("{layer}", str(layer))


def cmd_mean(args: argparse.Namespace) -> int:
    dataset = load_dump(args.dump)
    language = args.language or dataset.languages[0]
    mean = compute_language_mean(dataset, language, exclude_special=args.exclude_special)
    save_mean(mean, args.out)
    print(f"wrote mean for {language!r} (layer {mean.layer}, {mean.token_count} tokens) to {args.out}")
    return 0


def cmd_shift(args: argparse.Namespace) -> int:
    dataset = load_dump(args.dump)
    means = _load_means(args.mean)
    source = args.src or dataset.languages[0]
    target = args.tgt or source
    spec = ShiftSpec(
        source_language=source,
        target_language=target,
        alpha=args.alpha,
        layer=dataset.layer,
    )
    shifted = apply_shift_dataset(dataset, spec, means, mode=args.mode)
    write_dump(shifted, args.out)
    print(f"wrote shifted dump ({args.mode}) to {args.out}")
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    queries = load_dump(args.queries)
    candidates = load_dump(args.candidates)
    src = queries.languages[0]
    tgt = candidates.languages[0]
    means = _load_means(args.mean)

    if args.method == "zero_mean":
        spec_q = ShiftSpec(source_language=src, target_language=src, alpha=1.0, layer=queries.layer)
        spec_c = ShiftSpec(source_language=tgt, target_language=tgt, alpha=1.0, layer=candidates.layer)
        queries = apply_shift_dataset(queries, spec_q, means, mode="zero_mean")
        candidates = apply_shift_dataset(candidates, spec_c, means, mode="zero_mean")
    elif args.method == "mds":
        spec = ShiftSpec(source_language=src, target_language=tgt, alpha=args.alpha, layer=queries.layer)
        queries = apply_shift_dataset(queries, spec, means, mode="mds")

    result = retrieve(pool_dataset(queries), pool_dataset(candidates), k=args.k, n_threads=args.threads)
    results: dict = {
        "metric": "tatoeba_top1_accuracy",
        "direction": "forward nearest neighbor, queries to candidates",
        "source_language": src,
        "target_language": tgt,
        "method": args.method,
        "layer": queries.layer,
        "k": result.k,
        "n_queries": result.n_queries,
        "degenerate_queries": list(result.degenerate_queries),
        "score": None,
    }
    if args.gold:
        gold = _read_gold_tsv(args.gold)
        results["score"] = tatoeba_accuracy(result, gold)

    config = {
        "queries": args.queries,
        "candidates": args.candidates,
        "method": args.method,
        "alpha": args.alpha if args.method == "mds" else None,
        "k": args.k,
        "gold": args.gold,
        "means": list(args.mean),
    }
    report = _make_report("retrieve", config, results)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "source_language", "target_language", "method", "layer", "score"])
        writer.writerow(
            [results["metric"], src, tgt, args.method, results["layer"], results["score"]]
        )
        _write_text(args.out, buf.getvalue())
    else:
        _write_text(args.out, _dump_json(report))
    print(f"retrieval report written to {args.out}" + (
        f" (accuracy {results['score']:.4f})" if results["score"] is not None else ""
    ))
    return 0


def _translate_common(args: argparse.Namespace, layer: int):
    dataset = load_dump(_fill_layer(args.dump, layer))
    if dataset.layer != layer:
        raise ConfigError(f"dump {args.dump} holds layer {dataset.layer}, expected {layer}")
    means = _load_means([_fill_layer(args.mean_src, layer), _fill_layer(args.mean_tgt, layer)])
    table = load_decode_table(_fill_layer(args.table, layer))
    if args.src_vocab:
        src_vocab = read_vocabulary(args.src_vocab, args.src)
    else:
        src_vocab = vocabulary_from_dataset(dataset, args.src)
    if args.tgt_vocab:
        tgt_vocab = read_vocabulary(args.tgt_vocab, args.tgt)
    else:
        raise ConfigError("--tgt-vocab is required (the target token set is not in the dump)")
    return dataset, means, table, src_vocab, tgt_vocab


def cmd_translate_eval(args: argparse.Namespace) -> int:
    dataset, means, table, src_vocab, tgt_vocab = _translate_common(args, args.layer)
    references = read_references(args.refs)
    spec = ShiftSpec(
        source_language=args.src, target_language=args.tgt, alpha=args.alpha, layer=args.layer
    )
    report_obj = translate_and_score(
        dataset, spec, means, table, references, src_vocab, tgt_vocab
    )
    config = {k: getattr(args, k) for k in
              ("dump", "src", "tgt", "alpha", "layer", "table", "refs",
               "mean_src", "mean_tgt", "src_vocab", "tgt_vocab")}
    config["src_vocab_source"] = src_vocab.source
    config["tgt_vocab_source"] = tgt_vocab.source
    if args.format == "csv":
        _write_text(args.out, reports_to_csv([report_obj]))
    else:
        _write_text(args.out, _dump_json(_make_report("translate-eval", config, report_obj.to_dict())))
    rate = "undefined" if report_obj.conversion_rate is None else f"{report_obj.conversion_rate:.4f}"
    print(f"bleu1 {report_obj.bleu1:.4f}, conversion rate {rate} -> {args.out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    alphas = _parse_alphas(args.alphas)
    layers = _parse_layers(args.layers)
    if not alphas or not layers:
        raise ConfigError("alpha and layer grids must be non-empty")
    datasets = {}
    means = {}
    tables = {}
    src_vocab = tgt_vocab = None
    references = read_references(args.refs)
    for layer in layers:
        dataset, layer_means, table, src_vocab, tgt_vocab = _translate_common(args, layer)
        datasets[layer] = dataset
        means[layer] = layer_means
        tables[layer] = table
    reports = sweep_alpha(
        datasets, (args.src, args.tgt), alphas, layers, means, tables,
        references, src_vocab, tgt_vocab,
    )
    if args.format == "json":
        config = {"alphas": alphas, "layers": layers, "src": args.src, "tgt": args.tgt,
                  "dump": args.dump, "table": args.table, "refs": args.refs}
        _write_text(args.out, _dump_json(_make_report("sweep", config, [r.to_dict() for r in reports])))
    else:
        _write_text(args.out, reports_to_csv(reports))
    print(f"{len(reports)} sweep points written to {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    config = _load_synth_config(args.config, args.seed)
    corpus = generate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    manifest = None
    files: dict[str, str] = {}
    for language in config.languages:
        dump_path = out / f"{language}.l{config.layer}.embd"
        m = write_dump(corpus.datasets[language], dump_path)
        manifest = m if manifest is None else manifest.merge(m)
        files[f"dump_{language}"] = str(dump_path)

        vocab = corpus.decode_tables[language].vocabulary
        vocab_path = out / f"{language}.vocab.tsv"
        write_vocabulary(vocab, vocab_path)
        files[f"vocab_{language}"] = str(vocab_path)

        table_path = out / f"{language}.l{config.layer}.table"
        save_decode_table(corpus.decode_tables[language], table_path)
        files[f"table_{language}"] = str(table_path)

        mean_path = out / f"{language}.l{config.layer}.true.mean"
        save_mean(corpus.true_means[language], mean_path)
        files[f"true_mean_{language}"] = str(mean_path)

        refs_path = out / f"{language}.refs.txt"
        write_references(corpus.references(language), refs_path)
        files[f"refs_{language}"] = str(refs_path)

    merged_table = merge_decode_tables(
        corpus.decode_tables[config.languages[0]], corpus.decode_tables[config.languages[1]]
    )
    merged_path = out / f"union.l{config.layer}.table"
    save_decode_table(merged_table, merged_path)
    files["table_union"] = str(merged_path)

    gold_path = out / "gold.tsv"
    _write_gold_tsv(corpus.gold, str(gold_path))
    files["gold"] = str(gold_path)

    assert manifest is not None
    _write_text(str(out / "corpus.manifest.json"), manifest.to_json())
    files["corpus_manifest"] = str(out / "corpus.manifest.json")

    report = _make_report("synth", json.loads(config.to_json()), {"files": files})
    _write_text(str(out / "synth.report.json"), _dump_json(report))
    print(f"synthetic corpus written to {out}")
    return 0


def cmd_sensitivity(args: argparse.Namespace) -> int:
    config = _load_synth_config(args.config, args.seed)
    reports = run_sensitivity_seeds(config, args.seeds)
    results = {
        "per_seed": [r.to_dict() for r in reports],
        "summary": summarize_sensitivity(reports),
    }
    report = _make_report("sensitivity", json.loads(config.to_json()), results)
    _write_text(args.out, _dump_json(report))
    acc = results["summary"]["mean_accuracy"]
    print(
        "mean accuracy over "
        f"{args.seeds} seed(s): original {acc['original']:.4f}, "
        f"zero_mean {acc['zero_mean']:.4f}, mds {acc['mds']:.4f} -> {args.out}"
    )
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    failures = 0
    for path in args.paths:
        try:
            manifest = validate_dump(path)
            langs = ",".join(manifest.languages)
            print(f"OK   {path} (layer {manifest.layer}, dim {manifest.dim}, lang {langs})")
        except LangshiftError as exc:
            failures += 1
            print(f"FAIL {path}: {exc}", file=sys.stderr)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langshift",
        description="Language-mean analytics for multilingual token embeddings.",
    )
    parser.add_argument("--threads", type=int, default=1, help="worker threads for scoring")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--format", choices=["json", "csv"], default=None,
                        help="report format (default: json, except sweep which emits csv)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mean", help="compute and store a language mean")
    p.add_argument("--dump", required=True)
    p.add_argument("--language", default=None)
    p.add_argument("--exclude-special", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mean)

    p = sub.add_parser("shift", help="apply zero-mean or a mean-difference shift to a dump")
    p.add_argument("--dump", required=True)
    p.add_argument("--mode", choices=["zero_mean", "mds"], required=True)
    p.add_argument("--src", default=None)
    p.add_argument("--tgt", default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mean", action="append", default=[], help="mean file (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("retrieve", help="cross-lingual sentence retrieval with accuracy scoring")
    p.add_argument("--queries", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--method", choices=["original", "zero_mean", "mds"], default="original")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mean", action="append", default=[], help="mean file (repeatable)")
    p.add_argument("--gold", default=None, help="TSV query_id<TAB>candidate_id")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    def add_translate_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--dump", required=True, help="source-language dump ({layer} template ok)")
        p.add_argument("--src", required=True)
        p.add_argument("--tgt", required=True)
        p.add_argument("--table", required=True, help="decode table ({layer} template ok)")
        p.add_argument("--refs", required=True, help="reference token-id lines")
        p.add_argument("--mean-src", required=True, help="source mean file ({layer} template ok)")
        p.add_argument("--mean-tgt", required=True, help="target mean file ({layer} template ok)")
        p.add_argument("--src-vocab", default=None, help="TSV; defaults to ids observed in the dump")
        p.add_argument("--tgt-vocab", required=True, help="TSV token set of the target language")
        p.add_argument("--out", required=True)

    p = sub.add_parser("translate-eval", help="score token translation at one alpha and layer")
    add_translate_args(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--layer", type=int, required=True)
    p.set_defaults(func=cmd_translate_eval)

    p = sub.add_parser("sweep", help="token-translation scores over an alpha x layer grid")
    add_translate_args(p)
    p.add_argument("--alphas", required=True, help="start:stop:step or comma list")
    p.add_argument("--layers", required=True, help="comma list")
    p.set_defaults(func=cmd_sweep, default_format="csv")

    p = sub.add_parser("synth", help="generate a synthetic bilingual corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sensitivity", help="mean-estimation sensitivity experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("validate", help="validate dump files and their manifests")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("LANGSHIFT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.format is None:
        args.format = getattr(args, "default_format", "json")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"langshift: config error: {exc}", file=sys.stderr)
        return 2
    except LangshiftError as exc:
        print(f"langshift: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"langshift: i/o error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
