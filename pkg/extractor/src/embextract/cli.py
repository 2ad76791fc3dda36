"""``extract`` command line: text corpus in, embedding dumps out."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .extract import ExtractionJob, dump_decode_table, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Dump per-layer token embeddings from a pretrained encoder.",
    )
    parser.add_argument("--model", required=True, help="model identifier or local path")
    parser.add_argument("--input", required=True, help="text file, one sentence per line")
    parser.add_argument("--lang", required=True, help="language code of the input")
    parser.add_argument("--layers", required=True, help="comma-separated layer indices")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--max-tokens", type=int, default=None,
                        help="stop after this many tokens")
    parser.add_argument("--decode-table", default=None,
                        help="also export the output-embedding table to this path")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("EMBEXTRACT_LOG", "WARNING").upper())
    try:
        import transformers

        transformers.logging.set_verbosity_error()
    except Exception:
        pass
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        layers = [int(x) for x in args.layers.split(",") if x != ""]
        job = ExtractionJob(
            model=args.model,
            input_path=args.input,
            language=args.lang,
            layers=layers,
            out_dir=args.out,
            batch_size=args.batch_size,
            max_tokens=args.max_tokens,
        )
        result = extract(job)
        print(
            f"wrote {len(result.dump_paths)} dump(s), {result.n_sentences} sentences, "
            f"{result.n_tokens} tokens ({result.n_truncated} truncated, "
            f"{result.n_dropped_by_cap} dropped by cap)"
        )
        if args.decode_table:
            dump_decode_table(args.model, args.decode_table)
            print(f"wrote decode table to {args.decode_table}")
        return 0
    except ValueError as exc:
        print(f"extract: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # model loading, IO
        print(f"extract: error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
