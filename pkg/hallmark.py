#!/usr/bin/env python3
"""
hallmark: publicly-detectable image watermarks and embedding attack benchmarks.

Subcommands:
    keygen PREFIX                      write PREFIX.sk and PREFIX.pk
    watermark --scheme S --key SK IN OUT
    detect --scheme S --key PK IN      exit 0 detected, 1 not detected
    eval MODE                          robustness | clean-roc | attack

Exit codes: 0 success/detected, 1 not detected, 2 usage or I/O error.
Input PNGs may be RGB or RGBA; alpha is dropped.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config import Config, LoggingSettings, load_config, parse_corpus_source
from core_image import CorpusSpec, generate_corpus, load_png, psnr, save_png
from eval_attack import (
    SweepRow,
    auc_curve_area,
    build_directory_triples,
    build_triples,
    clean_roc,
    load_directory_corpus,
    measure_robustness,
    report_csv,
    report_robustness_csv,
    run_attack_sweep,
    save_attacked_images,
    write_scores_jsonl,
)
from log_handlers import RunFileHandler
from lsb_scheme import lsb_detect, lsb_watermark
from rpws import RpwsScheme, rpws_generate
from sig import derive_secret_key, read_public_key, read_secret_key
from sig import write_public_key, write_secret_key
from transforms import dump_suite, load_suite, standard_suite

logger = logging.getLogger(__name__)

__version__ = "0.1.0"

EXIT_OK = 0
EXIT_NOT_DETECTED = 1
EXIT_ERROR = 2

SCHEMES = ("lsb", "rpws")
EVAL_MODES = ("robustness", "clean-roc", "attack")
EVAL_KEY_MATERIAL = b"hallmark evaluation key"


def version_string() -> str:
    return f"hallmark {__version__}"


def configure_logging(
    settings: LoggingSettings, level: Optional[str] = None, log_dir: Optional[str] = None
) -> None:
    """
    Console (or [logging] file) logging, plus a numbered per-run file when a
    log directory is configured.
    """
    logging.basicConfig(
        level=(level or settings.level).upper(),
        format=settings.format,
        filename=settings.file or None,
        force=True,
    )
    directory = log_dir or settings.directory
    if directory:
        handler = RunFileHandler(directory)
        handler.setFormatter(logging.Formatter(settings.format))
        logging.getLogger().addHandler(handler)
        logger.info("Logging this run to %s", handler.path)


def _rpws_scheme(config: Config) -> RpwsScheme:
    return RpwsScheme(config.pgws, config.ref)


def _key_path(arg: Optional[str], configured: str, what: str) -> str:
    path = arg or configured
    if not path:
        raise ValueError(f"No {what} key given (use --key or the [keys] config section)")
    return path


def cmd_keygen(args, config: Config) -> int:
    prefix = Path(args.prefix)
    sk_path = prefix.with_name(prefix.name + ".sk")
    pk_path = prefix.with_name(prefix.name + ".pk")
    if not args.force:
        for path in (sk_path, pk_path):
            if path.exists():
                raise FileExistsError(f"Refusing to overwrite existing key file {path}")
    sk, pk = rpws_generate()
    write_secret_key(sk, sk_path, force=args.force)
    write_public_key(pk, pk_path, force=args.force)
    logger.info("Wrote %s and %s", sk_path, pk_path)
    return EXIT_OK


def cmd_watermark(args, config: Config) -> int:
    sk = read_secret_key(_key_path(args.key, config.keys.secret_key, "secret"))
    img = load_png(args.input)
    if args.scheme == "lsb":
        marked = lsb_watermark(sk, img)
    else:
        marked = _rpws_scheme(config).watermark(sk, img)
    save_png(marked, args.output)
    print(f"PSNR {psnr(img, marked):.4f} dB")
    return EXIT_OK


def cmd_detect(args, config: Config) -> int:
    # Public material only
    pk = read_public_key(_key_path(args.key, config.keys.public_key, "public"))
    img = load_png(args.input)
    if args.scheme == "lsb":
        detected = lsb_detect(pk, img)
        print("true" if detected else "false")
    else:
        report = _rpws_scheme(config).detect(pk, img)
        print(report.to_json_line())
        detected = report.overall
    return EXIT_OK if detected else EXIT_NOT_DETECTED


def _write_report_header(out: Path, config: Config, mode: str, suite, extra: dict) -> Path:
    header = {
        "version": version_string(),
        "mode": mode,
        "config": config.to_dict(),
        "suite": [spec.to_dict() for spec in suite],
    }
    header.update(extra)
    path = out.with_name(out.name + ".json")
    path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _eval_key(args, config: Config):
    path = args.key or config.keys.secret_key
    if path:
        return read_secret_key(path)
    logger.info("No secret key configured; using the deterministic evaluation key")
    return derive_secret_key(EVAL_KEY_MATERIAL)


def _eval_triples(source, suite, config: Config):
    if isinstance(source, CorpusSpec):
        return build_triples(generate_corpus(source), suite, config.corpus.triple_seed)
    bases, positives = load_directory_corpus(source)
    return build_directory_triples(bases, positives, config.corpus.triple_seed)


def cmd_eval(args, config: Config) -> int:
    if args.dump_suite:
        dump_suite(standard_suite(), args.dump_suite)
        if args.mode is None:
            return EXIT_OK
    if args.mode is None:
        raise ValueError("eval needs a mode unless --dump-suite is given")

    suite = load_suite(args.suite) if args.suite else standard_suite()
    source = parse_corpus_source(args.corpus or config.corpus.source)
    out = Path(args.out or f"{args.mode}.csv")
    extra = {"corpus": str(args.corpus or config.corpus.source)}

    if args.mode == "robustness":
        if isinstance(source, CorpusSpec):
            corpus = generate_corpus(source)
        else:
            corpus = list(load_directory_corpus(source)[0].values())
        rows = measure_robustness(corpus, suite, _eval_key(args, config), _rpws_scheme(config))
        report_robustness_csv(rows, out)
        extra["within_budget"] = {r.transform: r.within_budget for r in rows if r.common}
    elif args.mode == "clean-roc":
        triples = _eval_triples(source, suite, config)
        roc = clean_roc(triples, config.attack.score_mode, config.ref)
        row = SweepRow("none", 0, roc.auc, roc.auc, roc.hash_far, roc.hash_frr, 0.0)
        report_csv([row], out)
        if args.scores_jsonl:
            write_scores_jsonl(triples, roc, args.scores_jsonl)
    else:
        triples = _eval_triples(source, suite, config)
        settings = config.attack
        on_attacked = None
        if settings.save_attacked:

            def on_attacked(attacked, params):
                save_attacked_images(
                    attacked, params, settings.save_attacked, settings.save_limit
                )

        rows = run_attack_sweep(triples, settings, config.ref, on_attacked)
        report_csv(rows, out)
        extra["auc_curve_area"] = auc_curve_area(rows)
        extra["control_auc"] = [
            {"norm": r.norm, "epsilon_num": r.epsilon_num, "control_auc": r.control_auc}
            for r in rows
        ]
        extra["l1_radius"] = "epsilon_num * channel values (mean per-value budget)"

    header = _write_report_header(out, config, args.mode, suite, extra)
    print(f"Wrote {out} and {header}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hallmark",
        description="Publicly-detectable image watermarking and embedding attack evaluation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Input PNGs must be 8-bit RGB or RGBA; the alpha channel is dropped.",
    )
    parser.add_argument("--version", action="version", version=version_string())
    parser.add_argument("--config", help="TOML config file (sections [keys], [pgws], ...)")
    parser.add_argument(
        "--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="Override log level"
    )
    parser.add_argument("--log-dir", help="Also write numbered per-run log files here")

    subparsers = parser.add_subparsers(dest="command", required=True)

    keygen = subparsers.add_parser("keygen", help="Generate a signing keypair")
    keygen.add_argument("prefix", help="Writes PREFIX.sk and PREFIX.pk")
    keygen.add_argument("--force", action="store_true", help="Overwrite existing key files")
    keygen.set_defaults(handler=cmd_keygen)

    watermark = subparsers.add_parser("watermark", help="Watermark a PNG")
    watermark.add_argument("--scheme", choices=SCHEMES, default="rpws")
    watermark.add_argument("--key", help="Secret key file (default: [keys] secret_key)")
    watermark.add_argument("input", help="Input PNG")
    watermark.add_argument("output", help="Output PNG")
    watermark.set_defaults(handler=cmd_watermark)

    detect = subparsers.add_parser("detect", help="Detect a watermark with a public key")
    detect.add_argument("--scheme", choices=SCHEMES, default="rpws")
    detect.add_argument("--key", help="Public key file (default: [keys] public_key)")
    detect.add_argument("input", help="PNG to test")
    detect.set_defaults(handler=cmd_detect)

    evaluate = subparsers.add_parser("eval", help="Run an evaluation and write CSV + JSON")
    evaluate.add_argument("mode", nargs="?", choices=EVAL_MODES)
    evaluate.add_argument("--corpus", help="Directory or synthetic:seed:count:size")
    evaluate.add_argument("--out", help="CSV output path (default: <mode>.csv)")
    evaluate.add_argument("--key", help="Secret key for robustness runs")
    evaluate.add_argument("--suite", help="Transform suite TOML (default: standard suite)")
    evaluate.add_argument("--dump-suite", help="Write the standard transform suite as TOML")
    evaluate.add_argument("--scores-jsonl", help="Per-triple score dump (clean-roc)")
    evaluate.set_defaults(handler=cmd_eval)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except (OSError, ValueError) as e:
        print(f"hallmark: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    configure_logging(config.logging, args.log_level, args.log_dir)

    try:
        return args.handler(args, config)
    except (OSError, ValueError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"hallmark: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
