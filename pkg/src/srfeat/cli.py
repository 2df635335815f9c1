"""Command line entry point: ``srfeat <command> [options]``.

Exit codes: 0 success, 1 internal error, 2 bad input or configuration.
Failures print one line to stderr, ``srfeat: error[input]: ...`` or
``srfeat: error[internal]: ...``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__, pipeline
from .corpus import CorpusFormatError, ValidationError
from .embeddings import EmbeddingError
from .features import FeatureError
from .forest import ModelError

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2

INPUT_ERRORS = (
    pipeline.ConfigError,
    pipeline.ExtractionFailed,
    CorpusFormatError,
    ValidationError,
    FeatureError,
    ModelError,
    EmbeddingError,
    FileNotFoundError,
    json.JSONDecodeError,
    ValueError,
    KeyError,
)

# option dest -> dotted config key
_OVERRIDES = {
    "corpus": "corpus",
    "references": "references",
    "output_dir": "output_dir",
    "run_dir": "run_dir",
    "seed": "classifier.seed",
    "split_seed": "split.seed",
    "workers": "features.workers",
    "n_trees": "classifier.n_trees",
    "max_depth": "classifier.max_depth",
    "min_leaf": "classifier.min_leaf",
    "max_features": "classifier.max_features",
    "provider": "embeddings.provider",
    "embeddings_path": "embeddings.path",
    "embeddings_url": "embeddings.url",
    "subset": None,  # command-specific, see _overrides
    "repeats": "importance.repeats",
    "importance_seed": "importance.seed",
    "n_utterances": "synth.n_utterances",
    "synth_seed": "synth.seed",
    "mode": "synth.mode",
}


def _max_features(text: str):
    if text == "sqrt":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'sqrt' or a fraction in (0, 1]") from None
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError("expected 'sqrt' or a fraction in (0, 1]")
    return value


def _set_pair(text: str):
    key, sep, raw = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


class _Parser(argparse.ArgumentParser):
    """Usage errors follow the same one-line error format as everything else."""

    def error(self, message):
        self.exit(EXIT_INPUT, f"srfeat: error[input]: {self.prog}: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration")
    g.add_argument("--config", help=f"JSON config file (default: ${pipeline.CONFIG_ENV} if set)")
    g.add_argument("--set", dest="sets", action="append", type=_set_pair, default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. --set classifier.n_trees=100 (repeatable)")
    g.add_argument("--corpus", help="utterance corpus (JSON lines)")
    g.add_argument("--references", help="sentence references (JSON lines)")
    g.add_argument("--output-dir", help="parent directory for run directories")
    g.add_argument("--run-dir", help="use this run directory instead of one derived from the config")
    g.add_argument("--split-seed", type=int)
    g.add_argument("--seed", type=int, help="classifier seed")
    g.add_argument("-v", "--verbose", action="store_true")
    g.add_argument("-q", "--quiet", action="store_true")

    parser = _Parser(prog="srfeat", description="SR-based features and severity classification.")
    parser.add_argument("--version", action="version", version=f"srfeat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus and references")
    p.add_argument("--n-utterances", type=int)
    p.add_argument("--synth-seed", type=int)
    p.add_argument("--mode", choices=["realistic", "planted"])

    sub.add_parser("split", parents=[common], help="stratified train/validation/test split")

    p = sub.add_parser("extract", parents=[common], help="build healthy profiles and the feature matrix")
    p.add_argument("--workers", type=int)
    p.add_argument("--provider", choices=["fallback", "file", "remote"])
    p.add_argument("--embeddings-path")
    p.add_argument("--embeddings-url")

    p = sub.add_parser("train", parents=[common], help="train the random forest")
    p.add_argument("--n-trees", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-leaf", type=int)
    p.add_argument("--max-features", type=_max_features)

    p = sub.add_parser("eval", parents=[common], help="score the model on a split part")
    p.add_argument("--subset", choices=["train", "validation", "test"])

    p = sub.add_parser("importance", parents=[common], help="permutation feature importance")
    p.add_argument("--subset", choices=["train", "validation", "test"])
    p.add_argument("--repeats", type=int)
    p.add_argument("--importance-seed", type=int)

    p = sub.add_parser("report", parents=[common], help="run split, extract, train, eval and importance")
    p.add_argument("--workers", type=int)
    p.add_argument("--n-trees", type=int)
    p.add_argument("--provider", choices=["fallback", "file", "remote"])
    p.add_argument("--embeddings-path")
    p.add_argument("--embeddings-url")

    p = sub.add_parser("config", parents=[common], help="print the resolved configuration and run directory")
    return parser


def _overrides(args) -> dict:
    out = {}
    for key, value in args.sets:
        out[key] = value
    for dest, dotted in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest == "subset":
            dotted = "importance.subset" if args.command == "importance" else "evaluation.subset"
        out[dotted] = value
    return out


def _dispatch(args) -> None:
    config = pipeline.load_config(args.config, _overrides(args))
    rdir = pipeline.run_dir(config)
    cmd = args.command
    if cmd == "config":
        print(json.dumps({"run_dir": str(rdir), "config": config}, indent=1, ensure_ascii=False))
        return
    if cmd == "synth":
        pipeline.run_synth(config)
    elif cmd == "split":
        pipeline.run_split(config)
    elif cmd == "extract":
        pipeline.run_extract(config)
    elif cmd == "train":
        pipeline.run_train(config)
    elif cmd == "eval":
        report = pipeline.run_eval(config)
        if not args.quiet:
            print(report.confusion_table(), end="")
    elif cmd == "importance":
        report = pipeline.run_importance(config)
        if not args.quiet:
            for name, mean, std in report.entries[: config["importance"]["top"]]:
                print(f"{name}\t{mean:.4f}\t{std:.4f}")
    elif cmd == "report":
        pipeline.run_report(config)
    if not args.quiet:
        print(rdir)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="srfeat: %(levelname)s: %(message)s", stream=sys.stderr)
    log = logging.getLogger("srfeat")
    try:
        _dispatch(args)
    except pipeline.ExtractionFailed as exc:
        for uid, msg in exc.errors:
            log.error("extraction failed for %s: %s", uid, msg)
        print(f"srfeat: error[input]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except INPUT_ERRORS as exc:
        msg = str(exc).replace("\n", " ")
        if isinstance(exc, KeyError):
            msg = f"missing key {msg}"
        print(f"srfeat: error[input]: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        log.debug("internal error", exc_info=True)
        msg = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        print(f"srfeat: error[internal]: {msg}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
