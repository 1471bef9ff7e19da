"""Command-line entry point (``loggan``).

Exit status: 0 success, 1 a property/forgery verdict of "fail", 2 usage
error, 3 internal error, 4 a failed experiment stage. Human-readable text
goes to stderr; machine output (JSON, log lines, TSV) goes to stdout or
the ``--out`` path.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from loggan.config import read_key_values
from loggan.corpus import DEFAULT_MAX_LEN, TokenMode, build_vocabulary, encode_batch, sample_split
from loggan.harness import ExperimentSpec, StageFailure, generate_lines, load_report, run_experiment
from loggan.logmodel import (
    CBS_SCHEMA,
    DEFAULT_SCHEMA,
    FieldSchema,
    LogFile,
    LogFormatError,
    Order,
    cleanse_whitespace,
    parse_entry,
    read_lines,
    read_log_file,
    serialize_entry,
    write_log_file,
)
from loggan.neural.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from loggan.neural.nets import DiscriminatorNet, GeneratorNet
from loggan.staticgen import default_template, generate_static, load_template, template_from_entries
from loggan.training.config import TrainConfig
from loggan.training.metrics import TrainingMetrics, discriminator_scores
from loggan.training.schemes import EncodedSplit, pretrain_discriminator, pretrain_mle, train_scheme
from loggan.validator import (
    CoherenceRuleSet,
    build_code_lexicon,
    check_chronology,
    check_coherence,
    check_syntactic,
    chunk_file,
    mine_rules,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL, EXIT_STAGE = 0, 1, 2, 3, 4

log = logging.getLogger("loggan")

_ORDERS = {"asc": Order.ASCENDING, "desc": Order.DESCENDING, "auto": Order.AUTO}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master random seed (default 0)")
    g.add_argument("--config", default=argparse.SUPPRESS, help="key = value configuration file")
    g.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only warnings and errors")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output path instead of stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="loggan", description="Log forgery generation and detection toolkit.",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help_text, description=help_text, parents=[common])

    schema_help = "'default', 'cbs' or a key = value schema file"

    p = add("ingest", "Draw disjoint train/test samples from a large log file.")
    p.add_argument("corpus")
    p.add_argument("--schema", default="default", help=schema_help)
    p.add_argument("--n-train", type=int, required=True)
    p.add_argument("--n-test", type=int, required=True)

    p = add("mine-rules", "Mine event-coherence rules from real log files.")
    p.add_argument("files", nargs="+")
    p.add_argument("--schema", default="default", help=schema_help)
    p.add_argument("--chunk", type=int, default=0, help="split each file into windows of this many entries")
    p.add_argument("--min-support", type=int, default=1)

    p = add("gen-static", "Generate a log file from a template (always chronological).")
    p.add_argument("--template", help="template file; derived from --from-log or built in when omitted")
    p.add_argument("--from-log", help="derive the template from this real log")
    p.add_argument("--schema", default=None, help=schema_help)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--order", choices=("asc", "desc"), default="asc")
    p.add_argument("--rules", help="coherence rules (TSV) the output must satisfy")

    p = add("train", "Pretrain a generator by MLE, then train it with one scheme.")
    p.add_argument("train_log")
    p.add_argument("test_log")
    p.add_argument("--scheme", required=True, help="pg | iw | coop")
    p.add_argument("--schema", default=None, help=schema_help)
    p.add_argument("--mode", choices=("word", "char"), default=None)
    p.add_argument("--metrics", help="CSV path for per-epoch metrics (default: next to the checkpoint)")

    p = add("gen-neural", "Sample log lines from a trained generator checkpoint.")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-len", type=int, default=None)

    p = add("validate", "Check syntactic and semantic log properties.")
    p.add_argument("file")
    p.add_argument("--rules")
    p.add_argument("--order", choices=tuple(_ORDERS), default="auto")
    p.add_argument("--cleanse", action="store_true", help="collapse whitespace runs before the syntactic check")
    p.add_argument("--schema", default="default", help=schema_help)
    p.add_argument("--lexicon-from", help="only accept event codes seen >= 5 times in this reference log")
    p.add_argument("--threshold", type=float, default=1.0, help="minimum syntactic pass-rate (default 1.0)")

    p = add("detect", "Property checks plus an optional discriminator score.")
    p.add_argument("file")
    p.add_argument("--model")
    p.add_argument("--rules")
    p.add_argument("--schema", default="default", help=schema_help)
    p.add_argument("--cleanse", action="store_true")
    p.add_argument("--threshold", type=float, default=1.0)

    add("experiment", "Run the full experiment described by --config.")

    p = add("report", "Render a saved experiment report as text tables.")
    p.add_argument("path", help="experiment directory or report.json")
    p.add_argument("--json", action="store_true", help="emit JSON instead of tables")
    return parser


# --------------------------------------------------------------------------- helpers

def _schema(value: str | None, fallback: FieldSchema = DEFAULT_SCHEMA) -> FieldSchema:
    if value is None:
        return fallback
    named = {"default": DEFAULT_SCHEMA, "cbs": CBS_SCHEMA}
    if value.lower() in named:
        return named[value.lower()]
    path = Path(value)
    if not path.exists():
        raise UsageError(f"unknown schema {value!r} (not a name and no such file)")
    return FieldSchema.from_config(path)


def _need(path: str | None, what: str) -> Path:
    if path is None or not Path(path).exists():
        raise UsageError(f"{what} not found: {path}")
    return Path(path)


def _emit(args, text: str) -> None:
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _seed(args) -> int:
    return getattr(args, "seed", 0)


def _config(args) -> dict[str, str]:
    path = getattr(args, "config", None)
    return read_key_values(_need(path, "config file")) if path else {}


# --------------------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    schema = _schema(args.schema)
    out = Path(getattr(args, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    split = sample_split(_need(args.corpus, "corpus"), args.n_train, args.n_test, _seed(args), schema)
    write_log_file(out / "train.log", split.train, schema)
    write_log_file(out / "test.log", split.test, schema)
    split.write_manifest(out / "split.manifest")
    log.info("wrote %d train and %d test entries to %s", len(split.train), len(split.test), out)
    sys.stdout.write(json.dumps({"train": str(out / "train.log"), "test": str(out / "test.log"),
                                 "n_train": len(split.train), "n_test": len(split.test), "seed": split.seed}) + "\n")
    return EXIT_OK


def cmd_mine_rules(args) -> int:
    schema = _schema(args.schema)
    files = []
    for f in args.files:
        lf, errors = read_log_file(_need(f, "log file"), schema)
        if errors:
            log.warning("%s: skipped %d unparseable lines", f, len(errors))
        files.extend(chunk_file(lf, args.chunk) if args.chunk else [lf])
    rules = mine_rules(files, args.min_support)
    log.info("mined %d rules from %d files", len(rules), len(files))
    _emit(args, rules.to_text())
    return EXIT_OK


def cmd_gen_static(args) -> int:
    if args.template and args.from_log:
        raise UsageError("give either --template or --from-log, not both")
    if args.template:
        t = load_template(_need(args.template, "template"), _schema(args.schema) if args.schema else None)
    elif args.from_log:
        schema = _schema(args.schema)
        lf, _ = read_log_file(_need(args.from_log, "log file"), schema)
        t = template_from_entries(lf.entries, schema)
    else:
        t = default_template(_schema(args.schema))
    rules = CoherenceRuleSet.load(_need(args.rules, "rules file")) if args.rules else None
    f = generate_static(t, args.n, _seed(args), _ORDERS[args.order], rules)
    _emit(args, "".join(serialize_entry(e, t.schema) + "\n" for e in f.entries))
    return EXIT_OK


def cmd_train(args) -> int:
    values = _config(args)
    schema = _schema(args.schema or values.pop("schema", None))
    mode = TokenMode(args.mode or values.pop("mode", "word"))
    values.setdefault("max_len", str(DEFAULT_MAX_LEN[mode.value]))
    values["scheme"] = args.scheme
    if hasattr(args, "seed"):
        values["seed"] = str(args.seed)
    try:
        cfg = TrainConfig.from_mapping(values)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from exc

    def lines_of(path: str) -> list[str]:
        lf, errors = read_log_file(_need(path, "log file"), schema)
        if errors:
            log.warning("%s: skipped %d unparseable lines", path, len(errors))
        return [serialize_entry(e, schema) for e in lf.entries]

    train, test = lines_of(args.train_log), lines_of(args.test_log)
    if not train or not test:
        raise UsageError("train and test logs must each contain parseable entries")
    vocab = build_vocabulary(train, mode, schema=schema)
    data = EncodedSplit.from_lines(train, test, vocab, cfg.max_len)
    ckpt = Path(getattr(args, "out", "model.ckpt"))
    metrics_path = Path(args.metrics) if args.metrics else ckpt.with_suffix(".csv")
    g = GeneratorNet(len(vocab), cfg.emb_dim, cfg.hidden, seed=cfg.seed)
    d = DiscriminatorNet(len(vocab), cfg.emb_dim, cfg.hidden, seed=cfg.seed + 1)
    history = TrainingMetrics()

    def on_epoch(row) -> None:
        TrainingMetrics([row]).write_csv(metrics_path, append=True)
        save_checkpoint(ckpt, {"g": g, "d": d}, vocab)

    metrics_path.unlink(missing_ok=True)
    history.extend(pretrain_mle(g, data, cfg, on_epoch=on_epoch))
    pretrain_discriminator(d, g, data, cfg)
    history.extend(train_scheme(g, d, data, cfg, start_epoch=len(history), on_epoch=on_epoch))
    save_checkpoint(ckpt, {"g": g, "d": d}, vocab)
    final = history.final
    log.info("%s trained: vocab %d, final held-out NLL %s, checkpoint %s", cfg.scheme.label, len(vocab),
             f"{final.g_nll:.4f}" if final else "-", ckpt)
    return EXIT_OK


def cmd_gen_neural(args) -> int:
    nets, vocab = load_checkpoint(_need(args.model, "model checkpoint"))
    if "g" not in nets:
        raise UsageError("checkpoint holds no generator")
    if args.temperature <= 0:
        raise UsageError("--temperature must be positive")
    max_len = args.max_len or DEFAULT_MAX_LEN[vocab.mode.value]
    lines = generate_lines(nets["g"], vocab, args.n, _seed(args), max_len, args.temperature)
    _emit(args, "".join(l + "\n" for l in lines))
    return EXIT_OK


def _property_checks(path: Path, schema: FieldSchema, rules_path: str | None, order: Order, cleanse: bool,
                     lexicon: frozenset[str] | None, threshold: float) -> tuple[dict, bool, list[str]]:
    raw = [l for l in read_lines(path) if l.strip()]
    lines = [cleanse_whitespace(l, schema.separator) for l in raw] if cleanse else raw
    report = check_syntactic(lines, schema, lexicon)
    entries = []
    for l in raw:
        try:
            entries.append(parse_entry(l, schema))
        except LogFormatError:
            pass
    lf = LogFile(tuple(entries), order if order in (Order.ASCENDING, Order.DESCENDING) else Order.UNKNOWN)
    rules = CoherenceRuleSet.load(_need(rules_path, "rules file")) if rules_path else CoherenceRuleSet()
    chrono_ok, chrono_v = check_chronology(lf, order)
    coh_ok, coh_v = check_coherence(lf, rules)
    report.chronology_ok, report.coherence_ok = chrono_ok, coh_ok
    report.violations += chrono_v + coh_v
    rates = report.pass_rates
    ok = all(r >= threshold for r in rates.values()) and chrono_ok and coh_ok
    human = [f"line {v.index + 1}: {v.prop}: {v.reason}" for v in report.violations]
    out = report.to_dict()
    out.update(file=str(path), verdict="pass" if ok else "fail", threshold=threshold, cleansed=cleanse,
               parsed_entries=len(entries))
    return out, ok, human


def _report_human(human: list[str], ok: bool, limit: int = 50) -> None:
    for line in human[:limit]:
        log.warning("%s", line)
    if len(human) > limit:
        log.warning("... %d more violations", len(human) - limit)
    log.info("verdict: %s", "pass" if ok else "fail")


def cmd_validate(args) -> int:
    schema = _schema(args.schema)
    lexicon = None
    if args.lexicon_from:
        ref, _ = read_log_file(_need(args.lexicon_from, "reference log"), schema)
        lexicon = build_code_lexicon(ref.entries)
    result, ok, human = _property_checks(_need(args.file, "log file"), schema, args.rules, _ORDERS[args.order],
                                         args.cleanse, lexicon, args.threshold)
    _report_human(human, ok)
    _emit(args, json.dumps(result, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_detect(args) -> int:
    schema = _schema(args.schema)
    path = _need(args.file, "log file")
    result, ok, human = _property_checks(path, schema, args.rules, Order.AUTO, args.cleanse, None, args.threshold)
    if args.model:
        nets, vocab = load_checkpoint(_need(args.model, "model checkpoint"))
        if "d" not in nets:
            raise UsageError("checkpoint holds no discriminator")
        lines = [l for l in read_lines(path) if l.strip()]
        ids = encode_batch(lines, vocab, DEFAULT_MAX_LEN[vocab.mode.value])
        scores = discriminator_scores(nets["d"], ids) if len(ids) else np.zeros(0)
        mean = float(scores.mean()) if scores.size else 0.0
        forged = int((scores <= 0.5).sum())
        result["discriminator"] = {"mean_score": mean, "flagged_lines": forged, "lines": int(scores.size)}
        if mean <= 0.5:
            ok = False
            human.append(f"discriminator: mean realness {mean:.3f}, {forged}/{scores.size} lines look generated")
        result["verdict"] = "pass" if ok else "fail"
    else:
        log.info("no --model given: property checks only")
    _report_human(human, ok)
    _emit(args, json.dumps(result, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_experiment(args) -> int:
    cfg_path = _need(getattr(args, "config", None), "experiment config (--config)")
    try:
        spec = ExperimentSpec.from_config(cfg_path)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{cfg_path}: {exc}") from exc
    if hasattr(args, "seed"):
        spec.seed = args.seed
    if hasattr(args, "out"):
        spec.out_dir = Path(args.out)
    try:
        spec.validate()
    except (ValueError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc
    report = run_experiment(spec)
    sys.stderr.write(report.to_text())
    log.info("report written to %s", spec.out_dir)
    sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    path = _need(args.path, "report")
    if path.is_dir():
        path = _need(str(path / "report.json"), "report.json")
    report = load_report(path)
    _emit(args, report.to_json() + "\n" if args.json else report.to_text())
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "mine-rules": cmd_mine_rules,
    "gen-static": cmd_gen_static,
    "train": cmd_train,
    "gen-neural": cmd_gen_neural,
    "validate": cmd_validate,
    "detect": cmd_detect,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def dispatch(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except StageFailure as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_STAGE
    except (LogFormatError, CheckpointError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to an exit status
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
