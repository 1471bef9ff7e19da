"""End-to-end experiment: split, vocabulary, training per scheme, generation, validation, report.

Every artifact lands under the experiment's output directory. Training
stages leave a checkpoint plus a small JSON marker; a rerun with the same
spec picks those up instead of training again.
"""

from __future__ import annotations

import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from loggan.config import parse_bool, read_key_values
from loggan.corpus import DEFAULT_MAX_LEN, TokenMode, Vocabulary, build_vocabulary, decode, sample_split
from loggan.logmodel import (
    CBS_SCHEMA,
    DEFAULT_SCHEMA,
    FieldSchema,
    LogFile,
    LogFormatError,
    Order,
    cleanse_whitespace,
    parse_entry,
    serialize_entry,
    write_log_file,
)
from loggan.neural.checkpoint import load_checkpoint, save_checkpoint
from loggan.neural.nets import DiscriminatorNet, GeneratorNet, NoiseSource, sample_batch
from loggan.staticgen import generate_static, template_from_entries
from loggan.training.config import Scheme, TrainConfig
from loggan.training.metrics import MetricsRow, TrainingMetrics, detect_collapse
from loggan.training.schemes import EncodedSplit, pretrain_discriminator, pretrain_mle, train_scheme
from loggan.validator import (
    SYNTACTIC_PROPERTIES,
    build_code_lexicon,
    check_chronology,
    check_coherence,
    check_syntactic,
    chunk_file,
    mine_rules,
)

log = logging.getLogger(__name__)

STATIC = "Static"
TAG_SAMPLE = 11
_SCHEME_CODE = {Scheme.POLICY_GRADIENT: 1, Scheme.IMPORTANCE_WEIGHTED: 2, Scheme.COOPERATIVE: 3}
_NAMED_SCHEMAS = {"default": DEFAULT_SCHEMA, "cbs": CBS_SCHEMA}
_SPEC_KEYS = {"corpus", "schema", "n_train", "n_test", "mode", "schemes", "samples", "cleanse", "out", "seed",
              "threshold", "rule_chunk", "min_support", "parallel", "temperature", "collapse_window"}


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class BaselineViolation(RuntimeError):
    """The real held-out file fails chronology: the ingestion, not the model, is broken."""


def scheme_seed(master: int, scheme: Scheme) -> int:
    """Seed for one scheme's run, independent of which other schemes are listed or their order."""
    return int(np.random.SeedSequence([master, _SCHEME_CODE[scheme]]).generate_state(1)[0] & 0x7FFFFFFF)


@dataclass
class ExperimentSpec:
    corpus: Path
    schema: FieldSchema = DEFAULT_SCHEMA
    n_train: int = 2000
    n_test: int = 500
    mode: TokenMode = TokenMode.WORD
    trains: tuple[TrainConfig, ...] = ()
    samples: int = 200
    cleanse: bool = True
    out_dir: Path = Path("experiment")
    seed: int = 0
    threshold: float = 0.9
    rule_chunk: int = 100
    min_support: int = 2
    parallel: bool = False
    temperature: float = 1.0
    collapse_window: int = 1

    def validate(self) -> None:
        if not Path(self.corpus).exists():
            raise FileNotFoundError(f"corpus not found: {self.corpus}")
        if self.samples < 1:
            raise ValueError("sample count must be at least 1")
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must lie in (0, 1]")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be positive")
        schemes = [c.scheme for c in self.trains]
        if len(set(schemes)) != len(schemes):
            raise ValueError("each scheme may appear only once")

    @classmethod
    def from_mapping(cls, values: dict[str, str], base_dir: Path | None = None) -> "ExperimentSpec":
        """Build from ``key = value`` pairs.

        Training keys (any :class:`TrainConfig` field) apply to every scheme;
        ``<scheme>.<key>`` overrides one scheme, e.g. ``pg.rollouts = 8``.
        ``schema.<key>`` entries define a custom field schema.
        """
        base = base_dir or Path(".")
        values = dict(values)
        spec_vals = {k: values.pop(k) for k in list(values) if k in _SPEC_KEYS}
        schema_vals = {k.split(".", 1)[1]: values.pop(k) for k in list(values) if k.startswith("schema.")}
        per_scheme: dict[Scheme, dict[str, str]] = {}
        for k in list(values):
            head, dot, rest = k.partition(".")
            if dot:
                per_scheme.setdefault(Scheme.parse(head), {})[rest] = values.pop(k)
        shared = values  # whatever is left must be training keys
        if "corpus" not in spec_vals:
            raise ValueError("experiment config needs a 'corpus' key")

        if schema_vals:
            schema = FieldSchema.from_mapping(schema_vals)
        else:
            name = spec_vals.get("schema", "default").strip().lower()
            if name not in _NAMED_SCHEMAS:
                raise ValueError(f"unknown schema {name!r}; use one of {sorted(_NAMED_SCHEMAS)} or schema.* keys")
            schema = _NAMED_SCHEMAS[name]

        scheme_names = spec_vals.get("schemes", "pg,iw,coop")
        schemes = [Scheme.parse(s) for s in scheme_names.split(",") if s.strip()]
        if set(per_scheme) - set(schemes):
            raise ValueError("overrides given for a scheme that is not listed")
        mode = TokenMode(spec_vals.get("mode", "word").strip().lower())
        if "max_len" not in shared:
            shared["max_len"] = str(DEFAULT_MAX_LEN[mode.value])
        trains = tuple(TrainConfig.from_mapping({**shared, **per_scheme.get(s, {}), "scheme": s.value})
                       for s in schemes)

        def path(key: str, default: str) -> Path:
            p = Path(spec_vals.get(key, default))
            return p if p.is_absolute() else base / p

        return cls(
            corpus=path("corpus", ""),
            schema=schema,
            n_train=int(spec_vals.get("n_train", 2000)),
            n_test=int(spec_vals.get("n_test", 500)),
            mode=mode,
            trains=trains,
            samples=int(spec_vals.get("samples", 200)),
            cleanse=parse_bool(spec_vals.get("cleanse", "true")),
            out_dir=path("out", "experiment"),
            seed=int(spec_vals.get("seed", 0)),
            threshold=float(spec_vals.get("threshold", 0.9)),
            rule_chunk=int(spec_vals.get("rule_chunk", 100)),
            min_support=int(spec_vals.get("min_support", 2)),
            parallel=parse_bool(spec_vals.get("parallel", "false")),
            temperature=float(spec_vals.get("temperature", 1.0)),
            collapse_window=int(spec_vals.get("collapse_window", 1)),
        )

    @classmethod
    def from_config(cls, path: str | Path) -> "ExperimentSpec":
        path = Path(path)
        return cls.from_mapping(read_key_values(path), path.parent)

    def to_mapping(self) -> dict:
        return {
            "corpus": str(self.corpus),
            "schema": self.schema.to_mapping(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "mode": self.mode.value,
            "trains": [c.to_mapping() for c in self.trains],
            "samples": self.samples,
            "cleanse": self.cleanse,
            "seed": self.seed,
            "threshold": self.threshold,
            "rule_chunk": self.rule_chunk,
            "min_support": self.min_support,
            "temperature": self.temperature,
            "collapse_window": self.collapse_window,
        }


@dataclass
class SemanticRow:
    chronology: bool
    coherence: bool
    n_entries: int
    chronology_violations: int
    coherence_violations: int
    real_chronology: bool | None = None
    real_coherence: bool | None = None


def compare_semantics(generated: LogFile, real_heldout: LogFile, rules: Sequence) -> SemanticRow:
    if len(generated) == 0 or len(real_heldout) == 0:
        raise ValueError("both files must be non-empty")
    real_chrono, _ = check_chronology(real_heldout)
    if not real_chrono:
        raise BaselineViolation("real held-out entries are not chronological")
    real_coh, _ = check_coherence(real_heldout, rules)
    chrono, cv = check_chronology(generated)
    coh, hv = check_coherence(generated, rules)
    return SemanticRow(chrono, coh, len(generated), len(cv), len(hv), real_chrono, real_coh)


@dataclass
class SyntacticRow:
    n_lines: int
    raw: dict[str, float]
    cleansed: dict[str, float] | None
    passes: dict[str, bool]
    unparsed: int


@dataclass
class ExperimentReport:
    schemes: list[str]
    training: dict[str, dict | None]
    syntactic: dict[str, SyntacticRow]
    semantic: dict[str, SemanticRow | None]
    alarms: dict[str, str | None]
    threshold: float
    cleanse: bool
    environment: dict = field(default_factory=dict)

    @property
    def rows(self) -> list[str]:
        return [*self.schemes, STATIC]

    def to_dict(self, timings: bool = True) -> dict:
        env = dict(self.environment)
        if not timings:
            env.pop("durations", None)
        return {
            "schemes": self.schemes,
            "training": self.training,
            "syntactic": {k: asdict(v) for k, v in self.syntactic.items()},
            "semantic": {k: (asdict(v) if v else None) for k, v in self.semantic.items()},
            "alarms": self.alarms,
            "threshold": self.threshold,
            "cleanse": self.cleanse,
            "environment": env,
        }

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(
            schemes=list(d["schemes"]),
            training=d["training"],
            syntactic={k: SyntacticRow(**v) for k, v in d["syntactic"].items()},
            semantic={k: (SemanticRow(**v) if v else None) for k, v in d["semantic"].items()},
            alarms=d["alarms"],
            threshold=d["threshold"],
            cleanse=d["cleanse"],
            environment=d.get("environment", {}),
        )

    def to_text(self) -> str:
        def num(v) -> str:
            return "-" if v is None else f"{v:.4f}"

        def mark(ok) -> str:
            return "-" if ok is None else ("✓" if ok else "x")

        out = ["Training results (final epoch)"]
        rows = [["Model", "G loss", "D loss", "G NLL", "D NLL", "Acc"]]
        for s in self.schemes:
            t = self.training.get(s) or {}
            rows.append([s, *(num(t.get(c)) for c in ("g_loss", "d_loss", "g_nll", "d_nll", "acc"))])
        out += _table(rows)

        basis = "cleansed" if self.cleanse else "raw"
        out += ["", f"Syntactic properties (pass when >= {self.threshold:.0%} of entries, judged on {basis} lines)"]
        rows = [["Model", *(f"{p} raw" for p in SYNTACTIC_PROPERTIES),
                 *((f"{p} cleansed" for p in SYNTACTIC_PROPERTIES) if self.cleanse else ()),
                 *SYNTACTIC_PROPERTIES]]
        for s in self.rows:
            r = self.syntactic[s]
            cells = [f"{r.raw[p]:.1%}" for p in SYNTACTIC_PROPERTIES]
            if self.cleanse:
                cells += [f"{r.cleansed[p]:.1%}" for p in SYNTACTIC_PROPERTIES]
            rows.append([s, *cells, *(mark(r.passes[p]) for p in SYNTACTIC_PROPERTIES)])
        out += _table(rows)

        out += ["", "Semantic properties"]
        rows = [["Model", "Chronology", "Coherence", "Entries"]]
        for s in self.rows:
            r = self.semantic.get(s)
            rows.append([s, mark(r and r.chronology), mark(r and r.coherence), str(r.n_entries if r else 0)])
        base = next((r for r in self.semantic.values() if r is not None), None)
        if base is not None:
            rows.append(["Real (held-out)", mark(base.real_chronology), mark(base.real_coherence), "-"])
        out += _table(rows)

        alarms = [f"{s}: {a}" for s, a in self.alarms.items() if a]
        if alarms:
            out += ["", "Alarms", *alarms]
        return "\n".join(out) + "\n"


def _table(rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip()
             for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return lines


# --------------------------------------------------------------------------- pipeline

def parse_lines(lines: Sequence[str], schema: FieldSchema) -> tuple[LogFile, int]:
    """Entries that parse (whitespace-tolerant) in the order given, plus the count that did not."""
    entries, bad = [], 0
    for line in lines:
        try:
            entries.append(parse_entry(line, schema))
        except (LogFormatError, ValueError):
            bad += 1
    return LogFile(tuple(entries), Order.UNKNOWN), bad


def syntactic_row(lines: Sequence[str], schema: FieldSchema, lexicon: frozenset[str] | None,
                  cleanse: bool, threshold: float) -> SyntacticRow:
    raw = check_syntactic(lines, schema, lexicon).pass_rates
    cleansed = None
    if cleanse:
        cleansed = check_syntactic([cleanse_whitespace(l, schema.separator) for l in lines], schema, lexicon).pass_rates
    basis = cleansed if cleanse else raw
    _, bad = parse_lines(lines, schema)
    return SyntacticRow(len(lines), raw, cleansed, {p: basis[p] >= threshold for p in SYNTACTIC_PROPERTIES}, bad)


def generate_lines(g: GeneratorNet, vocab: Vocabulary, n: int, seed: int, max_len: int,
                   temperature: float = 1.0) -> list[str]:
    ids = sample_batch(g, NoiseSource.derive(seed, TAG_SAMPLE), n, max_len, temperature).ids
    return [decode(row, vocab) for row in ids]


class _Stage:
    def __init__(self, name: str, durations: dict):
        self.name, self.durations = name, durations

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        self.durations[self.name] = round(time.perf_counter() - self.t0, 3)
        if exc is not None and not isinstance(exc, StageFailure):
            raise StageFailure(self.name, exc) from exc
        return False


def _fingerprint(*parts) -> str:
    return json.dumps(parts, sort_keys=True, default=str)


def _marker_ok(path: Path, fp: str) -> dict | None:
    if not path.exists():
        return None
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None
    return rec if rec.get("fingerprint") == fp else None


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True), encoding="utf-8")
    tmp.replace(path)


def _train_one(cfg: TrainConfig, data: EncodedSplit, vocab: Vocabulary, out: Path, durations: dict,
               base_fp: str) -> tuple[GeneratorNet, TrainingMetrics]:
    """MLE pretraining then the scheme's own phase, each resumable from its checkpoint."""
    label = cfg.scheme.label
    sdir = out / cfg.scheme.value
    sdir.mkdir(parents=True, exist_ok=True)
    csv_path = sdir / "metrics.csv"
    history = TrainingMetrics()

    def hook(net_map):
        def on_epoch(row: MetricsRow) -> None:
            TrainingMetrics([row]).write_csv(csv_path, append=True)
            save_checkpoint(sdir / "latest.ckpt", net_map, vocab)
        return on_epoch

    fp_mle = _fingerprint(base_fp, cfg.to_mapping(), "mle")
    with _Stage(f"mle:{label}", durations):
        rec = _marker_ok(sdir / "mle.json", fp_mle)
        if rec:
            nets, _ = load_checkpoint(sdir / "mle.ckpt")
            g, d = nets["g"], nets["d"]
            history.extend(MetricsRow(**r) for r in rec["metrics"])
        else:
            csv_path.unlink(missing_ok=True)
            g = GeneratorNet(len(vocab), cfg.emb_dim, cfg.hidden, seed=cfg.seed)
            d = DiscriminatorNet(len(vocab), cfg.emb_dim, cfg.hidden, seed=cfg.seed + 1)
            history.extend(pretrain_mle(g, data, cfg, on_epoch=hook({"g": g})))
            pretrain_discriminator(d, g, data, cfg)
            save_checkpoint(sdir / "mle.ckpt", {"g": g, "d": d}, vocab)
            _write_json(sdir / "mle.json", {"fingerprint": fp_mle, "metrics": history.to_dicts()})

    fp_adv = _fingerprint(fp_mle, "adv")
    with _Stage(f"adv:{label}", durations):
        rec = _marker_ok(sdir / "adv.json", fp_adv)
        if rec:
            nets, _ = load_checkpoint(sdir / "adv.ckpt")
            g = nets["g"]
            history.extend(MetricsRow(**r) for r in rec["metrics"])
        else:
            adv = train_scheme(g, d, data, cfg, start_epoch=len(history), on_epoch=hook({"g": g, "d": d}))
            history.extend(adv)
            save_checkpoint(sdir / "adv.ckpt", {"g": g, "d": d}, vocab)
            _write_json(sdir / "adv.json", {"fingerprint": fp_adv, "metrics": adv.to_dicts()})
    return g, history


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    spec.validate()
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    durations: dict[str, float] = {}
    t_start = time.perf_counter()
    schema = spec.schema

    with _Stage("split", durations):
        split = sample_split(spec.corpus, spec.n_train, spec.n_test, spec.seed, schema)
        split.write_manifest(out / "split.manifest")
        write_log_file(out / "train.log", split.train, schema)
        write_log_file(out / "test.log", split.test, schema)

    with _Stage("vocab", durations):
        vocab = build_vocabulary(split.train_lines(), spec.mode, schema=schema)
        (out / "vocab.txt").write_text(vocab.to_text(), encoding="utf-8")

    with _Stage("rules", durations):
        train_file = split.train_file()
        rules = mine_rules(chunk_file(train_file, spec.rule_chunk), spec.min_support)
        rules.save(out / "rules.tsv")
        lexicon = build_code_lexicon(split.train)

    base_fp = _fingerprint(spec.to_mapping(), vocab.to_text())
    generators: dict[Scheme, tuple[GeneratorNet, TrainingMetrics]] = {}
    cfgs = [c.with_(seed=scheme_seed(spec.seed, c.scheme)) for c in spec.trains]
    data = {}
    if cfgs:
        max_lens = {c.max_len for c in cfgs}
        data = {m: EncodedSplit.from_split(split, vocab, m) for m in max_lens}

    def train(cfg: TrainConfig):
        return cfg.scheme, _train_one(cfg, data[cfg.max_len], vocab, out, durations, base_fp)

    if spec.parallel and len(cfgs) > 1:
        with ThreadPoolExecutor(len(cfgs)) as pool:
            results = list(pool.map(train, cfgs))
    else:
        results = [train(c) for c in cfgs]
    generators.update(results)

    report = ExperimentReport(schemes=[c.scheme.label for c in cfgs], training={}, syntactic={}, semantic={},
                              alarms={}, threshold=spec.threshold, cleanse=spec.cleanse)
    real_test = LogFile(split.test, Order.UNKNOWN)

    for cfg in cfgs:
        label = cfg.scheme.label
        g, history = generators[cfg.scheme]
        with _Stage(f"generate:{label}", durations):
            lines = generate_lines(g, vocab, spec.samples, cfg.seed, cfg.max_len, spec.temperature)
            (out / cfg.scheme.value / "samples.log").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
        with _Stage(f"validate:{label}", durations):
            report.training[label] = asdict(history.final) if history else None
            report.syntactic[label] = syntactic_row(lines, schema, lexicon, spec.cleanse, spec.threshold)
            parsed, _ = parse_lines([cleanse_whitespace(l) for l in lines] if spec.cleanse else lines, schema)
            report.semantic[label] = compare_semantics(parsed, real_test, rules) if len(parsed) else None
            adv_rows = [r for r in history if r.phase != "mle"]
            report.alarms[label] = detect_collapse(adv_rows, spec.collapse_window)

    with _Stage("static", durations):
        known = [e for e in split.train if e.event_code in lexicon] or list(split.train)
        template = template_from_entries(known, schema)
        static = generate_static(template, spec.samples, spec.seed, Order.ASCENDING, rules)
        write_log_file(out / "static_samples.log", static.entries, schema)
        static_lines = [serialize_entry(e, schema) for e in static.entries]
        report.syntactic[STATIC] = syntactic_row(static_lines, schema, lexicon, spec.cleanse, spec.threshold)
        report.semantic[STATIC] = compare_semantics(static, real_test, rules)
        report.training[STATIC] = None

    durations["total"] = round(time.perf_counter() - t_start, 3)
    report.environment = {
        "seed": spec.seed,
        "scheme_seeds": {c.scheme.label: c.seed for c in cfgs},
        "python": platform.python_version(),
        "numpy": np.__version__,
        "durations": durations,
    }
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    return report


def load_report(path: str | Path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
