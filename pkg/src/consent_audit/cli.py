"""Command-line entry point: ``consent-audit``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .annotator import KeywordTables, RemoteAnnotator, ServiceConfig, annotate_form
from .config import RunConfig, fingerprint, load_config
from .datalog import FactDb
from .dsl import WebForm, load_form, serialize_form
from .errors import (
    AnnotatorError,
    ConfigError,
    ConsentAuditError,
    DslSyntaxError,
    FormValidationError,
    IngestError,
)
from .facts import generate_base_facts, merge_semantic_facts
from .ingest import construct_form, extract_html_elements, load_visual_elements
from .reporting import (
    CorpusEntry,
    FormReport,
    PiiTable,
    corpus_metrics,
    emit_report,
    report_from_dict,
    report_to_dict,
    serialize_report,
    website_rates_csv,
)
from .rules import check_form, rules_metadata, rules_source, to_souffle

log = logging.getLogger("consent_audit")


class ExitCode:
    OK = 0
    VIOLATIONS = 1
    INPUT_ERROR = 2
    INTERNAL_ERROR = 3
    REMOTE_FAILURE = 4


_INPUT_ERRORS = (DslSyntaxError, FormValidationError, IngestError, ConfigError, FileNotFoundError, IsADirectoryError)


# -- pipeline ---------------------------------------------------------------


@dataclass
class Pipeline:
    cfg: RunConfig
    tables: KeywordTables
    pii: PiiTable
    fingerprint: str
    remote: Optional[RemoteAnnotator] = None

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Pipeline":
        try:
            tables = KeywordTables.load(cfg.annotator_keywords)
            pii = PiiTable.load(cfg.pii_keywords)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad keyword table: {exc}") from exc
        remote = None
        if cfg.annotator == "remote":
            s = cfg.remote
            try:
                service = ServiceConfig.from_env(
                    timeout=s.timeout, max_attempts=s.max_attempts, backoff_base=s.backoff_base,
                    max_in_flight=s.max_in_flight, cache_dir=s.cache_dir,
                )
                remote = RemoteAnnotator(service)
            except AnnotatorError:
                if not cfg.fallback:
                    raise
                log.warning("remote annotator not configured; using the heuristic backend")
        fp = fingerprint(cfg, tables.raw, pii.raw, rules_source())
        return cls(cfg, tables, pii, fp, remote)

    def annotate(self, form: WebForm):
        """Semantic facts plus the name of the backend that produced them."""
        if self.remote is not None:
            try:
                return annotate_form(form, remote=self.remote), "remote"
            except AnnotatorError as exc:
                if not self.cfg.fallback:
                    raise
                log.warning("remote annotator failed (%s); falling back to heuristic", exc)
                return annotate_form(form, tables=self.tables), "heuristic (fallback)"
        return annotate_form(form, tables=self.tables), "heuristic"

    def facts(self, form: WebForm) -> tuple[FactDb, str]:
        semantic, backend = self.annotate(form)
        db = generate_base_facts(form, self.cfg.select_types, self.cfg.submit_keywords)
        return merge_semantic_facts(db, semantic), backend

    def check(self, form: WebForm) -> FormReport:
        db, backend = self.facts(form)
        return emit_report(form, check_form(db), backend, self.fingerprint)


def _write(out: Optional[str], text: str, default_path: Optional[Path] = None) -> None:
    target = Path(out) if out else default_path
    if target is None or str(target) == "-":
        sys.stdout.write(text)
        return
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")


def _default_out(cfg: RunConfig, name: str) -> Optional[Path]:
    return Path(cfg.output_dir) / name if cfg.output_dir else None


# -- subcommands ------------------------------------------------------------


def cmd_parse(args, cfg: RunConfig) -> int:
    html_path = Path(args.html)
    html = html_path.read_bytes()
    if args.visual == "-":
        visual_raw = sys.stdin.buffer.read()
    else:
        visual_raw = Path(args.visual).read_bytes()
    H = extract_html_elements(html, cfg.preselected_classes)
    V = load_visual_elements(visual_raw)
    form_id = args.form_id or html_path.name.split(".")[0]
    _, form = construct_form(H, V, cfg.match, form_id=form_id, source_url=args.source_url)
    _write(args.out, serialize_form(form).decode("utf-8"), _default_out(cfg, f"{form_id}.form.json"))
    return ExitCode.OK


def cmd_annotate(args, cfg: RunConfig) -> int:
    form = load_form(args.form)
    facts, backend = Pipeline.from_config(cfg).annotate(form)
    doc = {"form_id": form.form_id, "backend": backend,
           "facts": [{"predicate": f.predicate, "terms": list(f.terms)} for f in facts]}
    _write(args.out, json.dumps(doc, indent=2, ensure_ascii=False) + "\n", _default_out(cfg, f"{form.form_id}.semantic.json"))
    return ExitCode.OK


def cmd_facts(args, cfg: RunConfig) -> int:
    form = load_form(args.form)
    db, _ = Pipeline.from_config(cfg).facts(form)
    target = Path(args.out) if args.out else (_default_out(cfg, f"{form.form_id}.facts") or Path(f"{form.form_id}.facts"))
    db.export(target)
    print(target)
    return ExitCode.OK


def cmd_check(args, cfg: RunConfig) -> int:
    form = load_form(args.form)
    report = Pipeline.from_config(cfg).check(form)
    _write(args.out, serialize_report(report), _default_out(cfg, f"{form.form_id}.report.json"))
    return ExitCode.VIOLATIONS if report.violations else ExitCode.OK


def _read_categories(path: Path) -> dict[str, set[str]]:
    cats: dict[str, set[str]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if len(row) < 2 or row[0].strip().lower() == "website" or row[0].startswith("#"):
                continue
            for c in row[1].split(";"):
                if c.strip():
                    cats.setdefault(row[0].strip(), set()).add(c.strip())
    return cats


_WORKER: Optional[Pipeline] = None


def _worker_init(cfg: RunConfig) -> None:
    global _WORKER
    _WORKER = Pipeline.from_config(cfg)


def _corpus_job(path: str):
    try:
        form = load_form(path)
        report = _WORKER.check(form)
        return path, report_to_dict(report), None
    except ConsentAuditError as exc:
        return path, None, f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        return path, None, f"{type(exc).__name__}: {exc}"


def cmd_corpus(args, cfg: RunConfig) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    paths = sorted(str(p) for p in root.glob("*/*.form.json"))
    if not paths:
        log.error("no <website>/<form>.form.json files under %s", root)
        return ExitCode.INPUT_ERROR
    out_dir = Path(cfg.output_dir or args.out or root / "_consent_audit")
    if cfg.parallelism > 1:
        with ProcessPoolExecutor(cfg.parallelism, initializer=_worker_init, initargs=(cfg,)) as pool:
            results = list(pool.map(_corpus_job, paths))
    else:
        _worker_init(cfg)
        results = [_corpus_job(p) for p in paths]

    entries, errors = [], []
    for path, report_doc, err in results:
        rel = Path(path).relative_to(root)
        if err is not None:
            errors.append({"path": rel.as_posix(), "error": err})
            continue
        report = report_from_dict(report_doc)
        entries.append(CorpusEntry(rel.parts[0], rel.as_posix(), load_form(path), report))
        target = out_dir / "reports" / rel.parts[0] / (rel.name[: -len(".form.json")] + ".report.json")
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(serialize_report(report), encoding="utf-8")
    cats_file = root / "categories.csv"
    cats = _read_categories(cats_file) if cats_file.exists() else {}
    metrics = corpus_metrics(entries, cats, errors, PiiTable.load(cfg.pii_keywords))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / "website_rates.csv").write_text(website_rates_csv(metrics), encoding="utf-8")
    for e in errors:
        log.error("%s: %s", e["path"], e["error"])
    return ExitCode.INPUT_ERROR if not entries else ExitCode.OK


def cmd_rules_dump(args, cfg: RunConfig) -> int:
    if args.format == "dl":
        text = rules_source()
    elif args.format == "souffle":
        text = to_souffle()
    else:
        text = json.dumps(rules_metadata(), indent=2) + "\n"
    _write(args.out, text)
    return ExitCode.OK


# -- argument parsing -------------------------------------------------------


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="TOML or JSON run configuration")
    p.add_argument("--annotator", choices=("heuristic", "remote"), default=d)
    p.add_argument("--output", default=d, help="output directory")
    p.add_argument("--jobs", type=int, default=d, help="worker processes for corpus mode")
    p.add_argument("--fallback", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="use the heuristic annotator when the remote one fails")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="consent-audit", description="Check web consent forms against GDPR consent rules.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        _add_globals(sp, suppress=True)
        sp.set_defaults(func=func)
        return sp

    sp = add("parse", cmd_parse, "build a .form.json from HTML and visual elements")
    sp.add_argument("html")
    sp.add_argument("--visual", required=True, help="visual elements JSON, or - for stdin")
    sp.add_argument("--form-id")
    sp.add_argument("--source-url")
    sp.add_argument("-o", "--out")

    sp = add("annotate", cmd_annotate, "print semantic facts for a form")
    sp.add_argument("form")
    sp.add_argument("-o", "--out")

    sp = add("facts", cmd_facts, "export the fact directory for a form")
    sp.add_argument("form")
    sp.add_argument("-o", "--out")

    sp = add("check", cmd_check, "check one form and write its report")
    sp.add_argument("form")
    sp.add_argument("-o", "--out")

    sp = add("corpus", cmd_corpus, "check every <website>/<form>.form.json under a directory")
    sp.add_argument("dir")
    sp.add_argument("-o", "--out")

    rules = sub.add_parser("rules", help="rule program utilities")
    rsub = rules.add_subparsers(dest="rules_command", required=True)
    sp = rsub.add_parser("dump", help="write the rule program")
    _add_globals(sp, suppress=True)
    sp.set_defaults(func=cmd_rules_dump)
    sp.add_argument("--format", choices=("dl", "json", "souffle"), default="dl")
    sp.add_argument("-o", "--out")
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.annotator:
        overrides["annotator"] = args.annotator
    if args.output:
        overrides["output_dir"] = args.output
    if args.jobs is not None:
        overrides["parallelism"] = args.jobs
    if args.fallback:
        overrides["fallback"] = True
    return replace(cfg, **overrides) if overrides else cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        return args.func(args, cfg)
    except AnnotatorError as exc:
        print(f"consent-audit: annotator failure: {exc}", file=sys.stderr)
        return ExitCode.REMOTE_FAILURE
    except _INPUT_ERRORS as exc:
        print(f"consent-audit: {exc}", file=sys.stderr)
        return ExitCode.INPUT_ERROR
    except ConsentAuditError as exc:
        print(f"consent-audit: {exc}", file=sys.stderr)
        return ExitCode.INTERNAL_ERROR
    except OSError as exc:
        print(f"consent-audit: I/O error: {exc}", file=sys.stderr)
        return ExitCode.INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
