"""Run configuration: loading from TOML/JSON and fingerprinting."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError
from .facts import DEFAULT_SELECT_TYPES, DEFAULT_SUBMIT_KEYWORDS
from .ingest import DEFAULT_PRESELECTED_CLASSES, MatchConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ANNOTATORS = ("heuristic", "remote")


@dataclass(frozen=True)
class RemoteSettings:
    timeout: float = 30.0
    max_attempts: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4
    cache_dir: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    annotator: str = "heuristic"
    match: MatchConfig = field(default_factory=MatchConfig)
    preselected_classes: tuple[str, ...] = DEFAULT_PRESELECTED_CLASSES
    select_types: tuple[str, ...] = DEFAULT_SELECT_TYPES
    submit_keywords: tuple[str, ...] = DEFAULT_SUBMIT_KEYWORDS
    annotator_keywords: Optional[str] = None
    pii_keywords: Optional[str] = None
    parallelism: int = 1
    output_dir: Optional[str] = None
    fallback: bool = False
    remote: RemoteSettings = field(default_factory=RemoteSettings)

    def __post_init__(self):
        if self.annotator not in ANNOTATORS:
            raise ConfigError(f"annotator must be one of {ANNOTATORS}, got {self.annotator!r}")
        if not isinstance(self.parallelism, int) or self.parallelism < 1:
            raise ConfigError(f"parallelism must be a positive integer, got {self.parallelism!r}")
        for p in (self.annotator_keywords, self.pii_keywords):
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"keyword table {p} does not exist")


def _tuple(v, key) -> tuple[str, ...]:
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise ConfigError(f"{key} must be a list of strings")
    return tuple(v)


def config_from_mapping(doc: dict, base_dir: Path = Path(".")) -> RunConfig:
    known = {"annotator", "match", "preselected_classes", "select_types", "submit_keywords",
             "keyword_tables", "jobs", "parallelism", "output", "output_dir", "fallback", "remote"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    kw: dict[str, Any] = {}
    if "annotator" in doc:
        kw["annotator"] = doc["annotator"]
    if "match" in doc:
        try:
            kw["match"] = MatchConfig(**doc["match"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad [match] section: {exc}") from exc
    for key in ("preselected_classes", "select_types", "submit_keywords"):
        if key in doc:
            kw[key] = _tuple(doc[key], key)
    tables = doc.get("keyword_tables", {})
    if not isinstance(tables, dict) or set(tables) - {"annotator", "pii"}:
        raise ConfigError("keyword_tables takes 'annotator' and 'pii' paths")
    if "annotator" in tables:
        kw["annotator_keywords"] = str(base_dir / tables["annotator"])
    if "pii" in tables:
        kw["pii_keywords"] = str(base_dir / tables["pii"])
    if "jobs" in doc or "parallelism" in doc:
        kw["parallelism"] = doc.get("jobs", doc.get("parallelism"))
    if "output" in doc or "output_dir" in doc:
        kw["output_dir"] = str(base_dir / doc.get("output", doc.get("output_dir")))
    if "fallback" in doc:
        kw["fallback"] = bool(doc["fallback"])
    if "remote" in doc:
        names = {f.name for f in fields(RemoteSettings)}
        if not isinstance(doc["remote"], dict) or set(doc["remote"]) - names:
            raise ConfigError(f"[remote] accepts {sorted(names)}")
        kw["remote"] = RemoteSettings(**doc["remote"])
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    """Read a TOML or JSON configuration file.

    Relative paths inside the file are resolved against its directory.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(raw.decode("utf-8"))
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a table/object")
    return config_from_mapping(doc, path.parent)


def fingerprint(cfg: RunConfig, keyword_text: str, pii_text: str, rules_text: str) -> str:
    """Hash of everything that can change a report's violations."""
    relevant = asdict(cfg)
    for k in ("parallelism", "output_dir", "annotator_keywords", "pii_keywords"):
        relevant.pop(k)
    h = hashlib.sha256()
    for part in (json.dumps(relevant, sort_keys=True, default=str), keyword_text, pii_text, rules_text):
        h.update(part.encode("utf-8"))
        h.update(b"\0")
    return "sha256:" + h.hexdigest()
