"""Client for a model-backed annotation service."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import requests

from ..errors import AuthError, ProtocolError, TransportError
from .model import CATEGORIES, PREDICATE_ARITY, AnnotationRequest, SemanticFact, filter_valid

log = logging.getLogger(__name__)

URL_ENV = "CONSENT_AUDIT_ANNOTATOR_URL"
KEY_ENV = "CONSENT_AUDIT_ANNOTATOR_KEY"

TEMPLATE_VERSION = "semantic-predicates/1"
PROMPT_TEMPLATE = (
    "You label the text of a web form that asks for consent to process personal data. "
    "For each entry, return facts using only these predicates and arities: "
    + ", ".join(f"{p}/{n}" for p, n in PREDICATE_ARITY.items())
    + ". Action(T, A): the text T tells the user to perform action A (for example 'tick this box'). "
    "Purpose(T, P): T names processing purpose P. Category(T, C, P): purpose P falls in category C, one of "
    + ", ".join(CATEGORIES)
    + ". Controller(C): organisation C processes the data. Withdraw(T, M): T explains how to withdraw consent, by method M. "
    "PolarityAffirmative(T): T asks the user to opt in rather than to opt out. "
    'Reply with JSON of the form {"facts": [{"predicate": ..., "terms": [...]}]}.'
)

_RETRY_STATUS = {408, 425, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ServiceConfig:
    url: str
    key: Optional[str] = None
    timeout: float = 30.0
    max_attempts: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4
    cache_dir: Optional[str] = None

    @classmethod
    def from_env(cls, **overrides) -> "ServiceConfig":
        url = os.environ.get(URL_ENV)
        if not url:
            raise TransportError(f"{URL_ENV} is not set")
        return cls(url=url, key=os.environ.get(KEY_ENV), **overrides)


def _payload(req: AnnotationRequest) -> dict:
    return {
        "template": PROMPT_TEMPLATE,
        "version": TEMPLATE_VERSION,
        "texts": [{"uid": t.uid, "field": t.field, "text": t.text} for t in req.texts],
    }


def cache_key(req: AnnotationRequest) -> str:
    texts = json.dumps([[t.uid, t.field, t.text] for t in req.texts], ensure_ascii=False, sort_keys=True)
    digest = hashlib.sha256(texts.encode("utf-8")).hexdigest()
    return f"{TEMPLATE_VERSION}:{digest}"


def parse_response(doc) -> list[SemanticFact]:
    if not isinstance(doc, dict) or not isinstance(doc.get("facts"), list):
        raise ProtocolError("response must be an object with a 'facts' list")
    facts = []
    for entry in doc["facts"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("terms"), list):
            raise ProtocolError(f"malformed fact entry: {entry!r}")
        facts.append(SemanticFact(str(entry.get("predicate")), tuple(entry["terms"])))
    return filter_valid(facts, "remote")


class RemoteAnnotator:
    """Thread-safe annotator with retry, an in-flight limit and a result cache."""

    backend_name = "remote"

    def __init__(self, config: ServiceConfig, session: Optional[requests.Session] = None, sleep=time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, config.max_in_flight))
        self._cache: dict[str, list[SemanticFact]] = {}
        self._lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self.round_trips = 0

    def _disk_path(self, key: str) -> Optional[Path]:
        if not self.config.cache_dir:
            return None
        name = key.replace("/", "_").replace(":", "_") + ".json"
        return Path(self.config.cache_dir) / name

    def _cached(self, key: str) -> Optional[list[SemanticFact]]:
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        path = self._disk_path(key)
        if path is not None and path.exists():
            try:
                facts = parse_response(json.loads(path.read_text(encoding="utf-8")))
            except (ValueError, ProtocolError):
                return None
            with self._lock:
                self._cache[key] = facts
            return facts
        return None

    def _store(self, key: str, facts: list[SemanticFact]) -> None:
        with self._lock:
            self._cache[key] = facts
        path = self._disk_path(key)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            doc = {"facts": [{"predicate": f.predicate, "terms": list(f.terms)} for f in facts]}
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
            os.replace(tmp, path)

    def annotate(self, req: AnnotationRequest) -> list[SemanticFact]:
        """Raises TransportError, ProtocolError or AuthError."""
        if not req.texts:
            return []
        key = cache_key(req)
        hit = self._cached(key)
        if hit is not None:
            return list(hit)
        with self._lock:
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            hit = self._cached(key)
            if hit is not None:
                return list(hit)
            with self._slots:
                facts = self._fetch(req)
            self._store(key, facts)
            return list(facts)

    def _fetch(self, req: AnnotationRequest) -> list[SemanticFact]:
        headers = {"Content-Type": "application/json"}
        if self.config.key:
            headers["Authorization"] = f"Bearer {self.config.key}"
        last_error = "no attempt made"
        for attempt in range(self.config.max_attempts):
            if attempt:
                self._sleep(self.config.backoff_base * 2 ** (attempt - 1))
            try:
                with self._lock:
                    self.round_trips += 1
                resp = self.session.post(self.config.url, json=_payload(req), headers=headers, timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
                log.info("annotator attempt %d failed: %s", attempt + 1, exc)
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"annotation service rejected credentials (HTTP {resp.status_code})")
            if resp.status_code in _RETRY_STATUS:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise TransportError(f"annotation service returned HTTP {resp.status_code}")
            try:
                doc = resp.json()
            except ValueError as exc:
                raise ProtocolError(f"response is not JSON: {exc}") from exc
            return parse_response(doc)
        raise TransportError(f"annotation service unreachable after {self.config.max_attempts} attempts: {last_error}")
