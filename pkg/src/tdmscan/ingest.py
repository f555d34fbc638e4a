"""Corpus inputs: local directory layouts, JSON manifests, and an optional
rate-limited HTTP fetcher for raw config/script files.

A manifest is the interchange point with whatever large-scale harvesting
produced the corpus; each entry names one pipeline (repo slug, config path,
script paths) sourced either from a local root or a remote raw-content base
URL.  Entry failures are isolated: one bad entry never aborts a run.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol

from .config_model import RawDocument

MANIFEST_SCHEMA_VERSION = 1
AUTH_TOKEN_ENV = "TDMSCAN_FETCH_TOKEN"


class ManifestParseError(ValueError):
    pass


class DuplicateSlug(ManifestParseError):
    pass


class NotFound(RuntimeError):
    """A required remote or local file does not exist."""


class RateLimited(RuntimeError):
    """The retry budget was exhausted on throttled responses."""


@dataclass(frozen=True)
class ManifestEntry:
    repo_slug: str
    config_path: str
    script_paths: tuple[str, ...]
    local_root: str | None = None
    remote_base_url: str | None = None

    @property
    def is_local(self) -> bool:
        return self.local_root is not None


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    created_at: str = ""
    notes: str = ""


@dataclass(frozen=True)
class FetchPolicy:
    """Limits for remote fetching; the auth token stays in the environment."""

    max_requests_per_hour: int = 3600
    retry_budget: int = 3
    timeout: float = 10.0
    auth_token_env: str = AUTH_TOKEN_ENV

    def __post_init__(self):
        if self.max_requests_per_hour <= 0:
            raise ValueError("max_requests_per_hour must be > 0")


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class TokenBucket:
    """Thread-safe token bucket: capacity = hourly budget, steady refill."""

    def __init__(self, max_requests_per_hour: int, clock: Clock | None = None):
        if max_requests_per_hour <= 0:
            raise ValueError("max_requests_per_hour must be > 0")
        self._clock = clock or SystemClock()
        self._capacity = float(max_requests_per_hour)
        self._rate = max_requests_per_hour / 3600.0
        self._tokens = self._capacity
        self._updated = self._clock.now()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        """Block (via the injected clock) until one token is available."""
        while True:
            with self._lock:
                now = self._clock.now()
                self._tokens = min(
                    self._capacity, self._tokens + (now - self._updated) * self._rate
                )
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._clock.sleep(wait)


def _validate_rel_path(path: str, where: str) -> str:
    if not isinstance(path, str) or not path:
        raise ManifestParseError(f"{where}: path must be a non-empty string")
    if path.startswith("/") or any(part == ".." for part in path.split("/")):
        raise ManifestParseError(f"{where}: path must be repo-relative: {path!r}")
    return path


def parse_manifest(data: Mapping[str, Any]) -> CorpusManifest:
    if not isinstance(data, Mapping):
        raise ManifestParseError("manifest must be a JSON object")
    raw_entries = data.get("entries")
    if not isinstance(raw_entries, list):
        raise ManifestParseError("entries: missing or not a list")

    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for i, raw in enumerate(raw_entries):
        where = f"entries[{i}]"
        if not isinstance(raw, Mapping):
            raise ManifestParseError(f"{where}: not an object")
        slug = raw.get("repo_slug")
        if not isinstance(slug, str) or not slug:
            raise ManifestParseError(f"{where}.repo_slug: missing")
        if slug in seen:
            raise DuplicateSlug(f"{where}.repo_slug: duplicate slug {slug!r}")
        seen.add(slug)
        config_path = _validate_rel_path(
            raw.get("config_path", ""), f"{where}.config_path"
        )
        script_paths = tuple(
            _validate_rel_path(p, f"{where}.script_paths[{j}]")
            for j, p in enumerate(raw.get("script_paths", []))
        )
        local_root = raw.get("local_root")
        remote_base_url = raw.get("remote_base_url")
        if (local_root is None) == (remote_base_url is None):
            raise ManifestParseError(
                f"{where}: exactly one of local_root / remote_base_url required"
            )
        entries.append(
            ManifestEntry(
                repo_slug=slug,
                config_path=config_path,
                script_paths=script_paths,
                local_root=local_root,
                remote_base_url=remote_base_url,
            )
        )
    return CorpusManifest(
        entries=entries,
        created_at=str(data.get("created_at", "")),
        notes=str(data.get("notes", "")),
    )


def load_manifest(path: str) -> CorpusManifest:
    """Load and validate a manifest file; duplicate slugs are rejected."""
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ManifestParseError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{path}: not valid JSON: {exc}") from exc
    return parse_manifest(data)


def _digest(content: str) -> str:
    return hashlib.sha256(content.encode("utf-8", errors="replace")).hexdigest()


class LocalTree:
    """File tree over a local directory; optionally limited to listed paths.

    Never touches the network.  Reads record a sha256 digest per path in
    ``provenance``.
    """

    def __init__(self, root: str, allowed: frozenset[str] | None = None):
        self.root = root
        self.allowed = allowed
        self.provenance: dict[str, dict[str, str]] = {}

    def read(self, path: str) -> str | None:
        if path.startswith("/") or any(part == ".." for part in path.split("/")):
            return None
        if self.allowed is not None and path not in self.allowed:
            return None
        full = os.path.join(self.root, path)
        if not os.path.isfile(full):
            return None
        with open(full, "rb") as handle:
            content = handle.read().decode("utf-8", errors="replace")
        self.provenance[path] = {"source": full, "sha256": _digest(content)}
        return content


class RemoteTree:
    """Lazily fetches raw files over HTTPS, honoring a shared rate limit.

    404 responses resolve to None (absence is data); throttled or failing
    responses are retried within the policy's budget, then raise
    RateLimited.  Fetches are cached so re-reads cost nothing.
    """

    def __init__(
        self,
        base_url: str,
        policy: FetchPolicy,
        session,
        bucket: TokenBucket,
        clock: Clock | None = None,
        allowed: frozenset[str] | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.policy = policy
        self.session = session
        self.bucket = bucket
        self.clock = clock or SystemClock()
        self.allowed = allowed
        self.provenance: dict[str, dict[str, str]] = {}
        self._cache: dict[str, str | None] = {}
        self._lock = threading.Lock()

    def _headers(self) -> dict[str, str]:
        token = os.environ.get(self.policy.auth_token_env)
        if token:
            return {"Authorization": f"token {token}"}
        return {}

    def read(self, path: str) -> str | None:
        if self.allowed is not None and path not in self.allowed:
            return None
        with self._lock:
            if path in self._cache:
                return self._cache[path]
        url = f"{self.base_url}/{path}"
        content = self._fetch(url)
        with self._lock:
            self._cache[path] = content
            if content is not None:
                self.provenance[path] = {"url": url, "sha256": _digest(content)}
        return content

    def _fetch(self, url: str) -> str | None:
        attempts = 0
        while True:
            self.bucket.acquire()
            attempts += 1
            try:
                response = self.session.get(
                    url, timeout=self.policy.timeout, headers=self._headers()
                )
                status = response.status_code
            except Exception:
                status = None
            if status == 200:
                return response.text
            if status == 404:
                return None
            if attempts > self.policy.retry_budget:
                raise RateLimited(f"retry budget exhausted fetching {url}")
            # Linear backoff keeps the injected clock easy to reason about.
            self.clock.sleep(min(2.0 * attempts, 30.0))


def _read_local_file(root: str, path: str) -> str | None:
    full = os.path.join(root, path)
    if not os.path.isfile(full):
        return None
    with open(full, "rb") as handle:
        return handle.read().decode("utf-8", errors="replace")


def materialize(
    entry: ManifestEntry,
    policy: FetchPolicy | None = None,
    session=None,
    clock: Clock | None = None,
    bucket: TokenBucket | None = None,
):
    """Produce (RawDocument, tree) for one manifest entry.

    Local entries never touch the network.  Remote entries fetch the config
    eagerly (missing config -> NotFound, the entry is skippable) and expose
    declared script paths through a lazily fetching tree.
    """
    policy = policy or FetchPolicy()
    allowed = frozenset(entry.script_paths)
    if entry.is_local:
        content = _read_local_file(entry.local_root, entry.config_path)
        if content is None:
            raise NotFound(f"{entry.repo_slug}: missing {entry.config_path}")
        tree = LocalTree(entry.local_root, allowed=allowed)
        tree.provenance[entry.config_path] = {
            "source": os.path.join(entry.local_root, entry.config_path),
            "sha256": _digest(content),
        }
        doc = RawDocument(entry.repo_slug, entry.config_path, content)
        return doc, tree

    if session is None:
        import requests

        session = requests.Session()
    if bucket is None:
        bucket = TokenBucket(policy.max_requests_per_hour, clock)
    # config fetch first (unrestricted), then restrict reads to scripts
    tree = RemoteTree(
        entry.remote_base_url, policy, session, bucket, clock, allowed=None
    )
    content = tree.read(entry.config_path)
    if content is None:
        raise NotFound(f"{entry.repo_slug}: missing {entry.config_path}")
    tree.allowed = allowed
    doc = RawDocument(entry.repo_slug, entry.config_path, content)
    return doc, tree
