"""Shell-command tokenization and external-script reference resolution.

Pipeline commands frequently delegate to shell scripts stored in the
repository; those scripts are part of the analysis corpus.  Extraction is
heuristic and purely textual: tokens ending in ``.sh``/``.bash``, tokens
starting with ``./``, and the path argument of an interpreter invocation
(``sh X``, ``bash X``, ``source X``, ``. X``) count as references.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Protocol

from .config_model import CommandLine

SCRIPT_SUFFIXES = (".sh", ".bash")

_SEGMENT_SPLIT = re.compile(r"&&|\|\||;|\||&")
_ACTION_SPLIT = re.compile(r"&&|\|\||;")
_ENV_ASSIGNMENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*=")

# Prefix commands that wrap the real command without changing it.
_WRAPPERS = frozenset(
    {"sudo", "time", "env", "nice", "travis_retry", "travis_wait", "xvfb-run"}
)
_INTERPRETER_BASES = frozenset({"sh", "bash"})


@dataclass(frozen=True)
class ScriptRef:
    """One textual reference from a command line to a repository script."""

    raw_token: str
    normalized_path: str
    referencing_command: CommandLine


@dataclass(frozen=True)
class ScriptDocument:
    """A referenced script; ``resolved`` is False when absent from the tree."""

    path: str
    content: str | None
    resolved: bool


class FileTree(Protocol):
    """Read-only accessor over repo-relative paths; must allow concurrent reads."""

    def read(self, path: str) -> str | None:
        """Content of `path`, or None when the tree does not contain it."""
        ...


class MappingTree:
    """In-memory file tree backed by a plain dict."""

    def __init__(self, files: dict[str, str]):
        self._files = dict(files)

    def read(self, path: str) -> str | None:
        return self._files.get(path)


def split_segments(text: str) -> list[str]:
    """Split on all shell operators (`&& || ; | &`), dropping empties."""
    return [part.strip() for part in _SEGMENT_SPLIT.split(text) if part.strip()]


def split_actions(text: str) -> list[str]:
    """Split on `&& || ;` only — a pipe chain stays one action."""
    return [part.strip() for part in _ACTION_SPLIT.split(text) if part.strip()]


def shell_tokens(segment: str) -> list[str]:
    """Whitespace tokens with surrounding quotes and parens stripped."""
    tokens = []
    for raw in segment.split():
        token = raw.strip("\"'()")
        if token:
            tokens.append(token)
    return tokens


def strip_wrappers(tokens: list[str]) -> list[str]:
    """Drop env assignments and wrapper commands preceding the real command."""
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if _ENV_ASSIGNMENT.match(token):
            i += 1
            continue
        base = token.rsplit("/", 1)[-1]
        if base in _WRAPPERS:
            i += 1
            # travis_wait may carry a minutes argument.
            if base == "travis_wait" and i < len(tokens) and tokens[i].isdigit():
                i += 1
            continue
        break
    return tokens[i:]


_INSTALLER_RULES: tuple[tuple[frozenset[str], frozenset[str]], ...] = (
    (frozenset({"pip", "pip2", "pip3"}), frozenset({"install"})),
    (frozenset({"npm"}), frozenset({"install", "i"})),
    (frozenset({"gem"}), frozenset({"install"})),
    (frozenset({"apt-get"}), frozenset({"install"})),
    (frozenset({"brew"}), frozenset({"install"})),
    (frozenset({"composer"}), frozenset({"require"})),
    (frozenset({"go"}), frozenset({"install"})),
)


def is_installer_segment(segment: str) -> bool:
    """True when the segment's command is a package-manager install."""
    tokens = strip_wrappers(shell_tokens(segment))
    if len(tokens) < 2:
        return False
    base = tokens[0].rsplit("/", 1)[-1]
    for heads, verbs in _INSTALLER_RULES:
        if base in heads and tokens[1] in verbs:
            return True
    if base.startswith("python"):
        rest = tokens[1:]
        if len(rest) >= 3 and rest[0] == "-m" and rest[1] == "pip" and rest[2] == "install":
            return True
    return False


def normalize_script_path(token: str) -> str:
    """Repo-relative normal form: forward slashes, no leading './'.

    Tokens made only of dots and slashes (Go's `./...` wildcard, `.`)
    normalize to the empty string and are dropped by callers.
    """
    path = token.replace("\\", "/")
    while path.startswith("./"):
        path = path[2:]
    path = re.sub(r"/{2,}", "/", path)
    if not path.strip("./"):
        return ""
    return path


def _has_parent_segment(path: str) -> bool:
    return any(part == ".." for part in path.split("/"))


def _interpreter_argument(tokens: list[str]) -> str | None:
    core = strip_wrappers(tokens)
    if not core:
        return None
    head = core[0]
    base = head.rsplit("/", 1)[-1]
    if base not in _INTERPRETER_BASES and head not in ("source", "."):
        return None
    for token in core[1:]:
        if token.startswith("-"):
            continue
        return token
    return None


def _iter_ref_tokens(text: str, warnings: list[str] | None) -> Iterable[str]:
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        for segment in split_segments(stripped):
            tokens = shell_tokens(segment)
            interp_arg = _interpreter_argument(tokens)
            for token in tokens:
                if (
                    token.endswith(SCRIPT_SUFFIXES)
                    or token.startswith("./")
                    or token == interp_arg
                ):
                    if token.startswith("/") or _has_parent_segment(token):
                        if warnings is not None:
                            warnings.append(
                                f"rejected script reference outside repository: {token}"
                            )
                        continue
                    if "$" in token and warnings is not None:
                        warnings.append(
                            f"script reference with unresolved variable: {token}"
                        )
                    yield token


def extract_script_refs(
    cmd: CommandLine, warnings: list[str] | None = None
) -> list[ScriptRef]:
    """Script references in a command, order-preserving, deduplicated by path.

    A pure function of the command text; `warnings` (when given) collects
    rejected root-escaping tokens and variable-bearing tokens.
    """
    refs: list[ScriptRef] = []
    seen: set[str] = set()
    for token in _iter_ref_tokens(cmd.text, warnings):
        normalized = normalize_script_path(token)
        if not normalized or normalized in seen:
            continue
        seen.add(normalized)
        refs.append(ScriptRef(token, normalized, cmd))
    return refs


def resolve_scripts(refs: list[ScriptRef], tree: FileTree) -> list[ScriptDocument]:
    """One ScriptDocument per distinct normalized path; absence is data."""
    docs: list[ScriptDocument] = []
    seen: set[str] = set()
    for ref in refs:
        path = ref.normalized_path
        if path in seen:
            continue
        seen.add(path)
        content = tree.read(path)
        docs.append(ScriptDocument(path, content, content is not None))
    return docs


def collect_script_documents(
    commands: Iterable[CommandLine],
    tree: FileTree,
    recursive: bool = False,
    warnings: list[str] | None = None,
) -> tuple[list[ScriptDocument], dict[str, list[CommandLine]]]:
    """Resolve every script referenced by `commands` against `tree`.

    Returns the documents (first-reference order) and an attribution map
    from normalized path to the pipeline commands that (transitively) invoke
    it.  With `recursive` enabled, scripts referenced from resolved scripts
    are followed too, attributed to the root command; cycles are cut.
    """
    attribution: dict[str, list[CommandLine]] = {}
    docs: dict[str, ScriptDocument] = {}
    order: list[str] = []
    queue: list[tuple[str, CommandLine]] = []
    scanned: set[tuple[str, int, str]] = set()

    def attach(path: str, cmd: CommandLine) -> None:
        holders = attribution.setdefault(path, [])
        if cmd not in holders:
            holders.append(cmd)

    for cmd in commands:
        for ref in extract_script_refs(cmd, warnings):
            attach(ref.normalized_path, cmd)
            queue.append((ref.normalized_path, cmd))

    while queue:
        path, root = queue.pop(0)
        if path not in docs:
            content = tree.read(path)
            docs[path] = ScriptDocument(path, content, content is not None)
            order.append(path)
        doc = docs[path]
        key = (path, root.job_index, f"{root.phase.value}:{root.ordinal}")
        if not recursive or not doc.resolved or key in scanned:
            continue
        scanned.add(key)
        for token in _iter_ref_tokens(doc.content or "", warnings):
            normalized = normalize_script_path(token)
            if not normalized:
                continue
            attach(normalized, root)
            queue.append((normalized, root))

    return [docs[path] for path in order], attribution
