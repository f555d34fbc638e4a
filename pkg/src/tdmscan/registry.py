"""Tool registry and pattern-based detection of tool invocations.

The shipped registry holds 38 technical-debt-management tools, each with
token-anchored detection regexes and metadata (tool type, TDM activity,
debt type).  A pattern only matches at token boundaries — preceded and
followed by whitespace, a line edge, or shell punctuation — so a tool name
embedded in a longer token or a URL path segment never fires.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from importlib import resources
from typing import Any, Iterable, Mapping

from .config_model import PhaseKind, PipelineConfig, iter_command_lines
from .script_resolver import (
    ScriptDocument,
    extract_script_refs,
    is_installer_segment,
    split_segments,
)

TOOL_TYPES = frozenset(
    {"linter", "static_analyzer", "formatter", "linter_analyzer", "architecture_analyzer"}
)
TDM_ACTIVITIES = frozenset({"identification", "measurement", "prevention"})
DEBT_TYPES = frozenset({"code", "build", "security", "architecture"})

SOURCE_CONFIG = "config"
SOURCE_SCRIPT = "script"

INVOCATION_DIRECT = "direct"
INVOCATION_SCRIPT = "script"
INVOCATION_BOTH = "both"

# Token boundary: whitespace, line edge, or shell punctuation.  `/`, `-`,
# `.`, `_` and `=` are intentionally not boundaries: path segments, forks
# like `myflake8fork`, and env assignments must not match.
_BOUNDARY_CLASS = "[\\s;|&()<>'\"`:,]"
_EXPECTED_TOOL_COUNT = 38


class RegistryError(ValueError):
    """Base class for registry validation failures."""


class DuplicateToolId(RegistryError):
    pass


class InvalidPattern(RegistryError):
    pass


class UnknownEnumValue(RegistryError):
    pass


def compile_anchored(pattern: str) -> re.Pattern[str]:
    """Compile `pattern` so it only matches at token boundaries."""
    try:
        return re.compile(
            f"(?:^|(?<={_BOUNDARY_CLASS}))(?:{pattern})(?=$|{_BOUNDARY_CLASS})"
        )
    except re.error as exc:
        raise InvalidPattern(f"pattern {pattern!r} does not compile: {exc}") from exc


@dataclass(frozen=True)
class ToolSpec:
    """One registry entry; `compiled` carries the anchored patterns."""

    id: str
    display_name: str
    patterns: tuple[str, ...]
    tool_type: str
    tdm_activity: frozenset[str]
    debt_type: str
    compiled: tuple[re.Pattern[str], ...]


@dataclass(frozen=True)
class Registry:
    """Immutable set of tool specs, id-sorted for deterministic iteration."""

    tools: tuple[ToolSpec, ...]
    version: str

    def ids(self) -> list[str]:
        return [tool.id for tool in self.tools]

    def by_id(self, tool_id: str) -> ToolSpec:
        for tool in self.tools:
            if tool.id == tool_id:
                return tool
        raise KeyError(tool_id)

    def __len__(self) -> int:
        return len(self.tools)


@dataclass(frozen=True)
class SourceContext:
    """Where a scanned text comes from, for detection attribution."""

    source: str
    phase: PhaseKind
    job_index: int
    script_path: str | None = None
    ordinal_base: int = 0


@dataclass(frozen=True)
class Detection:
    """One tool sighting on one line of config or script text."""

    tool_id: str
    source: str
    script_path: str | None
    phase: PhaseKind
    job_index: int
    matched_text: str
    line_ordinal: int


@dataclass(frozen=True)
class ToolUsage:
    """Per-pipeline usage of one tool: invocation style plus evidence."""

    invocation: str
    detections: tuple[Detection, ...]


@dataclass
class PipelineToolProfile:
    """All tool usages found in one pipeline, keyed by tool id."""

    tools: dict[str, ToolUsage]

    def tool_ids(self) -> list[str]:
        return sorted(self.tools)

    def all_detections(self) -> list[Detection]:
        out: list[Detection] = []
        for tool_id in self.tool_ids():
            out.extend(self.tools[tool_id].detections)
        return out

    def detections_for_job(self, job_index: int) -> list[Detection]:
        return [d for d in self.all_detections() if d.job_index == job_index]

    def job_indexes(self) -> list[int]:
        return sorted({d.job_index for d in self.all_detections()})


def _require(record: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in record:
        raise RegistryError(f"{where}.{key}: missing required field")
    return record[key]


def load_registry(data: Mapping[str, Any]) -> Registry:
    """Validate a registry document and compile its patterns.

    Raises DuplicateToolId, InvalidPattern or UnknownEnumValue (all
    RegistryError subclasses) with the offending field path in the message.
    """
    if not isinstance(data, Mapping):
        raise RegistryError("registry document must be a mapping")
    records = data.get("tools")
    if not isinstance(records, list):
        raise RegistryError("tools: missing or not a list")
    version = str(data.get("version", "0"))

    tools: list[ToolSpec] = []
    seen: set[str] = set()
    for i, record in enumerate(records):
        where = f"tools[{i}]"
        if not isinstance(record, Mapping):
            raise RegistryError(f"{where}: not a mapping")
        tool_id = str(_require(record, "id", where))
        if tool_id != tool_id.lower():
            raise RegistryError(f"{where}.id: {tool_id!r} is not lowercase")
        if tool_id in seen:
            raise DuplicateToolId(f"{where}.id: duplicate tool id {tool_id!r}")
        seen.add(tool_id)

        display_name = str(_require(record, "display_name", where))
        patterns = _require(record, "patterns", where)
        if not isinstance(patterns, list) or not patterns:
            raise InvalidPattern(f"{where}.patterns: must be a non-empty list")
        try:
            compiled = tuple(compile_anchored(str(p)) for p in patterns)
        except InvalidPattern as exc:
            raise InvalidPattern(f"{where}.patterns: {exc}") from exc

        tool_type = str(_require(record, "tool_type", where))
        if tool_type not in TOOL_TYPES:
            raise UnknownEnumValue(f"{where}.tool_type: {tool_type!r}")
        activities = _require(record, "tdm_activity", where)
        if not isinstance(activities, list) or not activities:
            raise UnknownEnumValue(f"{where}.tdm_activity: must be a non-empty list")
        activity_set = frozenset(str(a) for a in activities)
        unknown = activity_set - TDM_ACTIVITIES
        if unknown:
            raise UnknownEnumValue(f"{where}.tdm_activity: {sorted(unknown)!r}")
        debt_type = str(_require(record, "debt_type", where))
        if debt_type not in DEBT_TYPES:
            raise UnknownEnumValue(f"{where}.debt_type: {debt_type!r}")

        tools.append(
            ToolSpec(
                id=tool_id,
                display_name=display_name,
                patterns=tuple(str(p) for p in patterns),
                tool_type=tool_type,
                tdm_activity=activity_set,
                debt_type=debt_type,
                compiled=compiled,
            )
        )

    tools.sort(key=lambda tool: tool.id)
    return Registry(tools=tuple(tools), version=version)


def load_registry_file(path: str) -> Registry:
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise RegistryError(f"{path}: not valid JSON: {exc}") from exc
    return load_registry(data)


def shipped_registry() -> Registry:
    """The packaged 38-tool registry."""
    text = resources.files("tdmscan.data").joinpath("registry.json").read_text("utf-8")
    registry = load_registry(json.loads(text))
    assert len(registry) == _EXPECTED_TOOL_COUNT
    return registry


def detect_in_text(
    text: str,
    registry: Registry,
    ctx: SourceContext,
    install_exclusion: bool = True,
) -> list[Detection]:
    """Scan text line by line for tool invocations.

    At most one Detection per (tool, line).  Lines whose leading character
    is `#` are comments and skipped.  With `install_exclusion` on, shell
    segments that merely install a package manager's payload are ignored.
    """
    detections: list[Detection] = []
    for line_index, line in enumerate(text.splitlines()):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if install_exclusion:
            parts = [
                segment
                for segment in split_segments(stripped)
                if not is_installer_segment(segment)
            ]
        else:
            parts = [stripped]
        if not parts:
            continue
        for tool in registry.tools:
            matched: str | None = None
            for pattern in tool.compiled:
                for part in parts:
                    found = pattern.search(part)
                    if found:
                        matched = found.group(0)
                        break
                if matched:
                    break
            if matched:
                detections.append(
                    Detection(
                        tool_id=tool.id,
                        source=ctx.source,
                        script_path=ctx.script_path,
                        phase=ctx.phase,
                        job_index=ctx.job_index,
                        matched_text=matched,
                        line_ordinal=ctx.ordinal_base + line_index,
                    )
                )
    return detections


def _sonarcloud_flavored(cfg: PipelineConfig, scripts: Iterable[ScriptDocument]) -> bool:
    addons = cfg.raw.get("addons")
    if isinstance(addons, Mapping) and "sonarcloud" in addons:
        return True
    if "sonarcloud" in cfg.source.content.lower():
        return True
    for doc in scripts:
        if doc.resolved and doc.content and "sonarcloud" in doc.content.lower():
            return True
    return False


def _disambiguate_sonar(
    cfg: PipelineConfig,
    scripts: list[ScriptDocument],
    detections: list[Detection],
    registry: Registry,
) -> list[Detection]:
    """Relabel `sonar-scanner` hits as sonarcloud for sonarcloud pipelines."""
    ids = set(registry.ids())
    if "sonarqube" not in ids or "sonarcloud" not in ids:
        return detections
    if not any(d.tool_id == "sonarqube" for d in detections):
        return detections
    if not _sonarcloud_flavored(cfg, scripts):
        return detections
    return [
        replace(d, tool_id="sonarcloud")
        if d.tool_id == "sonarqube" and "sonar-scanner" in d.matched_text
        else d
        for d in detections
    ]


def profile_pipeline(
    cfg: PipelineConfig,
    scripts: list[ScriptDocument],
    registry: Registry,
    *,
    install_exclusion: bool = True,
    attribution: Mapping[str, list] | None = None,
) -> PipelineToolProfile:
    """Merge config-line and script-content detections into a tool profile.

    `scripts` are the documents resolved from the pipeline's commands; when
    `attribution` (path -> referencing commands) is not supplied, one level
    of references is re-derived from the config.  Per tool, the invocation
    style is direct, script, or both; a tool counts once per pipeline no
    matter how many detections it has.
    """
    detections: list[Detection] = []
    for cmd in iter_command_lines(cfg):
        ctx = SourceContext(
            SOURCE_CONFIG, cmd.phase, cmd.job_index, ordinal_base=cmd.ordinal
        )
        detections.extend(detect_in_text(cmd.text, registry, ctx, install_exclusion))

    if attribution is None:
        derived: dict[str, list] = {}
        for cmd in iter_command_lines(cfg):
            for ref in extract_script_refs(cmd):
                holders = derived.setdefault(ref.normalized_path, [])
                if cmd not in holders:
                    holders.append(cmd)
        attribution = derived

    by_path = {doc.path: doc for doc in scripts}
    for path in sorted(attribution):
        doc = by_path.get(path)
        if doc is None or not doc.resolved or doc.content is None:
            continue
        for cmd in attribution[path]:
            ctx = SourceContext(SOURCE_SCRIPT, cmd.phase, cmd.job_index, path)
            detections.extend(
                detect_in_text(doc.content, registry, ctx, install_exclusion)
            )

    detections = list(dict.fromkeys(detections))
    detections = _disambiguate_sonar(cfg, scripts, detections, registry)

    grouped: dict[str, list[Detection]] = {}
    for detection in detections:
        grouped.setdefault(detection.tool_id, []).append(detection)

    tools: dict[str, ToolUsage] = {}
    for tool_id in sorted(grouped):
        group = grouped[tool_id]
        sources = {d.source for d in group}
        if sources == {SOURCE_CONFIG}:
            invocation = INVOCATION_DIRECT
        elif sources == {SOURCE_SCRIPT}:
            invocation = INVOCATION_SCRIPT
        else:
            invocation = INVOCATION_BOTH
        tools[tool_id] = ToolUsage(invocation=invocation, detections=tuple(group))
    return PipelineToolProfile(tools=tools)
