"""Normalized model of Travis-style CI pipeline configurations.

A pipeline is an ordered list of stages; each stage holds one or more jobs
that run in parallel; each job executes an ordered set of lifecycle phases
whose entries are shell command lines.  Parsing is a pure transformation:
identical input text always yields a structurally identical model.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Mapping

import yaml


class MalformedDocument(ValueError):
    """The document cannot be parsed as YAML."""


class NotAPipeline(ValueError):
    """The document parses but contains no pipeline lifecycle key."""


class PhaseKind(enum.Enum):
    """Job lifecycle phases, declared in execution order."""

    BEFORE_INSTALL = "before_install"
    INSTALL = "install"
    BEFORE_SCRIPT = "before_script"
    SCRIPT = "script"
    AFTER_SUCCESS = "after_success"
    AFTER_FAILURE = "after_failure"
    BEFORE_DEPLOY = "before_deploy"
    DEPLOY = "deploy"
    AFTER_DEPLOY = "after_deploy"
    AFTER_SCRIPT = "after_script"

    @property
    def order(self) -> int:
        return _PHASE_ORDER[self]

    @property
    def in_deploy_family(self) -> bool:
        return self in DEPLOY_PHASES

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


_PHASE_ORDER = {kind: i for i, kind in enumerate(PhaseKind)}
PHASE_BY_NAME = {kind.value: kind for kind in PhaseKind}

DEPLOY_PHASES = frozenset(
    {PhaseKind.BEFORE_DEPLOY, PhaseKind.DEPLOY, PhaseKind.AFTER_DEPLOY}
)
SETUP_PHASES = frozenset(
    {PhaseKind.BEFORE_INSTALL, PhaseKind.INSTALL, PhaseKind.BEFORE_SCRIPT}
)

# Minimal-validity gate: one of these top-level keys must be present.
LIFECYCLE_KEYS = frozenset(PHASE_BY_NAME) | {"jobs", "matrix", "language"}

NOTIFICATION_CHANNELS = (
    "email",
    "slack",
    "webhooks",
    "irc",
    "campfire",
    "flowdock",
    "hipchat",
    "pushover",
)
OTHER_CHANNEL = "other"
_NOTIFICATION_MODIFIERS = frozenset(
    {"on_success", "on_failure", "on_start", "on_cancel", "on_error", "if"}
)

IMPLICIT_STAGE = "implicit"
CONFIG_FILENAME = ".travis.yml"


@dataclass(frozen=True)
class RawDocument:
    """One CI configuration file as retrieved from a repository."""

    repo_slug: str
    path: str
    content: str


@dataclass(frozen=True)
class CommandLine:
    """A single shell command entry within a job phase."""

    text: str
    phase: PhaseKind
    job_index: int
    ordinal: int


@dataclass
class Job:
    """One execution unit; jobs of the same stage run in parallel."""

    index: int
    stage_name: str | None = None
    display_name: str | None = None
    phases: dict[PhaseKind, list[CommandLine]] = field(default_factory=dict)
    condition: str | None = None
    branch_only: list[str] | None = None

    @property
    def deploys(self) -> bool:
        return any(phase in DEPLOY_PHASES for phase in self.phases)


@dataclass(frozen=True)
class NotificationConfig:
    """Declared notification channels; `channels` holds only enabled ones."""

    channels: frozenset[str]
    email_explicitly_disabled: bool
    raw: Any


@dataclass
class PipelineConfig:
    """Parsed, normalized model of one pipeline configuration."""

    source: RawDocument
    declared_stage_order: list[str] = field(default_factory=list)
    stage_conditions: dict[str, str] = field(default_factory=dict)
    jobs: list[Job] = field(default_factory=list)
    global_phases: dict[PhaseKind, list[CommandLine]] = field(default_factory=dict)
    notifications: NotificationConfig | None = None
    allow_failures_present: bool = False
    global_branch_only: list[str] | None = None
    global_condition: str | None = None
    has_deploy: bool = False
    raw: Mapping[str, Any] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


class _TrackingLoader(yaml.SafeLoader):
    """SafeLoader that records duplicate mapping keys (last one wins)."""

    def __init__(self, stream):
        super().__init__(stream)
        self.duplicate_keys: list[str] = []

    def construct_mapping(self, node, deep=False):
        if isinstance(node, yaml.MappingNode):
            self.flatten_mapping(node)
            seen = set()
            for key_node, _value in node.value:
                try:
                    key = self.construct_object(key_node, deep=True)
                except yaml.YAMLError:
                    continue
                if isinstance(key, (str, int, float, bool, type(None))):
                    if key in seen:
                        self.duplicate_keys.append(str(key))
                    seen.add(key)
        return super().construct_mapping(node, deep=deep)


def _decode(content: str | bytes, warnings: list[str]) -> str:
    if isinstance(content, bytes):
        try:
            return content.decode("utf-8")
        except UnicodeDecodeError:
            warnings.append("invalid UTF-8 bytes replaced during decoding")
            return content.decode("utf-8", errors="replace")
    return content


def _load_yaml(text: str) -> tuple[Any, list[str]]:
    loader = _TrackingLoader(text)
    try:
        data = loader.get_single_data()
    finally:
        loader.dispose()
    warnings = [
        f"duplicate key '{key}': last occurrence wins"
        for key in loader.duplicate_keys
    ]
    return data, warnings


def is_travis_pipeline(doc: RawDocument) -> bool:
    """Minimal-validity gate filtering non-pipeline YAML before analysis.

    True iff the document parses as YAML and its top-level mapping contains
    at least one lifecycle key (a phase name, ``jobs``, ``matrix`` or
    ``language``).  Malformed YAML returns False rather than raising.
    """
    try:
        text = _decode(doc.content, [])
        data, _ = _load_yaml(text)
    except Exception:
        return False
    if not isinstance(data, Mapping):
        return False
    return any(str(key) in LIFECYCLE_KEYS for key in data)


def resolve_stage_name(job: Job) -> str:
    """Explicit stage name verbatim (case preserved), or "implicit"."""
    if job.stage_name is None:
        return IMPLICIT_STAGE
    return job.stage_name


def _as_list(value: Any) -> list[Any]:
    if value is None:
        return []
    if isinstance(value, list):
        return value
    return [value]


def _scalar_text(value: Any) -> str | None:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, float)):
        return str(value)
    return None


def _command_texts(phase: PhaseKind, value: Any, warnings: list[str]) -> list[str]:
    """Flatten a phase entry into shell command strings, preserving order.

    Mapping values are deployment-provider blocks: for deploy-family phases
    the nested ``script`` key (the script provider's command) is extracted;
    elsewhere a mapping is ignored with a warning.
    """
    texts: list[str] = []
    for item in _as_list(value):
        scalar = _scalar_text(item)
        if scalar is not None:
            texts.append(scalar)
        elif isinstance(item, list):
            texts.extend(_command_texts(phase, item, warnings))
        elif isinstance(item, Mapping):
            if phase in DEPLOY_PHASES:
                for nested in _as_list(item.get("script")):
                    nested_text = _scalar_text(nested)
                    if nested_text is not None:
                        texts.append(nested_text)
            else:
                warnings.append(
                    f"ignored mapping entry in phase '{phase.value}'"
                )
        elif item is not None:
            warnings.append(
                f"ignored non-command entry in phase '{phase.value}': {item!r}"
            )
    return texts


def _phase_commands(
    entry: Mapping[str, Any], job_index: int, warnings: list[str]
) -> dict[PhaseKind, list[CommandLine]]:
    phases: dict[PhaseKind, list[CommandLine]] = {}
    for phase in PhaseKind:
        if phase.value not in entry:
            continue
        texts = _command_texts(phase, entry[phase.value], warnings)
        phases[phase] = [
            CommandLine(text, phase, job_index, i) for i, text in enumerate(texts)
        ]
    return phases


def _branch_only(value: Any) -> list[str] | None:
    if not isinstance(value, Mapping):
        return None
    only = value.get("only")
    if only is None:
        return None
    return [str(item) for item in _as_list(only)]


def _channel_enabled(value: Any) -> bool:
    if value is None or value is False:
        return False
    if value is True:
        return True
    if isinstance(value, str):
        return bool(value.strip())
    if isinstance(value, (int, float)):
        return True
    if isinstance(value, list):
        return len(value) > 0
    if isinstance(value, Mapping):
        if value.get("enabled") is False:
            return False
        return len(value) > 0
    return True


def _parse_notifications(value: Any) -> NotificationConfig:
    channels: set[str] = set()
    email_disabled = False
    if isinstance(value, Mapping):
        for key, sub in value.items():
            name = str(key)
            if name in _NOTIFICATION_MODIFIERS:
                continue
            kind = name if name in NOTIFICATION_CHANNELS else OTHER_CHANNEL
            if _channel_enabled(sub):
                channels.add(kind)
            elif name == "email":
                email_disabled = True
    return NotificationConfig(frozenset(channels), email_disabled, value)


def _parse_stages(
    value: Any, warnings: list[str]
) -> tuple[list[str], dict[str, str]]:
    order: list[str] = []
    conditions: dict[str, str] = {}
    for entry in _as_list(value):
        if isinstance(entry, Mapping):
            name = entry.get("name")
            if name is None:
                warnings.append("ignored stages entry without a name")
                continue
            label = str(name)
            order.append(label)
            if "if" in entry:
                conditions[label] = str(entry["if"])
        elif entry is not None:
            order.append(str(entry))
    return order, conditions


def _include_entries(raw: Mapping[str, Any]) -> tuple[list[Any], bool]:
    """Job entries plus allow_failures presence under `jobs`/`matrix` aliases."""
    entries: list[Any] = []
    allow_failures = False
    for key in ("jobs", "matrix"):
        block = raw.get(key)
        if isinstance(block, Mapping):
            entries.extend(_as_list(block.get("include")))
            if "allow_failures" in block:
                allow_failures = True
        elif isinstance(block, list):
            entries.extend(block)
    return entries, allow_failures


def _build_job(
    entry: Mapping[str, Any],
    index: int,
    global_phases: dict[PhaseKind, list[CommandLine]],
    warnings: list[str],
) -> Job:
    phases = _phase_commands(entry, index, warnings)
    # Globals apply only where the job does not override that phase.
    for phase, commands in global_phases.items():
        if phase not in phases:
            phases[phase] = [replace(cmd, job_index=index) for cmd in commands]
    stage = entry.get("stage")
    name = entry.get("name")
    condition = entry.get("if")
    return Job(
        index=index,
        stage_name=None if stage is None else str(stage),
        display_name=None if name is None else str(name),
        phases=phases,
        condition=None if condition is None else str(condition),
        branch_only=_branch_only(entry.get("branches")),
    )


def parse_config(doc: RawDocument) -> PipelineConfig:
    """Parse one raw configuration into a :class:`PipelineConfig`.

    Raises :class:`MalformedDocument` for unparsable YAML and
    :class:`NotAPipeline` when the minimal-validity gate fails.  Parsing
    never fails on unknown keys; those are preserved in ``raw`` and ignored.
    """
    warnings: list[str] = []
    text = _decode(doc.content, warnings)
    try:
        data, dup_warnings = _load_yaml(text)
    except yaml.YAMLError as exc:
        raise MalformedDocument(f"{doc.path}: {exc}") from exc
    warnings.extend(dup_warnings)

    if not isinstance(data, Mapping) or not any(
        str(key) in LIFECYCLE_KEYS for key in data
    ):
        raise NotAPipeline(f"{doc.path}: no pipeline lifecycle key found")

    declared_stage_order, stage_conditions = _parse_stages(
        data.get("stages"), warnings
    )
    global_phases = _phase_commands(data, -1, warnings)

    entries, allow_failures = _include_entries(data)
    jobs: list[Job] = []
    for entry in entries:
        if not isinstance(entry, Mapping):
            warnings.append(f"ignored non-mapping job entry: {entry!r}")
            continue
        jobs.append(_build_job(entry, len(jobs), global_phases, warnings))

    global_condition = data.get("if")
    if not jobs:
        # A config with only global phases runs as exactly one implicit job.
        implicit_phases = {
            phase: [replace(cmd, job_index=0) for cmd in commands]
            for phase, commands in global_phases.items()
        }
        jobs = [
            Job(
                index=0,
                phases=implicit_phases,
                condition=None if global_condition is None else str(global_condition),
            )
        ]

    notifications = (
        _parse_notifications(data.get("notifications"))
        if "notifications" in data
        else None
    )

    has_deploy = any(job.deploys for job in jobs) or any(
        phase in DEPLOY_PHASES for phase in global_phases
    )

    return PipelineConfig(
        source=doc,
        declared_stage_order=declared_stage_order,
        stage_conditions=stage_conditions,
        jobs=jobs,
        global_phases=global_phases,
        notifications=notifications,
        allow_failures_present=allow_failures,
        global_branch_only=_branch_only(data.get("branches")),
        global_condition=None if global_condition is None else str(global_condition),
        has_deploy=has_deploy,
        raw=data,
        warnings=warnings,
    )


def iter_command_lines(cfg: PipelineConfig) -> Iterator[CommandLine]:
    """All job command lines in deterministic (job, phase, ordinal) order."""
    for job in cfg.jobs:
        for phase in PhaseKind:
            for cmd in job.phases.get(phase, ()):
                yield cmd
