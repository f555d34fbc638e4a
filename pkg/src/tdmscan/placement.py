"""Where and when detected tools run: job/stage kind and deployment timing.

A job that runs only tool work sits in a dedicated stage (alone in an
explicitly named stage) or is a dedicated job; anything else is mixed.
Setup phases (before_install, install, before_script) and shell ceremony do
not count against dedication.  Timing splits executions into pre-deployment
gates and post-deployment reports.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Mapping

from .config_model import (
    IMPLICIT_STAGE,
    PhaseKind,
    PipelineConfig,
    Job,
    SETUP_PHASES,
    resolve_stage_name,
)
from .registry import (
    Detection,
    PipelineToolProfile,
    SOURCE_CONFIG,
    SOURCE_SCRIPT,
)
from .script_resolver import (
    ScriptDocument,
    extract_script_refs,
    is_installer_segment,
    shell_tokens,
    split_actions,
    strip_wrappers,
)


class PlacementKind(enum.Enum):
    DEDICATED_STAGE = "dedicated_stage"
    DEDICATED_JOB = "dedicated_job"
    MIXED_JOB = "mixed_job"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


class TimingKind(enum.Enum):
    PRE_DEPLOYMENT = "pre_deployment"
    POST_DEPLOYMENT = "post_deployment"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


class NoDetectionInJob(ValueError):
    """classify_placement requires a job with at least one detection."""


# Shell ceremony ignored by the "runs only the tool" test.
_CEREMONY_HEADS = frozenset({"echo", "cd", "export", "set"})
# Scripts additionally contain structure that is not a task of its own.
_SCRIPT_CEREMONY_HEADS = _CEREMONY_HEADS | frozenset(
    {
        "if", "then", "else", "elif", "fi",
        "for", "while", "until", "do", "done",
        "case", "esac", "local", "return", "shift",
        "break", "continue", "trap", "exit", "true",
        ":", "{", "}", "[", "[[", "function",
    }
)

_literal_cache: dict[str, re.Pattern[str]] = {}


def _anchored_literal(text: str) -> re.Pattern[str]:
    pattern = _literal_cache.get(text)
    if pattern is None:
        boundary = "[\\s;|&()<>'\"`:,]"
        pattern = re.compile(
            f"(?:^|(?<={boundary}))(?:{re.escape(text)})(?=$|{boundary})"
        )
        _literal_cache[text] = pattern
    return pattern


@dataclass
class PlacementResult:
    """Classification of one detection-bearing job."""

    job_index: int
    stage_label: str
    placement: PlacementKind
    timings: dict[Detection, TimingKind]
    multi_tool: bool

    def sources(self) -> list[str]:
        return sorted({d.source for d in self.timings})

    def timing_for_source(self, source: str) -> TimingKind:
        """Post when any detection of `source` is post, else pre."""
        values = [t for d, t in self.timings.items() if d.source == source]
        if any(t is TimingKind.POST_DEPLOYMENT for t in values):
            return TimingKind.POST_DEPLOYMENT
        return TimingKind.PRE_DEPLOYMENT


def _is_ceremony(action: str, heads: frozenset[str]) -> bool:
    tokens = strip_wrappers(shell_tokens(action))
    if not tokens:
        return True
    return tokens[0] in heads or is_installer_segment(action)


def _action_has_detection(action: str, detections: list[Detection]) -> bool:
    for detection in detections:
        if _anchored_literal(detection.matched_text).search(action):
            return True
    return False


def _script_runs_only_tools(
    path: str,
    doc: ScriptDocument,
    job_detections: list[Detection],
) -> bool:
    """Every substantial line of the script carries a detection."""
    if not doc.resolved or doc.content is None:
        return False
    detected_lines = {
        d.line_ordinal
        for d in job_detections
        if d.source == SOURCE_SCRIPT and d.script_path == path
    }
    for index, line in enumerate(doc.content.splitlines()):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        substantial = False
        for action in split_actions(stripped):
            if not _is_ceremony(action, _SCRIPT_CEREMONY_HEADS):
                substantial = True
                break
        if substantial and index not in detected_lines:
            return False
    return True


def _action_is_tool_script(
    action: str,
    cmd_for_refs,
    scripts: Mapping[str, ScriptDocument] | None,
    job_detections: list[Detection],
) -> bool:
    from dataclasses import replace

    pseudo = replace(cmd_for_refs, text=action)
    refs = extract_script_refs(pseudo)
    if not refs:
        return False
    if scripts is None:
        # Without script contents, accept when every ref has detections.
        paths = {d.script_path for d in job_detections if d.source == SOURCE_SCRIPT}
        return all(ref.normalized_path in paths for ref in refs)
    for ref in refs:
        doc = scripts.get(ref.normalized_path)
        if doc is None or not _script_runs_only_tools(
            ref.normalized_path, doc, job_detections
        ):
            return False
    return True


def _runs_only_tdm(
    job: Job,
    job_detections: list[Detection],
    scripts: Mapping[str, ScriptDocument] | None,
) -> bool:
    for phase in PhaseKind:
        if phase in SETUP_PHASES or phase not in job.phases:
            continue
        config_dets = [
            d
            for d in job_detections
            if d.source == SOURCE_CONFIG and d.phase == phase
        ]
        for cmd in job.phases[phase]:
            for line in cmd.text.splitlines():
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                for action in split_actions(stripped):
                    if _is_ceremony(action, _CEREMONY_HEADS):
                        continue
                    if _action_has_detection(action, config_dets):
                        continue
                    if _action_is_tool_script(action, cmd, scripts, job_detections):
                        continue
                    return False
    return True


def _stage_job_count(cfg: PipelineConfig, job: Job) -> int:
    label = resolve_stage_name(job)
    return sum(1 for other in cfg.jobs if resolve_stage_name(other) == label)


def classify_placement(
    cfg: PipelineConfig,
    job: Job,
    profile: PipelineToolProfile,
    scripts: Mapping[str, ScriptDocument] | None = None,
) -> PlacementKind:
    """Dedicated stage, dedicated job, or mixed job, for one detected job.

    Dedicated stage requires an explicitly named stage containing exactly
    this job; a job that passes the "only tool work" test in a shared or
    implicit stage is a dedicated job; everything else is mixed.
    """
    job_detections = profile.detections_for_job(job.index)
    if not job_detections:
        raise NoDetectionInJob(f"job {job.index} has no detections")
    if _runs_only_tdm(job, job_detections, scripts):
        if job.stage_name is not None and _stage_job_count(cfg, job) == 1:
            return PlacementKind.DEDICATED_STAGE
        return PlacementKind.DEDICATED_JOB
    return PlacementKind.MIXED_JOB


def _effective_stage_order(cfg: PipelineConfig) -> list[str]:
    order = list(cfg.declared_stage_order)
    for job in cfg.jobs:
        label = resolve_stage_name(job)
        if label not in order:
            order.append(label)
    return order


def _first_deploy_stage_index(cfg: PipelineConfig) -> int | None:
    order = _effective_stage_order(cfg)
    indexes = [
        order.index(resolve_stage_name(job)) for job in cfg.jobs if job.deploys
    ]
    return min(indexes) if indexes else None


def classify_timing(cfg: PipelineConfig, det: Detection) -> TimingKind:
    """Pre-deployment gate or post-deployment report, for one detection.

    Post when the detection runs in after_deploy, in after_success or
    after_script of a deploying job, or in a stage strictly after the first
    deploying stage.  Pipelines without deployment are gates throughout.
    """
    if det.phase is PhaseKind.AFTER_DEPLOY:
        return TimingKind.POST_DEPLOYMENT
    job = cfg.jobs[det.job_index]
    if (
        det.phase in (PhaseKind.AFTER_SUCCESS, PhaseKind.AFTER_SCRIPT)
        and job.deploys
    ):
        return TimingKind.POST_DEPLOYMENT
    if cfg.has_deploy:
        first_deploy = _first_deploy_stage_index(cfg)
        if first_deploy is not None:
            order = _effective_stage_order(cfg)
            if order.index(resolve_stage_name(job)) > first_deploy:
                return TimingKind.POST_DEPLOYMENT
    return TimingKind.PRE_DEPLOYMENT


def classify_pipeline(
    cfg: PipelineConfig,
    profile: PipelineToolProfile,
    scripts: Mapping[str, ScriptDocument] | None = None,
) -> list[PlacementResult]:
    """One PlacementResult per detection-bearing job, in job order."""
    results: list[PlacementResult] = []
    for job in cfg.jobs:
        job_detections = profile.detections_for_job(job.index)
        if not job_detections:
            continue
        placement = classify_placement(cfg, job, profile, scripts)
        timings = {d: classify_timing(cfg, d) for d in job_detections}
        tool_count = len({d.tool_id for d in job_detections})
        results.append(
            PlacementResult(
                job_index=job.index,
                stage_label=resolve_stage_name(job),
                placement=placement,
                timings=timings,
                multi_tool=tool_count >= 2,
            )
        )
    return results
