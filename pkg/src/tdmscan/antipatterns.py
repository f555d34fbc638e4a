"""The four configuration anti-patterns, with per-finding evidence.

Late Merging: every tool-bearing job is restricted to push builds on
main/master.  Skip-on-Failure: allow_failures present.  Absent Feedback: no
enabled notification channel.  Email-only: email is the sole enabled
channel.  Absent Feedback and Email-only are mutually exclusive by
construction.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from .config_model import Job, PipelineConfig
from .registry import PipelineToolProfile

FINDING_NAMES = ("late_merging", "skip_on_failure", "absent_feedback", "email_only")

LATE_MERGING_MODE_PIPELINE = "pipeline"
LATE_MERGING_MODE_JOB = "job"

Evidence = list[tuple[str, str]]

_MAIN_BRANCHES = frozenset({"main", "master"})
_PR_TYPES = frozenset({"pull_request", "pr"})
_OTHER_TYPES = frozenset({"pull_request", "pr", "cron", "api"})

# Tolerant clause matcher: `type`/`branch`, then `=`, `==` or `IN (...)`.
_CLAUSE = re.compile(
    r"\b(type|branch)\s*(?:==|=|\bIN\b|\bin\b)\s*(\(([^)]*)\)|[^\s()]+)",
    re.IGNORECASE,
)


@dataclass
class FindingSet:
    """Anti-pattern booleans for one pipeline plus supporting evidence."""

    late_merging: bool = False
    skip_on_failure: bool = False
    absent_feedback: bool = False
    email_only: bool = False
    late_merging_all_jobs: bool = False
    late_merging_any_job: bool = False
    evidence: dict[str, Evidence] = field(default_factory=dict)

    def as_dict(self) -> dict[str, bool]:
        return {
            "late_merging": self.late_merging,
            "skip_on_failure": self.skip_on_failure,
            "absent_feedback": self.absent_feedback,
            "email_only": self.email_only,
        }

    def true_findings(self) -> list[str]:
        return [name for name in FINDING_NAMES if self.as_dict()[name]]


def _excerpt(value: Any, limit: int = 160) -> str:
    text = json.dumps(value, sort_keys=True, default=str)
    return text if len(text) <= limit else text[: limit - 3] + "..."


def _clause_values(condition: str, key: str) -> set[str]:
    values: set[str] = set()
    for match in _CLAUSE.finditer(condition):
        if match.group(1).lower() != key:
            continue
        body = match.group(3) if match.group(3) is not None else match.group(2)
        for token in re.split(r"[,\s]+", body):
            token = token.strip("\"'")
            if token:
                values.add(token.lower())
    return values


def _condition_restricts_to_main_push(condition: str) -> bool:
    types = _clause_values(condition, "type")
    branches = _clause_values(condition, "branch")
    if "push" not in types or types & _OTHER_TYPES:
        return False
    if not branches or not branches <= _MAIN_BRANCHES:
        return False
    return True


def _condition_reenables_pr(condition: str | None) -> bool:
    if not condition:
        return False
    return bool(_clause_values(condition, "type") & _PR_TYPES)


def _branch_only_restricts(only: list[str] | None) -> bool:
    if not only:
        return False
    return {branch.lower() for branch in only} <= _MAIN_BRANCHES


def _job_restriction(
    cfg: PipelineConfig, job: Job
) -> tuple[bool, Evidence]:
    condition = job.condition or cfg.global_condition
    if condition and _condition_restricts_to_main_push(condition):
        path = (
            f"jobs.include[{job.index}].if" if job.condition else "if"
        )
        return True, [(path, condition)]
    if _branch_only_restricts(job.branch_only) and not _condition_reenables_pr(
        condition
    ):
        return True, [(f"jobs.include[{job.index}].branches.only", _excerpt(job.branch_only))]
    if _branch_only_restricts(cfg.global_branch_only) and not _condition_reenables_pr(
        condition
    ):
        return True, [("branches.only", _excerpt(cfg.global_branch_only))]
    return False, []


def detect_late_merging(
    cfg: PipelineConfig, profile: PipelineToolProfile
) -> tuple[bool, Evidence]:
    """All-jobs reading: every tool-bearing job is push+main/master only."""
    job_indexes = profile.job_indexes()
    if not job_indexes:
        return False, []
    evidence: Evidence = []
    all_restricted = True
    for index in job_indexes:
        restricted, job_evidence = _job_restriction(cfg, cfg.jobs[index])
        if restricted:
            evidence.extend(job_evidence)
        else:
            all_restricted = False
    if not all_restricted:
        return False, []
    return True, evidence


def detect_late_merging_any_job(
    cfg: PipelineConfig, profile: PipelineToolProfile
) -> tuple[bool, Evidence]:
    """Any-job reading, emitted alongside the default for comparability."""
    evidence: Evidence = []
    for index in profile.job_indexes():
        restricted, job_evidence = _job_restriction(cfg, cfg.jobs[index])
        if restricted:
            evidence.extend(job_evidence)
    return bool(evidence), evidence


def detect_skip_on_failure(cfg: PipelineConfig) -> tuple[bool, Evidence]:
    """True iff allow_failures appears under `jobs` or `matrix`."""
    if not cfg.allow_failures_present:
        return False, []
    evidence: Evidence = []
    for key in ("jobs", "matrix"):
        block = cfg.raw.get(key)
        if isinstance(block, Mapping) and "allow_failures" in block:
            evidence.append((f"{key}.allow_failures", _excerpt(block["allow_failures"])))
    if not evidence:
        evidence.append(("jobs.allow_failures", "present"))
    return True, evidence


def detect_absent_feedback(cfg: PipelineConfig) -> tuple[bool, Evidence]:
    """No notifications section, or one without any enabled channel."""
    notifications = cfg.notifications
    if notifications is None:
        return True, [("notifications", "absent")]
    if not notifications.channels:
        return True, [("notifications", _excerpt(notifications.raw))]
    return False, []


def detect_email_only(cfg: PipelineConfig) -> tuple[bool, Evidence]:
    """Email is declared, enabled, and the only enabled channel."""
    notifications = cfg.notifications
    if notifications is None or notifications.channels != frozenset({"email"}):
        return False, []
    raw_email = (
        notifications.raw.get("email")
        if isinstance(notifications.raw, Mapping)
        else notifications.raw
    )
    return True, [("notifications.email", _excerpt(raw_email))]


def evaluate(
    cfg: PipelineConfig,
    profile: PipelineToolProfile,
    late_merging_mode: str = LATE_MERGING_MODE_PIPELINE,
) -> FindingSet:
    """Run all four rules and assemble the FindingSet."""
    late_all, late_all_evidence = detect_late_merging(cfg, profile)
    late_any, late_any_evidence = detect_late_merging_any_job(cfg, profile)
    skip, skip_evidence = detect_skip_on_failure(cfg)
    absent, absent_evidence = detect_absent_feedback(cfg)
    email, email_evidence = detect_email_only(cfg)

    if late_merging_mode == LATE_MERGING_MODE_JOB:
        late, late_evidence = late_any, late_any_evidence
    else:
        late, late_evidence = late_all, late_all_evidence

    evidence: dict[str, Evidence] = {}
    if late:
        evidence["late_merging"] = late_evidence
    if skip:
        evidence["skip_on_failure"] = skip_evidence
    if absent:
        evidence["absent_feedback"] = absent_evidence
    if email:
        evidence["email_only"] = email_evidence

    return FindingSet(
        late_merging=late,
        skip_on_failure=skip,
        absent_feedback=absent,
        email_only=email,
        late_merging_all_jobs=late_all,
        late_merging_any_job=late_any,
        evidence=evidence,
    )
