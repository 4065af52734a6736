"""Task extraction orchestration, exposure banding and role aggregation.

Scores live in [0, 1] and are banded at fixed cutpoints; the High band
sets the per-task automation indicator. Time allocation uses geometric
position weights: earlier-listed tasks are assumed to absorb more of the
contracted 37-hour week, with the decay rate controlling how quickly the
shares fall off (1.0 reproduces equal weighting).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .corpus import Vacancy
from .errors import DataError, UsageError
from .gateway import BatchManager, BatchReport, StructuredResponse
from .prompts import task_extraction_request, task_scoring_request

log = logging.getLogger(__name__)

HOURS_PER_WEEK = 37.0
HIGH_CUTOFF = 0.7
MEDIUM_CUTOFF = 0.5
LOW_CUTOFF = 0.3
MIN_TASKS_PER_ROLE = 2


class Band(str, Enum):
    VERY_LOW = "VeryLow"
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


def classify_exposure(score: float) -> tuple[Band, int]:
    """Band a score and return the high-exposure indicator (0/1)."""
    if not 0.0 <= score <= 1.0:
        raise DataError(f"exposure score {score} outside [0, 1]")
    if score >= HIGH_CUTOFF:
        return Band.HIGH, 1
    if score >= MEDIUM_CUTOFF:
        return Band.MEDIUM, 0
    if score >= LOW_CUTOFF:
        return Band.LOW, 0
    return Band.VERY_LOW, 0


@dataclass(frozen=True)
class TaskRecord:
    """One extracted task at its 1-based position in the role."""

    task_number: int
    task_details: str
    exposure: float
    band: Band
    high: int


def task_record(task_number: int, task_details: str, exposure: float) -> TaskRecord:
    band, high = classify_exposure(exposure)
    return TaskRecord(task_number, task_details, exposure, band, high)


@dataclass(frozen=True)
class DecayWeights:
    """Raw geometric weights and their normalization to unit sum.

    ``delta`` is None for explicitly supplied weight vectors, where the
    geometric ratio between consecutive weights is not guaranteed.
    """

    delta: float | None
    raw: tuple[float, ...]
    normalized: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.normalized)

    @classmethod
    def from_values(cls, values: Sequence[float], delta: float | None = None) -> "DecayWeights":
        if not values:
            raise UsageError("weight vector must be non-empty")
        if any(value < 0 for value in values):
            raise UsageError("weights must be non-negative")
        total = math.fsum(values)
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-6):
            raise UsageError(f"weights must sum to 1 (got {total})")
        normalized = tuple(value / total for value in values)
        return cls(delta=delta, raw=tuple(values), normalized=normalized)


def decay_weights(task_count: int, delta: float) -> DecayWeights:
    """Geometric position weights d_t = delta^(t-1), normalized to sum 1."""
    if task_count < 1:
        raise UsageError(f"task count must be >= 1 (got {task_count})")
    if not 0.0 < delta <= 1.0:
        raise UsageError(f"decay rate must be in (0, 1] (got {delta})")
    raw = tuple(delta ** (position - 1) for position in range(1, task_count + 1))
    total = math.fsum(raw)
    return DecayWeights(delta=delta, raw=raw, normalized=tuple(value / total for value in raw))


@dataclass(frozen=True)
class RoleExposure:
    """Weighted role-level aggregates over one task list."""

    mean: float
    std: float
    high_share: float
    medium_share: float
    hours_per_task: tuple[float, ...]
    value_per_task: tuple[float, ...] | None


def weighted_mean_std(scores: Sequence[float], weights: Sequence[float]) -> tuple[float, float]:
    """Weighted mean and weighted population standard deviation."""
    if len(scores) != len(weights):
        raise UsageError(f"{len(scores)} scores vs {len(weights)} weights")
    mean = math.fsum(w * s for w, s in zip(weights, scores))
    variance = math.fsum(w * (s - mean) ** 2 for w, s in zip(weights, scores))
    return mean, math.sqrt(max(variance, 0.0))


def role_exposure(
    tasks: Sequence[TaskRecord],
    weights: DecayWeights,
    salary: float | None = None,
) -> RoleExposure:
    """Aggregate task records under position weights.

    Hours allocate the 37-hour week by weight; monetary value allocates
    the salary the same way and is absent when the salary is.
    """
    if len(tasks) != len(weights):
        raise UsageError(f"{len(tasks)} tasks vs {len(weights)} weights")
    shares = weights.normalized
    mean, std = weighted_mean_std([t.exposure for t in tasks], shares)
    high_share = math.fsum(w for w, t in zip(shares, tasks) if t.high)
    medium_share = math.fsum(w for w, t in zip(shares, tasks) if t.band is Band.MEDIUM)
    hours = tuple(HOURS_PER_WEEK * w for w in shares)
    value = None if salary is None else tuple(salary * w for w in shares)
    return RoleExposure(
        mean=mean,
        std=std,
        high_share=high_share,
        medium_share=medium_share,
        hours_per_task=hours,
        value_per_task=value,
    )


@dataclass
class RoleProfile:
    """A vacancy joined with its extracted tasks and aggregates."""

    vacancy_id: str
    title: str
    department: str
    grade: str
    profession: str
    salary: float | None
    delta: float
    tasks: list[TaskRecord]
    weights: DecayWeights
    aggregates: RoleExposure

    @property
    def job_context(self) -> str:
        return f"{self.title} ({self.grade}, {self.department}, {self.profession})"


def build_profile(
    vacancy: Vacancy,
    tasks: Sequence[TaskRecord],
    delta: float,
    salary: float | None,
) -> RoleProfile:
    weights = decay_weights(len(tasks), delta)
    return RoleProfile(
        vacancy_id=vacancy.vacancy_id,
        title=vacancy.title,
        department=vacancy.department,
        grade=vacancy.grade.value,
        profession=vacancy.profession,
        salary=salary,
        delta=delta,
        tasks=list(tasks),
        weights=weights,
        aggregates=role_exposure(tasks, weights, salary),
    )


def _tasks_from_response(response: StructuredResponse) -> list[TaskRecord]:
    """Renumber payload tasks 1..T in response order, dropping blanks."""
    entries = [
        (entry["task_details"].strip(), float(entry["exposure_score"]))
        for entry in response.payload["tasks"]
    ]
    return [
        task_record(position, details, score)
        for position, (details, score) in enumerate(
            ((d, s) for d, s in entries if d), start=1
        )
    ]


@dataclass
class ExtractionResult:
    tasks_by_vacancy: dict[str, list[TaskRecord]]
    dropped: list[tuple[str, str]]
    reports: list[BatchReport]


def extract_role_tasks(vacancy: Vacancy, manager: BatchManager) -> list[TaskRecord]:
    """Extract one role's tasks, falling back to the summary field.

    The description is queried first; if it yields fewer than two tasks
    the summary is tried once. Still under two tasks raises
    :class:`DataError` (the role is dropped from the analysis).
    """
    result = extract_corpus([vacancy], manager)
    if vacancy.vacancy_id in result.tasks_by_vacancy:
        return result.tasks_by_vacancy[vacancy.vacancy_id]
    raise DataError(f"vacancy {vacancy.vacancy_id}: {result.dropped[0][1]}")


def extract_corpus(vacancies: Sequence[Vacancy], manager: BatchManager) -> ExtractionResult:
    """Batch task extraction with summary fallback for the whole corpus."""
    reports: list[BatchReport] = []
    tasks_by_vacancy: dict[str, list[TaskRecord]] = {}
    dropped: list[tuple[str, str]] = []

    first_pass = [
        task_extraction_request(f"extract:{v.vacancy_id}:description", v.job_description)
        for v in vacancies
        if v.job_description.strip()
    ]
    responses, report = manager.submit_batch(first_pass)
    reports.append(report)
    by_id = {response.request_id: response for response in responses}

    needs_fallback: list[Vacancy] = []
    for vacancy in vacancies:
        response = by_id.get(f"extract:{vacancy.vacancy_id}:description")
        records = _tasks_from_response(response) if response else []
        if len(records) >= MIN_TASKS_PER_ROLE:
            tasks_by_vacancy[vacancy.vacancy_id] = records
        elif vacancy.job_summary.strip():
            needs_fallback.append(vacancy)
        else:
            dropped.append((vacancy.vacancy_id, f"{len(records)} task(s) and no summary to retry"))

    if needs_fallback:
        second_pass = [
            task_extraction_request(f"extract:{v.vacancy_id}:summary", v.job_summary)
            for v in needs_fallback
        ]
        responses, report = manager.submit_batch(second_pass)
        reports.append(report)
        by_id = {response.request_id: response for response in responses}
        for vacancy in needs_fallback:
            response = by_id.get(f"extract:{vacancy.vacancy_id}:summary")
            records = _tasks_from_response(response) if response else []
            if len(records) >= MIN_TASKS_PER_ROLE:
                tasks_by_vacancy[vacancy.vacancy_id] = records
            else:
                dropped.append(
                    (vacancy.vacancy_id, f"under {MIN_TASKS_PER_ROLE} tasks from both fields")
                )

    for vacancy_id, reason in dropped:
        log.warning("dropped vacancy %s: %s", vacancy_id, reason)
    return ExtractionResult(tasks_by_vacancy, dropped, reports)


def score_task_list(
    texts: Sequence[str],
    manager: BatchManager,
    delta: float = 1.0,
    request_id: str = "score:task-list",
) -> tuple[float, float]:
    """Score an ordered external task list and aggregate it.

    ``delta`` = 1.0 is equal weighting; lower values weight earlier tasks
    more heavily. Returns (weighted mean, weighted std).
    """
    if not texts:
        raise UsageError("task list must be non-empty")
    numbered = [(position, text) for position, text in enumerate(texts, start=1)]
    response = manager.submit_one(task_scoring_request(request_id, numbered))
    scores_by_id = response.payload["scores"]
    scores = []
    for position, _ in numbered:
        key = str(position)
        if key not in scores_by_id:
            raise DataError(f"provider omitted a score for task {position}")
        scores.append(float(scores_by_id[key]))
    weights = decay_weights(len(scores), delta)
    return weighted_mean_std(scores, weights.normalized)
