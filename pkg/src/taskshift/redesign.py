"""Role redesign for partially automatable roles.

Roles with at least one high-exposure task but below the automation
threshold get a plan: either all freed time flows to one surviving
"focus" task, or surviving tasks are augmented and reordered (weights
recomputed over the new order), or new tasks are allowed in, capped at
the number automated away. Provider replies are structurally validated
(referential integrity, permutations, caps) and retried with a nudge
before a role is flagged.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, SchemaInvalid, UsageError
from .exposure import RoleProfile, decay_weights
from .gateway import BatchManager, StructuredRequest, stable_hash
from .prompts import (
    THEME_NAMES,
    focus_choice_request,
    task_mix_request,
    task_rewrite_request,
    theme_flags_request,
)

log = logging.getLogger(__name__)

MAX_STRUCTURAL_ATTEMPTS = 3

FOCUS = "focus"
AUGMENT_REORDER = "augment_reorder"
NEW_TASKS = "new_tasks"


@dataclass(frozen=True)
class NewTask:
    task_number: int
    task_details: str
    task_category: str


@dataclass
class RedesignPlan:
    role_key: str
    variant: str
    automated: tuple[int, ...]
    freed_share: float
    post_weights: dict[int, float]
    focus_task: int | None = None
    reasoning: str = ""
    themes: tuple[str, ...] = ()
    new_tasks: tuple[NewTask, ...] = ()
    new_details: dict[int, str] = field(default_factory=dict)


def automated_numbers(profile: RoleProfile) -> tuple[int, ...]:
    return tuple(task.task_number for task in profile.tasks if task.high)


def surviving_numbers(profile: RoleProfile) -> tuple[int, ...]:
    return tuple(task.task_number for task in profile.tasks if not task.high)


def freed_share(profile: RoleProfile) -> float:
    shares = profile.weights.normalized
    return math.fsum(
        share for share, task in zip(shares, profile.tasks) if task.high
    )


def eligible_roles(profiles: Sequence[RoleProfile], theta: float) -> list[RoleProfile]:
    """Roles with at least one automatable task that stay below theta."""
    kept = []
    for profile in profiles:
        high_share = profile.aggregates.high_share
        if high_share == 0.0 or high_share >= theta:
            continue
        kept.append(profile)
    return kept


def proportional_weights(profile: RoleProfile) -> dict[int, float]:
    """Post-automation baseline: survivors renormalized proportionally."""
    shares = profile.weights.normalized
    surviving = [
        (task.task_number, share)
        for task, share in zip(profile.tasks, shares)
        if not task.high
    ]
    total = math.fsum(share for _, share in surviving)
    if total == 0.0:
        raise DataError(f"role {profile.vacancy_id} has no surviving tasks")
    return {number: share / total for number, share in surviving}


def apply_focus(profile: RoleProfile, focus_task: int) -> dict[int, float]:
    """Move every automated share onto the focus task; others unchanged."""
    surviving = set(surviving_numbers(profile))
    if focus_task not in surviving:
        raise UsageError(f"focus task {focus_task} is not a surviving task")
    shares = dict(zip((t.task_number for t in profile.tasks), profile.weights.normalized))
    freed = freed_share(profile)
    post = {number: shares[number] for number in sorted(surviving)}
    post[focus_task] += freed
    return post


def _survivor_pairs(profile: RoleProfile) -> list[tuple[int, str]]:
    return [(t.task_number, t.task_details) for t in profile.tasks if not t.high]


def _automated_pairs(profile: RoleProfile) -> list[tuple[int, str]]:
    return [(t.task_number, t.task_details) for t in profile.tasks if t.high]


def _nudge(prompt_suffix: str, attempt: int) -> str:
    if attempt == 1:
        return ""
    return (
        f"\n(attempt {attempt}: the previous reply violated the rules; "
        f"{prompt_suffix})"
    )


def _run_waves(
    manager: BatchManager,
    contexts: dict,
    build: Callable[[str, object, int], StructuredRequest],
    check: Callable[[object, dict], object],
    attempts: int = MAX_STRUCTURAL_ATTEMPTS,
) -> tuple[dict, dict[str, str]]:
    """Batch-validate-retry driver shared by all redesign calls."""
    results: dict = {}
    failures: dict[str, str] = {}
    pending = dict(contexts)
    last_reason = {key: "ProviderError" for key in contexts}
    for attempt in range(1, attempts + 1):
        if not pending:
            break
        requests = {key: build(key, ctx, attempt) for key, ctx in pending.items()}
        responses, report = manager.submit_batch(list(requests.values()))
        by_id = {response.request_id: response for response in responses}
        failed_ids = dict(report.failed)
        still_pending: dict = {}
        for key, ctx in pending.items():
            response = by_id.get(requests[key].request_id)
            if response is None:
                last_reason[key] = failed_ids.get(requests[key].request_id, "ProviderError")
                still_pending[key] = ctx
                continue
            try:
                results[key] = check(ctx, response.payload)
            except SchemaInvalid as exc:
                last_reason[key] = exc.error_class
                still_pending[key] = ctx
        pending = still_pending
    for key in pending:
        failures[key] = last_reason[key]
        log.warning("redesign request for %s flagged after retries: %s", key, failures[key])
    return results, failures


def select_focus(profile: RoleProfile, manager: BatchManager) -> tuple[int, str]:
    """Pick the surviving task that should absorb the freed time."""
    results, failures = select_focus_bulk([profile], manager)
    if failures:
        raise DataError(f"focus selection failed: {failures[profile.vacancy_id]}")
    return results[profile.vacancy_id]


def select_focus_bulk(
    profiles: Sequence[RoleProfile], manager: BatchManager
) -> tuple[dict[str, tuple[int, str]], dict[str, str]]:
    forced: dict[str, tuple[int, str]] = {}
    ask: dict[str, RoleProfile] = {}
    for profile in profiles:
        survivors = surviving_numbers(profile)
        if not survivors:
            raise UsageError(f"role {profile.vacancy_id} has no surviving tasks")
        if len(survivors) == 1:
            forced[profile.vacancy_id] = (survivors[0], "Only one task remains after automation.")
        else:
            ask[profile.vacancy_id] = profile

    def build(key: str, profile: RoleProfile, attempt: int) -> StructuredRequest:
        request = focus_choice_request(
            f"focus:{key}:attempt{attempt}",
            profile.title,
            _survivor_pairs(profile),
        )
        if attempt > 1:
            return StructuredRequest(
                request.request_id,
                request.system_prompt,
                request.user_prompt + _nudge("answer with one of the listed task numbers", attempt),
                request.output_schema,
            )
        return request

    def check(profile: RoleProfile, payload: dict) -> tuple[int, str]:
        number = payload["task_number"]
        if number not in set(surviving_numbers(profile)):
            raise SchemaInvalid(
                "$.task_number", f"{number} does not reference a surviving task"
            )
        return number, payload["reasoning"]

    results, failures = _run_waves(manager, ask, build, check)
    results.update(forced)
    return results, failures  # type: ignore[return-value]


def focus_plan(profile: RoleProfile, manager: BatchManager) -> RedesignPlan:
    focus_task, reasoning = select_focus(profile, manager)
    return RedesignPlan(
        role_key=profile.vacancy_id,
        variant=FOCUS,
        automated=automated_numbers(profile),
        freed_share=freed_share(profile),
        post_weights=apply_focus(profile, focus_task),
        focus_task=focus_task,
        reasoning=reasoning,
    )


def tag_themes(
    reasonings: Sequence[str], manager: BatchManager
) -> tuple[list[tuple[str, ...]], dict[int, str]]:
    """Map each reasoning text to 1..3 of the six fixed theme flags.

    Returns per-reasoning theme tuples plus failures by input index.
    """
    contexts = {str(index): reasoning for index, reasoning in enumerate(reasonings)}

    def build(key: str, reasoning: str, attempt: int) -> StructuredRequest:
        request = theme_flags_request(f"themes:{key}:attempt{attempt}", reasoning)
        if attempt > 1:
            return StructuredRequest(
                request.request_id,
                request.system_prompt,
                request.user_prompt + _nudge("set between one and three flags", attempt),
                request.output_schema,
            )
        return request

    def check(reasoning: str, payload: dict) -> tuple[str, ...]:
        flags = tuple(name for name in THEME_NAMES if payload[name] == 1)
        if not 1 <= len(flags) <= 3:
            raise SchemaInvalid("$", f"{len(flags)} theme flags set; need 1..3")
        return flags

    results, failures = _run_waves(manager, contexts, build, check)
    themed = [results.get(str(index), ()) for index in range(len(reasonings))]
    return themed, {int(key): reason for key, reason in failures.items()}


def theme_shares(theme_sets: Sequence[tuple[str, ...]]) -> dict[str, float]:
    """Share of focus tasks tagged with each theme; can exceed 1 in total."""
    tagged = [themes for themes in theme_sets if themes]
    if not tagged:
        return {name: 0.0 for name in THEME_NAMES}
    return {
        name: sum(1 for themes in tagged if name in themes) / len(tagged)
        for name in THEME_NAMES
    }


def _order_weights(profile: RoleProfile, ordered_numbers: Sequence[int]) -> dict[int, float]:
    weights = decay_weights(len(ordered_numbers), profile.delta).normalized
    return {number: weight for number, weight in zip(ordered_numbers, weights)}


def reorder_plan(profile: RoleProfile, manager: BatchManager) -> RedesignPlan:
    results, failures = reorder_plan_bulk([profile], manager)
    if failures:
        raise DataError(f"reorder failed: {failures[profile.vacancy_id]}")
    return results[profile.vacancy_id]


def reorder_plan_bulk(
    profiles: Sequence[RoleProfile], manager: BatchManager
) -> tuple[dict[str, RedesignPlan], dict[str, str]]:
    contexts = {profile.vacancy_id: profile for profile in profiles}

    def build(key: str, profile: RoleProfile, attempt: int) -> StructuredRequest:
        request = task_rewrite_request(
            f"reorder:{key}:attempt{attempt}",
            profile.title,
            _survivor_pairs(profile),
            profile.job_context,
        )
        if attempt > 1:
            return StructuredRequest(
                request.request_id,
                request.system_prompt,
                request.user_prompt
                + _nudge("return every listed task exactly once", attempt),
                request.output_schema,
            )
        return request

    def check(profile: RoleProfile, payload: dict) -> RedesignPlan:
        survivors = surviving_numbers(profile)
        returned = [entry["task_number"] for entry in payload["tasks"]]
        if sorted(returned) != sorted(survivors):
            raise SchemaInvalid(
                "$.tasks", f"returned numbers {returned} are not a permutation of {list(survivors)}"
            )
        new_details = {
            entry["task_number"]: entry["new_task_details"]
            for entry in payload["tasks"]
            if entry["label"] == "Augmented"
        }
        return RedesignPlan(
            role_key=profile.vacancy_id,
            variant=AUGMENT_REORDER,
            automated=automated_numbers(profile),
            freed_share=freed_share(profile),
            post_weights=_order_weights(profile, returned),
            new_details=new_details,
        )

    results, failures = _run_waves(manager, contexts, build, check)
    return results, failures  # type: ignore[return-value]


def new_tasks_plan(profile: RoleProfile, manager: BatchManager) -> RedesignPlan:
    results, failures = new_tasks_plan_bulk([profile], manager)
    if failures:
        raise DataError(f"new-task planning failed: {failures[profile.vacancy_id]}")
    return results[profile.vacancy_id]


def new_tasks_plan_bulk(
    profiles: Sequence[RoleProfile], manager: BatchManager
) -> tuple[dict[str, RedesignPlan], dict[str, str]]:
    contexts = {profile.vacancy_id: profile for profile in profiles}
    for profile in profiles:
        if not automated_numbers(profile):
            raise UsageError(f"role {profile.vacancy_id} has no automated tasks")

    def build(key: str, profile: RoleProfile, attempt: int) -> StructuredRequest:
        request = task_mix_request(
            f"newtasks:{key}:attempt{attempt}",
            profile.title,
            profile.department,
            profile.job_context,
            _automated_pairs(profile),
            _survivor_pairs(profile),
        )
        if attempt > 1:
            return StructuredRequest(
                request.request_id,
                request.system_prompt,
                request.user_prompt
                + _nudge(
                    "keep every remaining task, give new tasks unique negative "
                    "numbers, and do not exceed the new-task cap",
                    attempt,
                ),
                request.output_schema,
            )
        return request

    def check(profile: RoleProfile, payload: dict) -> RedesignPlan:
        survivors = surviving_numbers(profile)
        cap = len(automated_numbers(profile))
        old = [e["task_number"] for e in payload["tasks"] if e["task_number"] > 0]
        new = [e for e in payload["tasks"] if e["task_number"] < 0]
        if any(e["task_number"] == 0 for e in payload["tasks"]):
            raise SchemaInvalid("$.tasks", "task number 0 is not allowed")
        if sorted(old) != sorted(survivors):
            raise SchemaInvalid(
                "$.tasks", f"existing numbers {old} are not a permutation of {list(survivors)}"
            )
        if len(new) > cap:
            raise SchemaInvalid(
                "$.tasks", f"{len(new)} new tasks exceed the cap of {cap} automated tasks"
            )
        numbers = [e["task_number"] for e in payload["tasks"]]
        if len(set(numbers)) != len(numbers):
            raise SchemaInvalid("$.tasks", "duplicate task numbers")
        return RedesignPlan(
            role_key=profile.vacancy_id,
            variant=NEW_TASKS,
            automated=automated_numbers(profile),
            freed_share=freed_share(profile),
            post_weights=_order_weights(profile, numbers),
            new_tasks=tuple(
                NewTask(e["task_number"], e["task_details"], e["task_category"]) for e in new
            ),
        )

    results, failures = _run_waves(manager, contexts, build, check)
    return results, failures  # type: ignore[return-value]


def stratified_sample(
    profiles: Sequence[RoleProfile],
    fraction: float = 0.10,
    seed: int = 0,
    strata: Callable[[RoleProfile], tuple] = lambda p: (p.department, p.grade),
) -> list[RoleProfile]:
    """Per-stratum sample of round(fraction*n), at least 1, no replacement."""
    if not 0.0 < fraction <= 1.0:
        raise UsageError(f"fraction {fraction} outside (0, 1]")
    groups: dict[tuple, list[RoleProfile]] = {}
    for profile in profiles:
        groups.setdefault(strata(profile), []).append(profile)
    chosen: list[RoleProfile] = []
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda p: p.vacancy_id)
        take = max(1, int(math.floor(fraction * len(members) + 0.5)))
        take = min(take, len(members))
        rng = np.random.default_rng(
            (seed * 1_000_003 + stable_hash("stratum:" + repr(key))) % 2**63
        )
        picks = rng.choice(len(members), size=take, replace=False)
        chosen.extend(members[int(index)] for index in sorted(picks))
    return sorted(chosen, key=lambda p: p.vacancy_id)


def weighted_quantiles(
    values: Sequence[float],
    weights: Sequence[float],
    probabilities: Sequence[float],
) -> list[float]:
    """Inverse-CDF quantiles of ``values`` under ``weights``."""
    if len(values) != len(weights) or not values:
        raise UsageError("values and weights must be equal-length and non-empty")
    if any(w < 0 for w in weights):
        raise UsageError("weights must be non-negative")
    order = sorted(range(len(values)), key=lambda i: (values[i], i))
    total = math.fsum(weights)
    if total <= 0:
        raise UsageError("total weight must be positive")
    cutpoints = []
    for probability in probabilities:
        if not 0.0 <= probability <= 1.0:
            raise UsageError(f"probability {probability} outside [0, 1]")
        threshold = probability * total
        cumulative = 0.0
        cutpoint = values[order[-1]]
        for index in order:
            cumulative += weights[index]
            if cumulative >= threshold - 1e-12:
                cutpoint = values[index]
                break
        cutpoints.append(cutpoint)
    return cutpoints


def decile_of(value: float, cutpoints: Sequence[float]) -> int:
    """1-based decile given the nine interior cutpoints; ties go low."""
    return bisect.bisect_left(list(cutpoints), value) + 1


def salary_deciles(
    salaries: dict[str, float], weights: dict[str, float]
) -> dict[str, int]:
    """Weighted salary decile (1 = lowest paid) per role key."""
    keys = sorted(salaries)
    values = [salaries[key] for key in keys]
    mass = [weights.get(key, 0.0) for key in keys]
    cutpoints = weighted_quantiles(values, mass, [p / 10 for p in range(1, 10)])
    return {key: decile_of(salaries[key], cutpoints) for key in keys}


def check_plan(plan: RedesignPlan) -> None:
    """Assert the structural invariants every plan must satisfy."""
    total = math.fsum(plan.post_weights.values())
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"plan {plan.role_key}: post weights sum to {total}")
    if any(number in plan.post_weights for number in plan.automated):
        raise DataError(f"plan {plan.role_key}: automated task kept a weight")
    if plan.focus_task is not None and plan.focus_task in plan.automated:
        raise DataError(f"plan {plan.role_key}: focus task was automated")
    if len(plan.new_tasks) > len(plan.automated):
        raise DataError(f"plan {plan.role_key}: new tasks exceed automated count")
    if plan.themes and not 1 <= len(plan.themes) <= 3:
        raise DataError(f"plan {plan.role_key}: {len(plan.themes)} themes")


def time_shift_report(
    profiles: Sequence[RoleProfile],
    plans_by_variant: dict[str, dict[str, RedesignPlan]],
    category_of: dict[tuple[str, int], str],
    hours_per_week: float = 37.0,
) -> list[dict]:
    """Per-category time shares for the five-column comparison.

    Columns: pre-automation, post-automation proportional, then one per
    plan variant that was run. Shares are fractions of the week (each
    column sums to 1 over categories); minutes columns are share deltas
    against pre-automation, in minutes per week.
    """
    keyed = {profile.vacancy_id: profile for profile in profiles}

    def category(role_key: str, task_number: int, plan: RedesignPlan | None = None) -> str:
        if plan is not None and task_number < 0:
            for new in plan.new_tasks:
                if new.task_number == task_number:
                    return new.task_category
        return category_of.get((role_key, task_number), "uncategorized")

    def accumulate(column: str, shares_by_role: dict[str, dict[int, float]], plans=None):
        totals: dict[str, float] = {}
        count = len(shares_by_role)
        for role_key, weights in shares_by_role.items():
            plan = plans.get(role_key) if plans else None
            for task_number, share in weights.items():
                name = category(role_key, task_number, plan)
                totals[name] = totals.get(name, 0.0) + share / count
        return totals

    columns: dict[str, dict[str, float]] = {}
    pre = {
        key: dict(zip((t.task_number for t in profile.tasks), profile.weights.normalized))
        for key, profile in keyed.items()
    }
    if pre:
        columns["pre_automation"] = accumulate("pre_automation", pre)
        columns["post_automation"] = accumulate(
            "post_automation", {key: proportional_weights(keyed[key]) for key in keyed}
        )
    for variant in (FOCUS, AUGMENT_REORDER, NEW_TASKS):
        plans = plans_by_variant.get(variant, {})
        plans = {key: plan for key, plan in plans.items() if key in keyed}
        if not plans:
            continue
        columns[variant] = accumulate(
            variant, {key: plan.post_weights for key, plan in plans.items()}, plans
        )

    categories = sorted({name for totals in columns.values() for name in totals})
    rows = []
    for name in categories:
        row: dict[str, object] = {"category": name}
        for column, totals in columns.items():
            share = totals.get(name, 0.0)
            row[column] = share
            if column != "pre_automation":
                baseline = columns["pre_automation"].get(name, 0.0)
                row[f"{column}_minutes_delta"] = (share - baseline) * hours_per_week * 60.0
        rows.append(row)
    return rows
