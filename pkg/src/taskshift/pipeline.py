"""Staged pipeline driver with content-addressed, resumable artifacts.

Each stage writes deterministic line-delimited outputs plus a manifest
recording input hashes, a parameter fingerprint and output hashes.
Downstream stages verify upstream manifests before running; a rerun with
unchanged inputs and parameters is a no-op, and any upstream content or
parameter change invalidates everything below it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

from . import clustering, redesign, savings
from .config import PipelineConfig
from .corpus import (
    GradeBucket,
    Vacancy,
    join_salary,
    load_grade_map,
    load_reference_tables,
    load_vocabulary,
    parse_vacancies,
)
from .errors import DataError, UsageError
from .exposure import RoleProfile, build_profile, extract_corpus, task_record
from .gateway import BatchManager, HttpProvider, MockProvider, ResponseCache, RetryPolicy
from .raking import (
    SampleRow,
    WeightedSample,
    append_other_depts,
    build_marginals,
    collapse_unsampled,
    rake,
    scale_to_population,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

STAGES = ("ingest", "extract", "weight", "cluster", "rake", "savings", "redesign", "report")

STAGE_DEPS: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "extract": ("ingest",),
    "weight": ("ingest", "extract"),
    "cluster": ("weight",),
    "rake": ("ingest", "weight"),
    "savings": ("weight", "rake"),
    # redesign and report rebuild profiles from the ingest/extract outputs,
    # so those must be hash-checked too, not just their weight-stage view
    "redesign": ("ingest", "extract", "weight"),
    "report": ("ingest", "extract", "weight", "cluster", "rake", "savings", "redesign"),
}

STAGE_OUTPUTS: dict[str, tuple[str, ...]] = {
    "ingest": ("vacancies.jsonl", "ingest_issues.json"),
    "extract": ("tasks.jsonl", "extract_summary.json"),
    "weight": ("roles.jsonl", "task_weights.jsonl"),
    "cluster": ("role_clusters.jsonl", "taxonomy.jsonl", "projection.json"),
    "rake": ("raked_weights.jsonl", "rake_summary.json"),
    "savings": ("sweep.jsonl", "sensitivity.jsonl", "savings_summary.json"),
    "redesign": ("plans.jsonl", "redesign_summary.json"),
    "report": (
        "report/exposure_histogram.csv",
        "report/band_shares.csv",
        "report/tasks_per_role.csv",
        "report/cluster_summary.csv",
        "report/taxonomy_summary.csv",
        "report/sweep.csv",
        "report/decay_sensitivity.csv",
        "report/redesign_comparison.csv",
        "report/theme_shares.csv",
        "report/focus_by_decile.csv",
    ),
}


@dataclass(frozen=True)
class StageArtifact:
    stage: str
    params_fingerprint: str
    content_hash: str
    outputs: dict[str, str]
    schema_version: int
    produced_at: str
    reused: bool = False


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _canonical(data: object) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def write_jsonl(path: Path, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True))
            handle.write("\n")


def read_jsonl(path: Path) -> list[dict]:
    with path.open("r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_json(path: Path, data: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n", "utf-8")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def make_manager(config: PipelineConfig) -> BatchManager:
    if config.provider == "mock":
        fixtures = {}
        if config.fixtures_path:
            try:
                fixtures = json.loads(Path(config.fixtures_path).read_text("utf-8"))
            except OSError as exc:
                raise UsageError(f"cannot read fixtures {config.fixtures_path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise DataError(
                    f"fixtures {config.fixtures_path} are not valid JSON: {exc.msg}"
                ) from exc
        provider = MockProvider(
            fixtures=fixtures,
            strict=config.strict_fixtures,
            dimension=config.embed_dimension,
        )
    else:
        provider = HttpProvider(
            base_url=config.remote_base_url,
            model=config.remote_model,
            embed_model=config.remote_embed_model,
            api_key_env=config.api_key_env,
            temperature=config.remote_temperature,
            max_tokens=config.remote_max_tokens,
        )
    policy = RetryPolicy(
        max_attempts=config.max_attempts,
        max_in_flight=config.max_in_flight,
        backoff_base=config.backoff_base,
    )
    return BatchManager(provider, cache=ResponseCache(config.cache_dir), policy=policy)


def _provider_params(config: PipelineConfig) -> dict:
    params: dict = {"provider": config.provider}
    if config.provider == "mock":
        params["strict"] = config.strict_fixtures
        params["dimension"] = config.embed_dimension
        if config.fixtures_path:
            fixtures = Path(config.fixtures_path)
            if not fixtures.exists():
                raise UsageError(f"fixtures file not found: {fixtures}")
            params["fixtures"] = _sha256_file(fixtures)
    else:
        params["base_url"] = config.remote_base_url
        params["model"] = config.remote_model
        params["embed_model"] = config.remote_embed_model
        params["temperature"] = config.remote_temperature
        params["max_tokens"] = config.remote_max_tokens
    return params


def _external_inputs(config: PipelineConfig, stage: str) -> dict[str, str]:
    paths: dict[str, str] = {}
    if stage == "ingest":
        paths = {
            "corpus": config.corpus_path,
            "fte": config.fte_path,
            "salary": config.salary_path,
            "grade_totals": config.grade_totals_path,
            "professions": config.profession_totals_path,
        }
        if config.grade_map_path:
            paths["grade_map"] = config.grade_map_path
        if config.vocab_path:
            paths["vocab"] = config.vocab_path
    elif stage == "rake":
        paths = {
            "fte": config.fte_path,
            "grade_totals": config.grade_totals_path,
            "professions": config.profession_totals_path,
        }
    hashes = {}
    for name, raw in paths.items():
        path = Path(raw)
        if not path.exists():
            raise DataError(f"input file for stage {stage!r} missing: {path}")
        hashes[f"file:{name}"] = _sha256_file(path)
    return hashes


def _stage_params(config: PipelineConfig, stage: str) -> dict:
    if stage == "ingest":
        return {
            "min_department_vacancies": config.min_department_vacancies,
            "population_total": config.population_total,
        }
    if stage == "extract":
        return {"truncate_chars": config.truncate_chars, **_provider_params(config)}
    if stage == "weight":
        return {"delta": config.delta}
    if stage == "cluster":
        return {
            "seed": config.seed,
            "categories": config.taxonomy_categories,
            "subclusters": config.taxonomy_subclusters,
            "pca_dim": config.pca_dim,
            "label_cap": config.label_sample_cap,
            "stopwords": config.stopwords_path,
            **_provider_params(config),
        }
    if stage == "rake":
        return {"population_total": config.population_total}
    if stage == "savings":
        return {
            "delta": config.delta,
            "theta": config.theta,
            "grid": config.theta_grid,
            "sensitivity": config.sensitivity_deltas,
        }
    if stage == "redesign":
        return {
            "theta": config.theta,
            "delta": config.delta,
            "seed": config.seed,
            "fraction": config.new_tasks_fraction,
            **_provider_params(config),
        }
    if stage == "report":
        return {"theta": config.theta}
    raise UsageError(f"unknown stage {stage!r}")


class Pipeline:
    def __init__(self, config: PipelineConfig):
        config.validate()
        self.config = config
        self.out_dir = Path(config.out_dir)
        self.manifest_dir = self.out_dir / "manifests"
        self._manager: BatchManager | None = None

    # -- manifest machinery -------------------------------------------------

    def _manifest_path(self, stage: str) -> Path:
        return self.manifest_dir / f"{stage}.json"

    def _load_manifest(self, stage: str) -> dict | None:
        path = self._manifest_path(stage)
        if not path.exists():
            return None
        return json.loads(path.read_text("utf-8"))

    def _outputs_valid(self, manifest: dict) -> bool:
        for name, expected in manifest["outputs"].items():
            path = self.out_dir / name
            if not path.exists() or _sha256_file(path) != expected:
                return False
        return True

    def _collect_inputs(self, stage: str, _memo: dict | None = None) -> dict[str, str]:
        if _memo is None:
            _memo = {}
        if stage in _memo:
            return _memo[stage]
        inputs = dict(_external_inputs(self.config, stage))
        for dep in STAGE_DEPS[stage]:
            manifest = self._load_manifest(dep)
            if manifest is None:
                raise DataError(f"stage {stage!r} needs {dep!r}, which has not been run")
            if not self._outputs_valid(manifest):
                raise DataError(
                    f"stage {stage!r} refuses to run: upstream {dep!r} outputs do not "
                    "match their manifest (stale or modified); rerun the upstream stage"
                )
            expected = self._fingerprint(dep, self._collect_inputs(dep, _memo))
            if expected != manifest["params_fingerprint"]:
                raise DataError(
                    f"stage {stage!r} refuses to run: upstream {dep!r} was built with "
                    "different parameters or inputs than the current configuration; "
                    "rerun the upstream stage first"
                )
            for name, digest in manifest["outputs"].items():
                inputs[f"{dep}:{name}"] = digest
        _memo[stage] = inputs
        return inputs

    def _fingerprint(self, stage: str, inputs: dict[str, str]) -> str:
        blob = _canonical(
            {
                "stage": stage,
                "schema_version": SCHEMA_VERSION,
                "params": _stage_params(self.config, stage),
                "inputs": inputs,
            }
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def manager(self) -> BatchManager:
        if self._manager is None:
            self._manager = make_manager(self.config)
        return self._manager

    def run_stage(self, stage: str, force: bool = False) -> StageArtifact:
        """Run one stage, or no-op when its fingerprint already matches."""
        if stage not in STAGES:
            raise UsageError(f"unknown stage {stage!r}; expected one of {STAGES}")
        assert stage not in STAGE_DEPS[stage]
        inputs = self._collect_inputs(stage)
        fingerprint = self._fingerprint(stage, inputs)

        existing = self._load_manifest(stage)
        if (
            not force
            and existing is not None
            and existing["params_fingerprint"] == fingerprint
            and self._outputs_valid(existing)
        ):
            log.info("stage %s is up to date; skipping", stage)
            return StageArtifact(
                stage=stage,
                params_fingerprint=fingerprint,
                content_hash=existing["content_hash"],
                outputs=dict(existing["outputs"]),
                schema_version=existing["schema_version"],
                produced_at=existing["produced_at"],
                reused=True,
            )

        runner = getattr(self, f"_run_{stage}")
        runner()

        outputs = {}
        for name in STAGE_OUTPUTS[stage]:
            path = self.out_dir / name
            if not path.exists():
                raise DataError(f"stage {stage!r} did not produce {name}")
            outputs[name] = _sha256_file(path)
        content_hash = hashlib.sha256(_canonical(outputs).encode("utf-8")).hexdigest()
        manifest = {
            "stage": stage,
            "schema_version": SCHEMA_VERSION,
            "params_fingerprint": fingerprint,
            "inputs": inputs,
            "outputs": outputs,
            "content_hash": content_hash,
            "produced_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        self.manifest_dir.mkdir(parents=True, exist_ok=True)
        self._manifest_path(stage).write_text(json.dumps(manifest, indent=1, sort_keys=True), "utf-8")
        return StageArtifact(
            stage=stage,
            params_fingerprint=fingerprint,
            content_hash=content_hash,
            outputs=outputs,
            schema_version=SCHEMA_VERSION,
            produced_at=manifest["produced_at"],
        )

    def run_all(self, force: bool = False) -> list[StageArtifact]:
        return [self.run_stage(stage, force=force) for stage in STAGES]

    # -- shared readers ------------------------------------------------------

    def _read_vacancies(self) -> tuple[list[Vacancy], dict[str, float | None]]:
        records = read_jsonl(self.out_dir / "vacancies.jsonl")
        vacancies = [Vacancy.from_record(record) for record in records]
        salaries = {record["vacancy_id"]: record["salary"] for record in records}
        return vacancies, salaries

    def _read_profiles(self) -> list[RoleProfile]:
        vacancies, salaries = self._read_vacancies()
        by_id = {vacancy.vacancy_id: vacancy for vacancy in vacancies}
        grouped: dict[str, list[dict]] = {}
        for row in read_jsonl(self.out_dir / "tasks.jsonl"):
            grouped.setdefault(row["vacancy_id"], []).append(row)
        profiles = []
        for vacancy_id in sorted(grouped):
            rows = sorted(grouped[vacancy_id], key=lambda r: r["task_number"])
            tasks = [
                task_record(row["task_number"], row["task_details"], row["exposure_score"])
                for row in rows
            ]
            profiles.append(
                build_profile(
                    by_id[vacancy_id], tasks, self.config.delta, salaries[vacancy_id]
                )
            )
        return profiles

    # -- stage bodies ---------------------------------------------------------

    def _run_ingest(self) -> None:
        config = self.config
        vocab = load_vocabulary(config.vocab_path) if config.vocab_path else None
        parsed = parse_vacancies(
            config.corpus_path,
            load_grade_map(config.grade_map_path) if config.grade_map_path else None,
            vocab=vocab,
        )
        counts: dict[str, int] = {}
        for vacancy in parsed.vacancies:
            counts[vacancy.department] = counts.get(vacancy.department, 0) + 1
        small = {
            dept for dept, n in counts.items() if n < config.min_department_vacancies
        }
        kept = [v for v in parsed.vacancies if v.department not in small]
        ref = load_reference_tables(
            config.fte_path,
            config.salary_path,
            config.grade_totals_path,
            config.profession_totals_path,
            population_total=config.population_total,
            vocab=vocab,
        )
        records = []
        for vacancy in sorted(kept, key=lambda v: v.vacancy_id):
            record = vacancy.to_record()
            record["salary"] = join_salary(vacancy, ref)
            records.append(record)
        write_jsonl(self.out_dir / "vacancies.jsonl", records)
        write_json(
            self.out_dir / "ingest_issues.json",
            {
                "parsed": len(parsed.vacancies),
                "kept": len(kept),
                "filtered_departments": sorted(small),
                "issues": [
                    {"line": issue.line_number, "vacancy_id": issue.vacancy_id, "reason": issue.reason}
                    for issue in parsed.issues
                ],
            },
        )

    def _run_extract(self) -> None:
        vacancies, _ = self._read_vacancies()
        cap = self.config.truncate_chars
        if cap:
            for vacancy in vacancies:
                vacancy.job_description = vacancy.job_description[:cap]
                vacancy.job_summary = vacancy.job_summary[:cap]
        result = extract_corpus(vacancies, self.manager)
        rows = []
        for vacancy_id in sorted(result.tasks_by_vacancy):
            for task in result.tasks_by_vacancy[vacancy_id]:
                rows.append(
                    {
                        "vacancy_id": vacancy_id,
                        "task_number": task.task_number,
                        "task_details": task.task_details,
                        "exposure_score": task.exposure,
                    }
                )
        write_jsonl(self.out_dir / "tasks.jsonl", rows)
        for report in result.reports:
            log.info(
                "extraction batch: %d submitted, %d ok, %d tokens in, %d out (%d cache hits)",
                report.submitted,
                report.succeeded,
                report.input_tokens,
                report.output_tokens,
                report.cache_hits,
            )
        # token and cache-hit counts are advisory and vary with cache warmth,
        # so they stay out of the hashed artifact
        write_json(
            self.out_dir / "extract_summary.json",
            {
                "roles_in": len(vacancies),
                "roles_with_tasks": len(result.tasks_by_vacancy),
                "dropped": [
                    {"vacancy_id": vacancy_id, "reason": reason}
                    for vacancy_id, reason in sorted(result.dropped)
                ],
                "batches": [
                    {
                        "submitted": report.submitted,
                        "succeeded": report.succeeded,
                        "failed": sorted(report.failed),
                    }
                    for report in result.reports
                ],
            },
        )

    def _run_weight(self) -> None:
        profiles = self._read_profiles()
        role_rows = []
        task_rows = []
        for profile in profiles:
            aggregates = profile.aggregates
            role_rows.append(
                {
                    "vacancy_id": profile.vacancy_id,
                    "title": profile.title,
                    "department": profile.department,
                    "grade": profile.grade,
                    "profession": profile.profession,
                    "salary": profile.salary,
                    "delta": profile.delta,
                    "exposure_mean": aggregates.mean,
                    "exposure_std": aggregates.std,
                    "high_share": aggregates.high_share,
                    "medium_share": aggregates.medium_share,
                    "task_count": len(profile.tasks),
                }
            )
            for task, weight, hours in zip(
                profile.tasks, profile.weights.normalized, aggregates.hours_per_task
            ):
                value = None if profile.salary is None else profile.salary * weight
                task_rows.append(
                    {
                        "vacancy_id": profile.vacancy_id,
                        "task_number": task.task_number,
                        "task_details": task.task_details,
                        "exposure_score": task.exposure,
                        "band": task.band.value,
                        "high": task.high,
                        "weight": weight,
                        "hours": hours,
                        "value": value,
                    }
                )
        write_jsonl(self.out_dir / "roles.jsonl", role_rows)
        write_jsonl(self.out_dir / "task_weights.jsonl", task_rows)

    def _run_cluster(self) -> None:
        config = self.config
        roles = read_jsonl(self.out_dir / "roles.jsonl")
        points = [(row["exposure_mean"], row["exposure_std"]) for row in roles]
        clusters = clustering.cluster_roles(points, seed=config.seed)
        write_jsonl(
            self.out_dir / "role_clusters.jsonl",
            [
                {"vacancy_id": row["vacancy_id"], "cluster": label.value}
                for row, label in zip(roles, clusters.labels)
            ],
        )

        tasks = read_jsonl(self.out_dir / "task_weights.jsonl")
        stopwords = clustering.load_stopwords(config.stopwords_path)
        normalized = [clustering.normalize_text(row["task_details"], stopwords) for row in tasks]
        unique = sorted({text for text in normalized if text})
        taxonomy, projection = clustering.build_taxonomy(
            unique,
            self.manager,
            seed=config.seed,
            n_categories=config.taxonomy_categories,
            n_subclusters=config.taxonomy_subclusters,
            pca_dim=config.pca_dim,
            sample_cap=config.label_sample_cap,
        )
        index_of = {text: index for index, text in enumerate(unique)}
        rows = []
        for row, text in zip(tasks, normalized):
            if text:
                category, subcategory = taxonomy.assignments[index_of[text]]
                category_label, subcategory_label = taxonomy.label_of(index_of[text])
            else:
                category, subcategory = -1, -1
                category_label = subcategory_label = "uncategorized"
            rows.append(
                {
                    "vacancy_id": row["vacancy_id"],
                    "task_number": row["task_number"],
                    "category": category,
                    "category_label": category_label,
                    "subcategory": subcategory,
                    "subcategory_label": subcategory_label,
                }
            )
        write_jsonl(self.out_dir / "taxonomy.jsonl", rows)
        write_json(self.out_dir / "projection.json", projection.to_dict())

    def _run_rake(self) -> None:
        config = self.config
        roles = read_jsonl(self.out_dir / "roles.jsonl")
        ref = load_reference_tables(
            config.fte_path,
            config.salary_path,
            config.grade_totals_path,
            config.profession_totals_path,
            population_total=config.population_total,
        )
        marginals = build_marginals(ref)
        known_professions = set(marginals.targets["profession"])
        rows = []
        dropped_unmapped = 0
        for role in roles:
            if role["grade"] == GradeBucket.UNMAPPED.value:
                dropped_unmapped += 1
                continue
            profession = role["profession"] if role["profession"] in known_professions else "Other"
            rows.append(
                SampleRow(
                    role_key=role["vacancy_id"],
                    department=role["department"],
                    grade=role["grade"],
                    profession=profession,
                )
            )
        if not rows:
            raise DataError("no rakeable roles (all grades unmapped?)")
        sample = WeightedSample.unit(rows)
        marginals = collapse_unsampled(marginals, sample, "profession", "Other")
        sample = append_other_depts(sample, marginals)
        raked = rake(sample, marginals, tol=1e-6, max_iter=30)
        scaled = scale_to_population(raked, marginals.population_total)
        write_jsonl(
            self.out_dir / "raked_weights.jsonl",
            sorted(
                (
                    {
                        "role_key": row.role_key,
                        "department": row.department,
                        "grade": row.grade,
                        "profession": row.profession,
                        "weight": float(weight),
                    }
                    for row, weight in zip(scaled.rows, scaled.weights)
                ),
                key=lambda record: record["role_key"],
            ),
        )
        write_json(
            self.out_dir / "rake_summary.json",
            {
                "converged": scaled.converged,
                "iterations": scaled.iterations,
                "history": scaled.history,
                "population_total": marginals.population_total,
                "dropped_unmapped_grades": dropped_unmapped,
                "rows": len(scaled.rows),
            },
        )

    def _build_role_inputs(self) -> list[savings.RoleInput]:
        roles = read_jsonl(self.out_dir / "roles.jsonl")
        weights = {
            row["role_key"]: row["weight"]
            for row in read_jsonl(self.out_dir / "raked_weights.jsonl")
        }
        exposures: dict[str, list[tuple[int, float]]] = {}
        for row in read_jsonl(self.out_dir / "task_weights.jsonl"):
            exposures.setdefault(row["vacancy_id"], []).append(
                (row["task_number"], row["exposure_score"])
            )
        inputs = []
        for role in roles:
            vacancy_id = role["vacancy_id"]
            if vacancy_id not in weights:
                continue  # dropped before raking, e.g. unmapped grade
            ordered = [score for _, score in sorted(exposures[vacancy_id])]
            inputs.append(
                savings.RoleInput(
                    role_key=vacancy_id,
                    exposures=tuple(ordered),
                    salary=role["salary"],
                    weight=weights[vacancy_id],
                )
            )
        return inputs

    def _run_savings(self) -> None:
        config = self.config
        inputs = self._build_role_inputs()
        if not inputs:
            raise DataError("no roles available for the savings sweep")
        curve = savings.sweep(inputs, theta_grid=config.theta_grid, delta=config.delta)
        write_jsonl(self.out_dir / "sweep.jsonl", curve.to_rows())
        sensitivity = savings.decay_sensitivity(
            inputs, deltas=config.sensitivity_deltas, theta_grid=config.theta_grid
        )
        sensitivity_rows = []
        for delta in config.sensitivity_deltas:
            for row in sensitivity[delta].to_rows():
                sensitivity_rows.append({"delta": delta, **row})
        write_jsonl(self.out_dir / "sensitivity.jsonl", sensitivity_rows)

        at = min(range(len(curve.thetas)), key=lambda i: abs(curve.thetas[i] - config.theta))
        write_json(
            self.out_dir / "savings_summary.json",
            {
                "theta": curve.thetas[at],
                "cost_reduction": curve.cost_reduction[at],
                "productivity_gain": curve.productivity_gain[at],
                "productivity_upper": curve.productivity_upper[at],
                "freed_hours_per_week": curve.freed_hours[at],
                "n_cost": curve.n_cost[at],
                "n_productivity": curve.n_productivity[at],
                "n_no_impact": curve.n_no_impact[at],
                "n_missing_salary": curve.n_missing_salary,
            },
        )

    def _run_redesign(self) -> None:
        config = self.config
        profiles = self._read_profiles()
        eligible = redesign.eligible_roles(profiles, config.theta)
        eligible.sort(key=lambda profile: profile.vacancy_id)

        plans: list[dict] = []
        failures: dict[str, dict[str, str]] = {}

        focus_results, focus_failures = redesign.select_focus_bulk(eligible, self.manager)
        focus_plans: dict[str, redesign.RedesignPlan] = {}
        for profile in eligible:
            if profile.vacancy_id not in focus_results:
                continue
            number, reasoning = focus_results[profile.vacancy_id]
            focus_plans[profile.vacancy_id] = redesign.RedesignPlan(
                role_key=profile.vacancy_id,
                variant=redesign.FOCUS,
                automated=redesign.automated_numbers(profile),
                freed_share=redesign.freed_share(profile),
                post_weights=redesign.apply_focus(profile, number),
                focus_task=number,
                reasoning=reasoning,
            )
        failures[redesign.FOCUS] = focus_failures

        ordered_focus = [focus_plans[key] for key in sorted(focus_plans)]
        themes, theme_failures = redesign.tag_themes(
            [plan.reasoning for plan in ordered_focus], self.manager
        )
        for plan, tags in zip(ordered_focus, themes):
            plan.themes = tags
        shares = redesign.theme_shares(themes)

        reorder_results, reorder_failures = redesign.reorder_plan_bulk(eligible, self.manager)
        failures[redesign.AUGMENT_REORDER] = reorder_failures

        sampled = redesign.stratified_sample(
            eligible, fraction=config.new_tasks_fraction, seed=config.seed
        )
        new_results, new_failures = redesign.new_tasks_plan_bulk(sampled, self.manager)
        failures[redesign.NEW_TASKS] = new_failures

        for collection in (focus_plans, reorder_results, new_results):
            for key in sorted(collection):
                plan = collection[key]
                redesign.check_plan(plan)
                plans.append(
                    {
                        "role_key": plan.role_key,
                        "variant": plan.variant,
                        "automated": list(plan.automated),
                        "freed_share": plan.freed_share,
                        "post_weights": {str(n): w for n, w in sorted(plan.post_weights.items())},
                        "focus_task": plan.focus_task,
                        "reasoning": plan.reasoning,
                        "themes": list(plan.themes),
                        "new_tasks": [
                            {
                                "task_number": new.task_number,
                                "task_details": new.task_details,
                                "task_category": new.task_category,
                            }
                            for new in plan.new_tasks
                        ],
                        "new_details": {str(n): d for n, d in sorted(plan.new_details.items())},
                    }
                )
        plans.sort(key=lambda record: (record["role_key"], record["variant"]))
        write_jsonl(self.out_dir / "plans.jsonl", plans)

        freed = [plan.freed_share for plan in focus_plans.values()]
        write_json(
            self.out_dir / "redesign_summary.json",
            {
                "eligible": len(eligible),
                "sampled_for_new_tasks": len(sampled),
                "failures": {variant: dict(sorted(f.items())) for variant, f in failures.items()},
                "theme_failures": {str(k): v for k, v in sorted(theme_failures.items())},
                "theme_shares": shares,
                "median_freed_share": statistics.median(freed) if freed else None,
            },
        )

    def _run_report(self) -> None:
        report_dir = self.out_dir / "report"
        config = self.config

        tasks = read_jsonl(self.out_dir / "task_weights.jsonl")
        score_counts: dict[float, int] = {}
        band_counts: dict[str, int] = {}
        per_role: dict[str, int] = {}
        for row in tasks:
            score = round(row["exposure_score"], 2)
            score_counts[score] = score_counts.get(score, 0) + 1
            band_counts[row["band"]] = band_counts.get(row["band"], 0) + 1
            per_role[row["vacancy_id"]] = per_role.get(row["vacancy_id"], 0) + 1
        total_tasks = len(tasks)
        write_csv(
            report_dir / "exposure_histogram.csv",
            ["score", "count"],
            [[f"{score:.2f}", count] for score, count in sorted(score_counts.items())],
        )
        write_csv(
            report_dir / "band_shares.csv",
            ["band", "count", "share_percent"],
            [
                [band, band_counts.get(band, 0), f"{100.0 * band_counts.get(band, 0) / total_tasks:.2f}"]
                for band in ("VeryLow", "Low", "Medium", "High")
            ],
        )
        count_hist: dict[int, int] = {}
        for count in per_role.values():
            count_hist[count] = count_hist.get(count, 0) + 1
        write_csv(
            report_dir / "tasks_per_role.csv",
            ["task_count", "n_roles"],
            [[count, n] for count, n in sorted(count_hist.items())],
        )

        roles = {row["vacancy_id"]: row for row in read_jsonl(self.out_dir / "roles.jsonl")}
        clusters = read_jsonl(self.out_dir / "role_clusters.jsonl")
        grouped: dict[str, list[dict]] = {}
        for row in clusters:
            grouped.setdefault(row["cluster"], []).append(roles[row["vacancy_id"]])
        cluster_rows = []
        for name in ("Low", "Augmentation", "Adaptation", "Automation"):
            members = grouped.get(name, [])
            if not members:
                cluster_rows.append([name, 0, "", "", "", ""])
                continue
            means = [member["exposure_mean"] for member in members]
            stds = [member["exposure_std"] for member in members]
            cluster_rows.append(
                [
                    name,
                    len(members),
                    f"{math.fsum(means) / len(means):.3f}",
                    f"{math.fsum(stds) / len(stds):.3f}",
                    f"{max(means):.3f}",
                    f"{min(means):.3f}",
                ]
            )
        write_csv(
            report_dir / "cluster_summary.csv",
            ["cluster", "n_roles", "mean_exposure", "mean_std_exposure", "highest_exposure", "lowest_exposure"],
            cluster_rows,
        )

        taxonomy = read_jsonl(self.out_dir / "taxonomy.jsonl")
        tax_counts: dict[tuple[str, str], int] = {}
        for row in taxonomy:
            key = (row["category_label"], row["subcategory_label"])
            tax_counts[key] = tax_counts.get(key, 0) + 1
        write_csv(
            report_dir / "taxonomy_summary.csv",
            ["category_label", "subcategory_label", "n_tasks"],
            [[cat, sub, n] for (cat, sub), n in sorted(tax_counts.items())],
        )

        def _money(value: float) -> str:
            return str(round(value))

        def _ratio(value: float) -> str:
            return "inf" if math.isinf(value) else f"{value:.4f}"

        sweep_rows = read_jsonl(self.out_dir / "sweep.jsonl")
        write_csv(
            report_dir / "sweep.csv",
            [
                "theta",
                "cost_reduction",
                "productivity_gain",
                "productivity_upper",
                "ratio",
                "n_cost",
                "n_productivity",
                "n_no_impact",
            ],
            [
                [
                    f"{row['theta']:.2f}",
                    _money(row["cost_reduction"]),
                    _money(row["productivity_gain"]),
                    _money(row["productivity_upper"]),
                    _ratio(row["ratio"]),
                    row["n_cost"],
                    row["n_productivity"],
                    row["n_no_impact"],
                ]
                for row in sweep_rows
            ],
        )

        sensitivity = read_jsonl(self.out_dir / "sensitivity.jsonl")
        at_theta = [row for row in sensitivity if abs(row["theta"] - config.theta) < 1e-9]
        deltas = sorted({row["delta"] for row in at_theta})
        by_delta = {row["delta"]: row for row in at_theta}
        write_csv(
            report_dir / "decay_sensitivity.csv",
            ["saving_type"] + [f"delta_{delta}" for delta in deltas],
            [
                ["cost_reduction"] + [_money(by_delta[delta]["cost_reduction"]) for delta in deltas],
                ["productivity_gain"]
                + [_money(by_delta[delta]["productivity_gain"]) for delta in deltas],
                ["productivity_upper"]
                + [_money(by_delta[delta]["productivity_upper"]) for delta in deltas],
            ],
        )

        profiles = self._read_profiles()
        eligible = {p.vacancy_id: p for p in redesign.eligible_roles(profiles, config.theta)}
        category_of = {
            (row["vacancy_id"], row["task_number"]): row["category_label"] for row in taxonomy
        }
        plans_by_variant: dict[str, dict[str, redesign.RedesignPlan]] = {}
        for record in read_jsonl(self.out_dir / "plans.jsonl"):
            plan = redesign.RedesignPlan(
                role_key=record["role_key"],
                variant=record["variant"],
                automated=tuple(record["automated"]),
                freed_share=record["freed_share"],
                post_weights={int(k): v for k, v in record["post_weights"].items()},
                focus_task=record["focus_task"],
                reasoning=record["reasoning"],
                themes=tuple(record["themes"]),
                new_tasks=tuple(
                    redesign.NewTask(n["task_number"], n["task_details"], n["task_category"])
                    for n in record["new_tasks"]
                ),
                new_details={int(k): v for k, v in record["new_details"].items()},
            )
            plans_by_variant.setdefault(plan.variant, {})[plan.role_key] = plan
        shift = redesign.time_shift_report(
            list(eligible.values()), plans_by_variant, category_of
        )
        columns = ["pre_automation", "post_automation"] + [
            variant
            for variant in (redesign.FOCUS, redesign.AUGMENT_REORDER, redesign.NEW_TASKS)
            if variant in plans_by_variant
        ]
        write_csv(
            report_dir / "redesign_comparison.csv",
            ["category"] + [f"{column}_percent" for column in columns],
            [
                [row["category"]] + [f"{100.0 * row.get(column, 0.0):.2f}" for column in columns]
                for row in shift
            ],
        )

        summary = json.loads((self.out_dir / "redesign_summary.json").read_text("utf-8"))
        write_csv(
            report_dir / "theme_shares.csv",
            ["theme", "share_percent"],
            [
                [theme, f"{100.0 * share:.2f}"]
                for theme, share in sorted(summary["theme_shares"].items())
            ],
        )

        # focus-task make-up of the top and bottom weighted salary deciles
        raked = {
            row["role_key"]: row["weight"]
            for row in read_jsonl(self.out_dir / "raked_weights.jsonl")
        }
        focus_plans = plans_by_variant.get(redesign.FOCUS, {})
        salaried = {
            key: roles[key]["salary"]
            for key in focus_plans
            if key in roles and roles[key]["salary"] is not None and key in raked
        }
        decile_rows: list[list] = []
        if salaried:
            deciles = redesign.salary_deciles(salaried, raked)
            for group, wanted in (("bottom", 1), ("top", 10)):
                members = sorted(key for key, decile in deciles.items() if decile == wanted)
                total = math.fsum(raked[key] for key in members)
                if total <= 0:
                    continue
                category_mass: dict[str, float] = {}
                theme_mass: dict[str, float] = {}
                for key in members:
                    plan = focus_plans[key]
                    label = category_of.get((key, plan.focus_task), "uncategorized")
                    category_mass[label] = category_mass.get(label, 0.0) + raked[key]
                    for theme in plan.themes:
                        theme_mass[theme] = theme_mass.get(theme, 0.0) + raked[key]
                for label, mass in sorted(category_mass.items()):
                    decile_rows.append([group, "category", label, f"{100.0 * mass / total:.2f}"])
                for theme, mass in sorted(theme_mass.items()):
                    decile_rows.append([group, "theme", theme, f"{100.0 * mass / total:.2f}"])
        write_csv(
            report_dir / "focus_by_decile.csv",
            ["group", "kind", "label", "share_percent"],
            decile_rows,
        )
