import json
from pathlib import Path

import pytest

from taskshift.config import PipelineConfig
from taskshift.corpus import load_reference_tables, join_salary, parse_vacancies
from taskshift.exposure import build_profile, extract_corpus, task_record
from taskshift.gateway import BatchManager, MockProvider, RetryPolicy

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def manager() -> BatchManager:
    return BatchManager(MockProvider(), policy=RetryPolicy(backoff_base=0.0))


def make_tasks(scores):
    return [task_record(i, f"task number {i}", s) for i, s in enumerate(scores, start=1)]


@pytest.fixture(scope="session")
def fixture_profiles():
    """Profiles for the 10-role fixture corpus, built with the mock provider."""
    parsed = parse_vacancies(DATA_DIR / "corpus.jsonl")
    ref = load_reference_tables(
        DATA_DIR / "fte.csv",
        DATA_DIR / "salary.csv",
        DATA_DIR / "grade_totals.csv",
        DATA_DIR / "profession_totals.csv",
    )
    mgr = BatchManager(MockProvider(), policy=RetryPolicy(backoff_base=0.0))
    extracted = extract_corpus(parsed.vacancies, mgr)
    profiles = []
    for vacancy in parsed.vacancies:
        tasks = extracted.tasks_by_vacancy[vacancy.vacancy_id]
        profiles.append(build_profile(vacancy, tasks, 0.75, join_salary(vacancy, ref)))
    return profiles


def write_config(tmp_path: Path, **overrides) -> Path:
    values = {
        "corpus_path": str(DATA_DIR / "corpus.jsonl"),
        "fte_path": str(DATA_DIR / "fte.csv"),
        "salary_path": str(DATA_DIR / "salary.csv"),
        "grade_totals_path": str(DATA_DIR / "grade_totals.csv"),
        "profession_totals_path": str(DATA_DIR / "profession_totals.csv"),
        "out_dir": str(tmp_path / "out"),
        "cache_dir": str(tmp_path / "cache"),
        "provider": "mock",
        "backoff_base": 0.0,
        "seed": 7,
    }
    values.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(values))
    return path


@pytest.fixture
def fixture_config(tmp_path) -> PipelineConfig:
    return PipelineConfig.load(write_config(tmp_path))
