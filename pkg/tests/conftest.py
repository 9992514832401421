import os

import pytest
from hypothesis import settings

from bandit_arena.datagen import TaskSpec, generate_task
from bandit_arena.environment import build_sequence

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def small_spec():
    return TaskSpec(n_candidates=6, max_len=8, seed=7)


@pytest.fixture(scope="session")
def small_world(small_spec):
    """60 training + 5 held-out instances and a 3-insertion plan (K=75)."""
    train = generate_task(small_spec, 60)
    held = generate_task(small_spec, 5, start=10_000)
    plan = build_sequence(train, held, insertions=3, seed=1)
    return train, held, plan


@pytest.fixture
def dataset_files(tmp_path, small_world):
    from bandit_arena.data import write_dataset

    train, held, _ = small_world
    write_dataset(train, tmp_path / "train.jsonl")
    write_dataset(held, tmp_path / "held.jsonl")
    return tmp_path / "train.jsonl", tmp_path / "held.jsonl"


# -- acceptance summary -------------------------------------------------------------
# Tests marked ``criterion("A3", "...")`` are grouped; a criterion passes only when
# every test carrying its mark passed.

_criteria: dict[str, dict] = {}


def pytest_runtest_logreport(report):
    marks = getattr(report, "_criterion", None)
    if marks is None:
        return
    code, title = marks
    entry = _criteria.setdefault(code, {"title": title, "ok": True, "seen": False})
    if report.when == "call" or report.failed:
        entry["seen"] = True
        entry["ok"] = entry["ok"] and report.passed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result()._criterion = tuple(mark.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(_criteria, key=lambda c: int(c[1:])):
        entry = _criteria[code]
        verdict = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        terminalreporter.write_line(f"{code:<4} {verdict}  {entry['title']}")
