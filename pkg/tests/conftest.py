import json
from dataclasses import replace
from pathlib import Path

import pytest

from pedcross.gap_acceptance import train
from pedcross.harness.config import load_config
from pedcross.scenario_sim import simulate_all

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"acceptance {number}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def reference_config():
    return load_config(CONFIGS / "reference.json")


@pytest.fixture(scope="session")
def evaluation_config():
    return load_config(CONFIGS / "evaluation.json")


@pytest.fixture(scope="session")
def reference_episodes(reference_config):
    return simulate_all(reference_config.sim, reference_config.oracle)


@pytest.fixture(scope="session")
def reference_events(reference_episodes):
    return [ev for ep in reference_episodes for ev in ep.events]


@pytest.fixture(scope="session")
def evaluation_episodes(evaluation_config):
    return simulate_all(evaluation_config.sim, evaluation_config.oracle)


@pytest.fixture(scope="session")
def svm_model(reference_config, reference_events):
    model, _ = train("SVMPoly3", reference_events, reference_config.seed,
                     reference_config.model.for_kind("SVMPoly3"))
    return model


@pytest.fixture
def write_config(tmp_path):
    def _write(flat, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(flat))
        return path
    return _write


@pytest.fixture(scope="session")
def small_sim_config(reference_config):
    sim = replace(reference_config.sim, n_crossings=6, n_walkaway=2)
    return replace(reference_config, sim=sim)
