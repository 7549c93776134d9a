"""Shared fixtures. The shipped scenarios are expensive (up to ~20 s each),
so every run is session-scoped and shared between the unit and acceptance
modules."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import pytest

from hydrodrive.config import parse_config
from hydrodrive.simulate import run_scenario

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR


@pytest.fixture(scope="session")
def exp1_cfg():
    return parse_config(CONFIG_DIR / "exp1_snow.cfg")


@pytest.fixture(scope="session")
def exp2_cfg():
    return parse_config(CONFIG_DIR / "exp2_ice.cfg")


@pytest.fixture(scope="session")
def regulation_cfg():
    return parse_config(CONFIG_DIR / "regulation.cfg")


@pytest.fixture(scope="session")
def hard_cfg():
    return parse_config(CONFIG_DIR / "hard_slip.cfg")


@pytest.fixture(scope="session")
def exp1_result(exp1_cfg):
    return run_scenario(exp1_cfg)


@pytest.fixture(scope="session")
def exp2_result(exp2_cfg):
    return run_scenario(exp2_cfg)


@pytest.fixture(scope="session")
def regulation_result(regulation_cfg):
    return run_scenario(regulation_cfg)


@pytest.fixture(scope="session")
def hard_result(hard_cfg):
    return run_scenario(hard_cfg)


@pytest.fixture(scope="session")
def exp1_pid_result(exp1_cfg):
    return run_scenario(replace(exp1_cfg, controller="pid"))


@pytest.fixture(scope="session")
def hard_pid_result(hard_cfg):
    return run_scenario(replace(hard_cfg, controller="pid"))


@pytest.fixture(scope="session")
def shipped_results(exp1_result, exp2_result, regulation_result, hard_result):
    return {
        "exp1_snow": exp1_result,
        "exp2_ice": exp2_result,
        "regulation": regulation_result,
        "hard_slip": hard_result,
    }
