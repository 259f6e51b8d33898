"""Shared fixtures: the three-component scenario, its sample and its KDE."""

from pathlib import Path

import pytest

from algorithms.mean_shift.src.dms import find_modes
from algorithms.vmf_mixture.src.vmf_mixture import VmfMixture, rule_of_thumb_bandwidth, sample
from framework.core.config_loader import load_mixture_spec
from framework.core.kde import KdeModel

SCENARIO_PATH = Path(__file__).parent / "vmf_mixture" / "scenarios" / "three_component.yaml"


@pytest.fixture(scope="session")
def scenario_mixture():
    return VmfMixture.from_spec(load_mixture_spec(SCENARIO_PATH))


@pytest.fixture(scope="session")
def scenario_data(scenario_mixture):
    return sample(scenario_mixture, 1000, seed=0)


@pytest.fixture(scope="session")
def scenario_model(scenario_data):
    return KdeModel.build(scenario_data, h=rule_of_thumb_bandwidth(scenario_data))


@pytest.fixture(scope="session")
def scenario_modes(scenario_model):
    return find_modes(scenario_model)
