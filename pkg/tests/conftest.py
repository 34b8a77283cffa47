"""Shared, expensive fixtures: trained models are built once per session."""

import time

import numpy as np
import pytest
from hypothesis import settings

from chigan.estimators import effect_report
from chigan.oracles import identity_suite
from chigan.simgen import SimSpec, simulate
from chigan.trainer import TrainConfig, train
from chigan.weights import extract_weights

# first calls may pay for JIT compilation
settings.register_profile("chigan", deadline=None)
settings.load_profile("chigan")

SIM_SEEDS = (0, 1, 2, 3, 4)


class SimRun:
    def __init__(self, seed):
        self.seed = seed
        self.spec = SimSpec(seed=seed)
        self.arms = simulate(self.spec)
        start = time.perf_counter()
        self.model = train(self.arms, TrainConfig(seed=seed))
        self.seconds = time.perf_counter() - start
        self.weights = extract_weights(self.model, self.arms)
        y1, y2 = self.arms[0].outcomes, self.arms[1].outcomes
        self.cgan = effect_report(y1, self.weights[0], y2, self.weights[1], "cgan")
        self.unweighted = effect_report(y1, np.full(len(y1), 1 / len(y1)), y2, np.full(len(y2), 1 / len(y2)),
                                        "unweighted")

    def mean_weight(self, arm_index, label):
        arm, w = self.arms[arm_index], self.weights[arm_index]
        return float(w.weights[arm.labels == label].mean())


class _SimCache:
    def __init__(self):
        self._runs = {}

    def __getitem__(self, seed) -> SimRun:
        if seed not in self._runs:
            self._runs[seed] = SimRun(seed)
        return self._runs[seed]


@pytest.fixture(scope="session")
def sim_runs():
    return _SimCache()


@pytest.fixture(scope="session")
def identity_report():
    start = time.perf_counter()
    rep = identity_suite(seed=0)
    rep.details["seconds"] = time.perf_counter() - start
    return rep


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
