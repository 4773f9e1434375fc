import numpy as np
import pytest

from semiblind.cgmm import EmConfig, GmmModel, fit
from semiblind.estimators import EstimatorBank
from semiblind.scenarios import ArrayGeometry, ClusterScenario, generate_dataset

DESK_GEOMETRY = ArrayGeometry(vertical_count=2, horizontal_count=8)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_pd(rng, m, cond_floor=0.1):
    a = crandn(rng, m, m)
    return a @ a.conj().T / m + cond_floor * np.eye(m)


def random_model(rng, k, m, zero_mean=False):
    w = rng.random(k) + 0.1
    w /= w.sum()
    means = np.zeros((k, m), complex) if zero_mean else crandn(rng, k, m)
    covs = np.stack([random_pd(rng, m) for _ in range(k)])
    return GmmModel(w, means, covs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def desk_data():
    """Desk-scale setup: M=16 URA, 20k training channels, K=16 mixture."""
    scenario = ClusterScenario()
    train = generate_dataset(scenario, DESK_GEOMETRY, 20000, seed=[7, 0])
    test = generate_dataset(scenario, DESK_GEOMETRY, 1000, seed=[7, 1])
    model, report = fit(train, EmConfig(component_count=16, seed=7))
    bank = EstimatorBank(model, train.covariance())
    return {"train": train, "test": test, "model": model, "report": report, "bank": bank}


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    """Log one acceptance line; the assertion is left to the caller."""
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
                            + (f" -- {detail}" if detail else ""))
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
