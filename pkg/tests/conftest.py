import numpy as np
import pytest

from vertgame import (
    DirectProfit,
    ModelParams,
    consumer_alone,
    monopoly_two_sided,
    tatonnement,
)
from vertgame.model import load_config

CONFIG_DIR = "configs"


@pytest.fixture(scope="session")
def table2():
    """Synthetic benchmark market used throughout the reference results."""
    return ModelParams(
        beta=0.1, sigma=0.25, mu_plus=0.1, mu_minus=-0.1,
        producer=DirectProfit(0.25, 2.0, 6.0),
        consumer=DirectProfit(0.75, 1.0, 5.0),
        h_plus=10.0, h_minus=10.0, kappa0=3.0, kappa1=0.0,
    )


@pytest.fixture(scope="session")
def oil():
    return load_config(f"{CONFIG_DIR}/oil.toml")


@pytest.fixture(scope="session")
def mono(table2):
    return monopoly_two_sided(table2)


@pytest.fixture(scope="session")
def alone(table2):
    return consumer_alone(table2)


@pytest.fixture(scope="session")
def eqm_type1(table2):
    eqm = tatonnement(table2, branch="generic")
    assert eqm.converged
    return eqm


@pytest.fixture(scope="session")
def eqm_type2(table2):
    eqm = tatonnement(table2, branch="transitory-minus")
    assert eqm.converged
    return eqm


@pytest.fixture(scope="session")
def eqm_type3(table2):
    eqm = tatonnement(table2, branch="preemptive-plus")
    assert eqm.converged
    return eqm


def assert_close(actual, expected, tol, label=""):
    __tracebackhide__ = True
    if abs(actual - expected) > tol:
        pytest.fail(f"{label}: {actual:.6g} differs from {expected:.6g} "
                    f"by {abs(actual - expected):.3g} > {tol:.3g}")
