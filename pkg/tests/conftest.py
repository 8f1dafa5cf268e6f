import pytest

from acceltime.experiment import CharacterizationPlan, characterize
from acceltime.fitting import FitConfig, fit_platform_model
from acceltime.learn import ForestParams
from acceltime.oracle import OracleDevice, default_fusion_rules, default_oracle

QUICK = dict(surface_configs=300, micro_configs=60, convnet_configs=600, fcnet_configs=30)


def single_input_oracle(**kw):
    """The default device without multi-input fusion, so fused kernels stay in the estimator's class."""
    rules = tuple(r for r in default_fusion_rules() if r.follower not in ("ElemwiseAdd", "Concat"))
    return default_oracle(fusion_rules=rules, **kw)


@pytest.fixture(scope="session")
def oracle():
    return single_input_oracle()


@pytest.fixture(scope="session")
def characterization(oracle):
    return characterize(OracleDevice(oracle), CharacterizationPlan(**QUICK), n_iter=1)


@pytest.fixture(scope="session")
def model(characterization):
    config = FitConfig(forest=ForestParams(n_trees=10), timestamps=False)
    return fit_platform_model(characterization.records, characterization.events, config)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
