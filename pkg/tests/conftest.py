import os
import tempfile

# Keep test logs out of the working tree; must run before src modules build the logger
os.environ.setdefault("SNAKE_LAB_LOG_FILE", os.path.join(tempfile.gettempdir(), "snake_lab_tests.log"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from src.engine.phase_reduction import find_limit_cycle  # noqa: E402
from src.models.experiment_models import EvaluationConfig, ExperimentConfig, RunConfig  # noqa: E402
from src.models.filter_models import FilterConfig  # noqa: E402
from src.models.learning_models import LearningConfig  # noqa: E402
from src.models.robot_models import RobotParams  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def nominal_params():
    return RobotParams()


@pytest.fixture(scope="session")
def nominal_atlas(nominal_params):
    return find_limit_cycle(nominal_params)


@pytest.fixture(scope="session")
def toy_config():
    """Three links, few particles, one-period episodes on a coarse step."""
    return ExperimentConfig(
        robot=RobotParams(n=3),
        filter=FilterConfig(N=8),
        learning=LearningConfig(n_T=1, n_e=2, dt=0.05),
        evaluation=EvaluationConfig(periods=1, warmup_periods=1),
        run=RunConfig(seed=3, trace_stride=10),
    )


@pytest.fixture(scope="session")
def toy_atlas(toy_config):
    return find_limit_cycle(toy_config.robot, dt=toy_config.learning.dt)
