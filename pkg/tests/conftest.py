import numpy as np
import pytest

from typicalset import GaussianComponent, MixtureModel

# closed-form constants used all over the suite
LOG_TWO_PI = float(np.log(2.0 * np.pi))
STD_NORMAL_LOGPDF_AT_MODE = -0.5 * LOG_TWO_PI  # -0.918938533204672...
STD_NORMAL_ENTROPY = 0.5 * (LOG_TWO_PI + 1.0)  # 1.418938533204672...


@pytest.fixture
def std_normal_1d() -> MixtureModel:
    return MixtureModel.from_parameters([[0.0]], [[0.0]])


@pytest.fixture
def two_modes_1d() -> MixtureModel:
    """Equal-weight N(-10,1) and N(+10,1); modes far enough apart that the
    off-mode term is below e^-199 at either mean."""
    return MixtureModel.from_parameters([[-10.0], [10.0]], [[0.0], [0.0]])


@pytest.fixture
def component_std_normal() -> GaussianComponent:
    return GaussianComponent(np.zeros(1), np.zeros(1))


def random_component(rng: np.random.Generator, d: int, mean_scale: float = 1.0, lv_scale: float = 0.5) -> GaussianComponent:
    return GaussianComponent(
        rng.uniform(-mean_scale, mean_scale, size=d),
        rng.uniform(-lv_scale, lv_scale, size=d),
    )
