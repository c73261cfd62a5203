import pytest

from kltune.space import ConfigSpace, TunableParam


def grid_space(n_params: int, n_values: int, restrictions=()) -> ConfigSpace:
    """An unrestricted integer grid: n_params parameters over 0..n_values-1."""
    params = [
        TunableParam(f"p{i}", tuple(range(n_values)), 0) for i in range(n_params)
    ]
    return ConfigSpace(params, restrictions)


@pytest.fixture
def small_space() -> ConfigSpace:
    return ConfigSpace(
        [
            TunableParam("a", (1, 2), 1),
            TunableParam("b", (10, 20), 10),
        ]
    )
