import pytest

from artfield import synth


@pytest.fixture(scope="session")
def door_scene():
    return synth.generate_scene(synth.door_spec(0))


@pytest.fixture(scope="session")
def cabinet_scene():
    return synth.generate_scene(synth.cabinet_spec(0))


@pytest.fixture(scope="session")
def three_part_scene():
    """Door, drawer and body seen from 8 training views."""
    return synth.generate_scene(synth.grid_spec(3, 0), n_train=8, n_test=0)
