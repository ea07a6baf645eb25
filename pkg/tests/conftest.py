import pytest

from eptmon.features import WindowConfig, extract_windows
from eptmon.simulator import SimConfig, simulate_trial
from eptmon.trace import ClassLabel

SIM_SEED = 42


@pytest.fixture(scope="session")
def sim_config():
    return SimConfig(seed=SIM_SEED)


@pytest.fixture(scope="session")
def sim_traces(sim_config):
    """The full synthetic dataset: 8 classes x 5 trials x 60 s."""
    return {
        (label, trial): simulate_trial(label, trial, sim_config)
        for label in ClassLabel
        for trial in range(5)
    }


@pytest.fixture(scope="session")
def feature_vectors(sim_traces):
    """Windowed features of the full dataset at the canonical 10 s window."""
    window = WindowConfig(t_window=10.0, t_d=60.0, stride=1.0)
    vectors = []
    for (_label, _trial), trace in sorted(sim_traces.items()):
        vectors.extend(extract_windows(trace, window))
    return vectors
