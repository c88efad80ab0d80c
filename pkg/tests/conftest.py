import numpy as np
import pytest

from pehmqc import spins


@pytest.fixture(scope="session")
def ch2():
    return spins.builtin_system("ch2")


@pytest.fixture(scope="session")
def ax():
    return spins.builtin_system("ax")


@pytest.fixture(scope="session")
def ch_remote():
    return spins.builtin_system("ch-remote")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_weak_system(rng, max_spins=4):
    """Random all-weak system with at least one proton (test helper)."""
    n = int(rng.integers(2, max_spins + 1))
    spin_list = [spins.Spin("S0", "1H", float(rng.uniform(-300, 300)))]
    for i in range(1, n):
        iso = "1H" if rng.random() < 0.7 else "13C"
        spin_list.append(spins.Spin(f"S{i}", iso, float(rng.uniform(-300, 300))))
    couplings = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.7:
                couplings.append(spins.Coupling(f"S{i}", f"S{j}",
                                                float(rng.uniform(-50, 150))))
    return spins.SpinSystem("random", tuple(spin_list), tuple(couplings))
