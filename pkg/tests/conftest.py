import pytest

from ratioproto.datasets import SyntheticConfig, generate_synthetic


@pytest.fixture(scope="session")
def default_dataset():
    return generate_synthetic(SyntheticConfig(), seed=0)


@pytest.fixture(scope="session")
def small_dataset():
    cfg = SyntheticConfig(n_classes=12, dim=6, points_per_class=20, split_fractions=(0.5, 0.25, 0.25))
    return generate_synthetic(cfg, seed=3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
