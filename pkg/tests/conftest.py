import numpy as np
import pytest

from gatsm.model import GATSM, ModelConfig, build_variant


def small_config(**overrides):
    base = dict(hidden=(6, 5), n_basis=4, attn_hidden=5, attn_heads=2)
    base.update(overrides)
    return ModelConfig(**base)


def random_model(n_features=3, variant="full", task="regression", n_classes=None, seed=0,
                 **overrides) -> GATSM:
    return build_variant(n_features, variant, task, n_classes, small_config(**overrides),
                         seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str):
    ACCEPTANCE_LINES.append(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
