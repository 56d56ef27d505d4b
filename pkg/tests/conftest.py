import functools

import pytest

from impactlab.order_flow import replay
from impactlab.synth import GeneratorConfig, zero_intelligence_flow

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the lines are echoed in the summary."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}"
        if detail:
            line += f" ({detail})"
        _ACCEPTANCE[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])


@functools.lru_cache(maxsize=None)
def zi_events(seed: int, n_events: int = 60000):
    return tuple(zero_intelligence_flow(GeneratorConfig(seed=seed, n_events=n_events)))


@functools.lru_cache(maxsize=None)
def zi_trades(seed: int, levels: int = 5, n_events: int = 60000):
    return tuple(replay(zi_events(seed, n_events), levels))
