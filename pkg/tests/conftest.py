import zlib

import numpy as np
import pytest

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture
def rng(request):
    # stable per-test stream
    return np.random.default_rng(zlib.crc32(request.node.name.encode()))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
