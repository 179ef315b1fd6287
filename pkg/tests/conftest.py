import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from climregion import synth  # noqa: E402
from climregion.grid_store import CSV_HEADER  # noqa: E402

HEADER = ",".join(CSV_HEADER)


def csv_bytes(rows, header=HEADER, newline="\n") -> bytes:
    return (newline.join([header, *rows]) + newline).encode("utf-8")


@pytest.fixture(scope="session")
def table1_labeled():
    return synth.generate(synth.table1_spec(seed=0))


@pytest.fixture(scope="session")
def planted_linear():
    """Noiseless seven-region panel whose air temperature is an exact linear
    function of precipitation and relative humidity."""
    from dataclasses import replace

    spec = replace(
        synth.table1_spec(seed=3),
        target_relation=synth.TargetRelation(
            "linear", coefficients={"precipitation": 2.0, "relative_humidity": 0.5},
            intercept=1.0),
        noise_sigma=0.0,
    )
    return synth.generate(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Keep one verdict line per acceptance criterion for the summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
