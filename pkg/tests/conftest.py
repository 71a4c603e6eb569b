import json
from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def normal_tail_oracle():
    """Frozen 50-digit quadrature oracle rows: (w, tail, log_tail)."""
    rows = json.loads((DATA_DIR / "normal_tail_oracle.json").read_text())
    return [(r["w"], float(r["tail"]), float(r["log_tail"])) for r in rows]


@pytest.fixture
def rng():
    # function-scoped: every test sees the same fresh stream regardless of order
    return np.random.Generator(np.random.PCG64(20240801))


def criterion_line(number: int, description: str, passed: bool) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[{status}] acceptance criterion {number}: {description}")
    assert passed, f"acceptance criterion {number} failed: {description}"
