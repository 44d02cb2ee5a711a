import math

import numpy as np
import pytest

from aoa_privacy import ApPose, ArrayConfig, Environment, OfdmConfig, Reflector, enumerate_paths

C = 299_792_458.0


def two_path_env(reflector_y=5.0, gamma=0.6):
    """User at (0,0) facing +x, AP at (10,0) facing -x, one reflector along y."""
    return Environment(
        20.0, 10.0, [Reflector((0.0, reflector_y), (20.0, reflector_y), gamma)],
        [ApPose((10.0, 0.0), -math.pi / 2)],
    )


def two_path_paths(reflector_y=5.0, gamma=0.6):
    return enumerate_paths(two_path_env(reflector_y, gamma), (0.0, 0.0), 0, 1,
                           user_orientation=math.pi / 2)


@pytest.fixture
def canonical_paths():
    return two_path_paths()


@pytest.fixture
def strong_paths():
    return two_path_paths(5.0 * math.tan(math.radians(30.0)), 0.9)


@pytest.fixture
def tx():
    return ArrayConfig()


@pytest.fixture
def ofdm():
    return OfdmConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criterion -> list of (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p for p, _ in parts)
        shown = [d for p, d in parts if not p] or [d for _, d in parts][:1]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  " + "; ".join(shown))
