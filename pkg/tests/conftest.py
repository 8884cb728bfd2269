import math

import pytest

from pilotwave.wavefunction import FIVE_MODES, Mode, WaveFunctionSpec

FN3_PHASES = {
    Mode(0, 0): 0.5442,
    Mode(0, 1): 2.3099,
    Mode(1, 0): 5.6703,
    Mode(1, 1): 4.5333,
}

FN4_PHASES = {
    Mode(0, 0): 4.8157,
    Mode(0, 1): 1.486,
    Mode(1, 0): 2.6226,
    Mode(1, 1): 3.8416,
}

FN5_PHASES = {
    Mode(0, 0): 4.2065,
    Mode(0, 1): 0.1803,
    Mode(0, 2): 2.0226,
    Mode(1, 0): 5.5521,
    Mode(1, 1): 3.3361,
    Mode(2, 0): 2.6561,
}

FN7_PHASES = {
    Mode(0, 0): 1.2434,
    Mode(0, 1): 4.411,
    Mode(0, 2): 4.3749,
    Mode(1, 0): 4.2427,
    Mode(1, 1): 1.5574,
    Mode(2, 0): 5.7796,
}


@pytest.fixture(scope="session")
def fn3_spec() -> WaveFunctionSpec:
    return WaveFunctionSpec.homogeneous(1.0, FN3_PHASES)


@pytest.fixture(scope="session")
def fn4_spec_eps01() -> WaveFunctionSpec:
    return WaveFunctionSpec.homogeneous(0.1, FN4_PHASES)


@pytest.fixture(scope="session")
def fn5_spec() -> WaveFunctionSpec:
    return WaveFunctionSpec.homogeneous(0.1, FN5_PHASES, modes=FIVE_MODES)


@pytest.fixture(scope="session")
def ground_spec() -> WaveFunctionSpec:
    return WaveFunctionSpec.ground()


def require_close(a: float, b: float, tol: float) -> None:
    assert math.isfinite(a) and math.isfinite(b)
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"
