import numpy as np
import pytest

from loadcoupling.scenario import Scenario


def make_one_relay(demand=(0.5, 0.5)):
    """One MC, one RC, two UEs.  Cells: mc0=0, rc0=1.  Nodes: ue0, ue1, rc0=2.

    The reference association is ue0 <- rc0, ue1 <- mc0, rc0 <- mc0, i.e.
    ``[1, 0, 0]``.
    """
    gain = np.array([
        # ue0  ue1  rc0
        [0.5, 2.0, 4.0],   # mc0
        [2.0, 0.3, 0.0],   # rc0
    ])
    return Scenario(
        mc_pos=[[0.0, 0.0]], rc_pos=[[100.0, 0.0]],
        ue_pos=[[120.0, 0.0], [-50.0, 0.0]], demand=list(demand), gain=gain,
        power=[1.0, 0.5], noise=1.0, num_ru=1, ru_bandwidth=1.0,
        candidates=((0, 1), (0, 1), (0,)),
    )


def make_two_cells(g_own=1.0, g_cross=0.5, demand=1.0, num_ru=1, bandwidth=1.0,
                   power=1.0, noise=1.0):
    """Two MCs each with one UE; symmetric cross gains."""
    gain = np.array([[g_own, g_cross], [g_cross, g_own]])
    return Scenario(
        mc_pos=[[0.0, 0.0], [500.0, 0.0]], rc_pos=np.empty((0, 2)),
        ue_pos=[[10.0, 0.0], [490.0, 0.0]], demand=[demand, demand], gain=gain,
        power=[power, power], noise=noise, num_ru=num_ru, ru_bandwidth=bandwidth,
        candidates=((0, 1), (0, 1)),
    )


def single_link(p=0.8, g=1e-11, noise=7e-16, demand=2e6, num_ru=100, bandwidth=180e3):
    return Scenario(
        mc_pos=[[0.0, 0.0]], rc_pos=np.empty((0, 2)), ue_pos=[[100.0, 0.0]],
        demand=[demand], gain=[[g]], power=[p], noise=noise, num_ru=num_ru,
        ru_bandwidth=bandwidth, candidates=((0,),),
    )


@pytest.fixture
def one_relay():
    return make_one_relay()


@pytest.fixture
def two_cells():
    return make_two_cells()


# -- acceptance report ------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, ok, detail):
        lines[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(lines[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
