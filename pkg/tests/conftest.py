import numpy as np
import pytest

from uwbnet import _accel
from uwbnet.trace import Trajectory

BACKENDS = [pytest.param(True, id="numba"), pytest.param(False, id="numpy")]
if not _accel.HAVE_NUMBA:
    BACKENDS = [pytest.param(False, id="numpy")]


@pytest.fixture(params=BACKENDS)
def use_numba(request):
    return request.param


def make_traj(tag, t0, xy, imputed=None):
    return Trajectory(tag, t0, np.asarray(xy, dtype=float), imputed)


class Study:
    """Default scenario pushed through the library once per session."""

    def __init__(self, seed=0):
        from uwbnet import contact, dynamic, smooth, synthgen, trace

        self.scenario = synthgen.default_scenario(seed=seed)
        self.raw, self.truth = synthgen.generate(self.scenario)
        self.trajs = trace.downsample_all(self.raw)
        absences = [a for tr in self.trajs.values() for a in smooth.absences_from_trajectory(tr)]
        self.absences = absences
        self.smoothed = smooth.smooth_all(self.trajs, absences=absences)
        self.table = contact.ContactTable(self.smoothed)
        self.windows = dynamic.make_windows(self.table.start, self.table.end)
        self.family = dynamic.windowed_network_family(self.table, contact.DEFAULT_THRESHOLDS, windows=self.windows)
        self.timelines = {
            th: dynamic.community_timeline(graphs, seed=0, windows=self.windows, participants=self.table.tags,
                                           origin=self.table.start)
            for th, graphs in self.family.items()
        }


@pytest.fixture(scope="session")
def study():
    return Study()


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
