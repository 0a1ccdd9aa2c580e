import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_traj
from uwbnet import smooth, trace
from uwbnet.errors import AllMissing, EmptyResult, NoSamplesForTag
from uwbnet.smooth import AbsenceInterval, KalmanParams


def reference_rts(z, sigma_meas=0.25, sigma_accel=0.5, dt=1.0):
    """Textbook matrix-form Kalman filter + RTS smoother on one axis."""
    F = np.array([[1.0, dt], [0.0, 1.0]])
    H = np.array([[1.0, 0.0]])
    G = np.array([[dt * dt / 2.0], [dt]])
    Q = G @ G.T * sigma_accel ** 2
    R = np.array([[sigma_meas ** 2]])
    idx = np.flatnonzero(~np.isnan(z))
    a, b = idx[0], idx[-1]
    xs, Ps, xps, Pps = {}, {}, {}, {}
    xs[a] = np.array([[z[a]], [0.0]])
    Ps[a] = np.diag([sigma_meas ** 2, 1.0])
    for k in range(a + 1, b + 1):
        xp = F @ xs[k - 1]
        Pp = F @ Ps[k - 1] @ F.T + Q
        xps[k], Pps[k] = xp, Pp
        if np.isnan(z[k]):
            xs[k], Ps[k] = xp, Pp
            continue
        S = H @ Pp @ H.T + R
        K = Pp @ H.T @ np.linalg.inv(S)
        xs[k] = xp + K @ (np.array([[z[k]]]) - H @ xp)
        Ps[k] = (np.eye(2) - K @ H) @ Pp
    out = np.full(len(z), np.nan)
    filt = np.full(len(z), np.nan)
    xsm = xs[b]
    out[b] = xsm[0, 0]
    for k in range(b - 1, a - 1, -1):
        C = Ps[k] @ F.T @ np.linalg.inv(Pps[k + 1])
        xsm = xs[k] + C @ (xsm - xps[k + 1])
        out[k] = xsm[0, 0]
    for k in range(a, b + 1):
        filt[k] = xs[k][0, 0]
    return filt, out


def raw_from_seconds(seconds, tag="A"):
    t = np.asarray(seconds, dtype=float) + 0.25
    n = len(t)
    return trace.RawSampleSet(t, [tag] * n, np.zeros(n), np.zeros(n), np.full(n, np.nan))


# -- absences ----------------------------------------------------------------

def test_absence_61_seconds():
    secs = [s for s in range(0, 300) if not 100 <= s < 161]
    assert smooth.detect_absences(raw_from_seconds(secs), "A") == [AbsenceInterval("A", 100, 161)]


def test_gap_of_60_is_not_absence():
    secs = [s for s in range(0, 300) if not 100 <= s < 160]
    assert smooth.detect_absences(raw_from_seconds(secs), "A") == []


def test_dense_has_no_absence():
    assert smooth.detect_absences(raw_from_seconds(range(500)), "A") == []


def test_detect_absences_unknown_tag():
    with pytest.raises(NoSamplesForTag):
        smooth.detect_absences(raw_from_seconds(range(5)), "B")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=300), st.integers(1, 20))
def test_absences_are_exactly_long_runs(mask, threshold):
    mask[0] = mask[-1] = True
    xy = np.where(np.array(mask)[:, None], 1.0, np.nan) * np.ones((len(mask), 2))
    found = smooth.absences_from_trajectory(make_traj("A", 7, xy), threshold)
    expect, run = [], None
    for i, present in enumerate(mask + [True]):
        if not present and run is None:
            run = i
        elif present and run is not None:
            if i - run > threshold:
                expect.append((run + 7, i + 7))
            run = None
    assert [(a.start, a.end) for a in found] == expect


def test_absence_file_roundtrip():
    items = [AbsenceInterval("B", 10, 80), AbsenceInterval("A", 0, 70)]
    buf = io.StringIO()
    smooth.write_absences(items, buf)
    assert buf.getvalue().splitlines() == ["tag,start,end", "A,0,70", "B,10,80"]
    assert smooth.read_absences(io.StringIO(buf.getvalue())) == sorted(items, key=lambda a: a.tag)


# -- filter ------------------------------------------------------------------

def test_constant_trajectory_reproduced(use_numba):
    tr = make_traj("A", 0, np.tile([2.0, 3.0], (100, 1)))
    out = smooth.kalman_smooth(tr, use_numba=use_numba)
    assert np.abs(out.xy - [2.0, 3.0]).max() < 1e-6


def test_linear_gap_matches_reference(use_numba):
    x = 0.5 * np.arange(60.0)
    z = x.copy()
    z[30] = np.nan
    tr = make_traj("A", 0, np.column_stack([z, np.zeros(60)]))
    out = smooth.kalman_smooth(tr, use_numba=use_numba)
    _, ref = reference_rts(z)
    np.testing.assert_allclose(out.xy[:, 0], ref, atol=1e-9)
    assert abs(out.xy[30, 0] - 15.0) < 0.05
    assert out.imputed.tolist() == [i == 30 for i in range(60)]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 1.0), st.floats(0.05, 2.0))
def test_random_series_matches_reference(seed, sm, sa):
    rng = np.random.default_rng(seed)
    z = np.cumsum(rng.normal(0, 0.3, 80))
    z[rng.uniform(size=80) < 0.3] = np.nan
    z[[5, 70]] = [0.0, 1.0]
    z[:5] = np.nan
    params = KalmanParams(sm, sa)
    ref_f, ref_s = reference_rts(z, sm, sa)
    for flag in (True, False):
        f, s = smooth.run_kalman(z, params, use_numba=flag)
        np.testing.assert_allclose(s[:, 0], ref_s, atol=1e-9, rtol=1e-9)
        np.testing.assert_allclose(f[:, 0], ref_f, atol=1e-9, rtol=1e-9)


def test_stationary_monte_carlo(use_numba):
    wins = 0
    for trial in range(100):
        rng = np.random.default_rng([2024, trial])
        truth = np.array([4.0, 2.5])
        meas = truth + rng.normal(0, 0.3, (300, 2))
        out = smooth.kalman_smooth(make_traj("A", 0, meas), use_numba=use_numba)
        rmse_raw = np.sqrt(((meas - truth) ** 2).sum(axis=1).mean())
        rmse_sm = np.sqrt(((out.xy - truth) ** 2).sum(axis=1).mean())
        wins += rmse_sm < rmse_raw
    assert wins >= 95


def test_small_sigma_meas_tracks_measurements():
    rng = np.random.default_rng(5)
    meas = np.cumsum(rng.normal(0, 0.4, (200, 2)), axis=0)
    out = smooth.kalman_smooth(make_traj("A", 0, meas), KalmanParams(sigma_meas=1e-4))
    assert np.abs(out.xy - meas).max() < 1e-3


def test_rts_not_worse_than_filter():
    worse = 0
    for trial in range(50):
        rng = np.random.default_rng([77, trial])
        v = rng.normal(0, 0.5)
        truth = 1.0 + v * np.arange(300.0)
        z = truth + rng.normal(0, 0.3, 300)
        filt, sm = smooth.run_kalman(z, KalmanParams(0.3, 0.1))
        worse += np.sqrt(np.mean((sm[:, 0] - truth) ** 2)) > np.sqrt(np.mean((filt[:, 0] - truth) ** 2))
    assert worse == 0


def test_leading_trailing_missing_stay_missing():
    xy = np.full((10, 2), np.nan)
    xy[3:7] = 1.0
    out = smooth.kalman_smooth(make_traj("A", 0, xy))
    assert np.isnan(out.xy[:3]).all() and np.isnan(out.xy[7:]).all()
    assert not out.imputed.any()


def test_absence_remask():
    xy = np.ones((200, 2))
    xy[50:120] = np.nan
    tr = make_traj("A", 100, xy)
    out = smooth.kalman_smooth(tr, absences=[AbsenceInterval("A", 150, 220), AbsenceInterval("B", 0, 400)])
    assert np.isnan(out.xy[50:120]).all()
    assert not np.isnan(out.xy[:50]).any() and not np.isnan(out.xy[120:]).any()
    assert out.t0 == 100 and len(out) == 200


def test_all_missing():
    with pytest.raises(AllMissing):
        smooth.kalman_smooth(make_traj("A", 0, np.full((5, 2), np.nan)))


def test_smooth_all_matches_single_calls(use_numba):
    rng = np.random.default_rng(3)
    trajs = {}
    for i, t0 in enumerate((0, 13, 40)):
        xy = rng.normal(0, 1, (80 + 10 * i, 2))
        xy[rng.uniform(size=len(xy)) < 0.2] = np.nan
        xy[0] = xy[-1] = 0.5
        trajs[f"T{i}"] = make_traj(f"T{i}", t0, xy)
    absences = [AbsenceInterval("T1", 20, 30)]
    batch = smooth.smooth_all(trajs, absences=absences, use_numba=use_numba)
    for tag, tr in trajs.items():
        one = smooth.kalman_smooth(tr, absences=absences, use_numba=use_numba)
        np.testing.assert_array_equal(batch[tag].xy, one.xy)
        np.testing.assert_array_equal(batch[tag].imputed, one.imputed)


def test_backends_agree():
    rng = np.random.default_rng(11)
    z = rng.normal(0, 1, (500, 6))
    z[rng.uniform(size=z.shape) < 0.25] = np.nan
    a = smooth.run_kalman(z, use_numba=True)
    b = smooth.run_kalman(z, use_numba=False)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)


def test_deterministic():
    rng = np.random.default_rng(1)
    tr = make_traj("A", 0, rng.normal(0, 1, (100, 2)))
    a = smooth.kalman_smooth(tr)
    b = smooth.kalman_smooth(tr)
    assert a.xy.tobytes() == b.xy.tobytes()


# -- warm-up trim ------------------------------------------------------------

def test_trim_119():
    tr = make_traj("A", 1000, np.zeros((7200, 2)))
    out = smooth.trim_warmup(tr, 119)
    assert len(out) == 7081 and out.t0 == 1119


def test_trim_zero_is_identity():
    tr = make_traj("A", 5, np.arange(20.0).reshape(10, 2))
    out = smooth.trim_warmup(tr, 0)
    assert out.t0 == 5 and np.array_equal(out.xy, tr.xy)


@pytest.mark.parametrize("warmup", [10, 11, 500])
def test_trim_everything(warmup):
    with pytest.raises(EmptyResult):
        smooth.trim_warmup(make_traj("A", 0, np.zeros((10, 2))), warmup)


def test_trim_relative_to_origin():
    tr = make_traj("A", 50, np.zeros((100, 2)))
    out = smooth.trim_warmup(tr, 119, origin=0)
    assert out.t0 == 119 and out.end == 150


@pytest.mark.parametrize("bad", [dict(sigma_meas=0), dict(sigma_accel=-1), dict(dt=0)])
def test_params_positive(bad):
    with pytest.raises(ValueError):
        KalmanParams(**bad)
