"""Absence detection and constant-velocity Kalman / RTS smoothing."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import AllMissing, EmptyResult
from .trace import Trajectory, downsample_1hz


@dataclass(frozen=True)
class AbsenceInterval:
    tag: str
    start: int
    end: int  # exclusive

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty absence interval {self.start}..{self.end}")

    def __len__(self):
        return self.end - self.start


@dataclass(frozen=True)
class KalmanParams:
    sigma_meas: float = 0.25
    sigma_accel: float = 0.5
    dt: float = 1.0

    def __post_init__(self):
        for name in ("sigma_meas", "sigma_accel", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


# -- absences ----------------------------------------------------------------

def absences_from_trajectory(traj, gap_threshold=60):
    """Runs of Missing cells strictly longer than ``gap_threshold`` seconds."""
    if gap_threshold <= 0:
        raise ValueError("gap_threshold must be positive")
    miss = traj.missing.astype(np.int8)
    edges = np.diff(np.r_[0, miss, 0])
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [
        AbsenceInterval(traj.tag, traj.t0 + int(a), traj.t0 + int(b))
        for a, b in zip(starts, ends)
        if b - a > gap_threshold
    ]


def detect_absences(raw, tag, gap_threshold=60):
    """Absence intervals of ``tag`` from raw 1 Hz bucket occupancy."""
    if gap_threshold <= 0:
        raise ValueError("gap_threshold must be positive")
    traj = downsample_1hz(raw, tag)
    return absences_from_trajectory(traj, gap_threshold)


def write_absences(absences, stream):
    stream.write("tag,start,end\n")
    for a in sorted(absences, key=lambda a: (a.tag, a.start)):
        stream.write(f"{a.tag},{a.start},{a.end}\n")


def read_absences(stream):
    reader = csv.reader(stream)
    next(reader, None)
    return [AbsenceInterval(r[0], int(r[1]), int(r[2])) for r in reader if r]


# -- filter kernels ----------------------------------------------------------
#
# Each column of ``z`` is an independent 1-D series (one axis of one tag),
# NaN where unmeasured. ``first``/``last`` are the first and last measured
# rows of every column; nothing outside that span is estimated.

def _kalman_loops(z, first, last, r, q00, q01, q11, dt):
    n, m = z.shape
    filt = np.full((n, m), np.nan)
    smooth = np.full((n, m), np.nan)
    xf = np.zeros((n, 2))
    pf = np.zeros((n, 3))
    xp = np.zeros((n, 2))
    pp = np.zeros((n, 3))
    for j in range(m):
        a = first[j]
        b = last[j]
        if a < 0:
            continue
        xf[a, 0] = z[a, j]
        xf[a, 1] = 0.0
        pf[a, 0] = r
        pf[a, 1] = 0.0
        pf[a, 2] = 1.0
        for k in range(a + 1, b + 1):
            p00 = pf[k - 1, 0]
            p01 = pf[k - 1, 1]
            p11 = pf[k - 1, 2]
            x0 = xf[k - 1, 0] + dt * xf[k - 1, 1]
            x1 = xf[k - 1, 1]
            b00 = p00 + 2.0 * dt * p01 + dt * dt * p11 + q00
            b01 = p01 + dt * p11 + q01
            b11 = p11 + q11
            xp[k, 0] = x0
            xp[k, 1] = x1
            pp[k, 0] = b00
            pp[k, 1] = b01
            pp[k, 2] = b11
            zk = z[k, j]
            if zk == zk:
                s = b00 + r
                k0 = b00 / s
                k1 = b01 / s
                innov = zk - x0
                xf[k, 0] = x0 + k0 * innov
                xf[k, 1] = x1 + k1 * innov
                pf[k, 0] = (1.0 - k0) * b00
                pf[k, 1] = (1.0 - k0) * b01
                pf[k, 2] = b11 - k1 * b01
            else:
                xf[k, 0] = x0
                xf[k, 1] = x1
                pf[k, 0] = b00
                pf[k, 1] = b01
                pf[k, 2] = b11
        s0 = xf[b, 0]
        s1 = xf[b, 1]
        smooth[b, j] = s0
        filt[b, j] = s0
        for k in range(b - 1, a - 1, -1):
            p00 = pf[k, 0]
            p01 = pf[k, 1]
            p11 = pf[k, 2]
            # C = P_f F^T inv(P_pred[k+1])
            c00 = p00 + dt * p01
            c01 = p01
            c10 = p01 + dt * p11
            c11 = p11
            b00 = pp[k + 1, 0]
            b01 = pp[k + 1, 1]
            b11 = pp[k + 1, 2]
            det = b00 * b11 - b01 * b01
            i00 = b11 / det
            i01 = -b01 / det
            i11 = b00 / det
            g00 = c00 * i00 + c01 * i01
            g01 = c00 * i01 + c01 * i11
            g10 = c10 * i00 + c11 * i01
            g11 = c10 * i01 + c11 * i11
            d0 = s0 - xp[k + 1, 0]
            d1 = s1 - xp[k + 1, 1]
            s0 = xf[k, 0] + g00 * d0 + g01 * d1
            s1 = xf[k, 1] + g10 * d0 + g11 * d1
            smooth[k, j] = s0
            filt[k, j] = xf[k, 0]
    return filt, smooth


_kalman_numba = _accel.njit(_kalman_loops)


def _kalman_numpy(z, first, last, r, q00, q01, q11, dt):
    """Same recursion, vectorised across columns and looped over time."""
    n, m = z.shape
    filt = np.full((n, m), np.nan)
    smooth = np.full((n, m), np.nan)
    if n == 0 or m == 0:
        return filt, smooth
    xf = np.zeros((n, 2, m))
    pf = np.zeros((n, 3, m))
    xp = np.zeros((n, 2, m))
    pp = np.ones((n, 3, m))
    x0 = np.zeros(m)
    x1 = np.zeros(m)
    p00 = np.zeros(m)
    p01 = np.zeros(m)
    p11 = np.zeros(m)
    valid = first >= 0
    for k in range(n):
        zk = z[k]
        start = valid & (first == k)
        live = valid & (first < k) & (k <= last)
        # predict
        px0 = x0 + dt * x1
        px1 = x1
        b00 = p00 + 2.0 * dt * p01 + dt * dt * p11 + q00
        b01 = p01 + dt * p11 + q01
        b11 = p11 + q11
        s = b00 + r
        k0 = b00 / s
        k1 = b01 / s
        innov = zk - px0
        meas = live & ~np.isnan(zk)
        nx0 = np.where(meas, px0 + k0 * innov, px0)
        nx1 = np.where(meas, px1 + k1 * innov, px1)
        n00 = np.where(meas, (1.0 - k0) * b00, b00)
        n01 = np.where(meas, (1.0 - k0) * b01, b01)
        n11 = np.where(meas, b11 - k1 * b01, b11)
        x0 = np.where(live, nx0, np.where(start, zk, x0))
        x1 = np.where(live, nx1, np.where(start, 0.0, x1))
        p00 = np.where(live, n00, np.where(start, r, p00))
        p01 = np.where(live, n01, np.where(start, 0.0, p01))
        p11 = np.where(live, n11, np.where(start, 1.0, p11))
        xf[k, 0], xf[k, 1] = x0, x1
        pf[k, 0], pf[k, 1], pf[k, 2] = p00, p01, p11
        xp[k, 0] = np.where(live, px0, 0.0)
        xp[k, 1] = np.where(live, px1, 0.0)
        pp[k, 0] = np.where(live, b00, 1.0)
        pp[k, 1] = np.where(live, b01, 0.0)
        pp[k, 2] = np.where(live, b11, 1.0)
    s0 = np.zeros(m)
    s1 = np.zeros(m)
    for k in range(n - 1, -1, -1):
        at_end = valid & (k == last)
        inner = valid & (first <= k) & (k < last)
        if k + 1 < n:
            c00 = pf[k, 0] + dt * pf[k, 1]
            c01 = pf[k, 1]
            c10 = pf[k, 1] + dt * pf[k, 2]
            c11 = pf[k, 2]
            b00, b01, b11 = pp[k + 1]
            det = b00 * b11 - b01 * b01
            i00 = b11 / det
            i01 = -b01 / det
            i11 = b00 / det
            g00 = c00 * i00 + c01 * i01
            g01 = c00 * i01 + c01 * i11
            g10 = c10 * i00 + c11 * i01
            g11 = c10 * i01 + c11 * i11
            d0 = s0 - xp[k + 1, 0]
            d1 = s1 - xp[k + 1, 1]
            n0 = xf[k, 0] + g00 * d0 + g01 * d1
            n1 = xf[k, 1] + g10 * d0 + g11 * d1
        else:
            n0 = s0
            n1 = s1
        s0 = np.where(at_end, xf[k, 0], np.where(inner, n0, s0))
        s1 = np.where(at_end, xf[k, 1], np.where(inner, n1, s1))
        span = at_end | inner
        smooth[k] = np.where(span, s0, np.nan)
        filt[k] = np.where(span, xf[k, 0], np.nan)
    return filt, smooth


def _measured_span(z):
    ok = ~np.isnan(z)
    has = ok.any(axis=0)
    first = np.where(has, ok.argmax(axis=0), -1).astype(np.int64)
    last = np.where(has, len(z) - 1 - ok[::-1].argmax(axis=0), -1).astype(np.int64)
    return first, last


def run_kalman(z, params=KalmanParams(), use_numba=None):
    """Filter and RTS-smooth every column of ``z``.

    Returns ``(filtered, smoothed)`` position estimates, NaN outside each
    column's measured span.
    """
    z = np.ascontiguousarray(z, dtype=float)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    first, last = _measured_span(z)
    dt = float(params.dt)
    sa2 = params.sigma_accel ** 2
    q00 = sa2 * dt ** 4 / 4.0
    q01 = sa2 * dt ** 3 / 2.0
    q11 = sa2 * dt ** 2
    r = params.sigma_meas ** 2
    kernel = _accel.pick(_kalman_numba, _kalman_numpy, use_numba)
    return kernel(z, first, last, r, q00, q01, q11, dt)


def _mask_absences(xy, t0, absences):
    for a in absences:
        lo = max(a.start - t0, 0)
        hi = min(a.end - t0, len(xy))
        if lo < hi:
            xy[lo:hi] = np.nan


def kalman_smooth(traj, params=KalmanParams(), absences=(), use_numba=None):
    """Smooth and impute one trajectory; absence intervals are re-masked."""
    if len(traj) == 0 or traj.missing.all():
        raise AllMissing(traj.tag)
    _, sm = run_kalman(traj.xy, params, use_numba)
    _mask_absences(sm, traj.t0, [a for a in absences if a.tag == traj.tag])
    imputed = traj.missing & ~np.isnan(sm).any(axis=1)
    return Trajectory(traj.tag, traj.t0, sm, imputed)


def smooth_all(trajs, params=KalmanParams(), absences=(), use_numba=None):
    """Batch version of :func:`kalman_smooth` over a dict of trajectories.

    All tags share one kernel call on a common grid; results equal the
    per-tag calls column for column.
    """
    trajs = {k: v for k, v in sorted(trajs.items()) if len(v) and not v.missing.all()}
    if not trajs:
        return {}
    dims = {t.dims for t in trajs.values()}
    if len(dims) != 1:
        raise ValueError("mixed trajectory dimensionality")
    d = dims.pop()
    lo = min(t.t0 for t in trajs.values())
    hi = max(t.end for t in trajs.values())
    z = np.full((hi - lo, d * len(trajs)), np.nan)
    for i, tr in enumerate(trajs.values()):
        z[tr.t0 - lo:tr.end - lo, i * d:(i + 1) * d] = tr.xy
    _, sm = run_kalman(z, params, use_numba)
    by_tag = {}
    for a in absences:
        by_tag.setdefault(a.tag, []).append(a)
    out = {}
    for i, (tag, tr) in enumerate(trajs.items()):
        xy = sm[tr.t0 - lo:tr.end - lo, i * d:(i + 1) * d].copy()
        _mask_absences(xy, tr.t0, by_tag.get(tag, ()))
        out[tag] = Trajectory(tag, tr.t0, xy, tr.missing & ~np.isnan(xy).any(axis=1))
    return out


def trim_warmup(traj, warmup, origin=None):
    """Drop cells before ``origin + warmup`` (``origin`` defaults to ``t0``)."""
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    cut = (traj.t0 if origin is None else int(origin)) + int(warmup)
    if cut <= traj.t0:
        return traj
    if cut >= traj.end:
        raise EmptyResult(f"warmup removes all of {traj.tag}")
    i = cut - traj.t0
    return Trajectory(traj.tag, cut, traj.xy[i:].copy(), traj.imputed[i:].copy())
