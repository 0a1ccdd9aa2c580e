"""Raw positioning exports: parsing, anonymization and 1 Hz resampling."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedRecord, NoSamplesForTag

log = logging.getLogger(__name__)

RAW_COLUMNS = ("t", "tag", "x", "y", "z")


@dataclass
class RawSampleSet:
    """Timestamped tag measurements, in arrival order.

    ``z`` holds NaN where the export carried no height.
    """

    t: np.ndarray
    tag: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    skipped: int = 0

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.tag = np.asarray(self.tag, dtype=str) if len(self.tag) else np.array([], dtype="<U1")
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        n = len(self.t)
        if not all(len(a) == n for a in (self.tag, self.x, self.y, self.z)):
            raise ValueError("column lengths differ")

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.array([], dtype="<U1"), np.empty(0), np.empty(0), np.empty(0))

    def tags(self):
        return sorted(set(self.tag.tolist()))

    def select(self, mask):
        return RawSampleSet(self.t[mask], self.tag[mask], self.x[mask], self.y[mask], self.z[mask])

    def equals(self, other):
        return (
            np.array_equal(self.t, other.t)
            and self.tag.tolist() == other.tag.tolist()
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.z, other.z, equal_nan=True)
        )


@dataclass
class Trajectory:
    """Per-second positions of one tag on a gap-free integer grid.

    ``xy`` has shape ``(n, dims)``; a row of NaN is a Missing cell.
    ``imputed`` flags cells filled by the smoother rather than measured.
    """

    tag: str
    t0: int
    xy: np.ndarray
    imputed: np.ndarray = field(default=None)

    def __post_init__(self):
        self.t0 = int(self.t0)
        self.xy = np.asarray(self.xy, dtype=float)
        if self.xy.ndim == 1:
            self.xy = self.xy.reshape(-1, 1)
        if self.imputed is None:
            self.imputed = np.zeros(len(self.xy), dtype=bool)
        else:
            self.imputed = np.asarray(self.imputed, dtype=bool)

    def __len__(self):
        return len(self.xy)

    @property
    def end(self):
        """One past the last second on the grid."""
        return self.t0 + len(self.xy)

    @property
    def seconds(self):
        return np.arange(self.t0, self.end)

    @property
    def dims(self):
        return self.xy.shape[1]

    @property
    def missing(self):
        return np.isnan(self.xy).any(axis=1)

    def at(self, second):
        """Position at ``second`` or None when Missing / off-grid."""
        i = second - self.t0
        if i < 0 or i >= len(self.xy) or self.missing[i]:
            return None
        return tuple(self.xy[i])


# -- parsing -----------------------------------------------------------------

def _finite(text, line_no, name, allow_empty=False):
    text = text.strip() if isinstance(text, str) else text
    if allow_empty and (text is None or text == ""):
        return math.nan
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise MalformedRecord(line_no, f"unparseable {name}: {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRecord(line_no, f"non-finite {name}")
    return value


def _check_tag(tag, line_no):
    if not isinstance(tag, str):
        raise MalformedRecord(line_no, "tag is not text")
    tag = tag.strip()
    if not tag or any(c.isspace() for c in tag):
        raise MalformedRecord(line_no, f"bad tag {tag!r}")
    return tag


def _csv_record(fields, line_no):
    if len(fields) not in (4, 5):
        raise MalformedRecord(line_no, f"expected 5 fields, got {len(fields)}")
    t = _finite(fields[0], line_no, "t")
    tag = _check_tag(fields[1], line_no)
    x = _finite(fields[2], line_no, "x")
    y = _finite(fields[3], line_no, "y")
    z = _finite(fields[4], line_no, "z", allow_empty=True) if len(fields) == 5 else math.nan
    return t, tag, x, y, z


def _jsonl_record(line, line_no):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        raise MalformedRecord(line_no, "invalid JSON") from None
    if not isinstance(obj, dict) or not {"t", "tag", "x", "y"} <= obj.keys():
        raise MalformedRecord(line_no, "missing keys")
    if set(obj) - set(RAW_COLUMNS):
        raise MalformedRecord(line_no, "unexpected keys")
    z = obj.get("z")
    return (
        _finite(obj["t"], line_no, "t"),
        _check_tag(obj["tag"], line_no),
        _finite(obj["x"], line_no, "x"),
        _finite(obj["y"], line_no, "y"),
        math.nan if z is None or z == "" else _finite(z, line_no, "z"),
    )


def _text_lines(stream):
    if isinstance(stream, (bytes, bytearray)):
        stream = stream.decode("utf-8")
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw


def _columns(lines, width):
    """Split comma-separated ``lines`` into ``width`` column lists; None when
    any line has a different field count."""
    if not lines:
        return [[] for _ in range(width)]
    if any(ln.count(",") != width - 1 for ln in lines):
        return None
    flat = ",".join(lines).split(",")
    return [flat[k::width] for k in range(width)]


def _optional_floats(values):
    """Floats with NaN for empty fields, plus the mask of empty fields."""
    blank = np.array([v == "" for v in values], dtype=bool)
    return np.array([v or "nan" for v in values], dtype=float), blank


def _parse_csv_fast(text):
    """Column-wise parse of a well-formed CSV export; None whenever any
    record needs the per-line path (quoting, bad fields, non-finite values)."""
    if '"' in text:
        return None
    lines = text.splitlines()
    if lines and lines[0].split(",", 1)[0].strip() == "t":
        lines = lines[1:]
    if not lines or not all(lines):
        return None
    cols = _columns(lines, 5)
    if cols is None:
        four = _columns(lines, 4)
        if four is not None:
            cols = four + [[""] * len(lines)]
        else:
            rows = [ln.split(",") for ln in lines]
            if any(len(r) not in (4, 5) for r in rows):
                return None
            cols = [list(c) for c in zip(*(r if len(r) == 5 else r + [""] for r in rows))]
    try:
        t, x, y = (np.array(cols[i], dtype=float) for i in (0, 2, 3))
        z, blank = _optional_floats([v.strip() for v in cols[4]])
    except ValueError:
        return None
    if not (np.isfinite(t).all() and np.isfinite(x).all() and np.isfinite(y).all()):
        return None
    if not np.isfinite(z[~blank]).all():
        return None
    names = {}
    for tag in set(cols[1]):
        clean = tag.strip()
        if not clean or any(c.isspace() for c in clean):
            return None
        names[tag] = clean
    tags = cols[1] if all(k == v for k, v in names.items()) else [names[v] for v in cols[1]]
    return RawSampleSet(t, np.array(tags), x, y, z)


def parse_raw(stream, format="csv", strict=True):
    """Parse a raw export from a text/byte stream (or a string).

    In strict mode the first bad record raises :class:`MalformedRecord`;
    otherwise it is skipped and counted in ``RawSampleSet.skipped``.
    A ``t,tag,...`` header line is optional for CSV.
    """
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {format!r}")
    if format == "csv":
        if isinstance(stream, (bytes, bytearray)):
            stream = stream.decode("utf-8")
        text = stream if isinstance(stream, str) else "".join(_text_lines(stream))
        fast = _parse_csv_fast(text)
        if fast is not None:
            log.info("parsed %d samples (0 skipped)", len(fast))
            return fast
        stream = text
    ts, tags, xs, ys, zs = [], [], [], [], []
    skipped = 0
    lines = _text_lines(stream)
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            if format == "csv":
                fields = next(csv.reader([line]))
                if line_no == 1 and fields and fields[0].strip() == "t":
                    continue
                rec = _csv_record(fields, line_no)
            else:
                rec = _jsonl_record(line, line_no)
        except MalformedRecord as err:
            if strict:
                raise
            skipped += 1
            log.warning("%s (skipped)", err)
            continue
        ts.append(rec[0])
        tags.append(rec[1])
        xs.append(rec[2])
        ys.append(rec[3])
        zs.append(rec[4])
    if not ts:
        out = RawSampleSet.empty()
    else:
        out = RawSampleSet(np.array(ts), np.array(tags), np.array(xs), np.array(ys), np.array(zs))
    out.skipped = skipped
    log.info("parsed %d samples (%d skipped)", len(out), skipped)
    return out


def read_raw(path, format=None, strict=True):
    if format is None:
        format = "jsonl" if str(path).endswith((".jsonl", ".ndjson")) else "csv"
    with open(path, encoding="utf-8") as fh:
        return parse_raw(fh, format=format, strict=strict)


def _fmt(v):
    return "" if math.isnan(v) else repr(float(v))


def serialize_raw(samples, format="csv"):
    """Inverse of :func:`parse_raw`; floats are written with ``repr`` so the
    round trip is exact."""
    buf = io.StringIO()
    if format == "csv":
        buf.write(",".join(RAW_COLUMNS) + "\n")
        for t, tag, x, y, z in zip(samples.t, samples.tag, samples.x, samples.y, samples.z):
            buf.write(f"{_fmt(t)},{tag},{_fmt(x)},{_fmt(y)},{_fmt(z)}\n")
    elif format == "jsonl":
        for t, tag, x, y, z in zip(samples.t, samples.tag, samples.x, samples.y, samples.z):
            rec = {"t": float(t), "tag": str(tag), "x": float(x), "y": float(y)}
            rec["z"] = None if math.isnan(z) else float(z)
            buf.write(json.dumps(rec) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}")
    return buf.getvalue()


def write_raw(samples, path, format=None):
    if format is None:
        format = "jsonl" if str(path).endswith((".jsonl", ".ndjson")) else "csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_raw(samples, format))


# -- anonymization -----------------------------------------------------------

def anonymize(samples, seed):
    """Rename every tag to ``P<k>`` using a seeded shuffle.

    Returns the renamed sample set and the ``{original: anonymized}`` mapping.
    """
    originals = samples.tags()
    order = np.random.default_rng(seed).permutation(len(originals))
    mapping = {orig: f"P{k + 1}" for orig, k in zip(originals, order)}
    renamed = np.array([mapping[t] for t in samples.tag.tolist()]) if len(samples) else samples.tag
    out = RawSampleSet(samples.t.copy(), renamed, samples.x.copy(), samples.y.copy(), samples.z.copy())
    return out, mapping


def write_mapping(mapping, stream):
    stream.write("original,anonymized\n")
    for orig in sorted(mapping):
        stream.write(f"{orig},{mapping[orig]}\n")


def read_mapping(stream):
    reader = csv.reader(stream)
    next(reader, None)
    return {row[0]: row[1] for row in reader if row}


# -- resampling --------------------------------------------------------------

def _sorted_view(samples):
    # full-key sort so bucket sums do not depend on record arrival order
    order = np.lexsort((samples.y, samples.x, samples.t, samples.tag))
    return order


def _bucket_means(sec, coords):
    """Mean per integer second of sorted ``sec``; returns (seconds, means)."""
    starts = np.flatnonzero(np.r_[True, sec[1:] != sec[:-1]])
    counts = np.diff(np.r_[starts, len(sec)])
    sums = np.add.reduceat(coords, starts, axis=0)
    lo = np.minimum.reduceat(coords, starts, axis=0)
    hi = np.maximum.reduceat(coords, starts, axis=0)
    means = np.clip(sums / counts[:, None], lo, hi)
    return sec[starts], means


def _coords(samples, idx, dims):
    cols = [samples.x[idx], samples.y[idx]]
    if dims == 3:
        cols.append(samples.z[idx])
    return np.column_stack(cols)


def _grid(tag, secs, means, dims):
    s0 = int(secs[0])
    xy = np.full((int(secs[-1]) - s0 + 1, dims), np.nan)
    xy[secs - s0] = means
    return Trajectory(tag, s0, xy)


def downsample_1hz(samples, tag, dims=2):
    """Average each second's samples of ``tag`` onto a 1 Hz grid.

    A sample at time ``t`` belongs to second ``floor(t)``. Seconds with no
    sample inside ``[first, last]`` become Missing (NaN rows).
    """
    mask = samples.tag == tag
    if not mask.any():
        raise NoSamplesForTag(tag)
    sub = samples.select(mask)
    order = _sorted_view(sub)
    sec = np.floor(sub.t[order]).astype(np.int64)
    secs, means = _bucket_means(sec, _coords(sub, order, dims))
    return _grid(tag, secs, means, dims)


def downsample_all(samples, dims=2):
    """:func:`downsample_1hz` for every tag, keyed and ordered by tag id."""
    if len(samples) == 0:
        return {}
    order = _sorted_view(samples)
    tags = samples.tag[order]
    sec = np.floor(samples.t[order]).astype(np.int64)
    coords = _coords(samples, order, dims)
    cuts = np.flatnonzero(np.r_[True, tags[1:] != tags[:-1], True])
    out = {}
    for a, b in zip(cuts[:-1], cuts[1:]):
        secs, means = _bucket_means(sec[a:b], coords[a:b])
        out[str(tags[a])] = _grid(str(tags[a]), secs, means, dims)
    return out


# -- trajectory files --------------------------------------------------------

def _cells(col):
    return ["" if v != v else repr(v) for v in col.tolist()]


def write_trajectories(trajs, stream, with_imputed=False):
    """Write trajectories as ``t,tag,x,y,z[,imputed]``; Missing cells are rows
    with empty coordinates so the grid survives a round trip."""
    header = list(RAW_COLUMNS) + (["imputed"] if with_imputed else [])
    stream.write(",".join(header) + "\n")
    for tag in sorted(trajs):
        tr = trajs[tag]
        n = len(tr)
        cols = [map(str, range(tr.t0, tr.end)), [tag] * n, _cells(tr.xy[:, 0]), _cells(tr.xy[:, 1])]
        cols.append(_cells(tr.xy[:, 2]) if tr.dims == 3 else [""] * n)
        if with_imputed:
            cols.append(np.where(tr.imputed, "1", "0").tolist())
        stream.write("".join(",".join(r) + "\n" for r in zip(*cols)))


def read_trajectories(stream):
    text = stream.read() if hasattr(stream, "read") else stream
    lines = text.splitlines()
    if not lines:
        return {}
    with_imputed = "imputed" in lines[0].split(",")
    width = 6 if with_imputed else 5
    body = [ln for ln in lines[1:] if ln]
    if not body:
        return {}
    cols = _columns(body, width)
    try:
        if cols is None:
            raise ValueError
        sec = np.array(cols[0], dtype=np.int64)
        vals = np.column_stack([_optional_floats(cols[k])[0] for k in (2, 3, 4)])
        imp = np.array(cols[5]) == "1" if with_imputed else np.zeros(len(body), dtype=bool)
    except ValueError:
        bad = next((i for i, ln in enumerate(body) if ln.count(",") != width - 1), 0)
        raise MalformedRecord(2 + bad, "bad trajectory row") from None
    tags = np.array(cols[1])
    out = {}
    for tag in np.unique(tags).tolist():
        sel = np.flatnonzero(tags == tag)
        s = sec[sel]
        dims = 3 if not np.isnan(vals[sel, 2]).all() else 2
        t0 = int(s.min())
        xy = np.full((int(s.max()) - t0 + 1, dims), np.nan)
        imputed = np.zeros(len(xy), dtype=bool)
        xy[s - t0] = vals[sel, :dims]
        imputed[s - t0] = imp[sel]
        out[tag] = Trajectory(tag, t0, xy, imputed)
    return out
