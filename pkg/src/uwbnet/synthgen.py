"""Synthetic gatherings with planted groups: the end-to-end ground truth.

Participants belong to groups whose centroids follow piecewise-linear
waypoints. Each participant keeps a fixed offset from its group centroid;
membership changes (move/split/merge events) make the affected members walk
to their new group over ``transit`` seconds.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .community import Partition, adjusted_rand_index
from .errors import InvalidScenario, WindowMismatch
from .trace import RawSampleSet


@dataclass
class Group:
    name: str
    waypoints: list  # [[t, x, y], ...]
    members: list = field(default_factory=list)


@dataclass
class Event:
    time: float
    kind: str  # move | split | merge
    args: dict = field(default_factory=dict)


@dataclass
class Scenario:
    room: tuple = (15.0, 7.8)
    n_participants: int = 26
    duration: int = 7200
    sample_rate: float = 2.0
    groups: list = field(default_factory=list)
    intra_radius: float = 0.4
    events: list = field(default_factory=list)
    noise_sigma: float = 0.3
    dropout_prob: float = 0.02
    absences: list = field(default_factory=list)  # [[tag, start, end], ...]
    seed: int = 0
    jitter: float = 0.05
    transit: float = 20.0
    height: float = 1.3

    @property
    def tags(self):
        return participant_ids(self.n_participants)

    def to_dict(self):
        d = asdict(self)
        d["room"] = list(self.room)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["groups"] = [Group(**g) for g in d.get("groups", [])]
        d["events"] = [Event(**e) for e in d.get("events", [])]
        if "room" in d:
            d["room"] = tuple(d["room"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidScenario(f"unknown scenario fields {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def participant_ids(n):
    width = max(2, len(str(n)))
    return [f"T{i + 1:0{width}d}" for i in range(n)]


def default_scenario(seed=0):
    """26 participants in four groups; group A sheds three members into a new
    group at 1800 s and group D merges into C at 4800 s."""
    tags = participant_ids(26)
    groups = [
        Group("A", [[0, 3.0, 2.0]], tags[0:7]),
        Group("B", [[0, 3.0, 5.8]], tags[7:14]),
        Group("C", [[0, 11.5, 2.0]], tags[14:20]),
        Group("D", [[0, 11.5, 5.8]], tags[20:26]),
        Group("E", [[0, 7.2, 4.0]], []),
    ]
    events = [
        Event(1800, "split", {"group": "A", "into": "E", "members": tags[4:7]}),
        Event(4800, "merge", {"group": "D", "into": "C"}),
    ]
    return Scenario(groups=groups, events=events, absences=[[tags[9], 2400, 3000]], seed=seed)


def random_scenario(seed, n_participants=12, duration=1800, n_groups=3, n_events=3):
    """Small randomized scenario (random group layout and membership events)."""
    rng = np.random.default_rng([int(seed), 7919])
    tags = participant_ids(n_participants)
    room = (15.0, 7.8)
    # group centroids on a coarse grid so groups stay apart
    slots = [(x, y) for x in (2.5, 7.5, 12.5) for y in (2.0, 5.8)]
    picks = rng.choice(len(slots), size=n_groups + 1, replace=False)
    centers = [slots[i] for i in picks]
    assign = rng.integers(0, n_groups, size=n_participants)
    assign[:n_groups] = np.arange(n_groups)
    groups = [
        Group(f"G{g}", [[0, *centers[g]]], [t for t, a in zip(tags, assign) if a == g])
        for g in range(n_groups)
    ]
    groups.append(Group("X", [[0, *centers[n_groups]]], []))
    names = [g.name for g in groups]
    events = []
    times = np.sort(rng.choice(np.arange(300, duration, 300), size=min(n_events, duration // 300 - 1), replace=False))
    for t in times:
        kind = rng.choice(["move", "merge", "split"])
        if kind == "move":
            events.append(Event(int(t), "move", {"tag": str(rng.choice(tags)), "to": str(rng.choice(names))}))
        elif kind == "merge":
            a, b = rng.choice(names, size=2, replace=False)
            events.append(Event(int(t), "merge", {"group": str(a), "into": str(b)}))
        else:
            members = [str(m) for m in rng.choice(tags, size=2, replace=False)]
            events.append(Event(int(t), "split", {"group": str(rng.choice(names)), "into": "X", "members": members}))
    absences = []
    if duration >= 900:
        tag = str(rng.choice(tags))
        start = int(rng.integers(1, duration // 300 - 1)) * 300
        absences.append([tag, start, start + 300])
    return Scenario(room=room, n_participants=n_participants, duration=duration, groups=groups,
                    events=events, absences=absences, seed=int(seed))


# -- validation and membership -----------------------------------------------

def validate(sc):
    W, H = sc.room
    tags = sc.tags
    names = [g.name for g in sc.groups]
    if len(set(names)) != len(names):
        raise InvalidScenario("duplicate group names")
    seen = []
    for g in sc.groups:
        if not g.waypoints:
            raise InvalidScenario(f"group {g.name} has no waypoints")
        for wp in g.waypoints:
            if len(wp) != 3:
                raise InvalidScenario(f"waypoint {wp} is not [t, x, y]")
            _, x, y = wp
            if not (0 <= x <= W and 0 <= y <= H):
                raise InvalidScenario(f"waypoint {wp} of group {g.name} is outside the room")
        seen.extend(g.members)
    if sorted(seen) != sorted(tags):
        raise InvalidScenario("initial group members must partition the participants")
    for e in sc.events:
        a = e.args
        if e.kind == "move":
            if a.get("tag") not in tags or a.get("to") not in names:
                raise InvalidScenario(f"move event references unknown tag or group: {a}")
        elif e.kind in ("split", "merge"):
            if a.get("group") not in names or a.get("into") not in names:
                raise InvalidScenario(f"{e.kind} event references unknown group: {a}")
            if e.kind == "split" and not set(a.get("members", [])) <= set(tags):
                raise InvalidScenario(f"split event references unknown members: {a}")
        else:
            raise InvalidScenario(f"unknown event kind {e.kind!r}")
    by_tag = {}
    for tag, start, end in sc.absences:
        if tag not in tags or not start < end:
            raise InvalidScenario(f"bad absence {tag} {start}..{end}")
        by_tag.setdefault(tag, []).append((start, end))
    for spans in by_tag.values():
        spans.sort()
        for (s0, e0), (s1, _) in zip(spans, spans[1:]):
            if s1 < e0:
                raise InvalidScenario("overlapping absences")
    if not (sc.sample_rate > 0 and sc.duration > 0 and 0 <= sc.dropout_prob < 1):
        raise InvalidScenario("bad sampling parameters")
    if sc.noise_sigma < 0 or sc.intra_radius < 0 or sc.jitter < 0:
        raise InvalidScenario("negative noise or radius")


def membership_changes(sc):
    """Per tag, the sorted list of ``(time, group index)`` assignments."""
    names = [g.name for g in sc.groups]
    current = {}
    for gi, g in enumerate(sc.groups):
        for m in g.members:
            current[m] = gi
    changes = {t: [(-np.inf, current[t])] for t in sc.tags}
    for e in sorted(sc.events, key=lambda e: e.time):
        a = e.args
        if e.kind == "move":
            moved = {a["tag"]: names.index(a["to"])}
        elif e.kind == "split":
            src = names.index(a["group"])
            moved = {m: names.index(a["into"]) for m in a["members"] if current[m] == src}
        else:
            src = names.index(a["group"])
            moved = {m: names.index(a["into"]) for m, g in current.items() if g == src}
        for m, g in moved.items():
            if current[m] != g:
                current[m] = g
                changes[m].append((float(e.time), g))
    return changes


def _centroid(group, t):
    wp = np.asarray(sorted(group.waypoints), dtype=float)
    return np.interp(t, wp[:, 0], wp[:, 1]), np.interp(t, wp[:, 0], wp[:, 2])


def _true_positions(sc, changes, tag, offset, t):
    x = np.empty(len(t))
    y = np.empty(len(t))
    hist = changes[tag]
    for i, (t_start, g) in enumerate(hist):
        t_end = hist[i + 1][0] if i + 1 < len(hist) else np.inf
        sel = (t >= t_start) & (t < t_end)
        if not sel.any():
            continue
        cx, cy = _centroid(sc.groups[g], t[sel])
        if i > 0 and sc.transit > 0:
            px, py = _centroid(sc.groups[hist[i - 1][1]], t[sel])
            w = np.clip((t[sel] - t_start) / sc.transit, 0.0, 1.0)
            cx = px + (cx - px) * w
            cy = py + (cy - py) * w
        x[sel] = cx + offset[0]
        y[sel] = cy + offset[1]
    return x, y


@dataclass
class GroundTruth:
    tags: list
    group_names: list
    per_second: np.ndarray  # (duration, N) group index, -1 = absent

    def window_groups(self, start, end):
        """Majority true group index of every tag present in ``[start, end)``."""
        block = self.per_second[max(start, 0):max(min(end, len(self.per_second)), 0)]
        out = {}
        for i, tag in enumerate(self.tags):
            col = block[:, i]
            col = col[col >= 0]
            if len(col):
                out[tag] = int(np.bincount(col).argmax())
        return out

    def window_partition(self, start, end):
        return Partition(self.window_groups(start, end))

    def window_partitions(self, length=300, start=0):
        out = []
        s = start
        while s < len(self.per_second):
            out.append(self.window_partition(s, s + length))
            s += length
        return out


def generate(sc):
    """Sample a scenario. Returns ``(RawSampleSet, GroundTruth)``."""
    validate(sc)
    W, H = sc.room
    tags = sc.tags
    changes = membership_changes(sc)
    seq = np.random.SeedSequence(int(sc.seed))
    layout_rng = np.random.default_rng(seq.spawn(1)[0])
    ang = layout_rng.uniform(0, 2 * np.pi, len(tags))
    rad = sc.intra_radius * np.sqrt(layout_rng.uniform(0, 1, len(tags)))
    offsets = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    absent = {}
    for tag, s, e in sc.absences:
        absent.setdefault(tag, []).append((s, e))
    n_per_tag = int(round(sc.duration * sc.sample_rate))
    parts_t, parts_tag, parts_x, parts_y, parts_z = [], [], [], [], []
    truth = np.full((int(sc.duration), len(tags)), -1, dtype=np.int64)
    seconds = np.arange(int(sc.duration)) + 0.5
    for i, (tag, sub) in enumerate(zip(tags, seq.spawn(len(tags)))):
        rng = np.random.default_rng(sub)
        phase = rng.uniform(0, 1.0 / sc.sample_rate)
        t = phase + np.arange(n_per_tag) / sc.sample_rate
        tx, ty = _true_positions(sc, changes, tag, offsets[i], t)
        jx = rng.uniform(-sc.jitter, sc.jitter, len(t)) if sc.jitter else 0.0
        jy = rng.uniform(-sc.jitter, sc.jitter, len(t)) if sc.jitter else 0.0
        mx = np.clip(tx + jx + rng.normal(0, sc.noise_sigma, len(t)), 0.0, W)
        my = np.clip(ty + jy + rng.normal(0, sc.noise_sigma, len(t)), 0.0, H)
        mz = sc.height + rng.normal(0, sc.noise_sigma, len(t))
        keep = rng.uniform(0, 1, len(t)) >= sc.dropout_prob
        # per-second truth uses group membership at mid-second
        hist = changes[tag]
        times = np.array([h[0] for h in hist])
        truth[:, i] = np.array([h[1] for h in hist])[np.searchsorted(times, seconds, side="right") - 1]
        for s, e in absent.get(tag, ()):
            keep &= ~((t >= s) & (t < e))
            truth[max(int(s), 0):max(int(e), 0), i] = -1
        parts_t.append(t[keep])
        parts_tag.append(np.full(keep.sum(), tag))
        parts_x.append(mx[keep])
        parts_y.append(my[keep])
        parts_z.append(mz[keep])
    t = np.concatenate(parts_t)
    tag_arr = np.concatenate(parts_tag)
    order = np.lexsort((tag_arr, t))
    raw = RawSampleSet(
        t[order], tag_arr[order], np.concatenate(parts_x)[order],
        np.concatenate(parts_y)[order], np.concatenate(parts_z)[order],
    )
    return raw, GroundTruth(tags, [g.name for g in sc.groups], truth)


def true_positions(sc, tag, t):
    """Noise-free position of ``tag`` at times ``t`` (jitter excluded)."""
    validate(sc)
    seq = np.random.SeedSequence(int(sc.seed))
    layout_rng = np.random.default_rng(seq.spawn(1)[0])
    n = sc.n_participants
    ang = layout_rng.uniform(0, 2 * np.pi, n)
    rad = sc.intra_radius * np.sqrt(layout_rng.uniform(0, 1, n))
    i = sc.tags.index(tag)
    offset = (rad[i] * np.cos(ang[i]), rad[i] * np.sin(ang[i]))
    return _true_positions(sc, membership_changes(sc), tag, offset, np.asarray(t, dtype=float))


def write_ground_truth(truth, stream, window=300):
    stream.write("window,tag,true_group\n")
    for w, start in enumerate(range(0, len(truth.per_second), window)):
        groups = truth.window_groups(start, start + window)
        for tag in sorted(groups):
            stream.write(f"{w},{tag},{truth.group_names[groups[tag]]}\n")


def read_ground_truth(stream):
    """Window partitions from a ground-truth CSV, as ``{window: Partition}``."""
    reader = csv.reader(stream)
    next(reader, None)
    rows = {}
    for r in reader:
        if r:
            rows.setdefault(int(r[0]), {})[r[1]] = r[2]
    return {w: Partition(a) for w, a in sorted(rows.items())}


@dataclass
class RecoveryReport:
    ari: list
    mean: float
    min: float


def evaluate_recovery(truth, timeline):
    """Per-window ARI between planted and detected partitions.

    Participants missing from either side of a window are left out of that
    window's comparison.
    """
    aris = []
    for win, part in zip(timeline.windows, timeline.partitions):
        if win.start < 0 or win.start >= len(truth.per_second):
            raise WindowMismatch(f"window {win.index} is outside the ground-truth span")
        true = truth.window_partition(win.start, win.end)
        common = sorted(set(true.nodes) & set(part.nodes))
        aris.append(adjusted_rand_index(true.restrict(common), part.restrict(common)))
    if not aris:
        raise WindowMismatch("timeline has no windows")
    return RecoveryReport(aris, float(np.mean(aris)), float(np.min(aris)))
