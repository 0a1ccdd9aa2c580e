"""Fixed-length windows: per-window networks, communities, flows, tracking."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .community import Partition, detect_communities
from .errors import OutOfRange, UnknownTag
from .netgraph import WeightedGraph


@dataclass(frozen=True)
class Window:
    index: int
    start: int
    end: int
    partial: bool = False

    @property
    def length(self):
        return self.end - self.start


def make_windows(start, end, length=300):
    """Tile ``[start, end)`` with windows; a short final window is marked partial."""
    if length <= 0:
        raise ValueError("window length must be positive")
    out = []
    s = int(start)
    while s < end:
        e = min(s + length, int(end))
        out.append(Window(len(out), s, e, partial=(e - s) < length))
        s = e
    return out


def _window_graphs(table, counts, windows, k, min_weight):
    graphs = []
    for w, win in enumerate(windows):
        lo, hi = win.start - table.start, win.end - table.start
        present = table.present[lo:hi].any(axis=0)
        nodes = [t for t, ok in zip(table.tags, present) if ok]
        edges = {}
        for p, pair in enumerate(table.pairs):
            c = int(counts[w, p, k])
            if c > 0 and c >= min_weight:
                edges[pair] = c
        graphs.append(WeightedGraph(nodes, edges, {"window": win.index, "start": win.start, "end": win.end}))
    return graphs


def windowed_networks(table, th, window=300, min_weight=60, windows=None):
    """One pruned contact network per window of the table's timeline.

    Edge weights count contact seconds inside the window only; tags with no
    position anywhere in a window are left out of that window's node set.
    """
    return windowed_network_family(table, [th], window, min_weight, windows)[th]


def windowed_network_family(table, thresholds, window=300, min_weight=60, windows=None):
    """:func:`windowed_networks` for several thresholds from one counting pass."""
    if windows is None:
        windows = make_windows(table.start, table.end, window)
    if not windows:
        return {th: [] for th in thresholds}
    bounds = [w.start for w in windows] + [windows[-1].end]
    counts = table.window_counts(thresholds, bounds)
    out = {}
    for k, th in enumerate(thresholds):
        graphs = _window_graphs(table, counts, windows, k, min_weight)
        for g in graphs:
            g.meta["threshold"] = th
        out[th] = graphs
    return out


@dataclass
class CommunityTimeline:
    windows: list
    partitions: list
    participants: list
    origin: int = 0

    def sizes(self, w):
        return self.partitions[w].sizes()

    def present(self, w):
        return self.partitions[w].nodes


def window_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def community_timeline(graphs, seed=0, trials=10, windows=None, participants=None, origin=None, workers=1):
    """Detect communities in every window graph with a per-window seed."""
    if windows is None:
        windows = []
        for i, g in enumerate(graphs):
            m = g.meta
            windows.append(Window(m.get("window", i), m.get("start", i), m.get("end", i + 1)))
    seeds = [window_seed(seed, w.index) for w in windows]

    def run(i):
        return detect_communities(graphs[i], seed=seeds[i], trials=trials)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(graphs))))
    else:
        parts = [run(i) for i in range(len(graphs))]
    if participants is None:
        participants = sorted({n for g in graphs for n in g.nodes})
    if origin is None:
        origin = windows[0].start if windows else 0
    return CommunityTimeline(list(windows), parts, sorted(participants), origin)


@dataclass
class FlowSet:
    from_window: int
    flows: list  # (from community, to community, members)


def community_flows(timeline, w):
    """Member-count flows between communities of windows ``w`` and ``w+1``."""
    if w < 0 or w + 1 >= len(timeline.partitions):
        raise OutOfRange(f"no window pair ({w}, {w + 1})")
    a, b = timeline.partitions[w], timeline.partitions[w + 1]
    counts = {}
    for node, c in a.assignment.items():
        if node in b:
            key = (c, b[node])
            counts[key] = counts.get(key, 0) + 1
    return FlowSet(w, [(c, d, n) for (c, d), n in sorted(counts.items())])


def all_flows(timeline):
    return [community_flows(timeline, w) for w in range(len(timeline.partitions) - 1)]


def track_participant(timeline, tag):
    """``(window, community or None, size or None)`` for every window."""
    if tag not in timeline.participants:
        raise UnknownTag(tag)
    out = []
    for win, part in zip(timeline.windows, timeline.partitions):
        if tag in part:
            c = part[tag]
            out.append((win.index, c, part.sizes()[c]))
        else:
            out.append((win.index, None, None))
    return out


def write_tracking(timeline, rows, stream):
    stream.write("window,start,community,size\n")
    starts = {w.index: w.start - timeline.origin for w in timeline.windows}
    for w, c, size in rows:
        stream.write(f"{w},{starts[w]},{'' if c is None else c},{'' if size is None else size}\n")


# -- alluvial export ---------------------------------------------------------

def node_label(start, community):
    """Display label such as ``0s-1`` (communities counted from 1)."""
    return f"{start}s-{community + 1}"


def emit_alluvial(timeline, flowsets=None):
    """Alluvial document: one column per window, flows between columns."""
    if flowsets is None:
        flowsets = all_flows(timeline)
    windows = []
    for win, part in zip(timeline.windows, timeline.partitions):
        rel = win.start - timeline.origin
        comms = [
            {"community": c, "label": node_label(rel, c), "size": len(members), "members": members}
            for c, members in enumerate(part.modules())
        ]
        windows.append({
            "index": win.index,
            "start": rel,
            "end": win.end - timeline.origin,
            "partial": win.partial,
            "sizes": ", ".join(str(c["size"]) for c in comms),
            "communities": comms,
        })
    flows = [
        {"window": fs.from_window, "from": c, "to": d, "count": n}
        for fs in flowsets
        for c, d, n in fs.flows
    ]
    return {"origin": timeline.origin, "participants": timeline.participants, "windows": windows, "flows": flows}


def dumps_alluvial(doc):
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def timeline_from_alluvial(doc):
    origin = doc.get("origin", 0)
    windows, parts = [], []
    for w in doc["windows"]:
        windows.append(Window(w["index"], w["start"] + origin, w["end"] + origin, w.get("partial", False)))
        parts.append(Partition({m: c["community"] for c in w["communities"] for m in c["members"]}))
    return CommunityTimeline(windows, parts, doc.get("participants") or sorted({n for p in parts for n in p.nodes}), origin)


def alluvial_svg(doc, column_width=90, gap=40, unit=6, pad=8):
    """Static alluvial drawing: block height proportional to size, ribbon
    width to flow. Ordering is by community label, so output is stable."""
    cols = doc["windows"]
    tops = {}
    height = 0
    for w in cols:
        y = pad
        for c in w["communities"]:
            tops[(w["index"], c["community"])] = y
            y += c["size"] * unit + pad
        height = max(height, y)
    width = len(cols) * (column_width + gap) + pad
    block = column_width // 3
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height + 20}" font-family="sans-serif" font-size="9">']
    by_index = {w["index"]: i for i, w in enumerate(cols)}
    out_off, in_off = {}, {}
    for f in doc["flows"]:
        src = (f["window"], f["from"])
        i = by_index[f["window"]]
        dst = (cols[i + 1]["index"], f["to"])
        y0 = tops[src] + out_off.get(src, 0)
        y1 = tops[dst] + in_off.get(dst, 0)
        h = f["count"] * unit
        out_off[src] = out_off.get(src, 0) + h
        in_off[dst] = in_off.get(dst, 0) + h
        x0 = pad + i * (column_width + gap) + block
        x1 = pad + (i + 1) * (column_width + gap)
        mx = (x0 + x1) / 2
        out.append(
            f'<path d="M{x0},{y0} C{mx},{y0} {mx},{y1} {x1},{y1} L{x1},{y1 + h} '
            f'C{mx},{y1 + h} {mx},{y0 + h} {x0},{y0 + h} Z" fill="#8fb3d9" fill-opacity="0.55"/>'
        )
    for i, w in enumerate(cols):
        x = pad + i * (column_width + gap)
        for c in w["communities"]:
            y = tops[(w["index"], c["community"])]
            h = c["size"] * unit
            out.append(f'<rect x="{x}" y="{y}" width="{block}" height="{h}" fill="#34495e"/>')
            out.append(f'<text x="{x + block + 2}" y="{y + 9}">{c["label"]} ({c["size"]})</text>')
        out.append(f'<text x="{x}" y="{height + 14}">{w["start"]}s~</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_window_partitions(timeline, stream):
    """All window partitions as CSV ``window,start,tag,community``."""
    stream.write("window,start,tag,community\n")
    for win, part in zip(timeline.windows, timeline.partitions):
        for tag in part.nodes:
            stream.write(f"{win.index},{win.start - timeline.origin},{tag},{part[tag]}\n")


def read_window_partitions(stream):
    reader = csv.reader(stream)
    next(reader, None)
    rows = {}
    for r in reader:
        if r:
            rows.setdefault((int(r[0]), int(r[1])), {})[r[2]] = int(r[3])
    return {k: Partition(v) for k, v in sorted(rows.items())}
