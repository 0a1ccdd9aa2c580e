"""Stage functions and the end-to-end ``run``.

Each stage reads declared input files and writes into its own directory, so
``run`` is exactly the chain of the individual CLI subcommands.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import community, contact, dynamic, netgraph, smooth, trace
from .errors import ConfigError, EmptyResult, UwbNetError

log = logging.getLogger(__name__)

STAGES = ("ingest", "smooth", "contacts", "network", "communities", "dynamic")


@dataclass
class PipelineConfig:
    input: str = ""
    input_format: str = ""  # csv | jsonl; empty = infer from suffix
    strict: bool = True
    anonymize_seed: int | None = None
    dims: int = 2
    warmup: int = 0
    gap_threshold: int = 60
    sigma_meas: float = 0.25
    sigma_accel: float = 0.5
    thresholds: list = field(default_factory=lambda: list(contact.DEFAULT_THRESHOLDS))
    min_weight: int = 60
    metrics_pruned: bool = True
    window: int = 300
    window_min_weight: int = 60
    community_seed: int = 0
    trials: int = 10
    bin_width: float = 0.25
    report_pairs: int = 3
    pair_seed: int = 0
    track: list = field(default_factory=list)
    svg: bool = False
    workers: int = 1
    output: str = "out"

    def validate(self):
        th = [float(t) for t in self.thresholds]
        if not th or any(t <= 0 for t in th) or any(b <= a for a, b in zip(th, th[1:])):
            raise ConfigError(f"thresholds must be positive and strictly increasing: {self.thresholds}")
        self.thresholds = th
        if self.dims not in (2, 3):
            raise ConfigError("dims must be 2 or 3")
        if self.window <= 0 or self.gap_threshold <= 0:
            raise ConfigError("window and gap_threshold must be positive")
        if self.warmup < 0 or self.min_weight < 0 or self.window_min_weight < 0:
            raise ConfigError("warmup and min weights must be >= 0")
        if self.input_format not in ("", "csv", "jsonl"):
            raise ConfigError(f"unknown input format {self.input_format!r}")
        if not (self.sigma_meas > 0 and self.sigma_accel > 0 and self.bin_width > 0):
            raise ConfigError("noise parameters and bin width must be positive")
        return self

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**d).validate()

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as err:
                raise ConfigError(f"config is not valid JSON: {err}") from None

    def kalman(self):
        return smooth.KalmanParams(self.sigma_meas, self.sigma_accel)

    def canonical(self):
        """Config fields that determine the outputs (output dir excluded)."""
        d = asdict(self)
        d.pop("output")
        d.pop("workers")
        return d

    def digest(self):
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def th_name(th):
    return f"{float(th):g}"


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _writer(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def _read_trajs(path):
    with open(path, encoding="utf-8") as fh:
        return trace.read_trajectories(fh)


# -- stages ------------------------------------------------------------------

def ingest(cfg, input_path, out_dir):
    """Raw export -> (optional anonymization) -> 1 Hz trajectories."""
    out_dir = Path(out_dir)
    raw = trace.read_raw(input_path, format=cfg.input_format or None, strict=cfg.strict)
    if cfg.anonymize_seed is not None:
        raw, mapping = trace.anonymize(raw, cfg.anonymize_seed)
        with _writer(out_dir / "mapping.csv") as fh:
            trace.write_mapping(mapping, fh)
    trajs = trace.downsample_all(raw, dims=cfg.dims)
    with _writer(out_dir / "trajectories.csv") as fh:
        trace.write_trajectories(trajs, fh)
    log.info("ingest: %d samples, %d tags, %d skipped", len(raw), len(trajs), raw.skipped)
    return out_dir / "trajectories.csv"


def smooth_stage(cfg, traj_path, out_dir):
    """Absences from 1 Hz occupancy, Kalman/RTS smoothing, warm-up trim."""
    out_dir = Path(out_dir)
    trajs = _read_trajs(traj_path)
    absences = [a for tr in trajs.values() for a in smooth.absences_from_trajectory(tr, cfg.gap_threshold)]
    smoothed = smooth.smooth_all(trajs, cfg.kalman(), absences)
    if cfg.warmup and smoothed:
        origin = min(t.t0 for t in smoothed.values())
        kept = {}
        for tag, tr in smoothed.items():
            try:
                kept[tag] = smooth.trim_warmup(tr, cfg.warmup, origin=origin)
            except EmptyResult:
                log.warning("smooth: %s lies entirely inside the warm-up and is dropped", tag)
        smoothed = kept
    with _writer(out_dir / "smoothed.csv") as fh:
        trace.write_trajectories(smoothed, fh, with_imputed=True)
    with _writer(out_dir / "absences.csv") as fh:
        smooth.write_absences(absences, fh)
    return out_dir / "smoothed.csv"


def _table(path):
    trajs = _read_trajs(path)
    start = min((t.t0 for t in trajs.values()), default=0)
    end = max((t.end for t in trajs.values()), default=0)
    return contact.ContactTable(trajs, start, end)


def selected_pairs(pairs, count, seed):
    if count <= 0 or not pairs:
        return []
    rng = np.random.default_rng(seed)
    idx = sorted(rng.choice(len(pairs), size=min(count, len(pairs)), replace=False).tolist())
    return [pairs[i] for i in idx]


def contacts_stage(cfg, smoothed_path, out_dir, table=None):
    """Pair totals per threshold, distance histograms and pair series.

    ``table`` may carry the already-built table of ``smoothed_path``.
    """
    out_dir = Path(out_dir)
    if table is None:
        table = _table(smoothed_path)
    if table.n_seconds:
        counts = table.window_counts(cfg.thresholds, [table.start, table.end])[0]
    else:
        counts = np.zeros((len(table.pairs), len(cfg.thresholds)), dtype=np.int64)
    for k, th in enumerate(cfg.thresholds):
        totals = {p: int(c) for p, c in zip(table.pairs, counts[:, k])}
        with _writer(out_dir / f"pairs_th{th_name(th)}.csv") as fh:
            contact.write_pair_totals(totals, fh)
    with _writer(out_dir / "histogram_all.csv") as fh:
        contact.write_histogram(table.histogram(cfg.bin_width), fh)
    for a, b in selected_pairs(table.pairs, cfg.report_pairs, cfg.pair_seed):
        series = table.series((a, b))
        _write(out_dir / "pairs" / f"series_{a}_{b}.csv", contact.pair_series_export(series))
        with _writer(out_dir / "pairs" / f"histogram_{a}_{b}.csv") as fh:
            contact.write_histogram(contact.distance_histogram(series, cfg.bin_width), fh)
    return out_dir


def _pair_files(contacts_dir):
    found = []
    for p in sorted(Path(contacts_dir).glob("pairs_th*.csv")):
        found.append((float(p.stem[len("pairs_th"):]), p))
    return sorted(found)


def network_stage(cfg, contacts_dir, out_dir):
    """Full-period pruned networks per threshold and their metrics."""
    out_dir = Path(out_dir)
    rows = []
    for th, path in _pair_files(contacts_dir):
        with open(path, encoding="utf-8") as fh:
            totals = contact.read_pair_totals(fh)
        nodes = {n for pair in totals for n in pair}
        g = netgraph.build_network(totals, nodes, cfg.min_weight)
        g.meta["threshold"] = th
        _write(out_dir / f"graph_th{th_name(th)}.graphml", netgraph.to_graphml(g))
        _write(out_dir / f"graph_th{th_name(th)}.dot", netgraph.to_dot(g))
        _write(out_dir / f"edges_th{th_name(th)}.csv", netgraph.to_edge_csv(g))
        mg = g if cfg.metrics_pruned else netgraph.build_network(totals, nodes, 0)
        rows.append((th, netgraph.metrics(mg)))
    with _writer(out_dir / "metrics.csv") as fh:
        netgraph.write_metrics_table(rows, fh)
    return out_dir


def read_graph_file(path):
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".csv"):
        return netgraph.read_edge_csv(text), None
    return netgraph.read_graphml(text)


def _graph_files(src):
    src = Path(src)
    if src.is_dir():
        return sorted(src.glob("graph_th*.graphml"))
    return [src]


def communities_stage(cfg, src, out_dir, workers=None):
    """Map-equation communities of every full-period graph."""
    out_dir = Path(out_dir)
    files = _graph_files(src)
    graphs = [read_graph_file(f)[0] for f in files]

    def run_one(g):
        return community.detect_communities(g, seed=cfg.community_seed, trials=cfg.trials)

    parts = _map(run_one, graphs, workers or cfg.workers)
    for f, g, part in zip(files, graphs, parts):
        stem = f.stem.replace("graph_", "") if f.stem.startswith("graph_") else f.stem
        with _writer(out_dir / f"partition_{stem}.csv") as fh:
            community.write_partition(part, fh)
        with _writer(out_dir / f"codelength_{stem}.json") as fh:
            community.write_codelength_report(g, part, fh)
        _write(out_dir / f"graph_{stem}.graphml", netgraph.to_graphml(g, part))
    return out_dir


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def dynamic_stage(cfg, smoothed_path, out_dir, workers=None, table=None):
    """Windowed networks, per-window communities and flows per threshold."""
    out_dir = Path(out_dir)
    if table is None:
        table = _table(smoothed_path)
    windows = dynamic.make_windows(table.start, table.end, cfg.window)
    family = dynamic.windowed_network_family(table, cfg.thresholds, cfg.window, cfg.window_min_weight, windows)

    def run_one(th):
        return dynamic.community_timeline(
            family[th], seed=cfg.community_seed, trials=cfg.trials, windows=windows,
            participants=table.tags, origin=table.start,
        )

    timelines = dict(zip(cfg.thresholds, _map(run_one, cfg.thresholds, workers or cfg.workers)))
    summary = {}
    for th, tl in timelines.items():
        d = out_dir / f"th{th_name(th)}"
        with _writer(d / "partitions.csv") as fh:
            dynamic.write_window_partitions(tl, fh)
        doc = dynamic.emit_alluvial(tl)
        _write(d / "alluvial.json", dynamic.dumps_alluvial(doc))
        if cfg.svg:
            _write(d / "alluvial.svg", dynamic.alluvial_svg(doc))
        for tag in cfg.track:
            with _writer(d / f"track_{tag}.csv") as fh:
                dynamic.write_tracking(tl, dynamic.track_participant(tl, tag), fh)
        summary[th_name(th)] = len(tl.partitions)
    return summary


# -- reports -----------------------------------------------------------------

def report(kind, src, out, cfg=None):
    """Rebuild one figure's data table from intermediate files."""
    cfg = cfg or PipelineConfig()
    if kind == "fig8":
        rows = []
        for f in _graph_files(src):
            g, _ = read_graph_file(f)
            rows.append((float(g.meta["threshold"]), netgraph.metrics(g)))
        with _writer(out) as fh:
            netgraph.write_metrics_table(sorted(rows, key=lambda r: r[0]), fh)
    elif kind == "fig4":
        with _writer(out) as fh:
            contact.write_histogram(_table(src).histogram(cfg.bin_width), fh)
    elif kind in ("fig5", "fig6"):
        table = _table(src)
        out = Path(out)
        for a, b in selected_pairs(table.pairs, cfg.report_pairs, cfg.pair_seed):
            series = table.series((a, b))
            if kind == "fig5":
                _write(out / f"series_{a}_{b}.csv", contact.pair_series_export(series))
            else:
                with _writer(out / f"histogram_{a}_{b}.csv") as fh:
                    contact.write_histogram(contact.distance_histogram(series, cfg.bin_width), fh)
    elif kind == "alluvial-svg":
        doc = json.loads(Path(src).read_text(encoding="utf-8"))
        _write(out, dynamic.alluvial_svg(doc))
    else:
        raise ConfigError(f"unknown report kind {kind!r}")
    return out


# -- end to end --------------------------------------------------------------

def _hash_tree(root):
    out = {}
    for p in sorted(Path(root).rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            out[p.relative_to(root).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def versions():
    import numba

    return {"uwbnet": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


class StageFailed(UwbNetError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


def run(cfg, workers=None):
    """Execute every stage into ``cfg.output`` and write ``manifest.json``."""
    cfg.validate()
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.canonical(), "config_hash": cfg.digest(), "versions": versions()}
    smoothed = out / "smooth" / "smoothed.csv"
    shared = {}

    def contacts_step():
        # both table-based stages read the same file; parse it once
        shared["table"] = _table(smoothed)
        return contacts_stage(cfg, smoothed, out / "contacts", table=shared["table"])

    steps = [
        ("ingest", lambda: ingest(cfg, cfg.input, out / "ingest")),
        ("smooth", lambda: smooth_stage(cfg, out / "ingest" / "trajectories.csv", out / "smooth")),
        ("contacts", contacts_step),
        ("network", lambda: network_stage(cfg, out / "contacts", out / "network")),
        ("communities", lambda: communities_stage(cfg, out / "network", out / "communities", workers)),
        ("dynamic", lambda: dynamic_stage(cfg, smoothed, out / "dynamic", workers, table=shared["table"])),
    ]
    for name, step in steps:
        try:
            result = step()
        except Exception as err:
            manifest["status"] = "failed"
            manifest["failed_stage"] = name
            manifest["error"] = f"{type(err).__name__}: {err}"
            manifest["files"] = _hash_tree(out)
            _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
            raise StageFailed(name, err) from err
        if name == "dynamic":
            manifest["window_partitions"] = result
    manifest["status"] = "ok"
    manifest["files"] = _hash_tree(out)
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def configure_logging():
    level = os.environ.get("UWBNET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
