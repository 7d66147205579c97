"""Datasets, synthetic sequences and the train/validate/test experiment loop.

Scene files are plain text::

    width 640
    # id x y  (id "-" marks an unlabelled point)
    0 12.5 80.25
    1 30.0 95.0

A pair manifest is a tab-separated file with one pair per line:
``scene_a  scene_b  baseline  split  a0:b0,a1:b1,...`` where the last column
lists point indices (not landmark ids) of corresponding points. Relative
scene paths resolve against the manifest's directory.
"""
from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Matching, TrainingInstance, WeightVector
from .features import ShapeContextConfig, build_graph
from .learn import LearnerConfig, predict, train
from .loss import HAMMING, LossKind, instance_loss
from .solvers import (GraduatedAssignmentConfig, bistochastic_normalize_baseline, graduated_assignment,
                      linear_assignment)

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
DEFAULT_LAMBDAS = (1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4)


class SceneFormatError(ValueError):
    pass


@dataclass
class SceneFile:
    points: np.ndarray
    labels: Optional[List[Optional[str]]] = None
    width: float = 1.0
    path: Optional[str] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if not np.isfinite(self.points).all():
            raise SceneFormatError("non-finite coordinate")
        if not self.width > 0:
            raise SceneFormatError("width must be positive")
        if self.labels is not None:
            if len(self.labels) != len(self.points):
                raise SceneFormatError("one label per point required")
            ids = [lab for lab in self.labels if lab is not None]
            if len(ids) != len(set(ids)):
                raise SceneFormatError("duplicate landmark id")


def load_scene(path) -> SceneFile:
    width = None
    labels: List[Optional[str]] = []
    points = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] == "width":
                if len(tok) != 2:
                    raise SceneFormatError(f"{path}:{lineno}: expected 'width W'")
                width = _parse_float(tok[1], path, lineno)
                continue
            if len(tok) != 3:
                raise SceneFormatError(f"{path}:{lineno}: expected 'id x y', got {line!r}")
            labels.append(None if tok[0] == "-" else tok[0])
            points.append((_parse_float(tok[1], path, lineno), _parse_float(tok[2], path, lineno)))
    if width is None:
        raise SceneFormatError(f"{path}: missing 'width' header")
    if not points:
        raise SceneFormatError(f"{path}: no points")
    try:
        return SceneFile(np.array(points), labels if any(l is not None for l in labels) else None,
                         width, str(path))
    except SceneFormatError as exc:
        raise SceneFormatError(f"{path}: {exc}") from None


def _parse_float(tok, path, lineno) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise SceneFormatError(f"{path}:{lineno}: not a number: {tok!r}") from None
    if not math.isfinite(v):
        raise SceneFormatError(f"{path}:{lineno}: non-finite coordinate {tok!r}")
    return v


def save_scene(scene: SceneFile, path) -> None:
    labels = scene.labels or [str(i) for i in range(len(scene.points))]
    with open(path, "w") as fh:
        fh.write(f"width {scene.width!r}\n")
        for lab, (x, y) in zip(labels, scene.points):
            fh.write(f"{'-' if lab is None else lab} {float(x)!r} {float(y)!r}\n")


def _ids(scene: SceneFile) -> List[Optional[str]]:
    return scene.labels if scene.labels is not None else [str(i) for i in range(len(scene.points))]


@dataclass
class PairEntry:
    scene_a: SceneFile
    scene_b: SceneFile
    correspondences: Tuple[Tuple[int, int], ...]
    baseline: int
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        na, nb = len(self.scene_a.points), len(self.scene_b.points)
        if not self.correspondences:
            raise ValueError("pair has no correspondences")
        for i, j in self.correspondences:
            if not (0 <= i < na and 0 <= j < nb):
                raise ValueError(f"correspondence {i}:{j} out of range")
        if len({j for _, j in self.correspondences}) != len(self.correspondences):
            raise ValueError("correspondences must be one-to-one")


@dataclass
class PairManifest:
    entries: List[PairEntry]

    def split(self, name: str, baseline: Optional[int] = None) -> List[PairEntry]:
        return [e for e in self.entries if e.split == name and (baseline is None or e.baseline == baseline)]

    @property
    def baselines(self) -> List[int]:
        return sorted({e.baseline for e in self.entries})


def make_pairs(scenes: Sequence[SceneFile], baseline: int) -> PairManifest:
    """All pairs ``(t, t + baseline)``; split by pair index modulo 3 (train, valid, test)."""
    if baseline < 0 or baseline >= len(scenes):
        raise ValueError(f"baseline {baseline} needs more than {len(scenes)} scenes")
    entries = []
    for k, t in enumerate(range(len(scenes) - baseline)):
        a, b = scenes[t], scenes[t + baseline]
        pos_b = {lab: j for j, lab in enumerate(_ids(b)) if lab is not None}
        corr = tuple((i, pos_b[lab]) for i, lab in enumerate(_ids(a)) if lab is not None and lab in pos_b)
        if not corr:
            continue
        entries.append(PairEntry(a, b, corr, baseline, SPLITS[k % 3]))
    if not entries:
        raise ValueError("no pairs with shared landmarks")
    return PairManifest(entries)


def save_manifest(manifest: PairManifest, path) -> None:
    base = Path(path).resolve().parent
    with open(path, "w") as fh:
        for e in manifest.entries:
            if e.scene_a.path is None or e.scene_b.path is None:
                raise ValueError("scenes must be saved to files before writing a manifest")
            corr = ",".join(f"{i}:{j}" for i, j in e.correspondences)
            pa = os.path.relpath(Path(e.scene_a.path).resolve(), base)
            pb = os.path.relpath(Path(e.scene_b.path).resolve(), base)
            fh.write(f"{pa}\t{pb}\t{e.baseline}\t{e.split}\t{corr}\n")


def load_manifest(path) -> PairManifest:
    base = Path(path).parent
    cache: Dict[str, SceneFile] = {}

    def scene(p):
        full = str(base / p)
        if full not in cache:
            cache[full] = load_scene(full)
        return cache[full]

    entries = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 5:
                raise SceneFormatError(f"{path}:{lineno}: expected 5 tab-separated columns")
            try:
                corr = tuple(tuple(int(x) for x in c.split(":")) for c in cols[4].split(","))
                entries.append(PairEntry(scene(cols[0]), scene(cols[1]), corr, int(cols[2]), cols[3]))
            except ValueError as exc:
                raise SceneFormatError(f"{path}:{lineno}: {exc}") from None
    if not entries:
        raise SceneFormatError(f"{path}: empty manifest")
    return PairManifest(entries)


def synth_sequence(num_frames: int, num_points: int, noise_sigma: float, rotation_per_frame: float,
                   seed: int = 0) -> List[SceneFile]:
    """Rotating, jittered copies of one random point cloud.

    ``rotation_per_frame`` is in degrees about the cloud centroid; the jitter
    standard deviation is ``noise_sigma`` times the cloud diameter. Landmark
    ids are the point indices and persist across frames.
    """
    if num_frames < 1 or num_points < 4 or noise_sigma < 0:
        raise ValueError("need num_frames >= 1, num_points >= 4 and noise_sigma >= 0")
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.0, 1.0, size=(num_points, 2))
    centroid = base.mean(axis=0)
    diameter = float(np.max(np.linalg.norm(base[:, None] - base[None], axis=2)))
    labels = [str(i) for i in range(num_points)]
    frames = []
    for t in range(num_frames):
        theta = math.radians(t * rotation_per_frame)
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        pts = (base - centroid) @ rot.T + centroid
        if noise_sigma > 0:
            pts = pts + rng.normal(0.0, noise_sigma * diameter, size=pts.shape)
        frames.append(SceneFile(pts, list(labels), 1.0))
    return frames


def pair_instance(entry: PairEntry, sc_cfg: ShapeContextConfig = ShapeContextConfig(),
                  triangulate: Optional[bool] = None) -> TrainingInstance:
    """Query graph = corresponding points of scene a; target graph = every point of scene b.

    Triangulation is skipped by default when the query is a strict subset of
    the target, since the query's edges then say nothing about the target's.
    """
    rows = [i for i, _ in entry.correspondences]
    cols = [j for _, j in entry.correspondences]
    query = entry.scene_a.points[rows]
    target = entry.scene_b.points
    if triangulate is None:
        triangulate = len(query) == len(target)
    g = build_graph(query, sc_cfg, triangulate)
    gp = build_graph(target, sc_cfg, triangulate)
    name = f"{entry.scene_a.path or '?'}|{entry.scene_b.path or '?'}"
    return TrainingInstance(g, gp, Matching.from_perm(cols, len(target)), entry.scene_b.width, name)


@dataclass
class ExperimentConfig:
    lambdas: Tuple[float, ...] = DEFAULT_LAMBDAS
    epsilon: float = 1e-3
    max_iterations: int = 200
    graduated: GraduatedAssignmentConfig = field(default_factory=GraduatedAssignmentConfig)
    loss: str = "auto"  # "hamming", "endpoint" or "auto" (endpoint when the query is a subset)
    delta: float = 1e-5
    timing_repeats: int = 3
    measure_time: bool = True
    shape_context: ShapeContextConfig = field(default_factory=ShapeContextConfig)


METHODS = tuple(f"{a}-{b}" for a in ("linear", "quadratic") for b in ("learned", "unlearned", "bistochastic"))


@dataclass
class ReportRow:
    baseline: int
    method: str
    mean_loss: float
    stderr: float
    mean_runtime_ms: Optional[float]
    count: int
    lam: Optional[float] = None
    converged: Optional[bool] = None


@dataclass
class ExperimentReport:
    rows: List[ReportRow] = field(default_factory=list)
    weights: Dict[str, List[float]] = field(default_factory=dict)  # "baseline/method" -> learned w

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows], "weights": self.weights},
                          indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        data = json.loads(text)
        return cls([ReportRow(**r) for r in data["rows"]], data["weights"])

    def row(self, baseline: int, method: str) -> ReportRow:
        for r in self.rows:
            if r.baseline == baseline and r.method == method:
                return r
        raise KeyError((baseline, method))


def _loss_kind(cfg: ExperimentConfig, instances: Sequence[TrainingInstance]) -> LossKind:
    if cfg.loss == "hamming":
        return HAMMING
    if cfg.loss == "endpoint":
        return LossKind.endpoint()
    subset = any(inst.g.num_nodes < inst.g_prime.num_nodes for inst in instances)
    return LossKind.endpoint() if subset else HAMMING


def standard_error(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0


def _timed(fn, repeats: int, measure: bool):
    """Run ``fn`` ``repeats`` times; return its result and the median wall time in ms."""
    if not measure:
        return fn(), None
    times, out = [], None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        out = fn()
        times.append(1e3 * (time.perf_counter() - t0))
    return out, float(np.median(times))


def make_solver(method: str, cfg: ExperimentConfig, w: Optional[WeightVector] = None):
    """Callable ``instance -> Matching`` for a method and (learned) weights."""
    kind, mode = method.split("-")
    inference = "linear" if kind == "linear" else cfg.graduated
    if mode == "bistochastic":
        def solve(inst):
            tables = bistochastic_normalize_baseline(inst.g, inst.g_prime, cfg.delta)
            if kind == "linear":
                return linear_assignment(tables.c)
            return graduated_assignment(tables, inst.g, inst.g_prime, cfg.graduated)
        return solve
    if w is None:
        raise ValueError(f"{method} needs weights")
    return lambda inst: predict(w, inst.g, inst.g_prime, inference, linear_model=(kind == "linear"))


def unlearned_weights(method: str, dim: int) -> WeightVector:
    return WeightVector(np.ones(dim), 0.0 if method.startswith("linear") else 1.0)


def evaluate(solver, instances: Sequence[TrainingInstance], loss_kind: LossKind, cfg: ExperimentConfig):
    losses, times = [], []
    for inst in instances:
        y, ms = _timed(lambda: solver(inst), cfg.timing_repeats, cfg.measure_time)
        losses.append(instance_loss(loss_kind, inst, y))
        times.append(ms)
    runtime = float(np.mean(times)) if cfg.measure_time else None
    return losses, runtime


def fit_learned(method: str, train_set: Sequence[TrainingInstance], valid_set: Sequence[TrainingInstance],
                loss_kind: LossKind, cfg: ExperimentConfig):
    """Train once per lambda and keep the model with the lowest validation loss (first on ties)."""
    kind = method.split("-")[0]
    inference = "linear" if kind == "linear" else cfg.graduated
    best = None
    for lam in cfg.lambdas:
        state = train(train_set, LearnerConfig(lam, cfg.epsilon, cfg.max_iterations, inference, loss_kind,
                                               track_empirical_risk=True))
        solver = make_solver(method, cfg, state.w)
        selection_set = valid_set or train_set
        val = float(np.mean([instance_loss(loss_kind, inst, solver(inst)) for inst in selection_set]))
        logger.info("%s lambda=%g: valid loss %.4f (%d iterations, converged=%s)",
                    method, lam, val, state.iterations, state.converged)
        if best is None or val < best[0]:
            best = (val, lam, state)
    return best[1], best[2]


def _pair_key(entry: PairEntry):
    return tuple(s.path if s.path is not None else id(s) for s in (entry.scene_a, entry.scene_b))


def run_experiment(manifest: PairManifest, methods: Sequence[str] = ("linear-learned", "linear-unlearned"),
                   cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentReport:
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    report = ExperimentReport()
    for baseline in manifest.baselines:
        sets = {s: [pair_instance(e, cfg.shape_context) for e in manifest.split(s, baseline)] for s in SPLITS}
        train_pairs = {_pair_key(e) for e in manifest.split("train", baseline)}
        if any(_pair_key(e) in train_pairs for e in manifest.split("test", baseline)):
            raise AssertionError("training pair leaked into the test split")
        if not sets["test"]:
            logger.warning("baseline %d has no test pairs; skipped", baseline)
            continue
        loss_kind = _loss_kind(cfg, sets["test"])
        dim = sets["test"][0].g.attr_dim
        for method in methods:
            lam = converged = None
            if method.endswith("learned") and not method.endswith("unlearned"):
                if not sets["train"]:
                    raise ValueError(f"baseline {baseline} has no training pairs")
                lam, state = fit_learned(method, sets["train"], sets["valid"], loss_kind, cfg)
                w, converged = state.w, state.converged
                report.weights[f"{baseline}/{method}"] = [float(v) for v in w.as_array()]
                solver = make_solver(method, cfg, w)
            elif method.endswith("unlearned"):
                solver = make_solver(method, cfg, unlearned_weights(method, dim))
            else:
                solver = make_solver(method, cfg)
            losses, runtime = evaluate(solver, sets["test"], loss_kind, cfg)
            report.rows.append(ReportRow(baseline, method, float(np.mean(losses)), standard_error(losses),
                                         runtime, len(losses), lam, converged))
    return report


PLOT_COLUMNS = ("baseline", "method", "mean_loss", "stderr", "mean_runtime_ms")


def emit_plot_data(report: ExperimentReport, path) -> None:
    if not report.rows:
        raise ValueError("empty report")
    with open(path, "w") as fh:
        fh.write("\t".join(PLOT_COLUMNS) + "\n")
        for r in report.rows:
            runtime = "nan" if r.mean_runtime_ms is None else repr(r.mean_runtime_ms)
            fh.write(f"{r.baseline}\t{r.method}\t{r.mean_loss!r}\t{r.stderr!r}\t{runtime}\n")


def read_plot_data(path) -> List[dict]:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != PLOT_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        rows = []
        for line in fh:
            b, m, loss, se, rt = line.rstrip("\n").split("\t")
            rows.append({"baseline": int(b), "method": m, "mean_loss": float(loss), "stderr": float(se),
                         "mean_runtime_ms": float(rt)})
    return rows


def save_model(w: WeightVector, path, inference: str = "linear", lam: Optional[float] = None) -> None:
    with open(path, "w") as fh:
        fh.write(f"dim {w.dim}\n")
        fh.write(f"inference {inference}\n")
        if lam is not None:
            fh.write(f"lambda {lam!r}\n")
        for v in w.as_array():
            fh.write(f"{float(v)!r}\n")


def load_model(path):
    """Return ``(weights, inference, lam)`` from a model file."""
    meta = {}
    values = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            tok = raw.split()
            if not tok:
                continue
            if tok[0] in ("dim", "inference", "lambda"):
                meta[tok[0]] = tok[1]
            else:
                try:
                    values.append(float(tok[0]))
                except ValueError:
                    raise SceneFormatError(f"{path}:{lineno}: bad weight {tok[0]!r}") from None
    if "dim" not in meta:
        raise SceneFormatError(f"{path}: missing 'dim' header")
    if len(values) != int(meta["dim"]) + 1:
        raise SceneFormatError(f"{path}: expected {int(meta['dim']) + 1} weights, got {len(values)}")
    lam = float(meta["lambda"]) if "lambda" in meta else None
    return WeightVector.from_array(values), meta.get("inference", "linear"), lam
