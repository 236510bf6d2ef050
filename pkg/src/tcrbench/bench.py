"""Place-recognition benchmark: trajectory sampling, descriptors, retrieval
and precision/recall metrics.

Each query keeps only its best-scoring database candidate for the PR curve.
Sweeping an acceptance threshold over the observed top-1 scores, an
accepted query is a true positive when that candidate lies within
``tp_radius`` of the query pose and a false positive otherwise.  Recall is
measured against the queries that have at least one database entry within
``tp_radius``; queries without one can only ever add false positives.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .pointcloud import PointCloud, Trajectory

COSINE = "cosine"
EUCLIDEAN = "euclidean"


class NoTrueMatch(ValueError):
    """No query has a database entry within the true-positive radius."""

    code = "no_true_match"


@dataclass(frozen=True)
class BenchParams:
    query_interval: float = 10.0
    db_interval: float = 5.0
    tp_radius: float = 7.5
    crop_range: float = 100.0
    top_n: int = 25
    submap_window: Optional[int] = None
    crop_box: bool = False

    def __post_init__(self):
        for name in ("query_interval", "db_interval", "tp_radius", "crop_range"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.submap_window is not None and self.submap_window < 1:
            raise ValueError("submap_window must be >= 1")


@dataclass(frozen=True)
class Descriptor:
    values: np.ndarray
    method: str = "bev"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("descriptor has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Retrieval:
    query_id: int
    candidate_ids: tuple
    scores: tuple
    distances: tuple
    has_true_match: bool

    def __post_init__(self):
        if not (len(self.candidate_ids) == len(self.scores) == len(self.distances)):
            raise ValueError("candidate ids, scores and distances differ in length")
        if len(self.scores) == 0:
            raise ValueError("retrieval has no candidates")
        if any(a < b for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("candidate scores must be non-increasing")


@dataclass
class BenchReport:
    curve: list                 # (threshold, precision, recall), threshold descending
    auc: float
    recall_at: dict
    max_f1: float
    params: BenchParams
    n_queries: int
    n_positive: int
    retrievals: list = field(default_factory=list)
    label: str = ""

    def to_dict(self, with_retrievals: bool = True) -> dict:
        d = {
            "label": self.label,
            "auc": self.auc,
            "max_f1": self.max_f1,
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "n_queries": self.n_queries,
            "n_positive": self.n_positive,
            "params": asdict(self.params),
            "pr_curve": [{"threshold": _jsonable(t), "precision": p, "recall": r}
                         for t, p, r in self.curve],
        }
        if with_retrievals:
            d["retrievals"] = [
                {"query_id": r.query_id, "candidate_ids": list(r.candidate_ids),
                 "scores": list(r.scores), "distances": list(r.distances),
                 "has_true_match": r.has_true_match}
                for r in sorted(self.retrievals, key=lambda r: r.query_id)]
        return d


def _jsonable(x: float):
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# --------------------------------------------------------------------------
# sampling

def sample_trajectory(traj: Trajectory, interval: float) -> list[int]:
    """Greedy arc-length sampling; the first pose is always kept."""
    if not interval > 0:
        raise ValueError("interval must be positive")
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    pos = traj.positions
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    picked = [0]
    acc = 0.0
    for i, d in enumerate(steps, start=1):
        acc += d
        if acc >= interval:
            picked.append(i)
            acc = 0.0
    return picked


# --------------------------------------------------------------------------
# descriptors

def describe_bev(cloud: PointCloud, rings: int = 20, sectors: int = 60,
                 max_range: float = 100.0) -> Descriptor:
    """Polar bird's-eye grid holding the highest point per (ring, sector) cell.

    Row-major over rings then sectors; empty cells are 0.  Sector 0 starts at
    azimuth 0 and sectors advance counter-clockwise.
    """
    if len(cloud) == 0:
        raise ValueError("cannot describe an empty cloud")
    p = cloud.points
    r = np.hypot(p[:, 0], p[:, 1])
    keep = r < max_range
    p, r = p[keep], r[keep]
    az = np.mod(np.arctan2(p[:, 1], p[:, 0]), 2 * np.pi)
    ri = np.minimum((r / max_range * rings).astype(np.int64), rings - 1)
    si = np.minimum((az / (2 * np.pi) * sectors).astype(np.int64), sectors - 1)
    cell = ri * sectors + si
    grid = np.full(rings * sectors, -np.inf)
    np.maximum.at(grid, cell, p[:, 2])
    grid[np.isneginf(grid)] = 0.0
    return Descriptor(grid, "bev")


def describe_position(position) -> Descriptor:
    """Oracle descriptor: the sensor's own world position."""
    return Descriptor(np.asarray(position, dtype=np.float64), "oracle-position")


# --------------------------------------------------------------------------
# retrieval

def similarities(query: Descriptor, db: Sequence[Descriptor], metric: str = COSINE) -> np.ndarray:
    if len(db) == 0:
        raise ValueError("empty database")
    D = np.stack([d.values for d in db]) if not isinstance(db, np.ndarray) else db
    q = query.values
    if D.shape[1] != len(q):
        raise ValueError(f"descriptor length mismatch: query {len(q)} vs db {D.shape[1]}")
    if metric == COSINE:
        qn = np.linalg.norm(q)
        dn = np.linalg.norm(D, axis=1)
        denom = qn * dn
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(denom > 0, D @ q / np.where(denom > 0, denom, 1.0), 0.0)
        return np.clip(s, -1.0, 1.0)
    if metric == EUCLIDEAN:
        return -np.linalg.norm(D - q, axis=1)
    raise ValueError(f"unknown metric {metric!r}")


def rank(scores: np.ndarray, top_n: int) -> np.ndarray:
    """Indices of the ``top_n`` best scores; ties go to the lower index."""
    order = np.argsort(-scores, kind="stable")
    return order[:top_n]


def retrieve(query: Descriptor, db: Sequence[Descriptor], top_n: int = 25, *,
             query_id: int = 0, query_position=None, db_positions=None,
             tp_radius: float = 7.5, metric: str = COSINE,
             db_ids: Optional[Sequence[int]] = None) -> Retrieval:
    scores = similarities(query, db, metric)
    top = rank(scores, top_n)
    ids = np.arange(len(scores)) if db_ids is None else np.asarray(db_ids)
    if query_position is not None and db_positions is not None:
        gt = np.linalg.norm(np.asarray(db_positions) - np.asarray(query_position), axis=1)
        dists = gt[top]
        has_match = bool(np.any(gt <= tp_radius))
    else:
        dists = np.full(len(top), np.inf)
        has_match = False
    return Retrieval(int(query_id), tuple(int(i) for i in ids[top]),
                     tuple(float(s) for s in scores[top]),
                     tuple(float(d) for d in dists), has_match)


# --------------------------------------------------------------------------
# metrics

def pr_points(retrievals: Sequence[Retrieval], tp_radius: float):
    """Threshold sweep over top-1 scores.

    Returns ``(thresholds, tp, fp, n_positive)`` with thresholds descending,
    starting at +inf and ending at -inf.
    """
    rs = sorted(retrievals, key=lambda r: r.query_id)
    score = np.array([r.scores[0] for r in rs])
    correct = np.array([r.distances[0] <= tp_radius for r in rs])
    n_pos = sum(r.has_true_match for r in rs)
    thresholds = np.concatenate([[np.inf], np.unique(score)[::-1], [-np.inf]])
    tp = np.array([np.sum(correct & (score >= t)) for t in thresholds])
    fp = np.array([np.sum(~correct & (score >= t)) for t in thresholds])
    return thresholds, tp, fp, n_pos


def evaluate(retrievals: Sequence[Retrieval], params: BenchParams = BenchParams(),
             label: str = "") -> BenchReport:
    if len(retrievals) == 0:
        raise ValueError("no retrievals to evaluate")
    thresholds, tp, fp, n_pos = pr_points(retrievals, params.tp_radius)
    if n_pos == 0:
        raise NoTrueMatch("no query has a database entry within the true-positive radius")
    pred = tp + fp
    precision = np.where(pred > 0, tp / np.maximum(pred, 1), 1.0)
    recall = tp / n_pos
    f1 = 2 * tp / (pred + n_pos)
    order = np.argsort(recall, kind="stable")
    r, p = recall[order], precision[order]
    auc = float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2))

    rs = sorted(retrievals, key=lambda r: r.query_id)
    positives = [r for r in rs if r.has_true_match]
    ns = sorted({n for n in (1, 5, 10, 25) if n <= params.top_n} | {params.top_n})
    recall_at = {}
    for n in ns:
        hits = sum(any(d <= params.tp_radius for d in r.distances[:n]) for r in positives)
        recall_at[n] = hits / n_pos
    curve = [(float(t), float(p), float(r)) for t, p, r in zip(thresholds, precision, recall)]
    return BenchReport(curve, auc, recall_at, float(f1.max()), params,
                       len(rs), n_pos, list(rs), label)


# --------------------------------------------------------------------------
# exchange files

def write_descriptor_csv(path, descriptors: Mapping[int, Descriptor]) -> None:
    items = sorted(descriptors.items())
    dim = len(items[0][1]) if items else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "dim"] + [f"v{i}" for i in range(dim)])
        for i, d in items:
            w.writerow([i, len(d)] + [repr(float(v)) for v in d.values])


def read_descriptor_csv(path, method: str = "external") -> dict[int, Descriptor]:
    out = {}
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if not header or header[:2] != ["id", "dim"]:
            raise ValueError(f"{path}: header must start with 'id,dim'")
        dim = len(header) - 2
        for lineno, row in enumerate(rows, 2):
            if not row:
                continue
            try:
                i, n = int(row[0]), int(row[1])
                vals = [float(v) for v in row[2:]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row") from None
            if n != dim or len(vals) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values")
            if i in out:
                raise ValueError(f"{path}:{lineno}: duplicate id {i}")
            out[i] = Descriptor(vals, method)
    return out


def write_pr_curve_csv(path, report: BenchReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in report.curve:
            w.writerow([_jsonable(t), repr(p), repr(r)])


def write_auc_vs_tcr_csv(path, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_id", "tcr_sym", "auc"])
        for pair_id, tcr_sym, auc in rows:
            w.writerow([pair_id, repr(float(tcr_sym)), repr(float(auc))])


def write_report(out_dir, reports: Sequence[BenchReport],
                 tcr_rows: Optional[Sequence[tuple]] = None) -> None:
    """bench_report.json plus pr_curve.csv (one file per pair when several)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"pairs": [r.to_dict() for r in reports]}
    (out / "bench_report.json").write_text(json.dumps(doc, indent=2, allow_nan=False))
    if len(reports) == 1:
        write_pr_curve_csv(out / "pr_curve.csv", reports[0])
    else:
        with open(out / "pr_curve.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair_id", "threshold", "precision", "recall"])
            for r in reports:
                for t, p, rc in r.curve:
                    w.writerow([r.label, _jsonable(t), repr(p), repr(rc)])
    if tcr_rows:
        write_auc_vs_tcr_csv(out / "auc_vs_tcr.csv", tcr_rows)
