"""End-to-end benchmark of one query sequence against one database sequence."""
from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

from .bench import (COSINE, EUCLIDEAN, BenchParams, BenchReport, Descriptor, describe_bev,
                    describe_position, evaluate, retrieve, sample_trajectory)
from .dataset import SequenceDir
from .pointcloud import PointCloud, concat_clouds, crop_range, transform_cloud

BEV = "bev"
EXTERNAL = "external-csv"
ORACLE = "oracle-position"
DESCRIPTORS = (BEV, EXTERNAL, ORACLE)


def place_cloud(seq: SequenceDir, i: int, params: BenchParams) -> PointCloud:
    """Scan ``i`` (or the submap starting there) in scan ``i``'s frame, range-cropped."""
    if params.submap_window:
        base = seq.trajectory[i].inverse()
        stop = min(i + params.submap_window, len(seq))
        parts = [transform_cloud(seq.scan(k), base.compose(seq.trajectory[k]))
                 for k in range(i, stop)]
        cloud = concat_clouds(parts)
    else:
        cloud = seq.scan(i)
    return crop_range(cloud, params.crop_range, box=params.crop_box)


def _describe(seq, idx, params, method, external):
    out = []
    for i in idx:
        if method == ORACLE:
            out.append(describe_position(seq.trajectory[i].position))
        elif method == EXTERNAL:
            sid = seq.scan_id(i)
            if sid not in external:
                raise KeyError(f"{seq.name}: no external descriptor for scan id {sid}")
            out.append(external[sid])
        elif method == BEV:
            cloud = place_cloud(seq, i, params)
            if len(cloud) == 0:
                out.append(Descriptor(np.zeros(20 * 60), BEV))
            else:
                out.append(describe_bev(cloud, max_range=params.crop_range))
        else:
            raise ValueError(f"unknown descriptor {method!r}")
    return out


def bench_pair(query: SequenceDir, db: SequenceDir, params: BenchParams = BenchParams(),
               method: str = BEV, query_desc: Optional[Mapping[int, Descriptor]] = None,
               db_desc: Optional[Mapping[int, Descriptor]] = None,
               label: str = "") -> BenchReport:
    q_idx = sample_trajectory(query.trajectory, params.query_interval)
    d_idx = sample_trajectory(db.trajectory, params.db_interval)
    q_d = _describe(query, q_idx, params, method, query_desc)
    d_d = _describe(db, d_idx, params, method, db_desc)
    db_pos = np.array([db.trajectory[i].translation for i in d_idx])
    db_ids = [db.scan_id(i) for i in d_idx]
    metric = EUCLIDEAN if method == ORACLE else COSINE
    retrievals = [
        retrieve(qd, d_d, params.top_n, query_id=query.scan_id(i),
                 query_position=query.trajectory[i].translation, db_positions=db_pos,
                 tp_radius=params.tp_radius, metric=metric, db_ids=db_ids)
        for i, qd in zip(q_idx, q_d)]
    return evaluate(retrievals, params, label=label or f"{db.name}->{query.name}")
