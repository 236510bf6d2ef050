"""On-disk sequence layout shared by synthetic and real data::

    <root>/<map>/<seq>/scans/000000.bin   sensor-frame scans (xyz-binary)
    <root>/<map>/<seq>/poses.txt          one TUM pose per scan, same order
    <root>/<map>/<seq>/map.bin            optional world-frame session map
    <root>/<map>/<seq>/manifest.json
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .pointcloud import (BINARY, PointCloud, Trajectory, aggregate_map, load_cloud,
                         load_poses, save_cloud, save_poses)
from .synthgen import LidarSpec, SceneSpec, build_map, gen_sequence


class SequenceDir:
    def __init__(self, path):
        self.path = Path(path)
        if not (self.path / "poses.txt").is_file():
            raise FileNotFoundError(f"{self.path}: missing poses.txt")
        self.trajectory: Trajectory = load_poses(self.path / "poses.txt")
        self.scan_paths = sorted((self.path / "scans").glob("*.bin"))
        if len(self.scan_paths) != len(self.trajectory):
            raise ValueError(f"{self.path}: {len(self.scan_paths)} scans but "
                             f"{len(self.trajectory)} poses")
        mf = self.path / "manifest.json"
        self.manifest = json.loads(mf.read_text()) if mf.is_file() else {}

    def __len__(self) -> int:
        return len(self.scan_paths)

    @property
    def name(self) -> str:
        return f"{self.path.parent.name}/{self.path.name}"

    def scan_id(self, i: int) -> int:
        stem = self.scan_paths[i].stem
        return int(stem) if stem.isdigit() else i

    def scan(self, i: int) -> PointCloud:
        return load_cloud(self.scan_paths[i], BINARY)

    def session_map(self) -> PointCloud:
        mp = self.path / "map.bin"
        if mp.is_file():
            return load_cloud(mp, BINARY)
        scans = [self.scan(i) for i in range(len(self))]
        return aggregate_map(scans, self.trajectory.poses)[0]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_sequence(out: Path, scene: SceneSpec, stage: int, traj: Trajectory,
                   lidar: LidarSpec, with_map: bool = True) -> dict:
    out = Path(out)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    scans, poses = gen_sequence(scene, stage, traj, lidar)
    names = []
    for i, sc in enumerate(scans):
        name = f"{i:06d}.bin"
        save_cloud(sc, out / "scans" / name, BINARY)
        names.append(name)
    save_poses(poses, out / "poses.txt")
    manifest = {
        "map": scene.name,
        "sequence": out.name,
        "stage": stage,
        "seed": scene.seed,
        "n_scans": len(scans),
        "n_points": [len(s) for s in scans],
        "lidar": asdict(lidar),
        "scans": names,
    }
    if with_map:
        m = build_map(scene, stage)
        save_cloud(m, out / "map.bin", BINARY)
        manifest["map_points"] = len(m)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def write_dataset(root, scene: SceneSpec, trajectories: Mapping[int, Trajectory],
                  lidar: LidarSpec, stages: Optional[Sequence[int]] = None) -> list[Path]:
    stages = list(stages) if stages is not None else sorted(trajectories)
    out = []
    for st in stages:
        scene.check_stage(st)
        seq = Path(root) / scene.name / f"{st:02d}"
        write_sequence(seq, scene, st, trajectories[st], lidar)
        out.append(seq)
    return out


class MemorySequence:
    """In-memory stand-in for ``SequenceDir`` (same read interface)."""

    def __init__(self, scans, trajectory: Trajectory, name: str = "memory"):
        if len(scans) != len(trajectory):
            raise ValueError(f"{len(scans)} scans but {len(trajectory)} poses")
        self.scans = list(scans)
        self.trajectory = trajectory
        self.name = name

    def __len__(self) -> int:
        return len(self.scans)

    def scan_id(self, i: int) -> int:
        return i

    def scan(self, i: int) -> PointCloud:
        return self.scans[i]

    def session_map(self) -> PointCloud:
        return aggregate_map(self.scans, self.trajectory.poses)[0]
