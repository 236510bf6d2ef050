"""YAML scene and route configuration.

Scene file::

    name: metropolis
    seed: 0
    ground_extent: 100     # half side of the ground square (m)
    density: 0.5           # surface samples per m^2
    stages: 4              # optional; defaults to the largest building stage
    buildings:
      - {center: [10, 20], size: [12, 10, 30], stages: [2, 4]}

Route file::

    waypoints: [[-80, 0], [80, 0]]
    step: 1.0              # pose spacing (m)
    height: 1.8            # sensor height (m)
    speed: 10.0            # m/s, sets timestamps
    lateral_offset: 0.0
    stages:                # optional per-stage overrides of the keys above
      2: {lateral_offset: 3.5}
    lidar: {channels: 32, vertical_fov: 22.5, max_range: 120,
            horizontal_resolution: 0.35, rate: 20}

Every error message carries ``path:line``.
"""
from __future__ import annotations

from pathlib import Path

import yaml

from .pointcloud import Trajectory
from .synthgen import BuildingSpec, LidarSpec, SceneSpec, trajectory_from_waypoints


class ConfigError(ValueError):
    pass


class _Node:
    def __init__(self, node, path):
        self.node = node
        self.path = path

    @property
    def line(self) -> int:
        return self.node.start_mark.line + 1

    def error(self, msg) -> ConfigError:
        return ConfigError(f"{self.path}:{self.line}: {msg}")

    def _require(self, kind, what):
        if not isinstance(self.node, kind):
            raise self.error(f"expected {what}")

    def keys(self):
        self._require(yaml.MappingNode, "a mapping")
        return [k.value for k, _ in self.node.value]

    def get(self, key, required=False):
        self._require(yaml.MappingNode, "a mapping")
        for k, v in self.node.value:
            if k.value == str(key):
                return _Node(v, self.path)
        if required:
            raise self.error(f"missing key {key!r}")
        return None

    def items(self):
        self._require(yaml.MappingNode, "a mapping")
        return [(k.value, _Node(v, self.path)) for k, v in self.node.value]

    def seq(self):
        self._require(yaml.SequenceNode, "a list")
        return [_Node(v, self.path) for v in self.node.value]

    def number(self, integer=False):
        self._require(yaml.ScalarNode, "a number")
        try:
            v = int(self.node.value) if integer else float(self.node.value)
        except ValueError:
            raise self.error(f"expected {'an integer' if integer else 'a number'}, "
                             f"got {self.node.value!r}") from None
        return v

    def numbers(self, n=None, integer=False):
        vals = [x.number(integer) for x in self.seq()]
        if n is not None and len(vals) != n:
            raise self.error(f"expected {n} values, got {len(vals)}")
        return vals

    def text(self):
        self._require(yaml.ScalarNode, "a string")
        return str(self.node.value)


def _root(path) -> _Node:
    path = Path(path)
    try:
        node = yaml.compose(path.read_text())
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line = mark.line + 1 if mark else 0
        raise ConfigError(f"{path}:{line}: {e.problem or e}") from None
    if node is None:
        raise ConfigError(f"{path}:1: empty configuration")
    root = _Node(node, path)
    root.keys()
    return root


def _check_keys(node: _Node, allowed):
    for k, v in node.items():
        if k not in allowed:
            raise ConfigError(f"{node.path}:{v.line}: unknown key {k!r}")


def load_scene(path) -> SceneSpec:
    root = _root(path)
    _check_keys(root, {"name", "seed", "ground_extent", "density", "stages", "buildings"})
    buildings = []
    b_node = root.get("buildings")
    for b in (b_node.seq() if b_node is not None else []):
        _check_keys(b, {"center", "size", "stages"})
        center = b.get("center", True).numbers(2)
        size = b.get("size", True).numbers(3)
        stages = b.get("stages", True).numbers(2, integer=True)
        try:
            buildings.append(BuildingSpec(tuple(center), *size, tuple(stages)))
        except ValueError as e:
            raise b.error(str(e)) from None
    kw = {}
    for key in ("ground_extent", "density"):
        if root.get(key) is not None:
            kw[key] = root.get(key).number()
    if root.get("seed") is not None:
        kw["seed"] = root.get("seed").number(integer=True)
    if root.get("name") is not None:
        kw["name"] = root.get("name").text()
    if root.get("stages") is not None:
        kw["n_stages"] = root.get("stages").number(integer=True)
    try:
        spec = SceneSpec(tuple(buildings), **kw)
    except ValueError as e:
        raise root.error(str(e)) from None
    last = max((b.stages[1] for b in spec.buildings), default=1)
    if spec.n_stages < 1 or last > spec.n_stages:
        raise (root.get("stages") or root).error(
            f"stages={spec.n_stages} but a building exists until stage {last}")
    return spec


_ROUTE_KEYS = {"waypoints", "step", "height", "speed", "lateral_offset"}


def _route_kwargs(node: _Node, base: dict) -> dict:
    kw = dict(base)
    for key in _ROUTE_KEYS:
        v = node.get(key)
        if v is None:
            continue
        if key == "waypoints":
            kw[key] = [p.numbers(2) for p in v.seq()]
        else:
            kw[key] = v.number()
            if key in ("step", "speed") and not kw[key] > 0:
                raise v.error(f"{key} must be positive")
    return kw


def load_route(path, stages) -> tuple[dict[int, Trajectory], LidarSpec]:
    """Trajectory per requested stage, plus the sensor model."""
    root = _root(path)
    _check_keys(root, _ROUTE_KEYS | {"stages", "lidar"})
    base = _route_kwargs(root, {})
    overrides = {}
    if root.get("stages") is not None:
        for k, v in root.get("stages").items():
            _check_keys(v, _ROUTE_KEYS)
            try:
                overrides[int(k)] = v
            except ValueError:
                raise v.error(f"stage key {k!r} is not an integer") from None
    trajs = {}
    for st in stages:
        node = overrides.get(st)
        kw = _route_kwargs(node, base) if node is not None else base
        if "waypoints" not in kw:
            raise root.error("missing key 'waypoints'")
        try:
            trajs[st] = trajectory_from_waypoints(**kw)
        except ValueError as e:
            raise (node or root).error(str(e)) from None
    lidar = LidarSpec()
    ln = root.get("lidar")
    if ln is not None:
        _check_keys(ln, {"channels", "vertical_fov", "max_range", "horizontal_resolution", "rate"})
        kw = {k: v.number(integer=(k == "channels")) for k, v in ln.items()}
        try:
            lidar = LidarSpec(**kw)
        except ValueError as e:
            raise ln.error(str(e)) from None
    return trajs, lidar
