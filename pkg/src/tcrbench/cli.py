"""Command-line front end: ``tcrbench {tcr,bench,synth}``.

Exit codes: 0 ok, 1 I/O failure, 2 degenerate hull, 3 empty hull domain,
4 no query has a true match, 5 invalid input or config, 6 bad usage.
Failures print one JSON object ``{"error", "message", "exit_code"}`` on
stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bench import BenchParams, NoTrueMatch, read_descriptor_csv, write_report
from .config import ConfigError, load_route, load_scene
from .dataset import SequenceDir, write_dataset
from .hull import DegenerateInput
from .pointcloud import ASCII, BINARY, CloudFormatError, load_cloud, save_cloud
from .pipeline import BEV, DESCRIPTORS, EXTERNAL, bench_pair
from .tcr import (HULL_RESTRICTED, LITERAL, DegenerateHull, EmptyDomain,
                  TcrParams, change_labels, tcr_pair)

EXIT_OK = 0
EXIT_IO = 1
EXIT_DEGENERATE = 2
EXIT_EMPTY_DOMAIN = 3
EXIT_NO_TRUE_MATCH = 4
EXIT_INVALID = 5
EXIT_USAGE = 6


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", f"{self.prog}: {message}", EXIT_USAGE)


def _fail(code: str, message: str, exit_code: int):
    sys.stderr.write(json.dumps({"error": code, "message": message, "exit_code": exit_code}) + "\n")
    raise SystemExit(exit_code)


def workers_from(args) -> int:
    env = os.environ.get("CNS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            _fail("invalid_input", f"CNS_THREADS must be an integer, got {env!r}", EXIT_INVALID)
    return max(1, args.workers)


def _tcr_params(args) -> TcrParams:
    return TcrParams(tau=args.tau, voxel_resolution=args.voxel, crop_range=args.crop,
                     numerator_mode=args.numerator_mode, crop_box=args.crop_box)


def _cloud_id(path) -> str:
    p = Path(path)
    return f"{p.parent.name}/{p.stem}" if p.parent.name else p.stem


def cmd_tcr(args) -> int:
    params = _tcr_params(args)
    s = load_cloud(args.source, args.format)
    t = load_cloud(args.target, args.format)
    sid = args.source_id or _cloud_id(args.source)
    tid = args.target_id or _cloud_id(args.target)
    rep = tcr_pair(s, t, params, sid, tid, workers=workers_from(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tcr_report.json").write_text(rep.to_json() + "\n")
    (out / "tcr_report.csv").write_text(rep.csv_row(header=True))
    if args.labels:
        (sv, sl), (tv, tl) = change_labels(s, t, params, workers_from(args))
        save_cloud(type(sv)(sv.points, sl.astype(float)), out / "labels_source.bin", BINARY)
        save_cloud(type(tv)(tv.points, tl.astype(float)), out / "labels_target.bin", BINARY)
    print(f"tcr_sym={rep.tcr_sym:.4f} tcr_forward={rep.tcr_forward:.4f} "
          f"tcr_backward={rep.tcr_backward:.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    params = BenchParams(query_interval=args.query_interval, db_interval=args.db_interval,
                         tp_radius=args.tp_radius, crop_range=args.crop, top_n=args.top_n,
                         submap_window=args.submap_window, crop_box=args.crop_box)
    db = SequenceDir(args.db)
    queries = [SequenceDir(q) for q in args.query]
    db_desc = None
    q_descs = [None] * len(queries)
    if args.descriptor == EXTERNAL:
        if not args.db_descriptors or len(args.query_descriptors or []) != len(queries):
            _fail("usage", "external-csv needs --db-descriptors and one "
                  "--query-descriptors per --query", EXIT_USAGE)
        db_desc = read_descriptor_csv(args.db_descriptors)
        q_descs = [read_descriptor_csv(p) for p in args.query_descriptors]
    reports = [bench_pair(q, db, params, args.descriptor, qd, db_desc)
               for q, qd in zip(queries, q_descs)]
    tcr_rows = None
    if len(queries) > 1 or args.with_tcr:
        tparams = TcrParams(tau=args.tau, voxel_resolution=args.voxel,
                            numerator_mode=args.numerator_mode)
        db_map = db.session_map()
        tcr_rows = []
        for q, rep in zip(queries, reports):
            tr = tcr_pair(q.session_map(), db_map, tparams, q.name, db.name,
                          workers=workers_from(args))
            tcr_rows.append((rep.label, tr.tcr_sym, rep.auc))
    write_report(args.out, reports, tcr_rows)
    for rep in reports:
        print(f"{rep.label}: auc={rep.auc:.4f} r@1={rep.recall_at[1]:.4f} max_f1={rep.max_f1:.4f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    scene = load_scene(args.scene)
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    if args.name:
        scene = replace(scene, name=args.name)
    stages = args.stages or list(scene.stages)
    for st in stages:
        if st not in scene.stages:
            _fail("invalid_input", f"stage {st} outside 1..{scene.n_stages}", EXIT_INVALID)
    trajs, lidar = load_route(args.route, stages)
    seqs = write_dataset(args.out, scene, trajs, lidar, stages)
    for s in seqs:
        print(s)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tcrbench", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--workers", type=int, default=1,
                        help="threads for NN queries (env CNS_THREADS overrides; "
                             "results never depend on it)")
        sp.add_argument("--seed", type=int, default=None,
                        help="random seed (default: scene file seed, else 0)")

    def tcr_flags(sp):
        sp.add_argument("--tau", type=float, default=4.5, help="unchanged-point distance threshold in m (default 4.5)")
        sp.add_argument("--voxel", type=float, default=5.0, help="voxel size in m (default 5)")
        sp.add_argument("--numerator-mode", choices=[HULL_RESTRICTED, LITERAL],
                        default=HULL_RESTRICTED,
                        help="count unchanged points only inside the other hull (default) "
                             "or over the whole session")

    t = sub.add_parser("tcr", help="change ratio between two session maps")
    t.add_argument("source", help="source session map")
    t.add_argument("target", help="target session map")
    t.add_argument("--format", choices=[BINARY, ASCII], default=BINARY, help="cloud file format")
    tcr_flags(t)
    t.add_argument("--crop", type=float, default=None, help="range crop in m (default: none)")
    t.add_argument("--crop-box", action="store_true", help="crop per axis instead of radially")
    t.add_argument("--source-id", help="id recorded for the source (default: <dir>/<stem>)")
    t.add_argument("--target-id", help="id recorded for the target (default: <dir>/<stem>)")
    t.add_argument("--labels", action="store_true",
                   help="also write voxelized clouds with per-point labels in the intensity "
                        "channel (0 outside shared domain, 1 unchanged, 2 changed)")
    t.add_argument("--out", default=".", help="output directory (default: cwd)")
    common(t)
    t.set_defaults(func=cmd_tcr)

    b = sub.add_parser("bench", help="place-recognition benchmark")
    b.add_argument("--db", required=True, help="database sequence directory")
    b.add_argument("--query", required=True, action="append",
                   help="query sequence directory (repeat for several pairs)")
    b.add_argument("--descriptor", choices=DESCRIPTORS, default=BEV, help="descriptor (default bev)")
    b.add_argument("--db-descriptors", help="descriptor CSV for the database (external-csv)")
    b.add_argument("--query-descriptors", action="append",
                   help="descriptor CSV per --query, same order (external-csv)")
    b.add_argument("--query-interval", type=float, default=10.0, help="query sampling in m (default 10)")
    b.add_argument("--db-interval", type=float, default=5.0, help="database sampling in m (default 5)")
    b.add_argument("--tp-radius", type=float, default=7.5, help="true-positive radius in m (default 7.5)")
    b.add_argument("--crop", type=float, default=100.0, help="scan range crop in m (default 100)")
    b.add_argument("--crop-box", action="store_true", help="crop per axis instead of radially")
    b.add_argument("--top-n", type=int, default=25, help="candidates kept per query (default 25)")
    b.add_argument("--submap-window", type=int, default=None,
                   help="merge this many consecutive scans per place (10 for BTC-style)")
    b.add_argument("--with-tcr", action="store_true",
                   help="write auc_vs_tcr.csv even for a single pair")
    tcr_flags(b)
    b.add_argument("--out", default=".", help="output directory (default: cwd)")
    common(b)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("synth", help="generate a synthetic staged dataset")
    s.add_argument("scene", help="scene YAML")
    s.add_argument("--route", required=True, help="route/sensor YAML")
    s.add_argument("--stages", type=int, nargs="+", help="stages to render (default: all)")
    s.add_argument("--name", help="override the map name")
    s.add_argument("--out", required=True, help="dataset root directory")
    common(s)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DegenerateHull, DegenerateInput) as e:
        _fail("degenerate_hull", str(e), EXIT_DEGENERATE)
    except EmptyDomain as e:
        _fail("empty_domain", str(e), EXIT_EMPTY_DOMAIN)
    except NoTrueMatch as e:
        _fail("no_true_match", str(e), EXIT_NO_TRUE_MATCH)
    except (ConfigError, CloudFormatError, KeyError, ValueError) as e:
        _fail("invalid_input", str(e), EXIT_INVALID)
    except OSError as e:
        _fail("io_error", str(e), EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
