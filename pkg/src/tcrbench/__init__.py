"""Structural change ratios between map sessions and a place-recognition
benchmark for long-term LiDAR localization."""

__version__ = "0.1.0"

from .bench import (BenchParams, BenchReport, Descriptor, NoTrueMatch, Retrieval,
                    describe_bev, evaluate, retrieve, sample_trajectory)
from .hull import ConvexHull3, DegenerateInput, contains, hull_restrict, quickhull
from .pointcloud import (PointCloud, Pose, Trajectory, aggregate_map, crop_range,
                         load_cloud, load_poses, save_cloud, save_poses, transform_cloud)
from .spatial import KdIndex, VoxelParams, build_index, nn_dist, voxel_downsample
from .synthgen import (BuildingSpec, LidarSpec, SceneSpec, brute_tcr, build_map,
                       gen_sequence, simulate_scan)
from .tcr import (ChangeSets, DegenerateHull, EmptyDomain, TcrError, TcrParams, TcrReport,
                  change_sets, overlap_set, tcr_pair, tcr_stage_matrix)
