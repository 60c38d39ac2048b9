"""Simulated limited field-of-view depth camera and scan integration."""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import PoseInCollision
from .grid import RayKind, VoxelState


@dataclass
class Pose:
    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)


@dataclass
class SensorModel:
    """Depth camera geometry: horizontal/vertical FOV, max range, and the
    angular spacing of simulated rays."""
    h_fov: float = math.radians(115.0)
    v_fov: float = math.radians(60.0)
    range_r: float = 5.0
    ray_res: float = math.radians(1.0)

    def __post_init__(self):
        if not (0.0 < self.h_fov <= 2 * math.pi):
            raise ValueError("h_fov out of range")
        if not (0.0 < self.v_fov < math.pi):
            raise ValueError("v_fov out of range")
        if self.range_r <= 0:
            raise ValueError("range_r must be positive")
        if self.ray_res > min(self.h_fov, self.v_fov) / 4:
            raise ValueError("ray_res too coarse for the FOV")


def _angle_lattice(fov, step):
    """Symmetric angle offsets at `step` spacing covering [-fov/2, fov/2]."""
    n = int(math.floor(fov / step + 1e-9)) + 1
    return (np.arange(n) - (n - 1) / 2) * step


def frustum_directions(yaw, model):
    """Unit direction per (azimuth, elevation) lattice point of the frustum."""
    az = _angle_lattice(model.h_fov, model.ray_res) + yaw
    el = _angle_lattice(model.v_fov, model.ray_res)
    azg, elg = np.meshgrid(az, el, indexing="ij")
    ce = np.cos(elg)
    dirs = np.stack([ce * np.cos(azg), ce * np.sin(azg), np.sin(elg)],
                    axis=-1)
    return dirs.reshape(-1, 3)


@dataclass
class DepthScan:
    pose: Pose
    directions: np.ndarray  # (n, 3) unit vectors
    ranges: np.ndarray      # (n,) hit range or max range
    kinds: np.ndarray       # (n,) RayKind codes
    hits: np.ndarray        # (n, 3) hit voxel index, -1 when no hit
    resolution: float = field(default=0.0)


def simulate_scan(truth, pose, model):
    """Cast the frustum ray lattice into the ground-truth map."""
    if truth.state_at(pose.position) == VoxelState.OCCUPIED:
        raise PoseInCollision(f"pose at {pose.position} is occupied")
    dirs = np.ascontiguousarray(frustum_directions(pose.yaw, model))
    n = dirs.shape[0]
    ranges = np.empty(n)
    kinds = np.empty(n, np.int32)
    hits = np.empty((n, 3), np.int32)
    o = pose.position - truth.origin
    kernels.cast_ray_batch(truth.cells, o[0], o[1], o[2], dirs,
                           model.range_r, truth.resolution,
                           ranges, kinds, hits)
    ranges[kinds == RayKind.REACHED_END] = model.range_r
    return DepthScan(pose, dirs, ranges, kinds, hits, truth.resolution)


def integrate_scan(vmap, scan):
    """Carve a scan into the explored map: traversed cells become free, hit
    cells become occupied, occupied marks win conflicts and never revert.

    Returns (newly_freed, newly_occupied) counts of unknown-cell transitions.
    """
    o = scan.pose.position - vmap.origin
    if vmap.world_to_index(scan.pose.position) is None:
        raise ValueError("scan pose outside map bounds")
    freed, occ = kernels.integrate_rays(
        vmap.cells, o[0], o[1], o[2], scan.directions, scan.ranges,
        scan.kinds, scan.hits, vmap.resolution)
    return int(freed), int(occ)
