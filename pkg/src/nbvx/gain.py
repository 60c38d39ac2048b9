"""Exploration gain: cylindrical slice precomputation, windowed yaw
optimization, and the exact pyramidal-frustum oracle."""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import PositionNotFree
from .grid import VoxelState
from .sensor import frustum_directions


@dataclass
class GainConfig:
    """Angular slice step for the cylinder approximation and the voxel-count
    threshold for a viewpoint to count as sufficiently informative."""
    delta_theta: float = math.radians(5.0)
    g_zero: int = 20

    def __post_init__(self):
        n = round(2 * math.pi / self.delta_theta)
        if abs(n * self.delta_theta - 2 * math.pi) > 2 * math.pi * 1e-6:
            raise ValueError("delta_theta must divide 2*pi")
        if n < 8:
            raise ValueError("need at least 8 slices")
        if self.g_zero < 1:
            raise ValueError("g_zero must be >= 1")

    @property
    def n_slices(self):
        return round(2 * math.pi / self.delta_theta)

    @classmethod
    def ideal(cls, resolution, range_r, g_zero=20):
        """Slice step at one voxel of arc at full range."""
        n = max(8, round(2 * math.pi / (resolution / range_r)))
        return cls(2 * math.pi / n, g_zero)


@dataclass
class SliceGains:
    position: np.ndarray
    gains: np.ndarray  # (n_slices,) unknown-voxel counts
    delta_theta: float

    def theta(self, i):
        return -math.pi + i * self.delta_theta


def cylinder_height(model):
    """Height of the cylinder enclosing the vertical FOV at full range."""
    return 2.0 * model.range_r * math.sin(model.v_fov / 2.0)


def _require_free(vmap, position):
    if vmap.state_at(position) != VoxelState.FREE:
        raise PositionNotFree(f"position {np.asarray(position)} is not free")


def slice_gains(vmap, position, model, cfg):
    """Unknown-voxel count per vertical slice of the sensing cylinder.

    For each slice heading, rays go from the sensor origin to voxel-spaced
    points on the vertical boundary segment of the cylinder; rays stop short
    at occupied cells and each unknown voxel counts once per slice.
    """
    _require_free(vmap, position)
    p = np.asarray(position, float)
    r = vmap.resolution
    half_h = cylinder_height(model) / 2.0
    m = int(math.floor(half_h / r + 1e-9))
    z_offsets = np.arange(-m, m + 1) * r
    n = cfg.n_slices
    gains = np.empty(n, np.int64)
    o = p - vmap.origin
    for i in range(n):
        theta = -math.pi + i * cfg.delta_theta
        targets = np.empty((z_offsets.size, 3))
        targets[:, 0] = o[0] + model.range_r * math.cos(theta)
        targets[:, 1] = o[1] + model.range_r * math.sin(theta)
        targets[:, 2] = o[2] + z_offsets
        stamp, val = vmap.next_stamp()
        gains[i] = kernels.count_unknown_to_targets(
            vmap.cells, o[0], o[1], o[2], targets, r, stamp, val)
    return SliceGains(p, gains, cfg.delta_theta)


def _circular_distance(a, b):
    d = (a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def window_gain(slices, theta, model):
    """Sum of slice gains whose heading lies within h_fov/2 of theta,
    wrapping across +-pi."""
    half = model.h_fov / 2.0 + 1e-12
    total = 0
    for i, g in enumerate(slices.gains):
        if _circular_distance(slices.theta(i), theta) <= half:
            total += int(g)
    return total


def _window_sums(gains, delta_theta, h_fov):
    """Windowed circular sums for every discrete heading at once."""
    n = gains.size
    k = int(math.floor((h_fov / 2.0 + 1e-12) / delta_theta + 1e-9))
    k = min(k, (n - 1) // 2 if 2 * k + 1 > n else k)
    offsets = np.arange(-k, k + 1)
    idx = (np.arange(n)[:, None] + offsets[None, :]) % n
    sums = gains[idx].sum(axis=1)
    if 2 * k + 1 >= n:
        sums[:] = gains.sum()
    return sums


def optimize_yaw(vmap, position, model, cfg, slices=None):
    """Pick the discrete heading maximizing the windowed gain; ties break to
    the smallest slice index."""
    if slices is None:
        slices = slice_gains(vmap, position, model, cfg)
    sums = _window_sums(slices.gains, cfg.delta_theta, model.h_fov)
    i_star = int(np.argmax(sums))  # argmax returns the first max index
    return -math.pi + i_star * cfg.delta_theta, int(sums[i_star])


def frustum_gain_oracle(vmap, pose, model):
    """Count distinct unknown voxels visible in the exact pyramidal frustum,
    via a dense ray cast at ray_res with occlusion."""
    _require_free(vmap, pose.position)
    dirs = np.ascontiguousarray(frustum_directions(pose.yaw, model))
    o = pose.position - vmap.origin
    targets = o[None, :] + dirs * model.range_r
    stamp, val = vmap.next_stamp()
    return int(kernels.count_unknown_to_targets(
        vmap.cells, o[0], o[1], o[2], targets, vmap.resolution, stamp, val))
