"""Voxel occupancy map, ray traversal, frontier test, and the truncated
Euclidean distance field with its interpolated gradient."""
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage

from . import kernels
from .kernels import RAY_END, RAY_HIT, RAY_LEFT


class VoxelState(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


class RayKind(IntEnum):
    REACHED_END = RAY_END
    HIT_OCCUPIED = RAY_HIT
    LEFT_BOUNDS = RAY_LEFT


@dataclass
class RayHit:
    kind: RayKind
    visited: np.ndarray          # (n, 3) int32 voxel indices, hit cell excluded
    hit_index: tuple | None      # first occupied cell for HIT_OCCUPIED
    t_stop: float                # entry distance of the stop event


@dataclass
class VoxelMap:
    """3D grid of {unknown, free, occupied} cells. World points outside the
    grid bounds report occupied (hard world boundary)."""
    resolution: float
    origin: np.ndarray
    cells: np.ndarray  # int8, shape (nx, ny, nz)
    _stamp: np.ndarray = field(default=None, repr=False, compare=False)
    _stamp_val: int = field(default=0, repr=False, compare=False)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if min(self.cells.shape) < 1:
            raise ValueError("all dims must be >= 1")

    @classmethod
    def unknown(cls, resolution, origin, dims):
        return cls(resolution, np.asarray(origin, float),
                   np.zeros(dims, dtype=np.int8))

    @classmethod
    def free(cls, resolution, origin, dims):
        return cls(resolution, np.asarray(origin, float),
                   np.full(dims, VoxelState.FREE, dtype=np.int8))

    @property
    def dims(self):
        return self.cells.shape

    def like_unknown(self):
        """Fresh all-unknown map sharing this map's geometry."""
        return VoxelMap.unknown(self.resolution, self.origin.copy(),
                                self.cells.shape)

    def copy(self):
        return VoxelMap(self.resolution, self.origin.copy(), self.cells.copy())

    def world_to_index(self, p):
        """Voxel index containing world point p, or None if out of bounds."""
        idx = np.floor((np.asarray(p, float) - self.origin)
                       / self.resolution).astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= np.array(self.cells.shape)):
            return None
        return tuple(int(v) for v in idx)

    def index_center(self, idx):
        return self.origin + (np.asarray(idx, float) + 0.5) * self.resolution

    def state_at(self, p):
        idx = self.world_to_index(p)
        if idx is None:
            return VoxelState.OCCUPIED
        return VoxelState(self.cells[idx])

    def is_frontier(self, idx):
        ix, iy, iz = idx
        return bool(kernels.is_frontier_cell(self.cells, ix, iy, iz))

    def frontier_count(self):
        """Total frontier cells; vectorized for termination checks."""
        c = self.cells
        free = c == VoxelState.FREE
        unknown = c == VoxelState.UNKNOWN
        near_unknown = np.zeros_like(free)
        for axis in range(3):
            for shift in (1, -1):
                rolled = np.zeros_like(unknown)
                src = [slice(None)] * 3
                dst = [slice(None)] * 3
                if shift == 1:
                    src[axis] = slice(1, None)
                    dst[axis] = slice(None, -1)
                else:
                    src[axis] = slice(None, -1)
                    dst[axis] = slice(1, None)
                rolled[tuple(dst)] = unknown[tuple(src)]
                near_unknown |= rolled
        return int(np.count_nonzero(free & near_unknown))

    def next_stamp(self):
        """Reusable uint32 scratch for per-query voxel dedup."""
        if self._stamp is None or self._stamp.shape != self.cells.shape:
            self._stamp = np.zeros(self.cells.shape, np.uint32)
            self._stamp_val = 0
        self._stamp_val += 1
        if self._stamp_val >= np.iinfo(np.uint32).max:
            self._stamp[:] = 0
            self._stamp_val = 1
        return self._stamp, self._stamp_val

    def export_csv(self, path):
        """Dump cells as `ix,iy,iz,state` rows (unknown cells omitted)."""
        with open(path, "w", newline="\n") as f:
            f.write("ix,iy,iz,state\n")
            idx = np.argwhere(self.cells != VoxelState.UNKNOWN)
            for ix, iy, iz in idx:
                f.write(f"{ix},{iy},{iz},{int(self.cells[ix, iy, iz])}\n")


def raycast(vmap, origin, direction, max_range):
    """Traverse voxels along a unit ray, stopping at the first occupied
    cell, at max_range, or at the grid bounds. Unknown cells do not stop
    the ray."""
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    o = np.asarray(origin, float) - vmap.origin
    d = np.asarray(direction, float)
    scratch = np.empty((kernels.max_ray_cells(max_range, vmap.resolution), 3),
                       np.int32)
    n, kind, hx, hy, hz, t = kernels.traverse(
        vmap.cells, o[0], o[1], o[2], d[0], d[1], d[2],
        max_range, vmap.resolution, scratch)
    hit = (hx, hy, hz) if kind == RAY_HIT else None
    return RayHit(RayKind(kind), scratch[:n].copy(), hit, float(t))


@dataclass
class EsdfField:
    """Per-voxel distance to the nearest obstacle cell center (or grid
    boundary face), truncated at d_max. Unknown counts as obstacle."""
    distances: np.ndarray
    d_max: float
    resolution: float
    origin: np.ndarray

    def interpolate(self, p):
        """Trilinear interpolation over cell centers, clamped at the border."""
        u = (np.asarray(p, float) - self.origin) / self.resolution - 0.5
        d = self.distances
        nx, ny, nz = d.shape
        u = np.minimum(np.maximum(u, 0.0),
                       np.array([nx - 1, ny - 1, nz - 1], float))
        i0 = np.floor(u).astype(int)
        i0 = np.minimum(i0, np.array([nx - 2, ny - 2, nz - 2]))
        i0 = np.maximum(i0, 0)
        f = u - i0
        x0, y0, z0 = i0
        c = d[x0:x0 + 2, y0:y0 + 2, z0:z0 + 2]
        cx = c[0] * (1 - f[0]) + c[1] * f[0]
        cy = cx[0] * (1 - f[1]) + cx[1] * f[1]
        return float(cy[0] * (1 - f[2]) + cy[1] * f[2])

    def interpolate_many(self, pts):
        """Batch trilinear interpolation, (n, 3) points to (n,) distances."""
        u = (np.asarray(pts, float) - self.origin) / self.resolution - 0.5
        d = self.distances
        nx, ny, nz = d.shape
        u = np.clip(u, 0.0, np.array([nx - 1, ny - 1, nz - 1], float))
        i0 = np.floor(u).astype(int)
        i0 = np.clip(i0, 0, np.array([nx - 2, ny - 2, nz - 2]))
        f = u - i0
        x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        c00 = d[x0, y0, z0] * (1 - fx) + d[x0 + 1, y0, z0] * fx
        c10 = d[x0, y0 + 1, z0] * (1 - fx) + d[x0 + 1, y0 + 1, z0] * fx
        c01 = d[x0, y0, z0 + 1] * (1 - fx) + d[x0 + 1, y0, z0 + 1] * fx
        c11 = d[x0, y0 + 1, z0 + 1] * (1 - fx) + d[x0 + 1, y0 + 1, z0 + 1] * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        return c0 * (1 - fz) + c1 * fz


def compute_esdf(vmap, d_max):
    """Exact Euclidean distance transform to the obstacle set (occupied or
    unknown cells, plus the implicit boundary), truncated at d_max."""
    if d_max < vmap.resolution:
        raise ValueError("d_max must be >= map resolution")
    r = vmap.resolution
    free = vmap.cells == VoxelState.FREE
    if free.all():
        dist = np.full(vmap.cells.shape, np.inf)
    else:
        dist = ndimage.distance_transform_edt(free, sampling=r)
    nx, ny, nz = vmap.cells.shape
    fx = (np.minimum(np.arange(nx), nx - 1 - np.arange(nx)) + 0.5) * r
    fy = (np.minimum(np.arange(ny), ny - 1 - np.arange(ny)) + 0.5) * r
    fz = (np.minimum(np.arange(nz), nz - 1 - np.arange(nz)) + 0.5) * r
    face = np.minimum.reduce(np.broadcast_arrays(
        fx[:, None, None], fy[None, :, None], fz[None, None, :]))
    dist = np.minimum(dist, face)
    dist[~free] = 0.0
    np.clip(dist, 0.0, d_max, out=dist)
    return EsdfField(dist, d_max, r, vmap.origin.copy())


def esdf_gradient(field, p):
    """Central-difference gradient of the interpolated distance at p,
    step 0.1 voxel."""
    h = 0.1 * field.resolution
    p = np.asarray(p, float)
    g = np.empty(3)
    for a in range(3):
        dp = np.zeros(3)
        dp[a] = h
        g[a] = (field.interpolate(p + dp) - field.interpolate(p - dp)) / (2 * h)
    return g
