"""Numba kernels for the hot loops: grid ray traversal, unknown-voxel
counting, scan integration, and bounded BFS.

All geometry here works in grid-local coordinates (world minus map origin)
with cells stored as int8 {0 unknown, 1 free, 2 occupied}.
"""
import numpy as np
from numba import njit

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

RAY_END = 0
RAY_HIT = 1
RAY_LEFT = 2


@njit(cache=True)
def max_ray_cells(max_range, res):
    """Upper bound on voxels an incremental traversal can visit."""
    return int(3.0 * max_range / res) + 8


@njit(cache=True)
def traverse(cells, ox, oy, oz, dx, dy, dz, max_range, res, out_idx):
    """Incremental grid traversal from a grid-local origin along a unit ray.

    Visits voxels in strictly increasing ray-parameter order, stopping at the
    first occupied cell, at max_range, or on leaving the grid. The stopping
    occupied cell is NOT appended to out_idx.

    Returns (n_visited, kind, hit_ix, hit_iy, hit_iz, t_stop) where t_stop is
    the entry distance of the occupied cell for RAY_HIT, max_range for
    RAY_END, and the exit distance for RAY_LEFT.
    """
    nx, ny, nz = cells.shape
    ix = int(np.floor(ox / res))
    iy = int(np.floor(oy / res))
    iz = int(np.floor(oz / res))
    if ix < 0 or ix >= nx or iy < 0 or iy >= ny or iz < 0 or iz >= nz:
        return 0, RAY_LEFT, -1, -1, -1, 0.0

    if dx > 0.0:
        step_x = 1
        tmax_x = ((ix + 1) * res - ox) / dx
        tdelta_x = res / dx
    elif dx < 0.0:
        step_x = -1
        tmax_x = (ix * res - ox) / dx
        tdelta_x = -res / dx
    else:
        step_x = 0
        tmax_x = np.inf
        tdelta_x = np.inf
    if dy > 0.0:
        step_y = 1
        tmax_y = ((iy + 1) * res - oy) / dy
        tdelta_y = res / dy
    elif dy < 0.0:
        step_y = -1
        tmax_y = (iy * res - oy) / dy
        tdelta_y = -res / dy
    else:
        step_y = 0
        tmax_y = np.inf
        tdelta_y = np.inf
    if dz > 0.0:
        step_z = 1
        tmax_z = ((iz + 1) * res - oz) / dz
        tdelta_z = res / dz
    elif dz < 0.0:
        step_z = -1
        tmax_z = (iz * res - oz) / dz
        tdelta_z = -res / dz
    else:
        step_z = 0
        tmax_z = np.inf
        tdelta_z = np.inf

    n = 0
    t_cur = 0.0
    while True:
        if cells[ix, iy, iz] == OCCUPIED:
            return n, RAY_HIT, ix, iy, iz, t_cur
        out_idx[n, 0] = ix
        out_idx[n, 1] = iy
        out_idx[n, 2] = iz
        n += 1
        # tie-break order x < y < z keeps the traversal deterministic
        if tmax_x <= tmax_y and tmax_x <= tmax_z:
            t_next = tmax_x
            if t_next > max_range:
                return n, RAY_END, -1, -1, -1, max_range
            ix += step_x
            tmax_x += tdelta_x
            if ix < 0 or ix >= nx:
                return n, RAY_LEFT, -1, -1, -1, t_next
        elif tmax_y <= tmax_z:
            t_next = tmax_y
            if t_next > max_range:
                return n, RAY_END, -1, -1, -1, max_range
            iy += step_y
            tmax_y += tdelta_y
            if iy < 0 or iy >= ny:
                return n, RAY_LEFT, -1, -1, -1, t_next
        else:
            t_next = tmax_z
            if t_next > max_range:
                return n, RAY_END, -1, -1, -1, max_range
            iz += step_z
            tmax_z += tdelta_z
            if iz < 0 or iz >= nz:
                return n, RAY_LEFT, -1, -1, -1, t_next
        t_cur = t_next


@njit(cache=True)
def cast_ray_batch(cells, ox, oy, oz, dirs, max_range, res,
                   ranges, kinds, hits):
    """Cast one ray per row of dirs; fill ranges/kinds/hit indices."""
    n_rays = dirs.shape[0]
    scratch = np.empty((max_ray_cells(max_range, res), 3), np.int32)
    for i in range(n_rays):
        n, kind, hx, hy, hz, t = traverse(
            cells, ox, oy, oz, dirs[i, 0], dirs[i, 1], dirs[i, 2],
            max_range, res, scratch)
        kinds[i] = kind
        ranges[i] = t
        hits[i, 0] = hx
        hits[i, 1] = hy
        hits[i, 2] = hz


@njit(cache=True)
def count_unknown_to_targets(cells, ox, oy, oz, targets, res,
                             stamp, stamp_val):
    """Count distinct unknown voxels traversed by rays cast from the origin
    to each target point, occlusion respected. Dedup via the stamp array."""
    cnt = 0
    # longest ray bounds the scratch size
    max_r = 0.0
    for i in range(targets.shape[0]):
        dx = targets[i, 0] - ox
        dy = targets[i, 1] - oy
        dz = targets[i, 2] - oz
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        if r > max_r:
            max_r = r
    scratch = np.empty((max_ray_cells(max_r, res), 3), np.int32)
    for i in range(targets.shape[0]):
        dx = targets[i, 0] - ox
        dy = targets[i, 1] - oy
        dz = targets[i, 2] - oz
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        if r < 1e-12:
            continue
        n, kind, hx, hy, hz, t = traverse(
            cells, ox, oy, oz, dx / r, dy / r, dz / r, r, res, scratch)
        for k in range(n):
            a = scratch[k, 0]
            b = scratch[k, 1]
            c = scratch[k, 2]
            if cells[a, b, c] == UNKNOWN and stamp[a, b, c] != stamp_val:
                stamp[a, b, c] = stamp_val
                cnt += 1
    return cnt


@njit(cache=True)
def integrate_rays(cells, ox, oy, oz, dirs, ranges, kinds, hits, res):
    """Write a depth scan into an explored map.

    Occupied marks are applied first so they win any in-scan conflict, then
    each ray frees the cells it traversed. Occupied never reverts to free.
    Returns (newly_freed, newly_occupied) counts of transitions out of
    unknown.
    """
    newly_free = 0
    newly_occ = 0
    n_rays = dirs.shape[0]
    for i in range(n_rays):
        if kinds[i] == RAY_HIT:
            a = hits[i, 0]
            b = hits[i, 1]
            c = hits[i, 2]
            if cells[a, b, c] != OCCUPIED:
                if cells[a, b, c] == UNKNOWN:
                    newly_occ += 1
                cells[a, b, c] = OCCUPIED
    max_r = 0.0
    for i in range(n_rays):
        if ranges[i] > max_r:
            max_r = ranges[i]
    scratch = np.empty((max_ray_cells(max_r, res), 3), np.int32)
    for i in range(n_rays):
        n, kind, hx, hy, hz, t = traverse(
            cells, ox, oy, oz, dirs[i, 0], dirs[i, 1], dirs[i, 2],
            ranges[i], res, scratch)
        for k in range(n):
            a = scratch[k, 0]
            b = scratch[k, 1]
            c = scratch[k, 2]
            if cells[a, b, c] == UNKNOWN:
                cells[a, b, c] = FREE
                newly_free += 1
    return newly_free, newly_occ


@njit(cache=True)
def is_frontier_cell(cells, ix, iy, iz):
    """Free cell with at least one unknown 6-neighbor. Out-of-bounds
    neighbors count as occupied, never unknown."""
    if cells[ix, iy, iz] != FREE:
        return False
    nx, ny, nz = cells.shape
    if ix > 0 and cells[ix - 1, iy, iz] == UNKNOWN:
        return True
    if ix < nx - 1 and cells[ix + 1, iy, iz] == UNKNOWN:
        return True
    if iy > 0 and cells[ix, iy - 1, iz] == UNKNOWN:
        return True
    if iy < ny - 1 and cells[ix, iy + 1, iz] == UNKNOWN:
        return True
    if iz > 0 and cells[ix, iy, iz - 1] == UNKNOWN:
        return True
    if iz < nz - 1 and cells[ix, iy, iz + 1] == UNKNOWN:
        return True
    return False


@njit(cache=True)
def bfs_frontier_count(cells, sx, sy, sz, radius_vox):
    """BFS over free cells from a start cell, bounded by Euclidean distance
    (in voxels) between cell centers; returns the frontier-cell count among
    the visited set."""
    nx, ny, nz = cells.shape
    if cells[sx, sy, sz] != FREE:
        return 0
    r2 = radius_vox * radius_vox
    visited = np.zeros((nx, ny, nz), np.uint8)
    queue = np.empty((nx * ny * nz, 3), np.int32)
    head = 0
    tail = 0
    queue[tail, 0] = sx
    queue[tail, 1] = sy
    queue[tail, 2] = sz
    tail += 1
    visited[sx, sy, sz] = 1
    count = 0
    while head < tail:
        cx = queue[head, 0]
        cy = queue[head, 1]
        cz = queue[head, 2]
        head += 1
        if is_frontier_cell(cells, cx, cy, cz):
            count += 1
        for d in range(6):
            ax, ay, az = cx, cy, cz
            if d == 0:
                ax += 1
            elif d == 1:
                ax -= 1
            elif d == 2:
                ay += 1
            elif d == 3:
                ay -= 1
            elif d == 4:
                az += 1
            else:
                az -= 1
            if ax < 0 or ax >= nx or ay < 0 or ay >= ny or az < 0 or az >= nz:
                continue
            if visited[ax, ay, az]:
                continue
            if cells[ax, ay, az] != FREE:
                continue
            ddx = float(ax - sx)
            ddy = float(ay - sy)
            ddz = float(az - sz)
            if ddx * ddx + ddy * ddy + ddz * ddz > r2:
                continue
            visited[ax, ay, az] = 1
            queue[tail, 0] = ax
            queue[tail, 1] = ay
            queue[tail, 2] = az
            tail += 1
    return count


@njit(cache=True)
def flood_fill_free(cells, sx, sy, sz):
    """6-connected flood fill over free cells; returns a uint8 mask of the
    reachable component."""
    nx, ny, nz = cells.shape
    mask = np.zeros((nx, ny, nz), np.uint8)
    if cells[sx, sy, sz] != FREE:
        return mask
    queue = np.empty((nx * ny * nz, 3), np.int32)
    head = 0
    tail = 0
    queue[tail, 0] = sx
    queue[tail, 1] = sy
    queue[tail, 2] = sz
    tail += 1
    mask[sx, sy, sz] = 1
    while head < tail:
        cx = queue[head, 0]
        cy = queue[head, 1]
        cz = queue[head, 2]
        head += 1
        for d in range(6):
            ax, ay, az = cx, cy, cz
            if d == 0:
                ax += 1
            elif d == 1:
                ax -= 1
            elif d == 2:
                ay += 1
            elif d == 3:
                ay -= 1
            elif d == 4:
                az += 1
            else:
                az -= 1
            if ax < 0 or ax >= nx or ay < 0 or ay >= ny or az < 0 or az >= nz:
                continue
            if mask[ax, ay, az] or cells[ax, ay, az] != FREE:
                continue
            mask[ax, ay, az] = 1
            queue[tail, 0] = ax
            queue[tail, 1] = ay
            queue[tail, 2] = az
            tail += 1
    return mask
