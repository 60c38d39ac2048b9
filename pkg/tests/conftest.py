"""Shared fixtures: small synthetic maps used across the test suite."""
import numpy as np
import pytest

from nbvx.grid import VoxelMap, VoxelState, compute_esdf


def make_room(nx=20, ny=16, nz=12, resolution=0.25):
    """Free box with a one-voxel occupied shell."""
    cells = np.full((nx, ny, nz), VoxelState.OCCUPIED, dtype=np.int8)
    cells[1:-1, 1:-1, 1:-1] = VoxelState.FREE
    return VoxelMap(resolution, np.zeros(3), cells)


def make_room_with_wall(nx=24, ny=16, nz=12, resolution=0.25, wall_x=12,
                        gap=None):
    """Room split by a wall normal to x, optionally pierced by a gap."""
    vmap = make_room(nx, ny, nz, resolution)
    vmap.cells[wall_x, 1:-1, 1:-1] = VoxelState.OCCUPIED
    if gap is not None:
        ys, ye, zs, ze = gap
        vmap.cells[wall_x, ys:ye, zs:ze] = VoxelState.FREE
    return vmap


def make_half_explored(nx=24, ny=16, nz=12, resolution=0.25):
    """Free on the low-x half, unknown on the rest; shell occupied."""
    vmap = make_room(nx, ny, nz, resolution)
    vmap.cells[nx // 2:, 1:-1, 1:-1] = VoxelState.UNKNOWN
    return vmap


@pytest.fixture
def room():
    return make_room()


@pytest.fixture
def room_esdf(room):
    return compute_esdf(room, 2.0)


@pytest.fixture
def half_explored():
    return make_half_explored()
