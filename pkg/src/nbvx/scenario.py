"""Scenario construction: ASCII map loading with 2.5D extrusion, the
dead-end generator, and bundled fixtures."""
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ScenarioParseError, StartInCollision
from .grid import VoxelMap, VoxelState
from .sensor import Pose


@dataclass
class Scenario:
    truth: VoxelMap
    starts: list
    name: str = ""
    meta: dict = field(default_factory=dict)


def _build_truth(char_rows, resolution, height, cell):
    """Extrude an ASCII grid into a closed voxel map with a one-voxel
    occupied shell. Columns map to x, rows to y."""
    k = cell / resolution
    if abs(k - round(k)) > 1e-9:
        raise ScenarioParseError(
            f"cell size {cell} is not a multiple of resolution {resolution}")
    k = int(round(k))
    nz_in = int(round(height / resolution))
    if nz_in < 1:
        raise ScenarioParseError("height smaller than one voxel")
    n_rows = len(char_rows)
    n_cols = len(char_rows[0])
    nx = n_cols * k + 2
    ny = n_rows * k + 2
    nz = nz_in + 2
    cells = np.full((nx, ny, nz), VoxelState.OCCUPIED, dtype=np.int8)
    for row_i, row in enumerate(char_rows):
        for col_i, ch in enumerate(row):
            if ch == ".":
                xs = 1 + col_i * k
                ys = 1 + row_i * k
                cells[xs:xs + k, ys:ys + k, 1:1 + nz_in] = VoxelState.FREE
    return VoxelMap(resolution, np.zeros(3), cells)


def parse_scenario(text, name=""):
    """Parse the ASCII scenario format: a `r= h= levels=` header, rows of
    `#`/`.`, then one or more `start: x y z yaw` lines."""
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise ScenarioParseError("line 1: missing header")
    header = {}
    for tok in lines[0].split():
        if "=" not in tok:
            raise ScenarioParseError(f"line 1: bad header token {tok!r}")
        key, val = tok.split("=", 1)
        header[key] = val
    try:
        resolution = float(header["r"])
        height = float(header["h"])
        levels = int(header.get("levels", "1"))
        cell = float(header.get("cell", "1.0"))
    except (KeyError, ValueError) as exc:
        raise ScenarioParseError(f"line 1: bad header ({exc})") from exc
    if levels != 1:
        raise ScenarioParseError("line 1: only levels=1 is supported")

    rows = []
    starts_raw = []
    for ln, line in enumerate(lines[1:], start=2):
        stripped = line.rstrip()
        if not stripped:
            continue
        if stripped.startswith("start:"):
            parts = stripped[len("start:"):].split()
            if len(parts) != 4:
                raise ScenarioParseError(
                    f"line {ln}: start needs `x y z yaw`")
            try:
                vals = [float(v) for v in parts]
            except ValueError as exc:
                raise ScenarioParseError(f"line {ln}: {exc}") from exc
            starts_raw.append(vals)
            continue
        for col, ch in enumerate(stripped, start=1):
            if ch not in ".#":
                raise ScenarioParseError(
                    f"line {ln}, col {col}: unexpected character {ch!r}")
        rows.append(stripped)
    if not rows:
        raise ScenarioParseError("no map rows found")
    width = max(len(r) for r in rows)
    rows = [r.ljust(width, "#") for r in rows]
    if not starts_raw:
        raise ScenarioParseError("no start pose found")

    truth = _build_truth(rows, resolution, height, cell)
    starts = []
    for x, y, z, yaw in starts_raw:
        pose = Pose(np.array([x, y, z]), yaw)
        if truth.state_at(pose.position) != VoxelState.FREE:
            raise StartInCollision(f"start {x} {y} {z} is not free")
        starts.append(pose)
    return Scenario(truth, starts, name)


def load_scenario(path):
    with open(path, "r") as f:
        text = f.read()
    name = str(path).rsplit("/", 1)[-1].removesuffix(".txt")
    return parse_scenario(text, name)


def load_bundled(name):
    """Load a fixture shipped with the package: small_maze, large_maze, or
    deadend (generated)."""
    if name == "deadend":
        return generate_deadend(42.0, 2.0)
    ref = resources.files("nbvx.scenarios").joinpath(f"{name}.txt")
    if not ref.is_file():
        raise ScenarioParseError(f"no bundled scenario named {name!r}")
    return parse_scenario(ref.read_text(), name)


def generate_deadend(length, width, resolution=0.25, height=2.0,
                     chamber=8.0, robot_radius=0.5):
    """Corridor closed at one end, opening into an unexplored chamber at the
    other; the start pose sits at the closed end.

    Corridors longer than one leg snake back and forth in a compact block,
    which makes naive full-space tree growth toward the far chamber
    expensive. The scenario meta carries the corridor centerline and the
    x-plane of the chamber mouth for scripted setups.
    """
    if not length > width > 2 * robot_radius:
        raise ValueError("need length > width > 2*robot_radius")
    cell = 0.5
    r = resolution
    width_ch = max(int(round(width / cell)), 2)
    wall_ch = 2
    # legs longer than twice the sensor radius so a frontier-search ball
    # cannot wrap around a fold; odd leg count so the last leg always runs
    # left-to-right
    n_legs = max(1, int(length // 12.0))
    if n_legs % 2 == 0:
        n_legs -= 1
    leg_ch = max(int(round(length / n_legs / cell)), 2 * width_ch)
    chamber_ch = int(round(chamber / cell))
    n_cols = leg_ch + wall_ch + chamber_ch
    pitch = width_ch + wall_ch
    last_row = (n_legs - 1) * pitch
    n_rows = max(last_row + width_ch, last_row + chamber_ch)
    grid = [["#"] * n_cols for _ in range(n_rows)]

    def carve(r0, r1, c0, c1):
        for row_i in range(max(r0, 0), min(r1, n_rows)):
            for col_i in range(max(c0, 0), min(c1, n_cols)):
                grid[row_i][col_i] = "."

    for i in range(n_legs):
        r0 = i * pitch
        carve(r0, r0 + width_ch, 0, leg_ch)
        if i + 1 < n_legs:
            # connector at the right end for even legs, left for odd
            c0 = leg_ch - width_ch if i % 2 == 0 else 0
            carve(r0, r0 + pitch + width_ch, c0, c0 + width_ch)
    carve(last_row, last_row + chamber_ch, leg_ch + wall_ch, n_cols)
    carve(last_row, last_row + width_ch, leg_ch, leg_ch + wall_ch)  # mouth

    rows = ["".join(row) for row in grid]
    truth = _build_truth(rows, resolution, height, cell)

    def world(col, row):
        return np.array([r + col * cell, r + row * cell, r + height / 2])

    half_w = width_ch / 2
    path = [world(half_w, half_w)]
    for i in range(n_legs):
        y = i * pitch + half_w
        far_x = leg_ch - half_w if i % 2 == 0 else half_w
        path.append(world(far_x, y))
        if i + 1 < n_legs:
            # drop down the connector before traversing the next leg
            path.append(world(far_x, y + pitch))
    mouth_x = r + leg_ch * cell
    path.append(world(leg_ch + wall_ch + 1, last_row + half_w))
    start = Pose(path[0].copy(), 0.0)
    if truth.state_at(start.position) != VoxelState.FREE:
        raise StartInCollision("generated start is not free")
    chamber_y = (r + last_row * cell, r + (last_row + chamber_ch) * cell)
    return Scenario(truth, [start], f"deadend_{length:g}x{width:g}",
                    meta={"mouth_x": mouth_x, "chamber_y": chamber_y,
                          "path": path,
                          "corridor_volume": length * width * height})
