"""Rapidly-exploring random tree growth with clearance-checked edges and
first-sufficient-gain termination."""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NoFreeSample, SeedInvalid
from .gain import optimize_yaw
from .grid import VoxelState


@dataclass
class RrtConfig:
    step_max: float = 1.5
    robot_radius: float = 0.5
    sample_retries: int = 100
    check_step_frac: float = 0.5  # edge sampling step as a fraction of voxel


@dataclass
class SamplingBounds:
    """Either a ball around a center or the full free workspace."""
    center: np.ndarray | None = None
    radius: float = 0.0

    @classmethod
    def vicinity(cls, center, radius):
        if radius <= 0:
            raise ValueError("vicinity radius must be positive")
        return cls(np.asarray(center, float), radius)

    @classmethod
    def full_free_space(cls):
        return cls(None, 0.0)

    @property
    def is_full(self):
        return self.center is None


@dataclass
class RrtNode:
    position: np.ndarray
    yaw_star: float
    gain: int
    parent: "RrtNode | None" = None


class Rejection(Enum):
    COLLISION = "collision"
    DEGENERATE = "degenerate"


@dataclass
class PlanResult:
    found: bool
    branch: list = field(default_factory=list)   # root-to-terminal RrtNodes
    terminal_gain: int = 0
    samples_used: int = 0


def clearance_at(esdf, p):
    return esdf.interpolate(p)


def segment_clear(esdf, a, b, robot_radius, step_frac=0.5):
    """Clearance check of the straight segment a->b at sub-voxel sampling."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    length = float(np.linalg.norm(b - a))
    step = step_frac * esdf.resolution
    n = max(1, int(math.ceil(length / step)))
    pts = a + (b - a) * (np.arange(n + 1) / n)[:, None]
    return bool(np.all(esdf.interpolate_many(pts) >= robot_radius))


def sample_position(bounds, vmap, esdf, rng, cfg):
    """Uniform sample within the bounds, rejected until it lands in known
    free space with robot clearance."""
    lo = vmap.origin
    hi = vmap.origin + np.array(vmap.dims) * vmap.resolution
    for _ in range(cfg.sample_retries):
        if bounds.is_full:
            p = rng.uniform(lo, hi)
        else:
            # uniform in the ball via bounding-cube rejection; geometric
            # rejections do not consume map retries
            while True:
                p = bounds.center + rng.uniform(-bounds.radius,
                                                bounds.radius, 3)
                if np.linalg.norm(p - bounds.center) <= bounds.radius:
                    break
        if vmap.state_at(p) != VoxelState.FREE:
            continue
        if esdf.interpolate(p) < cfg.robot_radius:
            continue
        return p
    raise NoFreeSample("no valid sample within retry budget")


def extend(tree, sample, vmap, esdf, model, gain_cfg, cfg):
    """Connect a sample to its nearest tree node, truncated to step_max,
    rejecting edges that lose clearance. Returns the new node or a
    Rejection."""
    positions = np.array([n.position for n in tree])
    d = np.linalg.norm(positions - np.asarray(sample, float), axis=1)
    nearest = tree[int(np.argmin(d))]
    delta = np.asarray(sample, float) - nearest.position
    dist = float(np.linalg.norm(delta))
    if dist < 1e-9:
        return Rejection.DEGENERATE
    if dist > cfg.step_max:
        target = nearest.position + delta * (cfg.step_max / dist)
    else:
        target = np.asarray(sample, float)
    if vmap.state_at(target) != VoxelState.FREE:
        return Rejection.COLLISION
    if not segment_clear(esdf, nearest.position, target, cfg.robot_radius,
                         cfg.check_step_frac):
        return Rejection.COLLISION
    yaw_star, gain = optimize_yaw(vmap, target, model, gain_cfg)
    node = RrtNode(target, yaw_star, gain, parent=nearest)
    tree.append(node)
    return node


def extract_branch(node):
    """Root-to-node chain of RrtNodes."""
    chain = []
    cur = node
    while cur is not None:
        chain.append(cur)
        cur = cur.parent
    chain.reverse()
    return chain


def grow_until_gain(seed_position, bounds, vmap, esdf, model, gain_cfg,
                    budget, rng, cfg, accept_root=True):
    """Grow a tree from the seed until the first node whose yaw-optimized
    gain reaches g_zero, or the sample budget runs out.

    With accept_root=False the root cannot terminate the search; callers use
    this after its view has already been taken."""
    seed = np.asarray(seed_position, float)
    if (vmap.state_at(seed) != VoxelState.FREE
            or esdf.interpolate(seed) < cfg.robot_radius):
        raise SeedInvalid(f"seed {seed} lacks clearance")
    yaw0, gain0 = optimize_yaw(vmap, seed, model, gain_cfg)
    root = RrtNode(seed, yaw0, gain0, parent=None)
    if accept_root and gain0 >= gain_cfg.g_zero:
        return PlanResult(True, [root], gain0, 0)
    tree = [root]
    for used in range(1, budget + 1):
        try:
            sample = sample_position(bounds, vmap, esdf, rng, cfg)
        except NoFreeSample:
            return PlanResult(False, samples_used=used)
        result = extend(tree, sample, vmap, esdf, model, gain_cfg, cfg)
        if isinstance(result, Rejection):
            continue
        if result.gain >= gain_cfg.g_zero:
            return PlanResult(True, extract_branch(result),
                              result.gain, used)
    return PlanResult(False, samples_used=budget)
