"""Top-level exploration loop: three-tier sampling with history reseeding,
trajectory execution against the simulator, and the receding-horizon
baseline planner."""
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .errors import RepairFailed, SeedInvalid, StuckNoPlan
from .gain import GainConfig, frustum_gain_oracle
from .grid import VoxelState, compute_esdf
from .history import (HistoryConfig, HistoryGraph, graph_shortest_path,
                      maintain_step, nearest_potential_node, record_pose)
from .rrt import (PlanResult, RrtConfig, SamplingBounds, grow_until_gain,
                  sample_position, segment_clear)
from .sensor import Pose, SensorModel, integrate_scan, simulate_scan
from .trajectory import (DynamicLimits, LinearProfile, repair, simplify,
                         unwrap_yaws)


class PlannerMode(Enum):
    AUGMENTED = "augmented"
    AUGMENTED_NOHISTORY = "augmented-nohistory"
    BASELINE = "baseline"


@dataclass
class ExplorerConfig:
    mode: PlannerMode = PlannerMode.AUGMENTED
    vicinity_radius: float = 4.0
    sample_budget_per_tier: int = 400
    full_space_budget: int = 3000
    baseline_lambda: float = 0.5
    sense_interval: float = 0.2
    esdf_d_max: float = 2.0
    coverage_stop: float = 0.98
    max_steps: int = 600
    maintenance_budget: int = 20
    baseline_exhaust_limit: int = 3
    stall_steps: int = 10        # executed steps without revealing anything
    stall_coverage: float = 0.9  # stall stop armed only above this coverage
    sensor: SensorModel = field(default_factory=SensorModel)
    gain: GainConfig = field(default_factory=GainConfig)
    limits: DynamicLimits = field(default_factory=DynamicLimits)
    rrt: RrtConfig = field(default_factory=RrtConfig)
    history: HistoryConfig = field(default_factory=HistoryConfig)


@dataclass
class StepOutcome:
    kind: str                      # "executed", "finished", "exhausted"
    trajectory: object = None
    nbv: Pose = None
    tier_used: int = 0
    samples_used: int = 0
    computation_time: float = 0.0
    reseed_point: np.ndarray = None


@dataclass
class ExplorationState:
    truth: object
    explored: object
    esdf: object
    graph: HistoryGraph
    pose: Pose
    baseline_tail: list = field(default_factory=list)  # retained best branch


def _dedupe(points, eps=1e-6):
    out = [points[0]]
    for p in points[1:]:
        if np.linalg.norm(p - out[-1]) > eps:
            out.append(p)
    return out


def _waypoint_yaws(pts, start_yaw, final_yaw):
    """Start yaw, segment headings at interior waypoints, NBV yaw at the
    end."""
    yaws = [start_yaw]
    for i in range(1, len(pts) - 1):
        d = pts[i + 1] - pts[i]
        if math.hypot(d[0], d[1]) > 1e-9:
            yaws.append(math.atan2(d[1], d[0]))
        else:
            yaws.append(yaws[-1])
    yaws.append(final_yaw)
    return yaws


def _fallback_polyline(pts, yaws, limits):
    """Per-edge rest-to-rest following at half speed when smoothing fails."""
    slow = DynamicLimits(limits.v_max / 2, limits.a_max,
                         limits.yaw_rate_max)
    profiles = []
    for i in range(len(pts) - 1):
        profiles.append(LinearProfile(pts[i], pts[i + 1], yaws[i],
                                      yaws[i + 1], slow))
    return ChainedProfile(profiles)


class ChainedProfile:
    """Concatenation of motion profiles sharing the Trajectory interface."""

    def __init__(self, profiles):
        self.profiles = profiles
        self.knots = np.concatenate(
            [[0.0], np.cumsum([p.total_time for p in profiles])])

    @property
    def total_time(self):
        return float(self.knots[-1])

    def _locate(self, t):
        t = min(max(t, 0.0), self.total_time)
        s = int(np.searchsorted(self.knots, t, side="right")) - 1
        s = min(max(s, 0), len(self.profiles) - 1)
        return self.profiles[s], t - self.knots[s]

    def position(self, t):
        p, tl = self._locate(t)
        return p.position(tl)

    def velocity(self, t):
        p, tl = self._locate(t)
        return p.velocity(tl)

    def acceleration(self, t):
        p, tl = self._locate(t)
        return p.acceleration(tl)

    def yaw(self, t):
        p, tl = self._locate(t)
        return p.yaw(tl)

    def path_length(self, dt=0.02):
        return sum(p.path_length() for p in self.profiles)


def _build_trajectory(state, cfg, prefix, branch):
    """Concatenate the optional graph prefix with the RRT branch, simplify,
    smooth, and repair into an executable trajectory."""
    terminal = branch[-1]
    pts = list(prefix or []) + [n.position for n in branch]
    pts = _dedupe([np.asarray(p, float) for p in pts])
    nbv = Pose(terminal.position.copy(), terminal.yaw_star)
    if len(pts) < 2:
        # yaw-in-place at the current position
        traj = LinearProfile(state.pose.position, state.pose.position,
                             state.pose.yaw, terminal.yaw_star, cfg.limits)
        return traj, nbv
    simplified = simplify(pts, state.esdf, cfg.rrt.robot_radius)
    yaws = _waypoint_yaws(simplified, state.pose.yaw, terminal.yaw_star)
    try:
        traj = repair(simplified, state.esdf, cfg.limits,
                      robot_radius=cfg.rrt.robot_radius, yaws=yaws)
    except RepairFailed:
        traj = _fallback_polyline(simplified, unwrap_yaws(yaws), cfg.limits)
    return traj, nbv


def _repeats_current_pose(result, pose):
    """True when the plan is the root alone with the yaw already held; such
    a view was harvested by the previous step and cannot inform again."""
    if not result.found or len(result.branch) != 1:
        return False
    node = result.branch[0]
    if np.linalg.norm(node.position - pose.position) > 1e-9:
        return False
    dyaw = (node.yaw_star - pose.yaw + math.pi) % (2 * math.pi) - math.pi
    return abs(dyaw) < 1e-9


def _grow_from_pose(state, cfg, rng, bounds, budget):
    """Tier growth seeded at the current pose; a root-only plan repeating
    the held yaw is retried with the root barred as terminal."""
    try:
        result = grow_until_gain(
            state.pose.position, bounds, state.explored, state.esdf,
            cfg.sensor, cfg.gain, budget, rng, cfg.rrt)
    except SeedInvalid:
        return PlanResult(False, samples_used=0)
    if not _repeats_current_pose(result, state.pose):
        return result
    retry = grow_until_gain(
        state.pose.position, bounds, state.explored, state.esdf,
        cfg.sensor, cfg.gain, budget, rng, cfg.rrt, accept_root=False)
    retry.samples_used += result.samples_used
    return retry


def explore_step(state, cfg, rng):
    """One augmented planning step: vicinity sampling, history reseeding,
    then full-free-space sampling."""
    samples = 0
    t1 = _grow_from_pose(
        state, cfg, rng,
        SamplingBounds.vicinity(state.pose.position, cfg.vicinity_radius),
        cfg.sample_budget_per_tier)
    samples += t1.samples_used
    if t1.found:
        traj, nbv = _build_trajectory(state, cfg, None, t1.branch)
        return StepOutcome("executed", traj, nbv, 1, samples)

    prefix = None
    seed = state.pose.position
    reseed_point = None
    if cfg.mode is PlannerMode.AUGMENTED and len(state.graph):
        node = nearest_potential_node(state.graph, state.pose.position)
        if node is not None:
            prefix = graph_shortest_path(state.graph, state.pose.position,
                                         node)
            seed = node.position
            reseed_point = node.position.copy()
            try:
                t2 = grow_until_gain(
                    node.position,
                    SamplingBounds.vicinity(node.position,
                                            cfg.vicinity_radius),
                    state.explored, state.esdf, cfg.sensor, cfg.gain,
                    cfg.sample_budget_per_tier, rng, cfg.rrt)
            except SeedInvalid:
                t2 = PlanResult(False, samples_used=0)
                prefix, seed = None, state.pose.position
                reseed_point = None
            samples += t2.samples_used
            if t2.found:
                traj, nbv = _build_trajectory(state, cfg, prefix, t2.branch)
                return StepOutcome("executed", traj, nbv, 2, samples,
                                   reseed_point=reseed_point)

    if reseed_point is None:
        t3 = _grow_from_pose(state, cfg, rng,
                             SamplingBounds.full_free_space(),
                             cfg.full_space_budget)
    else:
        try:
            t3 = grow_until_gain(
                seed, SamplingBounds.full_free_space(),
                state.explored, state.esdf, cfg.sensor, cfg.gain,
                cfg.full_space_budget, rng, cfg.rrt)
        except SeedInvalid:
            t3 = PlanResult(False, samples_used=0)
    samples += t3.samples_used
    if t3.found:
        traj, nbv = _build_trajectory(state, cfg, prefix, t3.branch)
        return StepOutcome("executed", traj, nbv, 3, samples,
                           reseed_point=reseed_point)

    potential_left = any(n.potential > 0
                         for n in state.graph.nodes.values())
    if not potential_left:
        return StepOutcome("finished", samples_used=samples)
    raise StuckNoPlan(f"budget exhausted after {samples} samples with "
                      "potential remaining")


@dataclass
class _BaselineNode:
    position: np.ndarray
    yaw: float
    immediate: float
    total: float
    path_len: float
    parent: "_BaselineNode | None" = None


def baseline_step(state, cfg, rng):
    """Receding-horizon baseline: RRT in (x, y, z, yaw) with distance-
    discounted frustum gain summed along branches; executes the first edge
    of the best branch and retains the remainder."""
    root = _BaselineNode(state.pose.position.copy(), state.pose.yaw,
                         0.0, 0.0, 0.0)
    tree = [root]
    # reseed with the retained best branch from the previous iteration
    cur = root
    for pos, yaw in state.baseline_tail:
        if state.explored.state_at(pos) != VoxelState.FREE:
            break
        if not segment_clear(state.esdf, cur.position, pos,
                             cfg.rrt.robot_radius, cfg.rrt.check_step_frac):
            break
        node = _make_baseline_node(state, cfg, cur, pos, yaw)
        tree.append(node)
        cur = node
    samples = 0
    best = max(tree[1:], key=lambda n: n.total, default=None)
    for samples in range(1, cfg.sample_budget_per_tier + 1):
        try:
            p = sample_position(SamplingBounds.full_free_space(),
                                state.explored, state.esdf, rng, cfg.rrt)
        except Exception:
            break
        yaw = float(rng.uniform(-math.pi, math.pi))
        positions = np.array([n.position for n in tree])
        d = np.linalg.norm(positions - p, axis=1)
        nearest = tree[int(np.argmin(d))]
        delta = p - nearest.position
        dist = float(np.linalg.norm(delta))
        if dist < 1e-9:
            continue
        if dist > cfg.rrt.step_max:
            p = nearest.position + delta * (cfg.rrt.step_max / dist)
        if state.explored.state_at(p) != VoxelState.FREE:
            continue
        if not segment_clear(state.esdf, nearest.position, p,
                             cfg.rrt.robot_radius, cfg.rrt.check_step_frac):
            continue
        node = _make_baseline_node(state, cfg, nearest, p, yaw)
        tree.append(node)
        if best is None or node.total > best.total:
            best = node
        if best.total >= cfg.gain.g_zero:
            break
    if best is None or best.total <= 0.0:
        state.baseline_tail = []
        return StepOutcome("exhausted", samples_used=samples)
    branch = []
    cur = best
    while cur is not None:
        branch.append(cur)
        cur = cur.parent
    branch.reverse()
    first = branch[1]
    state.baseline_tail = [(n.position.copy(), n.yaw) for n in branch[2:]]
    traj = LinearProfile(state.pose.position, first.position,
                         state.pose.yaw, first.yaw, cfg.limits)
    nbv = Pose(branch[-1].position.copy(), branch[-1].yaw)
    return StepOutcome("executed", traj, nbv, 1, samples)


def _make_baseline_node(state, cfg, parent, position, yaw):
    gain = frustum_gain_oracle(state.explored, Pose(position, yaw),
                               cfg.sensor)
    edge = float(np.linalg.norm(position - parent.position))
    path_len = parent.path_len + edge
    immediate = gain * math.exp(-cfg.baseline_lambda * path_len)
    return _BaselineNode(np.asarray(position, float).copy(), yaw, immediate,
                         parent.total + immediate, path_len, parent)


@dataclass
class RunMetrics:
    seed: int
    mode: str
    scenario: str = ""
    start_index: int = 0
    coverage_curve: list = field(default_factory=list)  # (sim_t, fraction)
    total_path_length: float = 0.0
    exploration_time: float = 0.0
    computation_times: list = field(default_factory=list)
    samples_per_step: list = field(default_factory=list)
    tier_counts: dict = field(default_factory=lambda: {1: 0, 2: 0, 3: 0})
    nbv_count: int = 0
    finished: bool = False
    failure: bool = False
    failure_reason: str = ""
    final_coverage: float = 0.0
    clearance_violations: int = 0


def clear_robot_bubble(truth, explored, p, radius):
    """Mark truth-free cells overlapping the robot body as known free.

    The sensor has a vertical blind cone, so the column through the robot
    is never observed directly; physical presence certifies the bubble."""
    res = truth.resolution
    shape = np.array(truth.cells.shape)
    lo = np.maximum(np.floor((p - truth.origin - radius) / res).astype(int),
                    0)
    hi = np.minimum(np.floor((p - truth.origin + radius) / res).astype(int)
                    + 1, shape)
    if np.any(hi <= lo):
        return
    sub_t = truth.cells[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    sub_e = explored.cells[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    axes = [truth.origin[a] + (np.arange(lo[a], hi[a]) + 0.5) * res - p[a]
            for a in range(3)]
    d2 = (axes[0][:, None, None] ** 2 + axes[1][None, :, None] ** 2
          + axes[2][None, None, :] ** 2)
    mask = ((d2 <= radius * radius) & (sub_t == VoxelState.FREE)
            & (sub_e == VoxelState.UNKNOWN))
    sub_e[mask] = VoxelState.FREE


def initial_sweep(truth, explored, pose, model, robot_radius=0.5):
    """Full yaw sweep at the start pose so planning has free space to work
    with."""
    k = max(1, int(math.ceil(2 * math.pi / model.h_fov)))
    for i in range(k):
        yaw = pose.yaw + i * 2 * math.pi / k
        scan = simulate_scan(truth, Pose(pose.position, yaw), model)
        integrate_scan(explored, scan)
    clear_robot_bubble(truth, explored, pose.position,
                       robot_radius + 2 * truth.resolution)


def reachable_free_mask(truth, start_position):
    idx = truth.world_to_index(start_position)
    return kernels.flood_fill_free(truth.cells, idx[0], idx[1], idx[2])


def run_exploration(scenario, cfg, rng, start_index=0, run_hooks=None):
    """Sense-plan-act loop until the explorer reports Finished, coverage
    passes the stop fraction, or the step cap is hit."""
    truth = scenario.truth
    start = scenario.starts[start_index % len(scenario.starts)]
    explored = truth.like_unknown()
    pose = Pose(start.position.copy(), start.yaw)
    metrics = RunMetrics(seed=0, mode=cfg.mode.value, scenario=scenario.name,
                         start_index=start_index)
    mask = reachable_free_mask(truth, start.position)
    n_reachable = int(mask.sum())
    truth_esdf = compute_esdf(truth, cfg.esdf_d_max)

    def coverage():
        known_free = (explored.cells == VoxelState.FREE) & (mask == 1)
        return float(np.count_nonzero(known_free)) / max(n_reachable, 1)

    initial_sweep(truth, explored, pose, cfg.sensor, cfg.rrt.robot_radius)
    sim_time = 0.0
    metrics.coverage_curve.append((0.0, coverage()))
    graph = HistoryGraph()
    state = ExplorationState(truth, explored, None, graph, pose)
    exhaust_streak = 0
    stall = 0
    unknown_total = int(np.count_nonzero(
        explored.cells == VoxelState.UNKNOWN))
    for _ in range(cfg.max_steps):
        state.esdf = compute_esdf(explored, cfg.esdf_d_max)
        if cfg.mode is not PlannerMode.BASELINE:
            record_pose(graph, state.pose.position, explored, state.esdf,
                        cfg.history)
            maintain_step(graph, explored, state.esdf,
                          cfg.maintenance_budget, cfg.history)
        t0 = time.perf_counter()
        try:
            if cfg.mode is PlannerMode.BASELINE:
                outcome = baseline_step(state, cfg, rng)
            else:
                outcome = explore_step(state, cfg, rng)
        except StuckNoPlan as exc:
            metrics.failure = True
            metrics.failure_reason = str(exc)
            break
        outcome.computation_time = time.perf_counter() - t0
        metrics.computation_times.append(outcome.computation_time)
        metrics.samples_per_step.append(outcome.samples_used)
        if outcome.kind == "finished":
            metrics.finished = True
            break
        if outcome.kind == "exhausted":
            exhaust_streak += 1
            if exhaust_streak >= cfg.baseline_exhaust_limit:
                metrics.finished = True
                break
            continue
        exhaust_streak = 0
        traj = outcome.trajectory
        metrics.tier_counts[outcome.tier_used] += 1
        metrics.nbv_count += 1
        t = cfg.sense_interval
        while True:
            tc = min(t, traj.total_time)
            p = traj.position(tc)
            yaw = traj.yaw(tc)
            if (truth.state_at(p) != VoxelState.FREE
                    or truth_esdf.interpolate(p)
                    < cfg.rrt.robot_radius - 1e-6):
                metrics.clearance_violations += 1
            if truth.state_at(p) == VoxelState.FREE:
                scan = simulate_scan(truth, Pose(p, yaw), cfg.sensor)
                integrate_scan(explored, scan)
                clear_robot_bubble(truth, explored, p,
                                   cfg.rrt.robot_radius
                                   + 2 * truth.resolution)
                if cfg.mode is not PlannerMode.BASELINE:
                    record_pose(graph, p, explored, state.esdf, cfg.history)
            if tc >= traj.total_time:
                break
            t += cfg.sense_interval
        state.pose = Pose(traj.position(traj.total_time),
                          traj.yaw(traj.total_time))
        sim_time += traj.total_time
        metrics.total_path_length += traj.path_length()
        cov = coverage()
        metrics.coverage_curve.append((sim_time, cov))
        if run_hooks is not None:
            run_hooks(state, outcome)
        if cov >= cfg.coverage_stop:
            metrics.finished = True
            break
        # the gain model is optimistic near blind cones; once the map is
        # essentially complete, stop after executed views stop revealing
        # anything (at lower coverage a no-reveal streak is normal transit)
        unknown_now = int(np.count_nonzero(
            explored.cells == VoxelState.UNKNOWN))
        if unknown_now < unknown_total:
            stall = 0
        else:
            stall = stall + 1
            if stall >= cfg.stall_steps and cov >= cfg.stall_coverage:
                metrics.finished = True
                break
        unknown_total = unknown_now
    metrics.exploration_time = sim_time
    metrics.final_coverage = coverage()
    return metrics, state
