"""Exploration loop behavior: tiers, determinism, coverage accounting,
baseline stepping, and helper utilities."""
import math

import numpy as np
import pytest

from nbvx.explorer import (ChainedProfile, ExplorerConfig, PlannerMode,
                           clear_robot_bubble, explore_step, initial_sweep,
                           reachable_free_mask, run_exploration)
from nbvx.grid import VoxelState
from nbvx.scenario import parse_scenario
from nbvx.trajectory import DynamicLimits, LinearProfile


ROOM = """r=0.25 h=2 cell=0.5
........
........
........
........
start: 1.0 1.0 1.0 0.0
"""

TWO_ROOM = """r=0.25 h=2 cell=0.5
........#........
........#........
.................
........#........
........#........
start: 1.0 1.0 1.0 0.0
"""


def small_cfg(mode=PlannerMode.AUGMENTED, **kw):
    return ExplorerConfig(mode=mode, sample_budget_per_tier=60,
                          full_space_budget=400, max_steps=60, **kw)


class TestClearRobotBubble:
    def test_marks_only_truth_free_inside_radius(self):
        sc = parse_scenario(TWO_ROOM)
        explored = sc.truth.like_unknown()
        p = np.array([4.25, 1.25, 1.0])
        clear_robot_bubble(sc.truth, explored, p, 0.6)
        assert explored.state_at(p) == VoxelState.FREE
        # wall voxel adjacent to the divider stays unknown
        assert explored.state_at(np.array([4.25, 2.6, 1.0])) \
            == VoxelState.UNKNOWN
        freed = np.argwhere(explored.cells == VoxelState.FREE)
        centers = (freed + 0.5) * 0.25
        assert np.all(np.linalg.norm(centers - p, axis=1) <= 0.6 + 1e-9)

    def test_out_of_map_is_noop(self):
        sc = parse_scenario(ROOM)
        explored = sc.truth.like_unknown()
        clear_robot_bubble(sc.truth, explored, np.array([50.0, 50.0, 50.0]),
                           0.5)
        assert not (explored.cells == VoxelState.FREE).any()


def test_reachable_free_mask_excludes_far_room():
    text = """r=0.25 h=2 cell=0.5
....#....
....#....
....#....
start: 1.0 1.0 1.0 0.0
"""
    sc = parse_scenario(text)
    mask = reachable_free_mask(sc.truth, sc.starts[0].position)
    free = sc.truth.cells == VoxelState.FREE
    assert mask.sum() < free.sum()
    assert mask[sc.truth.world_to_index(sc.starts[0].position)]
    far = sc.truth.world_to_index(np.array([3.75, 1.0, 1.0]))
    assert free[far] and not mask[far]


def test_initial_sweep_opens_space():
    sc = parse_scenario(ROOM)
    explored = sc.truth.like_unknown()
    cfg = small_cfg()
    initial_sweep(sc.truth, explored, sc.starts[0], cfg.sensor)
    n_free = int((explored.cells == VoxelState.FREE).sum())
    assert n_free > 500
    assert explored.state_at(sc.starts[0].position) == VoxelState.FREE


class TestChainedProfile:
    def test_concatenation(self):
        limits = DynamicLimits()
        a = LinearProfile(np.zeros(3), np.array([1.0, 0, 0]), 0.0, 0.0,
                          limits)
        b = LinearProfile(np.array([1.0, 0, 0]), np.array([1.0, 2.0, 0]),
                          0.0, 1.0, limits)
        chain = ChainedProfile([a, b])
        assert chain.total_time == pytest.approx(a.total_time + b.total_time)
        assert np.allclose(chain.position(0.0), np.zeros(3))
        assert np.allclose(chain.position(a.total_time + 1e-9),
                           [1.0, 0, 0], atol=1e-6)
        assert np.allclose(chain.position(chain.total_time), [1.0, 2.0, 0])
        assert chain.yaw(chain.total_time) == pytest.approx(1.0)
        assert chain.path_length() == pytest.approx(3.0)

    def test_clamps_outside_domain(self):
        limits = DynamicLimits()
        a = LinearProfile(np.zeros(3), np.array([1.0, 0, 0]), 0.0, 0.0,
                          limits)
        chain = ChainedProfile([a])
        assert np.allclose(chain.position(-1.0), np.zeros(3))
        assert np.allclose(chain.position(chain.total_time + 5.0),
                           [1.0, 0, 0])


class TestRunExploration:
    @pytest.mark.parametrize("mode", list(PlannerMode))
    def test_open_room_covered(self, mode):
        sc = parse_scenario(ROOM)
        cfg = small_cfg(mode)
        metrics, state = run_exploration(sc, cfg,
                                         np.random.default_rng(0))
        assert not metrics.failure
        assert metrics.final_coverage >= 0.95
        assert metrics.exploration_time > 0.0
        assert metrics.mode == mode.value

    def test_deterministic(self):
        sc = parse_scenario(TWO_ROOM)
        runs = []
        for _ in range(2):
            metrics, _ = run_exploration(sc, small_cfg(),
                                         np.random.default_rng(7))
            runs.append(metrics)
        a, b = runs
        assert a.exploration_time == b.exploration_time
        assert a.total_path_length == b.total_path_length
        assert a.coverage_curve == b.coverage_curve
        assert a.samples_per_step == b.samples_per_step

    def test_seed_changes_run(self):
        sc = parse_scenario(TWO_ROOM)
        m1, _ = run_exploration(sc, small_cfg(), np.random.default_rng(1))
        m2, _ = run_exploration(sc, small_cfg(), np.random.default_rng(2))
        assert (m1.exploration_time != m2.exploration_time
                or m1.total_path_length != m2.total_path_length)

    def test_coverage_curve_monotone(self):
        sc = parse_scenario(TWO_ROOM)
        metrics, _ = run_exploration(sc, small_cfg(),
                                     np.random.default_rng(3))
        ts = [t for t, _ in metrics.coverage_curve]
        cs = [c for _, c in metrics.coverage_curve]
        assert ts == sorted(ts)
        assert all(b >= a - 1e-12 for a, b in zip(cs, cs[1:]))
        assert metrics.final_coverage == pytest.approx(cs[-1])

    def test_no_clearance_violations(self):
        sc = parse_scenario(TWO_ROOM)
        metrics, _ = run_exploration(sc, small_cfg(),
                                     np.random.default_rng(4))
        assert metrics.clearance_violations == 0

    def test_history_graph_only_for_augmented(self):
        sc = parse_scenario(ROOM)
        _, st_aug = run_exploration(sc, small_cfg(PlannerMode.AUGMENTED),
                                    np.random.default_rng(5))
        _, st_base = run_exploration(sc, small_cfg(PlannerMode.BASELINE),
                                     np.random.default_rng(5))
        assert len(st_aug.graph) > 0
        assert len(st_base.graph) == 0

    def test_run_hook_called_per_executed_step(self):
        sc = parse_scenario(ROOM)
        calls = []
        metrics, _ = run_exploration(
            sc, small_cfg(), np.random.default_rng(6),
            run_hooks=lambda state, outcome: calls.append(outcome.kind))
        assert len(calls) == metrics.nbv_count
        assert set(calls) == {"executed"}


class TestExploreStep:
    def test_tier1_near_frontier(self):
        sc = parse_scenario(TWO_ROOM)
        cfg = small_cfg()
        from nbvx.explorer import ExplorationState
        from nbvx.grid import compute_esdf
        from nbvx.history import HistoryGraph
        explored = sc.truth.like_unknown()
        initial_sweep(sc.truth, explored, sc.starts[0], cfg.sensor)
        state = ExplorationState(sc.truth, explored,
                                 compute_esdf(explored, cfg.esdf_d_max),
                                 HistoryGraph(), sc.starts[0])
        outcome = explore_step(state, cfg, np.random.default_rng(0))
        assert outcome.kind == "executed"
        assert outcome.tier_used == 1
        assert outcome.samples_used <= cfg.sample_budget_per_tier

    def test_finished_when_everything_known(self):
        sc = parse_scenario(ROOM)
        cfg = small_cfg()
        from nbvx.explorer import ExplorationState
        from nbvx.grid import compute_esdf
        from nbvx.history import HistoryGraph
        explored = sc.truth.like_unknown()
        explored.cells[:] = sc.truth.cells
        state = ExplorationState(sc.truth, explored,
                                 compute_esdf(explored, cfg.esdf_d_max),
                                 HistoryGraph(), sc.starts[0])
        outcome = explore_step(state, cfg, np.random.default_rng(0))
        assert outcome.kind == "finished"


def test_baseline_retains_tail():
    sc = parse_scenario(TWO_ROOM)
    cfg = small_cfg(PlannerMode.BASELINE)
    tails = []
    metrics, _ = run_exploration(
        sc, cfg, np.random.default_rng(8),
        run_hooks=lambda state, outcome: tails.append(
            len(state.baseline_tail)))
    assert metrics.final_coverage >= 0.95
    assert any(n > 0 for n in tails)
