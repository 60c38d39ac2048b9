"""Branch simplification and smooth piecewise-polynomial trajectories:
greedy shortcutting, trapezoidal time allocation, minimum-snap fitting,
feasibility checking, and iterative repair."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import RepairFailed, SingularSystem
from .rrt import segment_clear


@dataclass
class DynamicLimits:
    v_max: float = 1.2
    a_max: float = 2.0
    yaw_rate_max: float = math.pi / 2

    def __post_init__(self):
        if min(self.v_max, self.a_max, self.yaw_rate_max) <= 0:
            raise ValueError("dynamic limits must be positive")


def simplify(waypoints, esdf, robot_radius):
    """Greedy shortcutting: from each kept waypoint jump to the farthest
    later waypoint reachable by a clearance-valid straight segment."""
    pts = [np.asarray(w, float) for w in waypoints]
    if len(pts) < 2:
        raise ValueError("need at least two waypoints")
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1:
            if segment_clear(esdf, pts[i], pts[j], robot_radius):
                break
            j -= 1
        out.append(pts[j])
        i = j
    return out


def trapezoid_time(length, v_max, a_max):
    """Rest-to-rest trapezoidal (or triangular) traversal time."""
    if length <= 0:
        return 0.0
    if length >= v_max * v_max / a_max:
        return length / v_max + v_max / a_max
    return 2.0 * math.sqrt(length / a_max)


def _trapezoid_time_at(s, total, v_max, a_max):
    """Time at arc position s on the rest-to-rest profile over `total`."""
    s = min(max(s, 0.0), total)
    if total >= v_max * v_max / a_max:
        s_a = v_max * v_max / (2 * a_max)
        t_a = v_max / a_max
        if s <= s_a:
            return math.sqrt(2 * s / a_max)
        if s <= total - s_a:
            return t_a + (s - s_a) / v_max
        rem = total - s
        return t_a + (total - 2 * s_a) / v_max + (t_a - math.sqrt(2 * rem / a_max))
    v_pk = math.sqrt(a_max * total)
    t_a = v_pk / a_max
    if s <= total / 2:
        return math.sqrt(2 * s / a_max)
    return 2 * t_a - math.sqrt(2 * (total - s) / a_max)


def allocate_times(waypoints, limits):
    """Per-segment durations from one rest-to-rest trapezoid over the whole
    path arc length, so interior waypoints are passed at speed."""
    pts = [np.asarray(w, float) for w in waypoints]
    if len(pts) < 2:
        raise ValueError("need at least two waypoints")
    seg = [float(np.linalg.norm(pts[i + 1] - pts[i]))
           for i in range(len(pts) - 1)]
    total = sum(seg)
    if total <= 0:
        raise ValueError("degenerate path")
    knots = np.concatenate([[0.0], np.cumsum(seg)])
    times = [_trapezoid_time_at(s, total, limits.v_max, limits.a_max)
             for s in knots]
    durations = np.diff(times)
    return np.maximum(durations, 1e-3)


def stop_and_go_time(waypoints, limits):
    """Traversal time when every edge is flown rest-to-rest."""
    pts = [np.asarray(w, float) for w in waypoints]
    return sum(trapezoid_time(float(np.linalg.norm(pts[i + 1] - pts[i])),
                              limits.v_max, limits.a_max)
               for i in range(len(pts) - 1))


def _deriv_row(order, m, tau, duration):
    """Row of d^m/dt^m of the scaled-time monomial basis at tau."""
    row = np.zeros(order + 1)
    for k in range(m, order + 1):
        c = 1.0
        for j in range(m):
            c *= (k - j)
        row[k] = c * tau ** (k - m)
    return row / duration ** m


def _snap_cost_block(order, duration):
    """Integrated squared 4th derivative of the scaled-time basis."""
    q = np.zeros((order + 1, order + 1))
    for i in range(4, order + 1):
        ci = i * (i - 1) * (i - 2) * (i - 3)
        for j in range(4, order + 1):
            cj = j * (j - 1) * (j - 2) * (j - 3)
            q[i, j] = ci * cj / (i + j - 7)
    return q / duration ** 7


def unwrap_yaws(yaws):
    """Shift each yaw by multiples of 2*pi for shortest angular motion."""
    out = [float(yaws[0])]
    for y in yaws[1:]:
        prev = out[-1]
        d = (float(y) - prev + math.pi) % (2 * math.pi) - math.pi
        out.append(prev + d)
    return out


class Trajectory:
    """Piecewise order-N polynomial position trajectory with a
    piecewise-linear yaw profile."""

    def __init__(self, coeffs, durations, waypoints, yaws):
        self.coeffs = coeffs          # (n_seg, 3, order+1) in scaled time
        self.durations = np.asarray(durations, float)
        self.knots = np.concatenate([[0.0], np.cumsum(self.durations)])
        self.waypoints = [np.asarray(w, float) for w in waypoints]
        self.yaws = list(yaws)        # unwrapped, one per waypoint

    @property
    def total_time(self):
        return float(self.knots[-1])

    def _locate(self, t):
        t = min(max(t, 0.0), self.total_time)
        s = int(np.searchsorted(self.knots, t, side="right")) - 1
        s = min(max(s, 0), len(self.durations) - 1)
        return s, (t - self.knots[s]) / self.durations[s]

    def _eval(self, t, m):
        s, tau = self._locate(t)
        row = _deriv_row(self.coeffs.shape[2] - 1, m, tau, self.durations[s])
        return self.coeffs[s] @ row

    def eval_many(self, ts, m=0):
        """Batch form of _eval over an array of sample times, (n, 3)."""
        ts = np.asarray(ts, float)
        t = np.clip(ts, 0.0, self.total_time)
        s = np.searchsorted(self.knots, t, side="right") - 1
        s = np.clip(s, 0, len(self.durations) - 1)
        tau = (t - self.knots[s]) / self.durations[s]
        order = self.coeffs.shape[2] - 1
        ks = np.arange(order + 1)
        fall = np.ones(order + 1)
        for j in range(m):
            fall = fall * (ks - j)
        expo = np.maximum(ks - m, 0)
        basis = fall * tau[:, None] ** expo[None, :]
        basis = basis / self.durations[s][:, None] ** m
        return np.einsum("nij,nj->ni", self.coeffs[s], basis)

    def position(self, t):
        return self._eval(t, 0)

    def velocity(self, t):
        return self._eval(t, 1)

    def acceleration(self, t):
        return self._eval(t, 2)

    def yaw(self, t):
        s, tau = self._locate(t)
        return self.yaws[s] + (self.yaws[s + 1] - self.yaws[s]) * tau

    def path_length(self, dt=0.02):
        ts = np.arange(0.0, self.total_time + dt, dt)
        pts = self.eval_many(ts, 0)
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    def sample(self, dt):
        rows = []
        t = 0.0
        while t < self.total_time + dt / 2:
            tc = min(t, self.total_time)
            p = self.position(tc)
            v = self.velocity(tc)
            rows.append((tc, p[0], p[1], p[2], self.yaw(tc), v[0], v[1], v[2]))
            t += dt
        return rows

    def export_csv(self, path, dt=0.05):
        with open(path, "w", newline="\n") as f:
            f.write("t,x,y,z,yaw,vx,vy,vz\n")
            for row in self.sample(dt):
                f.write(",".join(repr(float(v)) for v in row) + "\n")


def _limit_yaw_durations(durations, yaws, limits):
    """Extend any segment whose linear yaw motion would exceed the yaw-rate
    limit."""
    durations = np.asarray(durations, float).copy()
    for i in range(len(durations)):
        dyaw = abs(yaws[i + 1] - yaws[i])
        if dyaw / durations[i] > limits.yaw_rate_max:
            durations[i] = dyaw / limits.yaw_rate_max
    return durations


def fit_polynomial(waypoints, durations, order=9, yaws=None, limits=None):
    """Minimum-snap piecewise polynomials through the waypoints.

    Interpolates every waypoint, holds zero velocity and acceleration at the
    endpoints, keeps derivatives continuous through jerk at interior joints,
    and minimizes the integrated squared snap. Yaw is a decoupled
    piecewise-linear profile, rate-limited by extending durations.
    """
    pts = [np.asarray(w, float) for w in waypoints]
    n_seg = len(pts) - 1
    if n_seg < 1:
        raise ValueError("need at least two waypoints")
    if len(durations) != n_seg:
        raise ValueError("need one duration per segment")
    if order < 7:
        raise ValueError("order must be >= 7")
    for a, b in zip(pts[:-1], pts[1:]):
        if np.linalg.norm(b - a) < 1e-12 and n_seg > 1:
            raise SingularSystem("duplicate waypoints; deduplicate first")

    if yaws is None:
        yaws = _heading_yaws(pts)
    yaws = unwrap_yaws(yaws)
    durations = np.asarray(durations, float)
    if limits is not None:
        durations = _limit_yaw_durations(durations, yaws, limits)

    nc = order + 1
    nv = n_seg * nc
    scale = float(np.min(durations)) ** 7  # uniform objective scaling
    q_blocks = [_snap_cost_block(order, durations[s]) * scale
                for s in range(n_seg)]

    rows = []
    rhs_cols = []  # per-axis rhs assembled below
    # waypoint interpolation
    for s in range(n_seg):
        r0 = np.zeros(nv)
        r0[s * nc:(s + 1) * nc] = _deriv_row(order, 0, 0.0, durations[s])
        rows.append((r0, pts[s]))
        r1 = np.zeros(nv)
        r1[s * nc:(s + 1) * nc] = _deriv_row(order, 0, 1.0, durations[s])
        rows.append((r1, pts[s + 1]))
    # interior continuity through jerk
    zero3 = np.zeros(3)
    for s in range(n_seg - 1):
        for m in (1, 2, 3):
            r = np.zeros(nv)
            r[s * nc:(s + 1) * nc] = _deriv_row(order, m, 1.0, durations[s])
            r[(s + 1) * nc:(s + 2) * nc] -= _deriv_row(order, m, 0.0,
                                                       durations[s + 1])
            rows.append((r, zero3))
    # rest-to-rest endpoints
    for m in (1, 2):
        r = np.zeros(nv)
        r[:nc] = _deriv_row(order, m, 0.0, durations[0])
        rows.append((r, zero3))
        r = np.zeros(nv)
        r[(n_seg - 1) * nc:] = _deriv_row(order, m, 1.0, durations[-1])
        rows.append((r, zero3))

    a_mat = np.array([r for r, _ in rows])
    b_mat = np.array([b for _, b in rows])  # (n_con, 3)
    n_con = a_mat.shape[0]
    rhs = np.zeros((nv + n_con, 3))
    rhs[nv:] = b_mat
    try:
        if nv + n_con > 400:
            # the KKT system is block-banded; sparse LU keeps long
            # densified paths cheap
            import scipy.sparse as sp
            from scipy.sparse.linalg import splu
            top_left = sp.block_diag([2.0 * q for q in q_blocks]) \
                + 1e-12 * sp.identity(nv)
            a_sp = sp.csr_matrix(a_mat)
            kkt = sp.bmat([[top_left, a_sp.T], [a_sp, None]], format="csc")
            sol = splu(kkt).solve(rhs)
        else:
            kkt = np.zeros((nv + n_con, nv + n_con))
            for s in range(n_seg):
                kkt[s * nc:(s + 1) * nc, s * nc:(s + 1) * nc] = \
                    2.0 * q_blocks[s]
            kkt[:nv, :nv] += 1e-12 * np.eye(nv)
            kkt[:nv, nv:] = a_mat.T
            kkt[nv:, :nv] = a_mat
            sol = np.linalg.solve(kkt, rhs)
    except (np.linalg.LinAlgError, RuntimeError):
        kkt = np.zeros((nv + n_con, nv + n_con))
        for s in range(n_seg):
            kkt[s * nc:(s + 1) * nc, s * nc:(s + 1) * nc] = 2.0 * q_blocks[s]
        kkt[:nv, :nv] += 1e-12 * np.eye(nv)
        kkt[:nv, nv:] = a_mat.T
        kkt[nv:, :nv] = a_mat
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    resid = float(np.max(np.abs(a_mat @ sol[:nv] - b_mat)))
    if not np.isfinite(resid) or resid > 1e-6:
        raise SingularSystem(f"constraint residual {resid:.3e}")
    coeffs = sol[:nv].T.reshape(3, n_seg, nc).transpose(1, 0, 2)
    return Trajectory(coeffs, durations, pts, yaws)


def _heading_yaws(pts):
    """Default yaw per waypoint: the heading of the outgoing segment."""
    yaws = []
    for i in range(len(pts) - 1):
        d = pts[i + 1] - pts[i]
        if np.hypot(d[0], d[1]) > 1e-9:
            yaws.append(math.atan2(d[1], d[0]))
        else:
            yaws.append(yaws[-1] if yaws else 0.0)
    yaws.append(yaws[-1])
    return yaws


def snap_cost(traj):
    """Integrated squared snap of a fitted trajectory, summed over axes."""
    order = traj.coeffs.shape[2] - 1
    total = 0.0
    for s in range(len(traj.durations)):
        q = _snap_cost_block(order, traj.durations[s])
        for ax in range(3):
            c = traj.coeffs[s, ax]
            total += float(c @ q @ c)
    return total


@dataclass
class FeasibilityReport:
    feasible: bool
    max_speed: float
    max_accel: float
    min_clearance: float
    violation_time: float | None = None
    violation_kind: str | None = None


def check_trajectory(traj, esdf, limits, dt=0.05, robot_radius=0.5):
    """Sample the trajectory at dt and verify speed, acceleration, and
    clearance margins."""
    if dt > 0.05:
        raise ValueError("dt must be <= 0.05 s")
    ts = np.arange(0.0, traj.total_time + dt / 2, dt)
    if ts[-1] < traj.total_time:
        ts = np.append(ts, traj.total_time)
    speeds = np.linalg.norm(traj.eval_many(ts, 1), axis=1)
    accels = np.linalg.norm(traj.eval_many(ts, 2), axis=1)
    clears = esdf.interpolate_many(traj.eval_many(ts, 0))
    bad = ((clears < robot_radius) | (speeds > 1.01 * limits.v_max)
           | (accels > 1.01 * limits.a_max))
    violation = (None, None)
    if bad.any():
        i = int(np.argmax(bad))
        if clears[i] < robot_radius:
            kind = "clearance"
        elif speeds[i] > 1.01 * limits.v_max:
            kind = "speed"
        else:
            kind = "accel"
        violation = (float(ts[i]), kind)
    return FeasibilityReport(violation[0] is None, float(speeds.max()),
                             float(accels.max()), float(clears.min()),
                             violation[0], violation[1])


def _densify(pts, yaws, max_len):
    """Insert collinear waypoints so no segment exceeds max_len. A dense
    polyline keeps the minimum-snap profile close to the trapezoid speed
    plan, which bounds the duration after dynamic-feasibility scaling."""
    out_p = [pts[0]]
    out_y = None if yaws is None else [yaws[0]]
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        n = max(1, int(math.ceil(float(np.linalg.norm(b - a)) / max_len)))
        for k in range(1, n + 1):
            out_p.append(a + (b - a) * (k / n))
            if out_y is not None:
                dyaw = (yaws[i + 1] - yaws[i] + math.pi) \
                    % (2 * math.pi) - math.pi
                out_y.append(yaws[i] + dyaw * (k / n))
    return out_p, out_y


def repair(waypoints, esdf, limits, robot_radius=0.5, yaws=None,
           order=9, dt=0.05, max_iters=10):
    """Fit-check loop: insert polyline midpoints on clearance violations,
    scale durations on dynamic violations; returns the first feasible
    trajectory."""
    pts = [np.asarray(w, float) for w in waypoints]
    wp_yaws = None if yaws is None else list(yaws)
    ramp_len = max(limits.v_max ** 2 / limits.a_max, 0.25)
    pts, wp_yaws = _densify(pts, wp_yaws, ramp_len)
    time_scale = 1.0
    for _ in range(max_iters):
        durations = allocate_times(pts, limits) * time_scale
        traj = fit_polynomial(pts, durations, order=order, yaws=wp_yaws,
                              limits=limits)
        report = check_trajectory(traj, esdf, limits, dt, robot_radius)
        if report.feasible:
            return traj
        if report.violation_kind == "clearance":
            s, _ = traj._locate(report.violation_time)
            mid = 0.5 * (pts[s] + pts[s + 1])
            pts.insert(s + 1, mid)
            if wp_yaws is not None:
                wp_yaws.insert(s + 1, 0.5 * (traj.yaws[s] + traj.yaws[s + 1]))
        else:
            needed = max(report.max_speed / limits.v_max,
                         math.sqrt(max(report.max_accel / limits.a_max, 1.0)))
            time_scale *= max(1.1, needed * 1.02)
    raise RepairFailed("no feasible trajectory within iteration cap")


class LinearProfile:
    """Stop-and-go straight-segment motion: turn in place to the target
    heading, then fly the edge rest-to-rest. The waypoint-following motion
    model of the baseline planner; matches the sampling interface of
    Trajectory."""

    def __init__(self, start, end, yaw_start, yaw_end, limits):
        self.start = np.asarray(start, float)
        self.end = np.asarray(end, float)
        self.length = float(np.linalg.norm(self.end - self.start))
        self.direction = ((self.end - self.start) / self.length
                          if self.length > 1e-12 else np.zeros(3))
        ys = unwrap_yaws([yaw_start, yaw_end])
        self.yaw_start, self.yaw_end = ys
        self.move_t = trapezoid_time(self.length, limits.v_max, limits.a_max)
        self.turn_t = abs(self.yaw_end - self.yaw_start) / limits.yaw_rate_max
        self.total_time = max(self.turn_t + self.move_t, 1e-3)
        self.limits = limits
        self.waypoints = [self.start, self.end]
        self.yaws = ys

    def _arc_at(self, t):
        v, a = self.limits.v_max, self.limits.a_max
        t = min(max(t - self.turn_t, 0.0), self.move_t)
        if self.length <= 0:
            return 0.0, 0.0, 0.0
        if self.length >= v * v / a:
            t_a = v / a
            t_c = self.length / v - t_a
            if t <= t_a:
                return 0.5 * a * t * t, a * t, a
            if t <= t_a + t_c:
                s_a = 0.5 * v * t_a
                return s_a + v * (t - t_a), v, 0.0
            td = t - t_a - t_c
            s0 = 0.5 * v * t_a + v * t_c
            return (s0 + v * td - 0.5 * a * td * td, v - a * td, -a)
        v_pk = math.sqrt(a * self.length)
        t_a = v_pk / a
        if t <= t_a:
            return 0.5 * a * t * t, a * t, a
        td = t - t_a
        return (0.5 * a * t_a * t_a + v_pk * td - 0.5 * a * td * td,
                v_pk - a * td, -a)

    def position(self, t):
        s, _, _ = self._arc_at(t)
        return self.start + self.direction * s

    def velocity(self, t):
        _, v, _ = self._arc_at(t)
        return self.direction * v

    def acceleration(self, t):
        _, _, a = self._arc_at(t)
        return self.direction * a

    def yaw(self, t):
        if self.turn_t <= 0.0:
            return self.yaw_end
        f = min(max(t / self.turn_t, 0.0), 1.0)
        return self.yaw_start + (self.yaw_end - self.yaw_start) * f

    def path_length(self, dt=0.02):
        return self.length
