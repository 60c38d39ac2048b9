"""Exception types shared across the planner."""


class NbvxError(Exception):
    """Base class for planner errors."""


class PoseInCollision(NbvxError):
    """Sensor pose sits inside an occupied cell of the truth map."""


class PositionNotFree(NbvxError):
    """Gain evaluation requested at a position that is not known free."""


class NoFreeSample(NbvxError):
    """Rejection sampling exhausted its retry budget."""


class SeedInvalid(NbvxError):
    """RRT seed position lacks clearance."""


class Unreachable(NbvxError):
    """Graph query could not reach its target; connectivity invariant broken."""


class SingularSystem(NbvxError):
    """Polynomial fit hit a degenerate linear system."""


class RepairFailed(NbvxError):
    """Trajectory repair did not converge within its iteration cap."""


class StuckNoPlan(NbvxError):
    """Full-space sampling exhausted while exploration potential remains."""


class ScenarioParseError(NbvxError):
    """Scenario file is malformed; message carries line/column."""


class StartInCollision(NbvxError):
    """Scenario start pose is occupied in the truth map."""
