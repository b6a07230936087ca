"""Per-robot lifecycle, operating modes, and the mutable agent record.

Mode switching follows a three-mode machine: Free (tracking the current
plan), Busy (conflict resolution in progress), Emerg (emergency stop with
continued monitoring). The only legal transitions are Free->Busy,
Busy->Free, Busy->Emerg and Emerg->Free; ``set_mode`` enforces this.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .dynamics import ControlInput, Limits, RobotState
from .workspace import Rect


class AgentMode(str, enum.Enum):
    FREE = "Free"
    BUSY = "Busy"
    EMERG = "Emerg"


class Lifecycle(str, enum.Enum):
    ACTIVE = "Active"
    PASSIVE = "Passive"


_ALLOWED_TRANSITIONS = {
    (AgentMode.FREE, AgentMode.BUSY),
    (AgentMode.BUSY, AgentMode.FREE),
    (AgentMode.BUSY, AgentMode.EMERG),
    (AgentMode.EMERG, AgentMode.FREE),
}


class ModeTransitionError(RuntimeError):
    pass


@dataclass
class Agent:
    """Runtime record for one robot.

    ``plan`` is the motion plan currently being tracked (``None`` until the
    task activates). Tracking is open-loop replay of the planned samples:
    the simulated plant is the same integrator the plans were built with,
    so replay is exact and no feedback controller is needed.
    """

    robot_id: int
    base_priority: int
    footprint_radius: float
    limits: Limits
    start_state: RobotState
    goal: Rect
    activation_time: float = 0.0

    lifecycle: Lifecycle = Lifecycle.PASSIVE
    mode: AgentMode = AgentMode.FREE
    plan: object | None = None          # planner.MotionPlan once active
    settled_ticks: int = 0
    completed: bool = False
    mode_history: list[tuple[float, AgentMode, AgentMode]] = field(default_factory=list)

    def set_mode(self, new_mode: AgentMode, t: float) -> None:
        if new_mode == self.mode:
            return
        if (self.mode, new_mode) not in _ALLOWED_TRANSITIONS:
            raise ModeTransitionError(
                f"robot {self.robot_id}: illegal mode transition "
                f"{self.mode.value} -> {new_mode.value} at t={t}")
        self.mode_history.append((t, self.mode, new_mode))
        self.mode = new_mode

    def state_at(self, t: float) -> RobotState:
        if self.plan is None:
            s = self.start_state
            return RobotState(s.x, s.y, s.theta, 0.0, 0.0)
        return self.plan.state_at(t)

    def position_at(self, t: float) -> tuple[float, float]:
        s = self.state_at(t)
        return (s.x, s.y)

    def emergency_stop(self) -> ControlInput:
        """Immediate halt: v and omega drop to zero at the next sample.

        The deceleration is treated as unbounded, so the commanded input is
        simply zero and the position freezes in place.
        """
        if self.mode is not AgentMode.EMERG:
            raise ModeTransitionError(
                f"robot {self.robot_id}: emergency stop requested outside Emerg mode")
        return ControlInput(0.0, 0.0)

    def footprint_in_goal(self, t: float) -> bool:
        x, y = self.position_at(t)
        return self.goal.contains_disc(x, y, self.footprint_radius)
