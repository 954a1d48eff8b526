"""Simulated flight clock: constant-speed motion with sensing at fixed frame times."""

from __future__ import annotations

import math
from typing import Callable, Sequence

from .geometry import Point2D
from .scenario import Pose

ARRIVED = "arrived"
DEADLINE = "deadline"
STOPPED = "stopped"


class Flight:
    """UAV state advanced along waypoint lists on a continuous clock.

    Frames fire at ``k * frame_period`` for k = 1, 2, ...; each fires the
    ``on_frame`` callback with the pose at that instant. Motion never runs
    past ``budget``. The dense ground track is kept in ``track`` as
    (x, y, t) vertices.
    """

    def __init__(self, start: Sequence[float], altitude: float, speed: float, frame_period: float,
                 budget: float, on_frame: Callable[[Pose, int], None] | None = None):
        if not (speed > 0 and frame_period > 0):
            raise ValueError("speed and frame_period must be positive")
        self.x, self.y = float(start[0]), float(start[1])
        self.altitude = float(altitude)
        self.speed = float(speed)
        self.frame_period = float(frame_period)
        self.budget = float(budget)
        self.on_frame = on_frame
        self.t = 0.0
        self.frames = 0
        self.yaw = 0.0
        self.track: list[tuple[float, float, float]] = [(self.x, self.y, 0.0)]

    @property
    def xy(self) -> Point2D:
        return (self.x, self.y)

    @property
    def next_frame_time(self) -> float:
        return (self.frames + 1) * self.frame_period

    @property
    def exhausted(self) -> bool:
        return self.t >= self.budget

    def pose(self) -> Pose:
        return Pose((self.x, self.y, self.altitude), self.yaw, self.t)

    def _emit(self) -> None:
        self.t = self.next_frame_time
        self.frames += 1
        if self.on_frame is not None:
            self.on_frame(self.pose(), self.frames)

    def _advance(self, target: Point2D | None, deadline: float,
                 on_move: Callable[[Point2D, Point2D], None] | None) -> bool:
        """Move toward ``target`` (or hover) until arrival, the next frame or the deadline.

        Returns True once the target is reached.
        """
        limit = min(self.next_frame_time, deadline)
        dt = limit - self.t
        arrived = False
        if target is not None:
            dx, dy = target[0] - self.x, target[1] - self.y
            dist = math.hypot(dx, dy)
            need = dist / self.speed
            if need <= dt:
                dt = need
                nx, ny = target
                arrived = True
            else:
                f = dt * self.speed / dist
                nx, ny = self.x + dx * f, self.y + dy * f
            if dist > 0:
                self.yaw = math.atan2(dy, dx)
            if (nx, ny) != (self.x, self.y):
                old = self.xy
                self.x, self.y = nx, ny
                if on_move is not None:
                    on_move(old, self.xy)
        self.t += dt
        if self.t >= self.next_frame_time - 1e-12 and self.next_frame_time <= deadline + 1e-12:
            self._emit()
        self.track.append((self.x, self.y, self.t))
        return arrived

    def follow(self, waypoints: Sequence[Sequence[float]], deadline: float,
               on_move: Callable[[Point2D, Point2D], None] | None = None,
               stop: Callable[[], bool] | None = None) -> str:
        """Fly through ``waypoints`` in order; returns arrived, deadline or stopped."""
        deadline = min(deadline, self.budget)
        for wp in waypoints:
            target = (float(wp[0]), float(wp[1]))
            while True:
                if stop is not None and stop():
                    return STOPPED
                if target == self.xy:
                    break
                if self.t >= deadline:
                    return DEADLINE
                if self._advance(target, deadline, on_move):
                    break
        if stop is not None and stop():
            return STOPPED
        return ARRIVED

    def hover(self, until: float, stop: Callable[[], bool] | None = None) -> str:
        """Stay in place, still sensing, until ``until`` (capped at the budget)."""
        until = min(until, self.budget)
        while self.t < until:
            if stop is not None and stop():
                return STOPPED
            self._advance(None, until, None)
        return DEADLINE
