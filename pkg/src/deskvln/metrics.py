"""Route-quality metrics and batch evaluation.

Navigation error is geodesic (walls count), success is a radius test on
it, SPL weights success by path efficiency, and the time-warped route
similarity compares the walked polyline against the reference waypoints
densified to the forward step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ValidationError
from .kinematics import Trajectory, path_length
from .serde import dumps_compact
from .world import Episode, SceneWorld, densify_polyline, goal_field

SUCCESS_RADIUS_M = 3.0
REFERENCE_SPACING_M = 0.25


def navigation_error(
    world: SceneWorld, traj: Trajectory, episode: Episode
) -> float | None:
    """Geodesic distance from the final pose to the goal; None if walled off."""
    if not traj.steps:
        raise ValidationError(f"trajectory {traj.episode_id} has no steps")
    final = traj.steps[-1].pose_after
    return goal_field(world, episode.goal).distance_from(final.x, final.y)


def is_success(ne: float | None, radius_m: float = SUCCESS_RADIUS_M) -> bool:
    """Inclusive radius test; an unreachable final pose never succeeds."""
    return ne is not None and ne <= radius_m


def oracle_success(
    world: SceneWorld,
    traj: Trajectory,
    episode: Episode,
    radius_m: float = SUCCESS_RADIUS_M,
) -> bool:
    """Whether any visited pose was within the radius, start included."""
    if not traj.steps:
        raise ValidationError(f"trajectory {traj.episode_id} has no steps")
    gf = goal_field(world, episode.goal)
    points = [traj.steps[0].pose_before] + [s.pose_after for s in traj.steps]
    for p in points:
        d = gf.distance_from(p.x, p.y)
        if d is not None and d <= radius_m:
            return True
    return False


def spl(success: bool, gt_length: float, walked_length: float) -> float:
    """Path-efficiency-weighted success."""
    if gt_length <= 0.0:
        raise ValidationError(f"gt_length={gt_length} must be positive")
    if walked_length < 0.0:
        raise ValidationError(f"walked_length={walked_length} must be non-negative")
    if not success:
        return 0.0
    return gt_length / max(walked_length, gt_length)


def walked_polyline(traj: Trajectory) -> list[tuple[float, float]]:
    """Pose sequence with stationary repeats collapsed."""
    if not traj.steps:
        raise ValidationError(f"trajectory {traj.episode_id} has no steps")
    first = traj.steps[0].pose_before
    pts = [(first.x, first.y)]
    for rec in traj.steps:
        p = (rec.pose_after.x, rec.pose_after.y)
        if p != pts[-1]:
            pts.append(p)
    return pts


def ndtw(
    pred: Sequence[tuple[float, float]],
    ref: Sequence[tuple[float, float]],
    radius_m: float = SUCCESS_RADIUS_M,
) -> float:
    """Similarity in (0, 1]: 1 means the walked line hugs the reference."""
    if not pred or not ref:
        raise ValidationError("time-warp similarity needs non-empty polylines")
    a = np.asarray(pred, dtype=np.float64).reshape(len(pred), 2)
    b = np.asarray(ref, dtype=np.float64).reshape(len(ref), 2)
    total = _kernels.dtw_total(a, b)
    return math.exp(-total / (len(ref) * radius_m))


@dataclass(frozen=True)
class EpisodeReport:
    episode_id: str
    ne: float
    ne_unreachable: bool
    success: bool
    oracle_success: bool
    spl: float
    ndtw: float
    walked_length: float
    gt_length: float
    steps: int
    terminated_by: str

    def validate(self) -> None:
        if self.success and not self.oracle_success:
            raise ValidationError(
                f"{self.episode_id}: success without oracle success"
            )
        if self.spl > 0.0 and not self.success:
            raise ValidationError(f"{self.episode_id}: positive SPL on a failure")
        if self.success and self.ne_unreachable:
            raise ValidationError(f"{self.episode_id}: success with unreachable goal")
        if not (0.0 <= self.spl <= 1.0):
            raise ValidationError(f"{self.episode_id}: spl={self.spl} outside [0, 1]")
        if not (0.0 < self.ndtw <= 1.0):
            raise ValidationError(f"{self.episode_id}: ndtw={self.ndtw} outside (0, 1]")

    def to_json(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "NE": self.ne,
            "ne_unreachable": self.ne_unreachable,
            "success": self.success,
            "oracle_success": self.oracle_success,
            "SPL": self.spl,
            "nDTW": self.ndtw,
            "walked_length": self.walked_length,
            "gt_length": self.gt_length,
            "steps": self.steps,
            "terminated_by": self.terminated_by,
        }


@dataclass(frozen=True)
class EvalReport:
    episodes: tuple[EpisodeReport, ...]

    @property
    def ne_mean(self) -> float:
        return sum(e.ne for e in self.episodes) / len(self.episodes)

    @property
    def oracle_rate(self) -> float:
        return 100.0 * sum(e.oracle_success for e in self.episodes) / len(self.episodes)

    @property
    def success_rate(self) -> float:
        return 100.0 * sum(e.success for e in self.episodes) / len(self.episodes)

    @property
    def spl_pct(self) -> float:
        return 100.0 * sum(e.spl for e in self.episodes) / len(self.episodes)

    @property
    def ndtw_mean(self) -> float:
        return sum(e.ndtw for e in self.episodes) / len(self.episodes)

    def to_json(self) -> dict:
        return {
            "aggregate": {
                "NE": self.ne_mean,
                "OS": self.oracle_rate,
                "SR": self.success_rate,
                "SPL": self.spl_pct,
                "nDTW": self.ndtw_mean,
            },
            "episodes": [e.to_json() for e in self.episodes],
        }

    def to_json_text(self) -> str:
        return dumps_compact(self.to_json()) + "\n"


def evaluate_episode(
    world: SceneWorld,
    traj: Trajectory,
    episode: Episode,
    radius_m: float = SUCCESS_RADIUS_M,
) -> EpisodeReport:
    if traj.episode_id != episode.episode_id:
        raise ValidationError(
            f"trajectory {traj.episode_id} scored against episode {episode.episode_id}"
        )
    ne = navigation_error(world, traj, episode)
    unreachable = ne is None
    if unreachable:
        # Substitute the largest distance the arena admits so means stay
        # finite; the flag preserves the truth.
        ne = math.hypot(world.width, world.height)
    success = (not unreachable) and ne <= radius_m
    walked = path_length(traj)
    report = EpisodeReport(
        episode_id=episode.episode_id,
        ne=ne,
        ne_unreachable=unreachable,
        success=success,
        oracle_success=oracle_success(world, traj, episode, radius_m),
        spl=spl(success, episode.gt_geodesic_length, walked),
        ndtw=ndtw(
            walked_polyline(traj),
            densify_polyline(list(episode.gt_waypoints), REFERENCE_SPACING_M),
            radius_m,
        ),
        walked_length=walked,
        gt_length=episode.gt_geodesic_length,
        steps=len(traj.steps),
        terminated_by=traj.terminated_by,
    )
    report.validate()
    return report


def evaluate(
    world: SceneWorld,
    trajectories: Sequence[Trajectory],
    episodes: Sequence[Episode],
    radius_m: float = SUCCESS_RADIUS_M,
) -> EvalReport:
    """Score trajectories against their episodes, matched by id."""
    if not trajectories:
        raise ValidationError("nothing to evaluate")
    by_id = {e.episode_id: e for e in episodes}
    seen: set[str] = set()
    reports = []
    for traj in trajectories:
        if traj.episode_id not in by_id:
            raise ValidationError(f"no episode for trajectory {traj.episode_id}")
        if traj.episode_id in seen:
            raise ValidationError(f"duplicate trajectory for {traj.episode_id}")
        seen.add(traj.episode_id)
        reports.append(evaluate_episode(world, traj, by_id[traj.episode_id], radius_m))
    return EvalReport(episodes=tuple(reports))


def render_report_text(report: EvalReport) -> str:
    """Fixed-width table for terminals and logs."""
    lines = []
    header = f"{'episode':<12} {'NE':>7} {'SR':>4} {'OS':>4} {'SPL':>6} {'nDTW':>6} {'len':>7} {'steps':>6}  ended"
    lines.append(header)
    lines.append("-" * len(header))
    for e in report.episodes:
        ne_text = f"{e.ne:7.2f}" + ("*" if e.ne_unreachable else " ")
        lines.append(
            f"{e.episode_id:<12} {ne_text}"
            f"{'yes' if e.success else 'no':>4} {'yes' if e.oracle_success else 'no':>4}"
            f" {e.spl:6.3f} {e.ndtw:6.3f} {e.walked_length:7.2f} {e.steps:6d}  {e.terminated_by}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'mean':<12} {report.ne_mean:7.2f}  "
        f"SR {report.success_rate:5.1f}%  OS {report.oracle_rate:5.1f}%  "
        f"SPL {report.spl_pct:5.1f}%  nDTW {report.ndtw_mean:6.3f}"
    )
    if any(e.ne_unreachable for e in report.episodes):
        lines.append("* final pose walled off from the goal; arena diagonal substituted")
    return "\n".join(lines) + "\n"
