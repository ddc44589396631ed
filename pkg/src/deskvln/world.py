"""2-D occupancy worlds: geometry, geodesics, files, and synthetic generation.

A world is an axis-aligned occupancy grid (True = obstacle) plus labeled
room rectangles and point landmarks.  Positions are continuous meters;
grid cells only enter through collision tests and geodesic queries.

Geodesic distances run over the 8-connected graph of free cell centers
(diagonal cost sqrt(2) * resolution, diagonals disallowed when either
flanking orthogonal cell is blocked) plus straight stubs from the query
points to their cell centers.  Distances are materialized in one canonical
float shape everywhere so independent implementations agree bit-exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from deskvln import _kernels
from deskvln.errors import GenerationError, SchemaError, ValidationError
from deskvln.kinematics import Pose
from deskvln.serde import atomic_write_text, stable_rng

SCHEMA_VERSION = 1
DEFAULT_RESOLUTION = 0.05
SQRT2 = math.sqrt(2.0)

ROOM_PALETTE = (
    "bedroom",
    "kitchen",
    "living room",
    "bathroom",
    "office",
    "hallway",
    "dining room",
    "studio",
)
LANDMARK_PALETTE = ("bed", "desk", "sofa", "shelf", "lamp", "table", "plant", "cabinet")


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0


@dataclass(frozen=True)
class Room:
    rect: Rect
    category: str


@dataclass(frozen=True)
class Landmark:
    landmark_id: str
    category: str
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class SceneWorld:
    """Immutable scene.  Mutating the occupancy array after construction is
    not supported; geodesic caches assume it never changes."""

    width: float
    height: float
    grid_resolution: float
    occupancy: np.ndarray
    rooms: tuple[Room, ...]
    landmarks: tuple[Landmark, ...]
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def ny(self) -> int:
        return self.occupancy.shape[0]

    @property
    def nx(self) -> int:
        return self.occupancy.shape[1]

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Cell (row, col) containing the point; boundary points belong to
        the cell above/right, the outer edges to the last cell."""
        ix = int(x / self.grid_resolution)
        iy = int(y / self.grid_resolution)
        if ix >= self.nx:
            ix = self.nx - 1
        if iy >= self.ny:
            iy = self.ny - 1
        if ix < 0:
            ix = 0
        if iy < 0:
            iy = 0
        return iy, ix

    def cell_center(self, iy: int, ix: int) -> tuple[float, float]:
        return ((ix + 0.5) * self.grid_resolution, (iy + 0.5) * self.grid_resolution)

    def is_free(self, x: float, y: float) -> bool:
        if not self.in_bounds(x, y):
            return False
        iy, ix = self.cell_of(x, y)
        return not bool(self.occupancy[iy, ix])

    def free_grid(self) -> np.ndarray:
        grid = self._cache.get("free")
        if grid is None:
            grid = np.ascontiguousarray(~self.occupancy, dtype=np.uint8)
            self._cache["free"] = grid
        return grid

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("world: bounds must be positive")
        if self.grid_resolution <= 0:
            raise ValidationError("world: grid_resolution must be positive")
        if self.occupancy.dtype != np.bool_ or self.occupancy.ndim != 2:
            raise ValidationError("world: occupancy must be a 2-D boolean grid")
        if abs(self.nx * self.grid_resolution - self.width) > 1e-6:
            raise ValidationError(
                f"world: grid width {self.nx} cells does not cover bounds width {self.width}"
            )
        if abs(self.ny * self.grid_resolution - self.height) > 1e-6:
            raise ValidationError(
                f"world: grid height {self.ny} cells does not cover bounds height {self.height}"
            )
        for i, room in enumerate(self.rooms):
            r = room.rect
            if not (r.x0 < r.x1 and r.y0 < r.y1):
                raise ValidationError(f"world: room {i} has an empty rect")
            if r.x0 < -1e-9 or r.y0 < -1e-9 or r.x1 > self.width + 1e-9 or r.y1 > self.height + 1e-9:
                raise ValidationError(f"world: room {i} ({room.category}) leaves the bounds")
            if not room.category:
                raise ValidationError(f"world: room {i} has an empty category")
        for i, a in enumerate(self.rooms):
            for j in range(i + 1, len(self.rooms)):
                b = self.rooms[j]
                ox = min(a.rect.x1, b.rect.x1) - max(a.rect.x0, b.rect.x0)
                oy = min(a.rect.y1, b.rect.y1) - max(a.rect.y0, b.rect.y0)
                if ox > 1e-9 and oy > 1e-9:
                    raise ValidationError(f"world: rooms {i} and {j} overlap")
        seen = set()
        for lm in self.landmarks:
            if lm.landmark_id in seen:
                raise ValidationError(f"world: duplicate landmark id {lm.landmark_id}")
            seen.add(lm.landmark_id)
            if not self.is_free(lm.x, lm.y):
                raise ValidationError(f"world: landmark {lm.landmark_id} is not in free space")


def room_at(world: SceneWorld, x: float, y: float) -> str | None:
    """Room category at a point, None outside every room.  A point on a
    shared boundary belongs to the room with the lowest list index."""
    if not world.in_bounds(x, y):
        raise ValueError(f"room_at: point ({x}, {y}) is outside the world bounds")
    for room in world.rooms:
        if room.rect.contains(x, y):
            return room.category
    return None


def _require_free(world: SceneWorld, p: tuple[float, float], name: str) -> None:
    if not world.in_bounds(p[0], p[1]):
        raise ValueError(f"{name} ({p[0]}, {p[1]}) is outside the world bounds")
    if not world.is_free(p[0], p[1]):
        raise ValueError(f"{name} ({p[0]}, {p[1]}) is inside an obstacle")


def _compose_distance(stub_a: float, stub_b: float, grid_m: float) -> float:
    # One shared float shape: (stub + stub) + grid.  Keeps the value exactly
    # symmetric in the endpoints and exactly equal to the raw grid value
    # when both stubs are zero (cell-center queries).
    return (stub_a + stub_b) + grid_m


def _path_counts(cells: list[list[int]]) -> tuple[int, int]:
    n_orth = 0
    n_diag = 0
    for i in range(1, len(cells)):
        dy = cells[i][0] - cells[i - 1][0]
        dx = cells[i][1] - cells[i - 1][1]
        if dy != 0 and dx != 0:
            n_diag += 1
        else:
            n_orth += 1
    return n_orth, n_diag


def geodesic_distance(
    world: SceneWorld, a: tuple[float, float], b: tuple[float, float]
) -> float | None:
    """Shortest obstacle-avoiding distance in meters, or None if no route
    exists.  Endpoints inside obstacles or out of bounds raise ValueError."""
    _require_free(world, a, "geodesic_distance: endpoint a")
    _require_free(world, b, "geodesic_distance: endpoint b")
    if a[0] == b[0] and a[1] == b[1]:
        return 0.0
    ca = world.cell_of(a[0], a[1])
    cb = world.cell_of(b[0], b[1])
    ax, ay = world.cell_center(*ca)
    bx, by = world.cell_center(*cb)
    stub_a = math.hypot(a[0] - ax, a[1] - ay)
    stub_b = math.hypot(b[0] - bx, b[1] - by)
    if ca == cb:
        return _compose_distance(stub_a, stub_b, 0.0)
    path = _kernels.plan_path(world.free_grid(), ca[0], ca[1], cb[0], cb[1])
    if path is None:
        return None
    n_orth, n_diag = _path_counts(path.tolist())
    grid_m = (n_orth + n_diag * SQRT2) * world.grid_resolution
    return _compose_distance(stub_a, stub_b, grid_m)


def shortest_path(
    world: SceneWorld, a: tuple[float, float], b: tuple[float, float]
) -> list[tuple[float, float]] | None:
    """Shortest-route polyline from a to b, or None if unreachable.

    The polyline runs a -> cell centers -> b with collinear grid runs
    merged; every segment is collision-free and the total length matches
    geodesic_distance to within one grid diagonal.
    """
    _require_free(world, a, "shortest_path: endpoint a")
    _require_free(world, b, "shortest_path: endpoint b")
    if a[0] == b[0] and a[1] == b[1]:
        return [a]
    ca = world.cell_of(a[0], a[1])
    cb = world.cell_of(b[0], b[1])
    if ca == cb:
        return [a, b]
    path = _kernels.plan_path(world.free_grid(), ca[0], ca[1], cb[0], cb[1])
    if path is None:
        return None
    cells = path.tolist()
    kept = [cells[0]]
    for i in range(1, len(cells) - 1):
        d_in = (cells[i][0] - cells[i - 1][0], cells[i][1] - cells[i - 1][1])
        d_out = (cells[i + 1][0] - cells[i][0], cells[i + 1][1] - cells[i][1])
        if d_in != d_out:
            kept.append(cells[i])
    kept.append(cells[-1])
    poly: list[tuple[float, float]] = [a]
    for iy, ix in kept:
        poly.append(world.cell_center(iy, ix))
    poly.append(b)
    out = [poly[0]]
    for p in poly[1:]:
        if p != out[-1]:
            out.append(p)
    return out


class GoalField:
    """All-cells geodesic distances to a fixed goal point, for O(1) queries."""

    def __init__(self, world: SceneWorld, goal: tuple[float, float]):
        _require_free(world, goal, "goal")
        self.world = world
        self.goal = (goal[0], goal[1])
        iy, ix = world.cell_of(goal[0], goal[1])
        self.cell = (iy, ix)
        self.field = _kernels.distance_field(world.free_grid(), iy, ix)
        cx, cy = world.cell_center(iy, ix)
        self.goal_stub = math.hypot(goal[0] - cx, goal[1] - cy)

    def distance_from(self, x: float, y: float) -> float | None:
        """Geodesic distance from (x, y) to the goal; bit-equal to
        geodesic_distance(world, (x, y), goal)."""
        _require_free(self.world, (x, y), "goal distance query point")
        if x == self.goal[0] and y == self.goal[1]:
            return 0.0
        iy, ix = self.world.cell_of(x, y)
        cx, cy = self.world.cell_center(iy, ix)
        stub = math.hypot(x - cx, y - cy)
        if (iy, ix) == self.cell:
            return _compose_distance(stub, self.goal_stub, 0.0)
        cells = self.field[iy, ix]
        if not math.isfinite(cells):
            return None
        grid_m = float(cells * self.world.grid_resolution)
        return _compose_distance(stub, self.goal_stub, grid_m)


def goal_field(world: SceneWorld, goal: tuple[float, float]) -> GoalField:
    key = ("goal-field", goal[0], goal[1])
    cached = world._cache.get(key)
    if cached is None:
        cached = GoalField(world, goal)
        world._cache[key] = cached
    return cached


def segment_free(world: SceneWorld, p: tuple[float, float], q: tuple[float, float]) -> bool:
    """True when every grid cell the segment passes through is free."""
    if not (world.is_free(p[0], p[1]) and world.is_free(q[0], q[1])):
        return False
    iy, ix = world.cell_of(p[0], p[1])
    ty, tx = world.cell_of(q[0], q[1])
    if world.occupancy[iy, ix]:
        return False
    res = world.grid_resolution
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    step_x = 1 if dx > 0 else (-1 if dx < 0 else 0)
    step_y = 1 if dy > 0 else (-1 if dy < 0 else 0)
    if step_x:
        edge_x = (ix + (1 if step_x > 0 else 0)) * res
        t_max_x = (edge_x - p[0]) / dx
        t_dx = res / abs(dx)
    else:
        t_max_x = math.inf
        t_dx = math.inf
    if step_y:
        edge_y = (iy + (1 if step_y > 0 else 0)) * res
        t_max_y = (edge_y - p[1]) / dy
        t_dy = res / abs(dy)
    else:
        t_max_y = math.inf
        t_dy = math.inf
    guard = abs(tx - ix) + abs(ty - iy) + 4
    while (iy, ix) != (ty, tx):
        if guard <= 0:
            return False  # degenerate float tie; stay conservative
        guard -= 1
        if t_max_x < t_max_y:
            ix += step_x
            t_max_x += t_dx
        else:
            iy += step_y
            t_max_y += t_dy
        if ix < 0 or ix >= world.nx or iy < 0 or iy >= world.ny:
            return False
        if world.occupancy[iy, ix]:
            return False
    return True


def smooth_polyline(
    world: SceneWorld, pts: list[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Greedy line-of-sight shortcutting.  Keeps the endpoints; every output
    segment is collision-free; never longer than the input."""
    if len(pts) <= 2:
        return list(pts)
    out = [pts[0]]
    i = 0
    last = len(pts) - 1
    while i < last:
        j = last
        while j > i + 1 and not segment_free(world, pts[i], pts[j]):
            j -= 1
        out.append(pts[j])
        i = j
    return out


def polyline_length(pts: list[tuple[float, float]]) -> float:
    return sum(
        math.hypot(pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1])
        for i in range(len(pts) - 1)
    )


def densify_polyline(
    pts: list[tuple[float, float]], spacing: float
) -> list[tuple[float, float]]:
    """Points along the polyline at fixed arc-length spacing, endpoints
    included.  Used for the time-warp reference."""
    if spacing <= 0:
        raise ValueError("densify_polyline: spacing must be positive")
    if len(pts) <= 1:
        return list(pts)
    out = [pts[0]]
    carry = 0.0
    for i in range(len(pts) - 1):
        ax, ay = pts[i]
        bx, by = pts[i + 1]
        seg = math.hypot(bx - ax, by - ay)
        if seg == 0.0:
            continue
        pos = 0.0
        while carry + (seg - pos) >= spacing:
            pos += spacing - carry
            carry = 0.0
            f = pos / seg
            out.append((ax + (bx - ax) * f, ay + (by - ay) * f))
        carry += seg - pos
    lx, ly = pts[-1]
    if math.hypot(lx - out[-1][0], ly - out[-1][1]) > 1e-9:
        out.append((lx, ly))
    return out


# --------------------------------------------------------------------------
# Episodes


@dataclass(frozen=True)
class Episode:
    episode_id: str
    instruction: str
    start: Pose
    goal: tuple[float, float]
    gt_waypoints: tuple[tuple[float, float], ...]
    gt_geodesic_length: float

    def validate(self, world: SceneWorld | None = None) -> None:
        if not self.episode_id:
            raise ValidationError("episode: empty episode_id")
        if not self.instruction:
            raise ValidationError(f"episode {self.episode_id}: empty instruction")
        if len(self.gt_waypoints) < 2:
            raise ValidationError(f"episode {self.episode_id}: needs at least 2 waypoints")
        if not (math.isfinite(self.gt_geodesic_length) and self.gt_geodesic_length > 0):
            raise ValidationError(
                f"episode {self.episode_id}: gt_geodesic_length must be a positive number"
            )
        if world is not None:
            _require_free(world, (self.start.x, self.start.y), f"episode {self.episode_id} start")
            _require_free(world, self.goal, f"episode {self.episode_id} goal")
            for k, wp in enumerate(self.gt_waypoints):
                if not world.is_free(wp[0], wp[1]):
                    raise ValidationError(
                        f"episode {self.episode_id}: waypoint {k} is not in free space"
                    )


# --------------------------------------------------------------------------
# Files


def _rle_encode_row(row: np.ndarray) -> list[int]:
    # Flat [value, count, value, count, ...] pairs.
    out: list[int] = []
    vals = row.astype(np.uint8).tolist()
    run_val = vals[0]
    run_len = 1
    for v in vals[1:]:
        if v == run_val:
            run_len += 1
        else:
            out.extend((run_val, run_len))
            run_val = v
            run_len = 1
    out.extend((run_val, run_len))
    return out


def _rle_decode_row(runs: object, nx: int, where: str) -> np.ndarray:
    if not isinstance(runs, list) or len(runs) % 2 != 0 or not runs:
        raise SchemaError(f"{where}: expected a flat [value, count, ...] list")
    row = np.zeros(nx, dtype=bool)
    pos = 0
    for k in range(0, len(runs), 2):
        val, count = runs[k], runs[k + 1]
        if val not in (0, 1) or not isinstance(count, int) or count <= 0:
            raise SchemaError(f"{where}: bad run pair ({val!r}, {count!r})")
        if pos + count > nx:
            raise SchemaError(f"{where}: run lengths overflow row width {nx}")
        if val:
            row[pos : pos + count] = True
        pos += count
    if pos != nx:
        raise SchemaError(f"{where}: run lengths cover {pos} of {nx} cells")
    return row


def world_to_json(world: SceneWorld) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "kind": "world",
        "grid_resolution": world.grid_resolution,
        "bounds": {"width": world.width, "height": world.height},
        "rooms": [
            {"category": r.category, "rect": [r.rect.x0, r.rect.y0, r.rect.x1, r.rect.y1]}
            for r in world.rooms
        ],
        "landmarks": [
            {"id": lm.landmark_id, "category": lm.category, "position": [lm.x, lm.y]}
            for lm in world.landmarks
        ],
        "occupancy_rle": [_rle_encode_row(world.occupancy[i]) for i in range(world.ny)],
    }


def world_from_json(obj: object) -> SceneWorld:
    if not isinstance(obj, dict):
        raise SchemaError("world: expected a JSON object")
    if obj.get("kind") != "world":
        raise SchemaError("world.kind: must be 'world'")
    if obj.get("schema") != SCHEMA_VERSION:
        raise SchemaError(f"world.schema: unsupported version {obj.get('schema')!r}")
    res = obj.get("grid_resolution")
    if not isinstance(res, (int, float)) or res <= 0:
        raise SchemaError("world.grid_resolution: must be a positive number")
    bounds = obj.get("bounds")
    if not isinstance(bounds, dict) or "width" not in bounds or "height" not in bounds:
        raise SchemaError("world.bounds: must carry width and height")
    width, height = bounds["width"], bounds["height"]
    if not isinstance(width, (int, float)) or not isinstance(height, (int, float)):
        raise SchemaError("world.bounds: width and height must be numbers")
    rle = obj.get("occupancy_rle")
    if not isinstance(rle, list) or not rle:
        raise SchemaError("world.occupancy_rle: must be a non-empty list of rows")
    nx = round(width / res)
    rows = [
        _rle_decode_row(row, nx, f"world.occupancy_rle[{i}]") for i, row in enumerate(rle)
    ]
    rooms = []
    raw_rooms = obj.get("rooms")
    if not isinstance(raw_rooms, list):
        raise SchemaError("world.rooms: must be a list")
    for i, rr in enumerate(raw_rooms):
        if (
            not isinstance(rr, dict)
            or not isinstance(rr.get("category"), str)
            or not isinstance(rr.get("rect"), list)
            or len(rr["rect"]) != 4
        ):
            raise SchemaError(f"world.rooms[{i}]: expected category and [x0, y0, x1, y1] rect")
        x0, y0, x1, y1 = (float(v) for v in rr["rect"])
        rooms.append(Room(rect=Rect(x0, y0, x1, y1), category=rr["category"]))
    landmarks = []
    raw_lms = obj.get("landmarks")
    if not isinstance(raw_lms, list):
        raise SchemaError("world.landmarks: must be a list")
    for i, rl in enumerate(raw_lms):
        if (
            not isinstance(rl, dict)
            or not isinstance(rl.get("id"), str)
            or not isinstance(rl.get("category"), str)
            or not isinstance(rl.get("position"), list)
            or len(rl["position"]) != 2
        ):
            raise SchemaError(f"world.landmarks[{i}]: expected id, category, position [x, y]")
        landmarks.append(
            Landmark(
                landmark_id=rl["id"],
                category=rl["category"],
                x=float(rl["position"][0]),
                y=float(rl["position"][1]),
            )
        )
    world = SceneWorld(
        width=float(width),
        height=float(height),
        grid_resolution=float(res),
        occupancy=np.array(rows, dtype=bool),
        rooms=tuple(rooms),
        landmarks=tuple(landmarks),
    )
    world.validate()
    return world


def save_world(world: SceneWorld, path: str) -> None:
    atomic_write_text(path, json.dumps(world_to_json(world), separators=(",", ":")) + "\n")


def load_world(path: str) -> SceneWorld:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"world file {path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise SchemaError(f"cannot read world file {path}: {exc}") from exc
    return world_from_json(obj)


def episode_to_json(ep: Episode) -> dict:
    return {
        "id": ep.episode_id,
        "instruction": ep.instruction,
        "start": ep.start.to_json(),
        "goal": [ep.goal[0], ep.goal[1]],
        "gt_waypoints": [[w[0], w[1]] for w in ep.gt_waypoints],
        "gt_geodesic_length": ep.gt_geodesic_length,
    }


def episode_from_json(obj: object, where: str) -> Episode:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if not isinstance(obj.get("id"), str) or not obj["id"]:
        raise SchemaError(f"{where}.id: must be a non-empty string")
    if not isinstance(obj.get("instruction"), str):
        raise SchemaError(f"{where}.instruction: must be a string")
    goal = obj.get("goal")
    if not isinstance(goal, list) or len(goal) != 2:
        raise SchemaError(f"{where}.goal: expected [x, y]")
    wps = obj.get("gt_waypoints")
    if not isinstance(wps, list):
        raise SchemaError(f"{where}.gt_waypoints: must be a list")
    for k, wp in enumerate(wps):
        if not isinstance(wp, list) or len(wp) != 2:
            raise SchemaError(f"{where}.gt_waypoints[{k}]: expected [x, y]")
    length = obj.get("gt_geodesic_length")
    if not isinstance(length, (int, float)):
        raise SchemaError(f"{where}.gt_geodesic_length: must be a number")
    ep = Episode(
        episode_id=obj["id"],
        instruction=obj["instruction"],
        start=Pose.from_json(obj.get("start"), f"{where}.start"),
        goal=(float(goal[0]), float(goal[1])),
        gt_waypoints=tuple((float(w[0]), float(w[1])) for w in wps),
        gt_geodesic_length=float(length),
    )
    ep.validate()
    return ep


def save_episodes(episodes: list[Episode], path: str) -> None:
    obj = {
        "schema": SCHEMA_VERSION,
        "kind": "episodes",
        "episodes": [episode_to_json(e) for e in episodes],
    }
    atomic_write_text(path, json.dumps(obj, separators=(",", ":")) + "\n")


def load_episodes(path: str, world: SceneWorld | None = None) -> list[Episode]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"episode file {path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise SchemaError(f"cannot read episode file {path}: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("kind") != "episodes":
        raise SchemaError("episodes.kind: must be 'episodes'")
    if obj.get("schema") != SCHEMA_VERSION:
        raise SchemaError(f"episodes.schema: unsupported version {obj.get('schema')!r}")
    raw = obj.get("episodes")
    if not isinstance(raw, list):
        raise SchemaError("episodes.episodes: must be a list")
    out = [episode_from_json(e, f"episodes[{i}]") for i, e in enumerate(raw)]
    if world is not None:
        for ep in out:
            ep.validate(world)
    return out


# --------------------------------------------------------------------------
# Synthetic generation


@dataclass(frozen=True)
class WorldGenParams:
    room_count: int = 3
    room_size_min: float = 2.5
    room_size_max: float = 4.0
    corridor_width: float = 0.8
    corridor_length: float = 0.8
    resolution: float = DEFAULT_RESOLUTION
    episode_count: int = 10
    margin: float = 0.2
    min_start_goal_separation: float = 1.5
    waypoint_spacing: float = 1.0


def _snap(value: float, res: float) -> float:
    return round(value / res) * res


def _room_sequence_instruction(rooms_seq: list[str], goal_landmark: str | None) -> str:
    tail = f" near the {goal_landmark}" if goal_landmark else ""
    if len(rooms_seq) == 1:
        return f"Cross the {rooms_seq[0]} and stop{tail}."
    middle = rooms_seq[1:-1]
    if middle:
        through = ", then through the ".join(middle)
        return (
            f"Leave the {rooms_seq[0]}, go through the {through}, "
            f"and stop in the {rooms_seq[-1]}{tail}."
        )
    return f"Leave the {rooms_seq[0]} and stop in the {rooms_seq[-1]}{tail}."


def _carve(occ: np.ndarray, rect: Rect, res: float) -> None:
    x0 = round(rect.x0 / res)
    x1 = round(rect.x1 / res)
    y0 = round(rect.y0 / res)
    y1 = round(rect.y1 / res)
    occ[y0:y1, x0:x1] = False


def _region_runs(world: SceneWorld, pts: list[tuple[float, float]], step: float) -> list[str | None]:
    """Room-category runs along a polyline, sampled every `step` meters."""
    samples = densify_polyline(pts, step)
    runs: list[str | None] = []
    for x, y in samples:
        label = room_at(world, x, y)
        if not runs or runs[-1] != label:
            runs.append(label)
    return runs


def generate_synthetic_world(
    seed: int, params: WorldGenParams = WorldGenParams()
) -> tuple[SceneWorld, list[Episode], dict]:
    """Build a deterministic row-of-rooms world plus episodes.

    Returns (world, episodes, metadata); the metadata records the room
    transitions each episode's reference route is planted to cross, in
    order, for use as an external oracle.
    """
    p = params
    if p.room_count < 1:
        raise GenerationError("room_count must be >= 1")
    if p.episode_count < 0:
        raise GenerationError("episode_count must be >= 0")
    if p.room_size_min > p.room_size_max:
        raise GenerationError("room_size_min must not exceed room_size_max")
    if p.resolution <= 0:
        raise GenerationError("resolution must be positive")
    if p.corridor_width < 4 * p.resolution:
        raise GenerationError("corridor_width must cover at least 4 grid cells")
    if p.room_size_min < p.corridor_width + 0.6:
        raise GenerationError(
            "room_size_min must exceed corridor_width + 0.6 so doorways fit inside walls"
        )
    if p.room_count >= 2 and p.corridor_length < 2 * p.resolution:
        raise GenerationError("corridor_length must cover at least 2 grid cells")

    rng = stable_rng(seed, "world-gen")
    res = p.resolution
    margin = max(_snap(p.margin, res), 2 * res)

    widths = [_snap(rng.uniform(p.room_size_min, p.room_size_max), res) for _ in range(p.room_count)]
    heights = [_snap(rng.uniform(p.room_size_min, p.room_size_max), res) for _ in range(p.room_count)]
    corridor_len = _snap(p.corridor_length, res)
    corridor_w = _snap(p.corridor_width, res)
    max_h = max(heights)

    if p.room_count <= len(ROOM_PALETTE):
        categories = rng.sample(ROOM_PALETTE, p.room_count)
    else:
        categories = []
        while len(categories) < p.room_count:
            pick = rng.choice(ROOM_PALETTE)
            if categories and categories[-1] == pick:
                continue
            categories.append(pick)

    total_w = margin * 2 + sum(widths) + corridor_len * (p.room_count - 1)
    total_h = margin * 2 + max_h
    nx = round(total_w / res)
    ny = round(total_h / res)
    width = nx * res
    height = ny * res

    occ = np.ones((ny, nx), dtype=bool)
    rooms: list[Room] = []
    x_cursor = margin
    for i in range(p.room_count):
        y0 = _snap(margin + (max_h - heights[i]) / 2, res)
        rect = Rect(x_cursor, y0, _snap(x_cursor + widths[i], res), _snap(y0 + heights[i], res))
        rooms.append(Room(rect=rect, category=categories[i]))
        _carve(occ, rect, res)
        x_cursor = _snap(rect.x1 + corridor_len, res)

    for i in range(p.room_count - 1):
        a = rooms[i].rect
        b = rooms[i + 1].rect
        lo = max(a.y0, b.y0) + 0.2
        hi = min(a.y1, b.y1) - 0.2 - corridor_w
        if hi < lo:
            raise GenerationError(f"rooms {i} and {i + 1} leave no room for a doorway")
        cy = _snap(rng.uniform(lo, hi), res)
        _carve(occ, Rect(a.x1, cy, b.x0, _snap(cy + corridor_w, res)), res)

    landmarks: list[Landmark] = []
    for i, room in enumerate(rooms):
        r = room.rect
        lx = rng.uniform(r.x0 + 0.3, r.x1 - 0.3)
        ly = rng.uniform(r.y0 + 0.3, r.y1 - 0.3)
        landmarks.append(
            Landmark(
                landmark_id=f"lm{i}",
                category=LANDMARK_PALETTE[rng.randrange(len(LANDMARK_PALETTE))],
                x=lx,
                y=ly,
            )
        )

    world = SceneWorld(
        width=width,
        height=height,
        grid_resolution=res,
        occupancy=occ,
        rooms=tuple(rooms),
        landmarks=tuple(landmarks),
    )
    world.validate()

    lm_by_room = {i: landmarks[i] for i in range(len(rooms))}
    episodes: list[Episode] = []
    meta_eps: dict[str, dict] = {}
    for e in range(p.episode_count):
        ep_rng = stable_rng(seed, "episode", str(e))
        episode = None
        for _attempt in range(64):
            s_room = ep_rng.randrange(p.room_count)
            if p.room_count >= 2:
                g_room = ep_rng.randrange(p.room_count - 1)
                if g_room >= s_room:
                    g_room += 1
            else:
                g_room = s_room
            sr = rooms[s_room].rect
            gr = rooms[g_room].rect
            start_xy = (
                ep_rng.uniform(sr.x0 + 0.4, sr.x1 - 0.4),
                ep_rng.uniform(sr.y0 + 0.4, sr.y1 - 0.4),
            )
            goal_xy = (
                ep_rng.uniform(gr.x0 + 0.4, gr.x1 - 0.4),
                ep_rng.uniform(gr.y0 + 0.4, gr.y1 - 0.4),
            )
            if not (world.is_free(*start_xy) and world.is_free(*goal_xy)):
                continue
            length = geodesic_distance(world, start_xy, goal_xy)
            if length is None or length < p.min_start_goal_separation:
                continue
            route = shortest_path(world, start_xy, goal_xy)
            if route is None:
                continue
            n_v = len(route)
            if n_v > 72:
                # Decimate before smoothing to keep it cheap, but restore the
                # original run wherever the straight cut would clip a wall.
                stride = (n_v - 1 + 71) // 72
                idxs = list(range(0, n_v - 1, stride)) + [n_v - 1]
                fixed = [route[0]]
                prev = 0
                for ii in idxs[1:]:
                    if segment_free(world, route[prev], route[ii]):
                        fixed.append(route[ii])
                    else:
                        fixed.extend(route[prev + 1 : ii + 1])
                    prev = ii
                route = fixed
            route = smooth_polyline(world, route)
            waypoints = [route[0]]
            for si in range(len(route) - 1):
                ax, ay = route[si]
                bx, by = route[si + 1]
                seg = math.hypot(bx - ax, by - ay)
                n_sub = max(1, round(seg / p.waypoint_spacing))
                for k in range(1, n_sub + 1):
                    f = k / n_sub
                    waypoints.append((ax + (bx - ax) * f, ay + (by - ay) * f))
            heading = ep_rng.randrange(24) * 15.0
            ep_id = f"ep{e:04d}"
            runs = _region_runs(world, route, res)
            transitions: list[tuple[str | None, str]] = []
            last_room = runs[0]
            for label in runs[1:]:
                if label is not None and label != last_room:
                    transitions.append((last_room, label))
                if label is not None:
                    last_room = label
            rooms_seq = [categories[s_room]] + [to for (_frm, to) in transitions]
            instruction = _room_sequence_instruction(rooms_seq, lm_by_room[g_room].category)
            episode = Episode(
                episode_id=ep_id,
                instruction=instruction,
                start=Pose(start_xy[0], start_xy[1], heading),
                goal=goal_xy,
                gt_waypoints=tuple(waypoints),
                gt_geodesic_length=length,
            )
            episode.validate(world)
            meta_eps[ep_id] = {
                "start_room": categories[s_room],
                "goal_room": categories[g_room],
                "planted_transitions": [[frm, to] for (frm, to) in transitions],
            }
            break
        if episode is None:
            raise GenerationError(f"could not place episode {e} after 64 attempts")
        episodes.append(episode)

    metadata = {"schema": SCHEMA_VERSION, "kind": "generation-metadata", "seed": seed, "episodes": meta_eps}
    return world, episodes, metadata
