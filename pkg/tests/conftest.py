import math
import sys

import numpy as np
import pytest

sys.path.insert(0, __file__.rsplit("/", 1)[0])

from deskvln.kinematics import Pose
from deskvln.world import (
    Episode,
    Landmark,
    Rect,
    Room,
    SceneWorld,
    WorldGenParams,
    generate_synthetic_world,
    geodesic_distance,
)


def make_corridor_world(
    length_m: float = 6.0,
    width_m: float = 2.0,
    resolution: float = 0.05,
    wall_m: float = 0.2,
) -> SceneWorld:
    """Straight free corridor with solid border walls and one landmark."""
    nx = round(length_m / resolution)
    ny = round(width_m / resolution)
    occ = np.zeros((ny, nx), dtype=bool)
    w = round(wall_m / resolution)
    occ[:w, :] = True
    occ[-w:, :] = True
    occ[:, :w] = True
    occ[:, -w:] = True
    world = SceneWorld(
        width=length_m,
        height=width_m,
        grid_resolution=resolution,
        occupancy=occ,
        rooms=(Room(Rect(0.0, 0.0, length_m, width_m), "studio"),),
        landmarks=(Landmark("lamp", "lamp", length_m - 0.7, width_m / 2.0),),
    )
    world.validate()
    return world


def make_corridor_episode(world: SceneWorld, episode_id: str = "corridor") -> Episode:
    y = world.height / 2.0
    start = Pose(0.5, y, 0.0)
    goal = (world.width - 0.5, y)
    length = geodesic_distance(world, (start.x, start.y), goal)
    assert length is not None
    ep = Episode(
        episode_id=episode_id,
        instruction="Walk straight to the far end of the corridor and stop.",
        start=start,
        goal=goal,
        gt_waypoints=((start.x, start.y), goal),
        gt_geodesic_length=length,
    )
    ep.validate(world)
    return ep


def make_two_room_world(resolution: float = 0.05) -> SceneWorld:
    """Two 3 m rooms joined by a 0.8 m doorway in a dividing wall."""
    w_m, h_m = 6.2, 3.0
    nx, ny = round(w_m / resolution), round(h_m / resolution)
    occ = np.zeros((ny, nx), dtype=bool)
    wall = round(0.1 / resolution)
    occ[:wall, :] = True
    occ[-wall:, :] = True
    occ[:, :wall] = True
    occ[:, -wall:] = True
    mid0 = round(3.0 / resolution)
    mid1 = round(3.2 / resolution)
    occ[:, mid0:mid1] = True
    door0 = round(1.1 / resolution)
    door1 = round(1.9 / resolution)
    occ[door0:door1, mid0:mid1] = False
    world = SceneWorld(
        width=w_m,
        height=h_m,
        grid_resolution=resolution,
        occupancy=occ,
        rooms=(
            Room(Rect(0.0, 0.0, 3.0, h_m), "kitchen"),
            Room(Rect(3.2, 0.0, w_m, h_m), "bedroom"),
        ),
        landmarks=(Landmark("bed", "bed", 5.2, 1.5),),
    )
    world.validate()
    return world


def make_two_room_episode(world: SceneWorld, episode_id: str = "tworoom") -> Episode:
    start = Pose(0.6, 1.5, 0.0)
    goal = (5.6, 1.5)
    length = geodesic_distance(world, (start.x, start.y), goal)
    assert length is not None
    ep = Episode(
        episode_id=episode_id,
        instruction="Leave the kitchen and stop in the bedroom near the bed.",
        start=start,
        goal=goal,
        gt_waypoints=((start.x, start.y), (2.0, 1.5), (3.1, 1.5), (4.3, 1.5), goal),
        gt_geodesic_length=length,
    )
    ep.validate(world)
    return ep


@pytest.fixture
def corridor_world():
    return make_corridor_world()


@pytest.fixture
def corridor_episode(corridor_world):
    return make_corridor_episode(corridor_world)


@pytest.fixture
def two_room_world():
    return make_two_room_world()


@pytest.fixture(scope="session")
def gen_bundle():
    """One seeded synthetic world shared by read-only tests."""
    return generate_synthetic_world(
        11, WorldGenParams(room_count=4, episode_count=5)
    )
