import math

import numpy as np
import pytest

from app.artlang import PlaceStmt
from app.errors import GeometryError, PlacementError
from app.geometry import Pose, TriMesh, UnitQuat, aabb_of
from app.placement import collide, place_with_collision, search_contact, triangles_intersect


def cube(size=1.0, center=(0.0, 0.0, 0.0)):
    return TriMesh.box((size, size, size), center)


class TestCollide:
    def test_overlapping_boxes(self):
        assert collide(cube(), cube(center=(0.5, 0, 0)))

    def test_touching_faces_do_not_collide(self):
        assert not collide(cube(), cube(center=(1.0, 0, 0)))

    def test_separate_boxes(self):
        assert not collide(cube(), cube(center=(3.0, 0, 0)))

    def test_contained_box_without_surface_contact(self):
        # only surfaces are tested; a box floating inside another does not collide
        assert not collide(cube(2.0), cube(0.5))

    def test_poses_are_applied(self):
        assert collide(cube(), cube(), pose_b=Pose.from_translation((0.2, 0.1, 0)))
        assert not collide(cube(), cube(), pose_b=Pose.from_translation((0, 0, 5)))

    def test_empty_mesh_rejected(self):
        with pytest.raises(GeometryError):
            collide(TriMesh.empty(), cube())

    def test_triangle_pair(self):
        flat = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
        crossing = [[0.2, 0.2, -1], [0.2, 0.2, 1], [0.3, 0.25, 0]]
        far = [[5, 5, 5], [6, 5, 5], [5, 6, 5]]
        assert triangles_intersect(flat, crossing)
        assert not triangles_intersect(flat, far)


class TestPlacement:
    def test_cube_on_cube(self):
        pose = place_with_collision(cube(0.5), [cube()], PlaceStmt("child", "parent", "+z"))
        assert np.allclose(pose.position, (0, 0, 0.75))

    @pytest.mark.parametrize("axis,expected", [
        ("+x", (0.75, 0, 0)), ("-x", (-0.75, 0, 0)),
        ("+y", (0, 0.75, 0)), ("-y", (0, -0.75, 0)),
        ("-z", (0, 0, -0.75)),
    ])
    def test_every_axis(self, axis, expected):
        pose = place_with_collision(cube(0.5), [cube()], PlaceStmt("child", "parent", axis))
        assert np.allclose(pose.position, expected)

    def test_lateral_offset_ignores_axis_component(self):
        pose = place_with_collision(cube(0.5), [cube()], PlaceStmt("child", "parent", "+z", (0.2, -0.1, 9.0)))
        assert np.allclose(pose.position, (0.2, -0.1, 0.75))

    def test_clearance_added_along_axis(self):
        pose = place_with_collision(cube(0.5), [cube()], PlaceStmt("child", "parent", "+z", clearance=0.01))
        assert np.allclose(pose.position, (0, 0, 0.76))

    def test_placed_child_does_not_intersect_parent(self):
        parent = TriMesh.box((0.6, 0.5, 0.8), (0, 0, 0.4))
        child = TriMesh.box((0.5, 0.05, 0.2))
        pose = place_with_collision(child, [parent], PlaceStmt("drawer", "body", "-y", (0, 0, 0.2)))
        assert not collide(child, parent, pose_a=pose)
        assert np.allclose(pose.position, (0, -0.275, 0.6))

    def test_child_settles_into_cavity(self):
        floor = TriMesh.box((1.0, 1.0, 0.2), (0, 0, 0.1))
        left = TriMesh.box((0.2, 1.0, 1.0), (-0.4, 0, 0.5))
        right = TriMesh.box((0.2, 1.0, 1.0), (0.4, 0, 0.5))
        result = search_contact(cube(0.2), [floor, left, right], PlaceStmt("block", "tray", "+z"))
        assert result.pose.position[2] == pytest.approx(0.3, abs=2e-4)
        assert result.collision_checks > 1

    def test_unblocked_child_keeps_bounding_box_contact(self):
        pose = place_with_collision(cube(0.5), [cube()], PlaceStmt("child", "parent", "+z", (5.0, 0, 0)))
        assert np.allclose(pose.position, (5.0, 0, 0.75))

    def test_anchor_defaults_to_assembly_bounds(self):
        assembly = [cube(), cube(center=(0, 0, 1))]
        pose = place_with_collision(cube(0.5), assembly, PlaceStmt("child", "parent", "+z"))
        assert np.allclose(pose.position, (0, 0.0, 1.75))

    def test_explicit_anchor(self):
        assembly = [cube(), cube(center=(3, 0, 0))]
        pose = place_with_collision(cube(0.5), assembly, PlaceStmt("child", "parent", "+z"), anchor=aabb_of(assembly[1]))
        assert np.allclose(pose.position, (3, 0, 0.75))

    def test_empty_child(self):
        with pytest.raises(PlacementError) as exc:
            place_with_collision(TriMesh.empty(), [cube()], PlaceStmt("child", "parent", "+z"))
        assert exc.value.code == "empty_mesh"

    def test_empty_parent(self):
        with pytest.raises(PlacementError):
            place_with_collision(cube(), [TriMesh.empty()], PlaceStmt("child", "parent", "+z"))


def segment_hits_triangle(p, q, tri):
    """Moller-Trumbore restricted to the segment p->q."""
    a, b, c = tri
    d = q - p
    e1, e2 = b - a, c - a
    h = np.cross(d, e2)
    det = float(np.dot(e1, h))
    if abs(det) < 1e-12:
        return False
    s = p - a
    u = float(np.dot(s, h)) / det
    qv = np.cross(s, e1)
    v = float(np.dot(d, qv)) / det
    t = float(np.dot(e2, qv)) / det
    return u >= 0 and v >= 0 and u + v <= 1 and 0 <= t <= 1


def brute_force_collide(a, b):
    """Generic (non-coplanar) triangles intersect iff an edge of one crosses the other."""
    for t1 in a.triangle_vertices():
        for t2 in b.triangle_vertices():
            for first, second in ((t1, t2), (t2, t1)):
                if any(segment_hits_triangle(first[i], first[(i + 1) % 3], second) for i in range(3)):
                    return True
    return False


def triangle_soup(rng, n, center):
    vertices = np.asarray(center) + rng.uniform(-0.5, 0.5, (3 * n, 3))
    return TriMesh(vertices, np.arange(3 * n).reshape(n, 3))


class TestCollideOracle:
    def test_random_soups_match_brute_force(self):
        rng = np.random.default_rng(31)
        outcomes = set()
        for _ in range(200):
            a = triangle_soup(rng, int(rng.integers(1, 8)), (0, 0, 0))
            b = triangle_soup(rng, int(rng.integers(1, 8)), rng.uniform(-0.8, 0.8, 3))
            expected = brute_force_collide(a, b)
            assert collide(a, b) == expected
            outcomes.add(expected)
        assert outcomes == {True, False}

    def test_random_poses_match_brute_force(self):
        rng = np.random.default_rng(32)
        box = TriMesh.box((0.4, 0.3, 0.2))
        for _ in range(100):
            pose = Pose(rng.uniform(-0.4, 0.4, 3), UnitQuat.from_array(rng.normal(size=4)))
            assert collide(box, box, pose_b=pose) == brute_force_collide(box, box.transformed(pose))


def gap_along(child, blocker, k, sign):
    c, p = aabb_of(child), aabb_of(blocker)
    return float(c.min[k] - p.max[k]) if sign > 0 else float(p.min[k] - c.max[k])


def shifted(mesh, k, distance):
    t = np.zeros(3)
    t[k] = distance
    return mesh.transformed(Pose.from_translation(t))


TRAY = [
    TriMesh.box((1.0, 1.0, 0.2), (0, 0, 0.1)),
    TriMesh.box((0.2, 1.0, 1.0), (-0.4, 0, 0.5)),
    TriMesh.box((0.2, 1.0, 1.0), (0.4, 0, 0.5)),
]

PLACEMENTS = {
    "cube_on_cube": ([cube()], 0, cube(0.5), "+z", 0.0),
    "slab_beside_plate": ([TriMesh.box((1.0, 0.8, 0.05))], 0, TriMesh.box((0.3, 0.2, 0.1)), "-x", 0.02),
    "thin_on_thin": ([TriMesh.box((0.5, 0.5, 0.002))], 0, TriMesh.box((0.4, 0.4, 0.002)), "+z", 0.001),
    "cube_against_pole": ([TriMesh.box((0.002, 0.002, 1.0))], 0, cube(0.1), "+y", 0.0),
    "thin_shelf_under_tall_child": ([TriMesh.box((0.6, 0.6, 0.003))], 0, TriMesh.box((0.05, 0.05, 1.5)), "-z", 0.005),
    "block_into_tray": (TRAY, 0, cube(0.2), "+z", 0.0),
}


class TestPlacementContract:
    @pytest.mark.parametrize("name", sorted(PLACEMENTS))
    def test_gap_equals_clearance_without_intersections(self, name):
        parents, blocker, child, axis, clearance = PLACEMENTS[name]
        stmt = PlaceStmt("child", "parent", axis, clearance=clearance)
        k, sign = stmt.axis_index, stmt.axis_sign

        placed = child.transformed(place_with_collision(child, parents, stmt))
        assert not any(collide(placed, parent) for parent in parents)
        assert gap_along(placed, parents[blocker], k, sign) == pytest.approx(clearance, abs=1e-4)

        # pushed past the clearance plus the search tolerance, it must hit something
        pushed = shifted(placed, k, -sign * (clearance + 1e-4 + 1e-6))
        assert any(collide(pushed, parent) for parent in parents)

    def test_rotated_child(self):
        child = cube(0.4).transformed(Pose.from_rotation(UnitQuat.from_axis_angle((0, 0, 1), math.pi / 4)))
        placed = child.transformed(place_with_collision(child, [cube()], PlaceStmt("child", "parent", "+z")))
        assert not collide(placed, cube())
        assert gap_along(placed, cube(), 2, 1.0) == pytest.approx(0.0, abs=1e-4)
        assert collide(shifted(placed, 2, -1.01e-4), cube())
