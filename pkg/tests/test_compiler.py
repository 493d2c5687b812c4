import math

import numpy as np
import pytest

from app.artlang import JointStmt, parse_artlang
from app.compiler import IMPLICIT_STATEMENT, compile_program, find_root, joint_frame, resolve_joint
from app.errors import CompileError, UrdfError
from app.geometry import Pose, TriMesh, UnitQuat
from app.kinematics import forward_kinematics, world_joints
from app.meshes import posed_link_meshes
from app.placement import collide
from app.sample_library import SAMPLE_OBJECTS, sample_object
from app.urdf import Joint, JointKind, JointLimit, Link, UrdfModel, emit_urdf, parse_urdf, structurally_equal


def resolver_for(meshes):
    def resolve(ref):
        try:
            return meshes[ref]
        except KeyError:
            raise UrdfError(f"mesh file not found: {ref}", code="unresolvable_mesh")

    return resolve


def sample_resolver():
    return resolver_for({obj.mesh_ref(part): part.mesh() for obj in SAMPLE_OBJECTS for part in obj.parts})


BOXES = resolver_for({
    "base.obj": TriMesh.box((0.4, 0.3, 0.2), (0, 0, 0.1)),
    "lid.obj": TriMesh.box((0.4, 0.3, 0.02)),
    "knob.obj": TriMesh.box((0.05, 0.05, 0.05)),
})


class TestCompile:
    def test_lidded_box(self):
        model, diagnostics = compile_program(parse_artlang(sample_object("lidded_box").program), sample_resolver(), "lidded_box")
        assert model.name == "lidded_box"
        assert model.root == "base"
        assert diagnostics.warnings == []
        joint = model.joint("lid_joint")
        assert joint.kind == JointKind.REVOLUTE
        assert joint.limit == JointLimit(0.0, 1.9)
        assert np.allclose(joint.origin.position, (0, 0.15, 0.21))
        assert np.allclose(model.link("lid").visual_origin.position, (0, -0.15, 0))
        frames = world_joints(model)
        assert np.allclose(frames["lid_joint"].axis, (-1, 0, 0))
        assert np.allclose(frames["lid_joint"].origin, (0, 0.15, 0.21))

    def test_lid_opens_upwards(self):
        model, _ = compile_program(parse_artlang(sample_object("lidded_box").program), sample_resolver())
        opened = posed_link_meshes(model, {"lid_joint": math.pi / 2})
        assert opened["lid"].vertices[:, 2].max() == pytest.approx(0.21 + 0.3, abs=1e-3)

    def test_prismatic_joint_at_placed_pose(self):
        model, _ = compile_program(parse_artlang(sample_object("drawer_cabinet").program), sample_resolver())
        joint = model.joint("drawer_joint")
        assert np.allclose(joint.origin.position, (0, -0.275, 0.6))
        assert np.allclose(model.link("drawer").visual_origin.position, 0.0)
        poses = forward_kinematics(model, {"drawer_joint": 0.35})
        assert np.allclose(poses["drawer"].position, (0, -0.625, 0.6))

    def test_every_sample_compiles_without_collisions(self):
        for obj in SAMPLE_OBJECTS:
            model, diagnostics = compile_program(parse_artlang(obj.program), sample_resolver(), obj.object_id)
            meshes = posed_link_meshes(model)
            root, child = (part.name for part in obj.parts)
            assert not collide(meshes[root], meshes[child]), obj.object_id
            assert set(diagnostics.collision_iterations) == {child}

    def test_emitted_urdf_round_trips(self):
        model, _ = compile_program(parse_artlang(sample_object("door_cabinet").program), sample_resolver())
        assert structurally_equal(model, parse_urdf(emit_urdf(model)), tol=1e-7)

    def test_links_keep_mesh_ref_and_scale(self):
        program = parse_artlang('part base "base.obj"; part lid "lid.obj" scale (1, 1, 2); place lid on base axis +z;')
        model, _ = compile_program(program, BOXES)
        lid = model.link("lid")
        assert lid.mesh_ref == "lid.obj"
        assert np.allclose(lid.mesh_scale, (1, 1, 2))
        assert np.allclose(lid.mesh.vertices[:, 2].max(), 0.01)
        assert np.allclose(model.joint("lid_joint").origin.position, (0, 0, 0.22))

    def test_unplaced_part_snaps_with_warning(self):
        program = parse_artlang('part base "base.obj"; part knob "knob.obj";')
        model, diagnostics = compile_program(program, BOXES)
        assert len(diagnostics.warnings) == 1
        warning = diagnostics.warnings[0]
        assert warning.statement_index == IMPLICIT_STATEMENT
        assert "knob" in warning.message
        assert model.joint("knob_joint").kind == JointKind.FIXED
        assert np.allclose(model.joint("knob_joint").origin.position, (0, 0, 0.225))

    def test_unplaced_part_snaps_onto_joint_parent(self):
        program = parse_artlang(
            'part base "base.obj"; part lid "lid.obj"; part knob "knob.obj";'
            'place lid on base axis +z; joint knob to lid fixed;'
        )
        model, diagnostics = compile_program(program, BOXES)
        assert "onto 'lid'" in diagnostics.warnings[0].message
        assert model.joint("knob_joint").parent == "lid"


class TestCompileErrors:
    def test_unresolvable_mesh(self):
        with pytest.raises(CompileError) as exc:
            compile_program(parse_artlang('part a "ghost.obj";'), BOXES)
        assert exc.value.code == "unresolvable_mesh"
        assert exc.value.location.line == 1

    def test_no_root(self):
        program = parse_artlang('part base "base.obj"; part lid "lid.obj"; place lid on base axis +z; joint base to lid fixed;')
        with pytest.raises(CompileError) as exc:
            compile_program(program, BOXES)
        assert exc.value.code == "no_root"

    def test_cycle_below_root(self):
        program = parse_artlang(
            'part base "base.obj"; part lid "lid.obj"; part knob "knob.obj";'
            'place lid on base axis +z; place knob on lid axis +z;'
            'joint lid to knob fixed; joint knob to lid fixed;'
        )
        with pytest.raises(CompileError) as exc:
            compile_program(program, BOXES)
        assert exc.value.code == "cyclic_structure"

    def test_parent_placed_later(self):
        program = parse_artlang(
            'part base "base.obj"; part lid "lid.obj"; part knob "knob.obj";'
            'place knob on lid axis +z; place lid on base axis +z;'
        )
        with pytest.raises(CompileError) as exc:
            compile_program(program, BOXES)
        assert exc.value.code == "unplaced_parent"

    def test_revolute_without_pivot(self):
        program = parse_artlang(
            'part base "base.obj"; part lid "lid.obj"; place lid on base axis +z;'
            'joint lid to base revolute axis (1, 0, 0) limit (0, 1);'
        )
        with pytest.raises(CompileError) as exc:
            compile_program(program, BOXES)
        assert exc.value.code == "missing_pivot"

    def test_empty_program(self):
        with pytest.raises(CompileError) as exc:
            find_root(parse_artlang(""))
        assert exc.value.code == "empty_program"


class TestJointFrame:
    def test_pivot_projected_onto_axis_line(self):
        stmt = JointStmt("door", "body", JointKind.REVOLUTE, (0, 0, 1), (0.3, -0.25, 0.0), JointLimit(0, 1))
        frame = joint_frame(stmt, Pose.from_translation((0.0, -0.26, 0.45)))
        assert np.allclose(frame.position, (0.3, -0.25, 0.45))

    def test_prismatic_uses_child_pose(self):
        stmt = JointStmt("drawer", "body", JointKind.PRISMATIC, (0, -1, 0), None, JointLimit(0, 1))
        child = Pose.from_translation((1, 2, 3))
        assert joint_frame(stmt, child).allclose(child)


class TestResolveJoint:
    def test_axis_in_joint_frame(self):
        stmt = JointStmt("drawer", "body", JointKind.PRISMATIC, (1, 0, 0), None, JointLimit(0, 0.3))
        child = Pose((1.0, 0.5, 0.2), UnitQuat.from_axis_angle((0, 0, 1), math.pi / 2))
        joint = resolve_joint(stmt, {"body": Pose.from_translation((1, 0, 0)), "drawer": child})
        assert joint.name == "drawer_joint"
        assert np.allclose(joint.origin.position, (0, 0.5, 0.2))
        assert np.allclose(joint.axis, (0, -1, 0))
        assert joint.limit == JointLimit(0, 0.3)

    def test_fixed_has_no_axis(self):
        stmt = JointStmt("knob", "body", JointKind.FIXED)
        joint = resolve_joint(stmt, {"body": Pose.identity(), "knob": Pose.from_translation((0, 0, 0.3))})
        assert joint.kind == JointKind.FIXED
        assert np.allclose(joint.origin.position, (0, 0, 0.3))

    def test_missing_world_pose(self):
        stmt = JointStmt("knob", "body", JointKind.FIXED)
        with pytest.raises(CompileError) as exc:
            resolve_joint(stmt, {"body": Pose.identity()})
        assert exc.value.code == "unplaced_part"

    def test_random_specs_round_trip_through_kinematics(self):
        rng = np.random.default_rng(21)

        def random_pose():
            axis = rng.normal(size=3)
            return Pose(rng.uniform(-1, 1, 3), UnitQuat.from_axis_angle(axis, rng.uniform(-math.pi, math.pi)))

        for _ in range(500):
            kind = JointKind.REVOLUTE if rng.random() < 0.5 else JointKind.PRISMATIC
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            pivot = tuple(rng.uniform(-1, 1, 3)) if kind == JointKind.REVOLUTE else None
            stmt = JointStmt("door", "body", kind, tuple(axis * rng.uniform(0.2, 3)), pivot, JointLimit(0.0, 1.0))
            body_pose = random_pose()
            joint = resolve_joint(stmt, {"body": body_pose, "door": random_pose()})
            model = UrdfModel("random", (Link("base"), Link("body"), Link("door")), (
                Joint("mount", JointKind.FIXED, "base", "body", origin=body_pose),
                joint,
            ))

            world = world_joints(model)["door_joint"]
            assert np.allclose(world.axis, axis, atol=1e-9)
            if kind == JointKind.REVOLUTE:
                offset = world.origin - np.asarray(pivot)
                assert np.linalg.norm(offset - np.dot(offset, axis) * axis) < 1e-9
