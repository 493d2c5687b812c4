import math

import numpy as np
import pytest

from app.errors import UrdfError
from app.geometry import Pose, TriMesh, UnitQuat
from app.urdf import (
    Joint, JointKind, JointLimit, Link, UrdfModel, emit_urdf, fmt, parse_urdf, structurally_equal,
)


def robot(body: str, name: str = "obj") -> str:
    return f'<?xml version="1.0"?>\n<robot name="{name}">\n{body}\n</robot>\n'


def chain_model(rng, n_links: int) -> UrdfModel:
    links = [Link(f"l{i}", mesh_ref=f"m{i}.obj", visual_origin=Pose(rng.normal(size=3), UnitQuat.from_rpy(*rng.uniform(-1, 1, 3)))) for i in range(n_links)]
    joints = []
    for i in range(1, n_links):
        kind = [JointKind.FIXED, JointKind.REVOLUTE, JointKind.PRISMATIC][i % 3]
        parent = f"l{int(rng.integers(0, i))}"
        limit = None if kind == JointKind.FIXED else JointLimit(float(rng.uniform(-1, 0)), float(rng.uniform(0, 1)))
        joints.append(Joint(
            f"j{i}", kind, parent, f"l{i}",
            Pose(rng.normal(size=3), UnitQuat.from_rpy(*rng.uniform(-1, 1, 3))),
            rng.normal(size=3), limit,
        ))
    return UrdfModel("chain", tuple(links), tuple(joints))


class TestParse:
    def test_two_link_revolute(self, two_link_urdf):
        model = parse_urdf(two_link_urdf)
        assert model.name == "hinge"
        assert model.root == "base"
        assert model.link_names == ["base", "lid"]
        joint = model.joint("lid_joint")
        assert joint.kind == JointKind.REVOLUTE
        assert joint.limit == JointLimit(0.0, 1.9)
        assert np.allclose(joint.axis, (-1, 0, 0))
        assert np.allclose(joint.origin.position, (0, 0.15, 0.2))
        assert model.link("lid").mesh_ref == "lid.obj"

    def test_defaults_when_tags_missing(self):
        model = parse_urdf(robot('<link name="a"/><link name="b"/>'
                                 '<joint name="j" type="fixed"><parent link="a"/><child link="b"/></joint>'))
        joint = model.joint("j")
        assert joint.origin.allclose(Pose.identity())
        assert joint.limit is None

    def test_continuous_becomes_limited_revolute(self):
        model = parse_urdf(robot('<link name="a"/><link name="b"/>'
                                 '<joint name="j" type="continuous"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/></joint>'))
        joint = model.joint("j")
        assert joint.kind == JointKind.REVOLUTE
        assert joint.limit == JointLimit(-math.pi, math.pi)

    def test_axis_is_normalized(self):
        model = parse_urdf(robot('<link name="a"/><link name="b"/>'
                                 '<joint name="j" type="prismatic"><parent link="a"/><child link="b"/>'
                                 '<axis xyz="0 0 2"/><limit lower="0" upper="1"/></joint>'))
        assert np.allclose(model.joint("j").axis, (0, 0, 1))

    def test_inertial_and_collision_ignored(self):
        model = parse_urdf(robot('<link name="a"><inertial><mass value="1"/></inertial>'
                                 '<collision><geometry><box size="1 1 1"/></geometry></collision></link>'))
        assert model.link("a").mesh_ref is None

    def test_mesh_scale(self):
        model = parse_urdf(robot('<link name="a"><visual><geometry><mesh filename="a.obj" scale="2 3 4"/></geometry></visual></link>'))
        assert np.allclose(model.link("a").mesh_scale, (2, 3, 4))


class TestInvalidDocuments:
    @pytest.mark.parametrize("text,code", [
        ("<robot name='x'><link name='a'>", "malformed_xml"),
        (robot('<link name="a"/><link name="a"/>'), "repeated_link"),
        (robot('<link name="a"/><link name="b"/>'
               '<joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>'
               '<joint name="j2" type="fixed"><parent link="b"/><child link="a"/></joint>'), "cyclic_structure"),
        (robot('<link name="a"/><link name="b"/>'
               '<joint name="j" type="revolute"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/></joint>'), "missing_limit"),
        (robot('<link name="a"/><link name="b"/>'
               '<joint name="j" type="planar"><parent link="a"/><child link="b"/></joint>'), "unknown_joint_type"),
        (robot('<link name="a"/>'
               '<joint name="j" type="fixed"><parent link="a"/><child link="ghost"/></joint>'), "dangling_reference"),
        (robot('<link name="a"/><link name="b"/><link name="c"/>'
               '<joint name="j1" type="fixed"><parent link="a"/><child link="c"/></joint>'
               '<joint name="j2" type="fixed"><parent link="b"/><child link="c"/></joint>'), "multiple_parents"),
        (robot('<link name="a"/><link name="b"/>'), "disconnected_tree"),
        (robot('<link name="a"/><link name="b"/>'
               '<joint name="j" type="revolute"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/>'
               '<limit lower="1" upper="0"/></joint>'), "invalid_limit"),
        (robot('<link name="a"/><link name="b"/>'
               '<joint name="j" type="prismatic"><parent link="a"/><child link="b"/><axis xyz="0 0 0"/>'
               '<limit lower="0" upper="1"/></joint>'), "invalid_axis"),
        ('<model name="x"/>', "malformed_xml"),
    ])
    def test_error_codes(self, text, code):
        with pytest.raises(UrdfError) as exc:
            parse_urdf(text)
        assert exc.value.code == code

    def test_self_loop_is_cyclic(self):
        with pytest.raises(UrdfError) as exc:
            parse_urdf(robot('<link name="a"/><joint name="j" type="fixed"><parent link="a"/><child link="a"/></joint>'))
        assert exc.value.code == "cyclic_structure"

    def test_non_positive_scale(self):
        with pytest.raises(UrdfError) as exc:
            parse_urdf(robot('<link name="a"><visual><geometry><mesh filename="a.obj" scale="1 0 1"/></geometry></visual></link>'))
        assert exc.value.code == "invalid_scale"


class TestEmit:
    def test_round_trip_fixed_point(self, two_link_urdf):
        model = parse_urdf(two_link_urdf)
        text = emit_urdf(model)
        again = parse_urdf(text)
        assert structurally_equal(model, again)
        assert emit_urdf(again) == text

    def test_random_models_round_trip(self):
        rng = np.random.default_rng(2024)
        for n in range(1, 21):
            model = chain_model(rng, n)
            once = emit_urdf(model)
            twice = emit_urdf(parse_urdf(once))
            assert once == twice
            assert structurally_equal(model, parse_urdf(once), tol=1e-7)

    def test_quotes_names(self):
        model = UrdfModel('a "b"', (Link("x<y"),))
        assert parse_urdf(emit_urdf(model)).link_names == ["x<y"]

    def test_fmt(self):
        assert fmt(1e-13) == "0"
        assert fmt(-0.0) == "0"
        assert fmt(0.5) == "0.5"
        assert fmt(1 / 3) == "0.333333333"

    def test_fixed_joint_has_no_axis_or_limit(self):
        model = UrdfModel("m", (Link("a"), Link("b")), (Joint("j", JointKind.FIXED, "a", "b"),))
        text = emit_urdf(model)
        assert "<axis" not in text
        assert "<limit" not in text

    def test_inline_mesh_needs_a_filename(self):
        model = UrdfModel("m", (Link("a", mesh=TriMesh.box((1, 1, 1))),))
        with pytest.raises(UrdfError) as exc:
            emit_urdf(model)
        assert exc.value.code == "unnamed_mesh"

    def test_empty_inline_mesh_is_a_bare_link(self):
        model = UrdfModel("m", (Link("a", mesh=TriMesh.empty()),))
        assert parse_urdf(emit_urdf(model)).link("a").mesh_ref is None


class TestModel:
    def test_joints_in_tree_order(self):
        links = tuple(Link(n) for n in ("c", "a", "b"))
        joints = (
            Joint("jc", JointKind.FIXED, "b", "c"),
            Joint("jb", JointKind.FIXED, "a", "b"),
        )
        model = UrdfModel("m", links, joints)
        assert model.root == "a"
        assert [j.name for j in model.joints_in_tree_order()] == ["jb", "jc"]

    def test_joint_for_child(self, two_link_urdf):
        model = parse_urdf(two_link_urdf)
        assert model.joint_for_child("lid").name == "lid_joint"
        assert model.joint_for_child("base") is None

    def test_structural_inequality(self, two_link_urdf):
        model = parse_urdf(two_link_urdf)
        other = parse_urdf(two_link_urdf.replace('upper="1.9"', 'upper="1.8"'))
        assert not structurally_equal(model, other)
