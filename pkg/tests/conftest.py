import os

os.environ.setdefault("DATABASE_URL", "sqlite:///:memory:")

import pytest
from fastapi.testclient import TestClient
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from app import deps
from app.config import settings
from app.database import Base, get_db
from app.geometry import TriMesh
from app.library import AssetLibrary
from app.main import app
from app.meshes import emit_obj
from app.prompts import PromptBook
from app.sample_library import build_sample_library


# Test database
SQLALCHEMY_DATABASE_URL = "sqlite:///:memory:"

engine = create_engine(
    SQLALCHEMY_DATABASE_URL,
    connect_args={"check_same_thread": False},
    poolclass=StaticPool,
)
TestingSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def override_get_db():
    try:
        db = TestingSessionLocal()
        yield db
    finally:
        db.close()


app.dependency_overrides[get_db] = override_get_db


TWO_LINK_URDF = """<?xml version="1.0"?>
<robot name="hinge">
  <link name="base">
    <visual><geometry><mesh filename="base.obj"/></geometry></visual>
  </link>
  <link name="lid">
    <visual>
      <origin xyz="0 -0.15 0.01" rpy="0 0 0"/>
      <geometry><mesh filename="lid.obj"/></geometry>
    </visual>
  </link>
  <joint name="lid_joint" type="revolute">
    <parent link="base"/>
    <child link="lid"/>
    <origin xyz="0 0.15 0.2" rpy="0 0 0"/>
    <axis xyz="-1 0 0"/>
    <limit lower="0" upper="1.9"/>
  </joint>
</robot>
"""


@pytest.fixture
def client():
    Base.metadata.create_all(bind=engine)
    with TestClient(app) as c:
        yield c
    Base.metadata.drop_all(bind=engine)


@pytest.fixture
def db_session():
    Base.metadata.create_all(bind=engine)
    db = TestingSessionLocal()
    try:
        yield db
    finally:
        db.close()
        Base.metadata.drop_all(bind=engine)


@pytest.fixture(scope="session")
def library_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("library")
    build_sample_library(root)
    return root


@pytest.fixture
def library(library_dir):
    return AssetLibrary.load(library_dir)


@pytest.fixture
def library_client(client, library_dir, monkeypatch):
    monkeypatch.setattr(settings, "library_path", str(library_dir))
    deps._load_library.cache_clear()
    yield client
    deps._load_library.cache_clear()


@pytest.fixture
def prompts():
    return PromptBook()


@pytest.fixture
def two_link_urdf():
    return TWO_LINK_URDF


@pytest.fixture
def hinge_meshes(tmp_path):
    """base.obj and lid.obj for TWO_LINK_URDF, written next to a model.urdf."""
    (tmp_path / "base.obj").write_text(emit_obj(TriMesh.box((0.4, 0.3, 0.2), (0.0, 0.0, 0.1))), encoding="utf-8")
    (tmp_path / "lid.obj").write_text(emit_obj(TriMesh.box((0.4, 0.3, 0.02))), encoding="utf-8")
    (tmp_path / "model.urdf").write_text(TWO_LINK_URDF, encoding="utf-8")
    return tmp_path
