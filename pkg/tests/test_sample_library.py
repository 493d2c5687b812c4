import json

import numpy as np
import pytest

from app.artlang import parse_artlang
from app.compiler import compile_program
from app.library import AssetLibrary, decode_embedding
from app.meshes import MeshCache, directory_resolver, load_model
from app.sample_library import (
    EMBEDDING_DIM, INPUT_FRAMES, KEYWORDS, SAMPLE_OBJECTS, SAMPLE_QUERIES,
    build_sample_library, keyword_embedding, sample_object,
)


class TestKeywordEmbedding:
    def test_unit_length(self):
        assert np.linalg.norm(keyword_embedding("a box with a lid")) == pytest.approx(1.0)

    def test_plurals_count(self):
        a = keyword_embedding("drawers")
        b = keyword_embedding("drawer")
        assert np.allclose(a, b)
        assert int(np.argmax(a)) == KEYWORDS.index("drawer")

    def test_unrelated_text_is_not_zero(self):
        vector = keyword_embedding("zebra")
        assert vector.shape == (EMBEDDING_DIM,)
        assert np.allclose(vector, vector[0])


class TestSampleObjects:
    def test_lookup(self):
        assert sample_object("lidded_box").category == "container"
        with pytest.raises(KeyError):
            sample_object("piano")

    @pytest.mark.parametrize("obj", SAMPLE_OBJECTS, ids=lambda o: o.object_id)
    def test_each_object_has_one_movable_joint(self, obj, library_dir):
        model, _ = compile_program(parse_artlang(obj.program), directory_resolver(library_dir), obj.object_id)
        assert len(model.movable_joints) == 1
        assert {p.name for p in obj.parts} == {link.name for link in model.links}


class TestBuild:
    def test_layout(self, library_dir):
        for obj in SAMPLE_OBJECTS:
            assert (library_dir / obj.object_id / "thumbnail.png").is_file()
            assert (library_dir / obj.object_id / "program.art").read_text(encoding="utf-8") == obj.program
            frames = sorted((library_dir / "inputs" / obj.object_id).glob("frame_*.png"))
            assert len(frames) == INPUT_FRAMES

    def test_ground_truth_loads(self, library_dir):
        cache = MeshCache()
        for obj in SAMPLE_OBJECTS:
            model = load_model(library_dir / f"{obj.object_id}.urdf", cache)
            assert model.name == obj.object_id

    def test_query_cache_covers_queries(self, library_dir):
        cache = json.loads((library_dir / "query_cache.json").read_text(encoding="utf-8"))
        for text in SAMPLE_QUERIES:
            assert np.allclose(decode_embedding(cache[text]), keyword_embedding(text))
        assert "drawer front panel" in cache

    def test_manifest_loads(self, library_dir):
        library = AssetLibrary.load(library_dir)
        assert len(library.entries()) == len(SAMPLE_OBJECTS)
        assert library.entry("drawer_cabinet").gt_urdf == "drawer_cabinet.urdf"

    def test_without_frames_and_extra_queries(self, tmp_path):
        manifest = build_sample_library(tmp_path, with_frames=False, extra_queries=["a wooden chest"])
        assert manifest == tmp_path / "manifest.json"
        assert not (tmp_path / "inputs").exists()
        assert "a wooden chest" in json.loads((tmp_path / "query_cache.json").read_text(encoding="utf-8"))
