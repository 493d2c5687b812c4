#!/usr/bin/env python3
"""
Script to build the sample asset library.
Writes meshes, ground-truth programs and URDFs, thumbnails, input frames,
embeddings and a query cache, then runs every ground truth through the oracle.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from app.config import EvalConfig
from app.evaluation import evaluate
from app.library import AssetLibrary
from app.meshes import MeshCache, load_model
from app.sample_library import build_sample_library


def populate_sample_library(root: Path):
    """Build the library under `root` and check that every object matches its own ground truth"""

    print(f"🔄 Building sample library in {root} ...")
    manifest = build_sample_library(root)
    library = AssetLibrary.load(root)
    print(f"✅ Wrote {manifest}")

    cache = MeshCache()
    failures = 0
    for entry in library.entries():
        model = load_model(library.path(entry.gt_urdf), cache)
        report = evaluate(model, model, cfg=EvalConfig(compute_chamfer=False), object_id=entry.object_id)
        mark = "✅" if report.object_joint_success else "❌"
        failures += 0 if report.object_joint_success else 1
        print(f"  {mark} {library.category_of(entry.object_id)}/{entry.object_id}: "
              f"{len(model.links)} links, {len(model.movable_joints)} movable joints")

    print(f"\n📊 Categories: {', '.join(sorted(library.categories))}")
    print(f"📊 Part candidates: {len(library.part_candidates)}")
    return failures == 0


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("sample_library")
    sys.exit(0 if populate_sample_library(target) else 1)
