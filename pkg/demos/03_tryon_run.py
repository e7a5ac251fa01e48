"""
Running a plan end to end
=========================

Execute a three-garment plan with the local stub backends. The stub try-on
model pastes the garment image into the mask, so every pixel outside the
masks is guaranteed to come from the source photo.
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from ivton import GarmentSpec, build_plan, execute_plan, stub_backends
from ivton.backends import load_rgb
from ivton.fixtures import Layout, body_raster, dress_person, write_garment, write_person

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="ivton_demo_"))

# Write a person image plus its segmentation sidecars, and three garments.
body = body_raster(Layout())
person = write_person(out / "people", "person", body, dress_person(body, ["t-shirt", "shorts", "shoes"]))
garments = [GarmentSpec.load(write_garment(out / "garments", k)) for k in ("jacket", "pants", "shirt")]

backends = stub_backends(out / "work")
seg = backends.segmentation.segment(person)
plan = build_plan(garments, "try on the shirt tucked in, jacket open", seg.body, seg.clothing,
                  str(person), dummies=backends.dummies)

result = execute_plan(plan, backends, run_root=out / "runs")
print("run directory:", result.run_dir)
for path in sorted(result.run_dir.rglob("*")):
    if path.is_file() and path.name.count(".") == 1:
        print("  ", path.relative_to(result.run_dir))

# Everything outside the union of the step masks is unchanged.
touched = np.zeros(body.shape, dtype=bool)
for art in result.artifacts:
    for mask in art.masks.values():
        touched |= mask.bits
src, final = load_rgb(person), load_rgb(result.final_image_ref)
print("pixels changed outside masks:", int((src[~touched] != final[~touched]).any(axis=-1).sum()))
print("manifest status:", json.loads((result.run_dir / "manifest.json").read_text())["status"])
