"""Grasp rectangles, overlap metrics, and convex hulls.

Walks the geometry layer bottom-up: build a few rectangles, compare them
with the rotation-aware IoU, wrap a noisy point cloud in its hull, and
round-trip rectangles through the four-vertex annotation text format.
"""

import math
import tempfile
from pathlib import Path

import numpy as np

from graspadapt.geometry import (
    GraspRect,
    angle_diff,
    convex_hull,
    rect_iou,
    rect_vertices,
)
from graspadapt.harness import parse_cornell_rects, write_cornell_rects

rng = np.random.default_rng(0)

a = GraspRect(x=100.0, y=100.0, w=40.0, phi=0.0)
print("rectangle a:", a.as_tuple())
print("vertices:\n", rect_vertices(a))

# Slide a copy along x and watch the overlap decay.
print("\noffset  iou")
for dx in (0, 5, 10, 20, 40):
    b = GraspRect(x=100.0 + dx, y=100.0, w=40.0, phi=0.0)
    print(f"{dx:6d}  {rect_iou(a, b):.3f}")

# Rotation matters too; phi is pi-periodic so +-pi/2 meet again.
print("\nrotation  iou   angle_diff")
for deg in (0, 15, 45, 90):
    phi = math.radians(deg)
    if phi > math.pi / 2:
        phi -= math.pi
    c = GraspRect(x=100.0, y=100.0, w=40.0, phi=phi)
    print(f"{deg:8d}  {rect_iou(a, c):.3f}  {angle_diff(a.phi, c.phi):.3f}")

# Hull of a blob of points: interior points vanish, extremes survive.
pts = rng.normal(loc=50.0, scale=12.0, size=(80, 2))
hull = convex_hull(pts)
print(f"\nhull of 80 points keeps {len(hull)} vertices, "
      f"area {hull.area:.1f}")

# The annotation format stores one vertex per line, four lines per grasp.
rects = [GraspRect(x=float(rng.uniform(60, 180)),
                   y=float(rng.uniform(60, 180)),
                   w=float(rng.uniform(20, 60)),
                   phi=float(rng.uniform(-math.pi / 2, math.pi / 2)))
         for _ in range(3)]
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo_rects.txt"
    write_cornell_rects(path, rects)
    back = parse_cornell_rects(path)
print("\nround trip through the vertex file:")
for orig, rec in zip(rects, back):
    print(f"  wrote ({orig.x:7.2f}, {orig.y:7.2f}, {orig.w:6.2f}, "
          f"{orig.phi:+.3f})  read back ({rec.x:7.2f}, {rec.y:7.2f}, "
          f"{rec.w:6.2f}, {rec.phi:+.3f})")
