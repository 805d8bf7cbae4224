"""Synthetic tabletop worlds and their viewpoint renderings.

The world is 2.5D: convex polygonal objects (coordinates in mm, z=0 on the
table) extruded to a per-object height. Viewpoints sit on a ring around the
scene center at a fixed elevation; the camera is orthographic, so azimuth
rotates the world and elevation compresses it along the camera-forward axis
("foreshortening"). Depth is the distance from the camera plane along the
viewing direction, in mm.

Scene files are JSON, schema version 1:

    {"version": 1, "seed": 7, "table_extent_mm": [112.0, 112.0],
     "objects": [{"id": "disk-0", "category": "disk", "height_mm": 6.0,
                  "vertices_mm": [[x, y], ...],
                  "gt_grasps": [[x, y, w, phi, q], ...],
                  "optimal_observation": 3}]}
"""

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .geometry import GraspRect, Polygon, convex_hull, polygon_centroid, rect_vertices

IMAGE_SIZE = 224
PX_PER_MM = 2.0

GT_JAW_MARGIN_MM = 4.0


@dataclass(frozen=True)
class Viewpoint:
    azimuth: float  # radians
    elevation: float  # radians above the table plane
    radius_mm: float


@dataclass(frozen=True)
class Trajectory:
    """V viewpoints on an azimuth ring, partitioned into K contiguous groups."""

    viewpoints: tuple
    group_size: int

    @property
    def V(self) -> int:
        return len(self.viewpoints)

    @property
    def K(self) -> int:
        return self.V // self.group_size

    def group_indices(self, g: int) -> range:
        if not 0 <= g < self.K:
            raise ValueError(f"group {g} out of range for K={self.K}")
        return range(g * self.group_size, (g + 1) * self.group_size)

    def group_of(self, viewpoint_index: int) -> int:
        if not 0 <= viewpoint_index < self.V:
            raise ValueError(f"viewpoint {viewpoint_index} out of range for V={self.V}")
        return viewpoint_index // self.group_size


def build_trajectory(V: int = 16, K: int = 4, radius_mm: float = 500.0,
                     elevation: float = math.radians(50.0)) -> Trajectory:
    """Evenly spaced azimuth ring of V viewpoints in K contiguous groups."""
    if V < 1 or K < 1 or V % K != 0:
        raise ValueError("group size mismatch")
    vps = tuple(
        Viewpoint(azimuth=2.0 * math.pi * i / V, elevation=elevation, radius_mm=radius_mm)
        for i in range(V)
    )
    return Trajectory(viewpoints=vps, group_size=V // K)


class Camera:
    """Orthographic camera looking at the scene center from a viewpoint.

    Image coordinates: col grows along the camera's right axis, row grows
    downward. A world point p maps to
        col = W/2 + (p . right) * s
        row = H/2 - (p . up) * s
        depth = radius + (p . forward)
    with s = px_per_mm and forward pointing from the camera toward the scene.
    """

    def __init__(self, viewpoint: Viewpoint, px_per_mm: float = PX_PER_MM,
                 width: int = IMAGE_SIZE, height: int = IMAGE_SIZE):
        self.viewpoint = viewpoint
        self.px_per_mm = px_per_mm
        self.width = width
        self.height = height
        ca, sa = math.cos(viewpoint.azimuth), math.sin(viewpoint.azimuth)
        ce, se = math.cos(viewpoint.elevation), math.sin(viewpoint.elevation)
        self.right = np.array([-sa, ca, 0.0])
        self.up = np.array([-se * ca, -se * sa, ce])
        self.forward = np.array([-ce * ca, -ce * sa, -se])

    def project(self, points_mm: np.ndarray) -> np.ndarray:
        """(N, 3) world mm -> (N, 2) image (col, row)."""
        p = np.atleast_2d(points_mm)
        col = self.width / 2.0 + (p @ self.right) * self.px_per_mm
        row = self.height / 2.0 - (p @ self.up) * self.px_per_mm
        return np.stack([col, row], axis=1)

    def depth_of(self, points_mm: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points_mm)
        return self.viewpoint.radius_mm + p @ self.forward

    def backproject(self, col: float, row: float, depth_mm: float) -> np.ndarray:
        """Invert project/depth_of: image position + depth -> world mm point."""
        px = (col - self.width / 2.0) / self.px_per_mm
        py = (self.height / 2.0 - row) / self.px_per_mm
        along = depth_mm - self.viewpoint.radius_mm
        return px * self.right + py * self.up + along * self.forward


@dataclass(eq=False)
class Observation:
    """One viewpoint's rendering: intensity in [0,1], depth in mm, target mask.

    Identity-hashable on purpose: downstream feature extractors key caches
    on the observation object itself.
    """

    intensity: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    viewpoint_index: int
    camera: Camera

    def __post_init__(self):
        shapes = {self.intensity.shape, self.depth.shape, self.mask.shape}
        if len(shapes) != 1 or self.intensity.ndim != 2:
            raise ValueError("observation grids must share one HxW shape")
        if np.any(self.depth < 0):
            raise ValueError("depth must be non-negative")


@dataclass(frozen=True)
class ObjectInstance:
    id: str
    shape: Polygon  # world mm, convex, centered near its own centroid
    height_mm: float
    category: str
    gt_grasps: tuple  # GraspRect in world frame (mm), evaluation-only
    optimal_observation: int

    def __post_init__(self):
        if self.shape.area <= 0:
            raise ValueError("object shape must have positive area")
        if self.height_mm <= 0:
            raise ValueError("object height must be positive")
        if len(self.gt_grasps) == 0:
            raise ValueError("object needs at least one ground-truth grasp")


@dataclass(frozen=True)
class Scene:
    objects: tuple
    table_extent_mm: tuple
    seed: int


# --- rendering ---------------------------------------------------------------


@dataclass(frozen=True)
class RenderSettings:
    px_per_mm: float = PX_PER_MM
    width: int = IMAGE_SIZE
    height: int = IMAGE_SIZE
    background_intensity: float = 0.15
    albedo: tuple = (("disk", 0.45), ("handle", 0.6), ("box", 0.75))

    def albedo_of(self, category: str) -> float:
        table = dict(self.albedo)
        return table.get(category, 0.5)


DEFAULT_RENDER = RenderSettings()


@lru_cache(maxsize=4)
def _pixel_grid(width: int, height: int):
    cols, rows = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    return cols, rows


def _rasterize_convex(hull: Polygon, width: int, height: int) -> np.ndarray:
    """Boundary-inclusive mask of pixel centers inside a CCW convex polygon."""
    cols, rows = _pixel_grid(width, height)
    v = hull.vertices
    inside = np.ones((height, width), dtype=bool)
    n = len(v)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(v))))
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        cross = (bx - ax) * (rows - ay) - (by - ay) * (cols - ax)
        inside &= cross >= -tol
    return inside


def _table_depth_rows(camera: Camera) -> np.ndarray:
    """Depth of the z=0 table plane; varies only with image row."""
    rows = np.arange(camera.height, dtype=float)
    py = (camera.height / 2.0 - rows) / camera.px_per_mm
    e = camera.viewpoint.elevation
    return camera.viewpoint.radius_mm + py * (math.cos(e) / math.sin(e))


def render(scene: Scene, trajectory: Trajectory, t: int,
           settings: RenderSettings = DEFAULT_RENDER, target_index: int = 0) -> Observation:
    """Render viewpoint t. The mask segments scene.objects[target_index]."""
    if not 0 <= t < trajectory.V:
        raise ValueError(f"viewpoint {t} out of range for V={trajectory.V}")
    camera = Camera(trajectory.viewpoints[t], settings.px_per_mm, settings.width, settings.height)
    e = camera.viewpoint.elevation

    depth = np.tile(_table_depth_rows(camera)[:, None], (1, settings.width))
    intensity = np.full((settings.height, settings.width), settings.background_intensity)
    target_mask = None

    for idx, obj in enumerate(scene.objects):
        verts = obj.shape.vertices
        bottom = np.column_stack([verts, np.zeros(len(verts))])
        top = np.column_stack([verts, np.full(len(verts), obj.height_mm)])
        img_pts = camera.project(np.vstack([bottom, top]))
        silhouette = convex_hull(img_pts)
        mask = _rasterize_convex(silhouette, settings.width, settings.height)
        # every covered pixel takes the top-face depth at its own row; side
        # walls inherit the top depth (silhouette-exact, depth-approximate)
        obj_depth = depth - obj.height_mm / math.sin(e)
        depth = np.where(mask, np.minimum(depth, obj_depth), depth)
        intensity = np.where(mask, settings.albedo_of(obj.category), intensity)
        if idx == target_index:
            target_mask = mask

    if target_mask is None:
        raise ValueError(f"target index {target_index} out of range")
    return Observation(intensity=intensity, depth=depth, mask=target_mask,
                       viewpoint_index=t, camera=camera)


def grasp_to_image(g: GraspRect, camera: Camera, z_mm: float) -> GraspRect:
    """Transform a world-frame grasp (mm) into a viewpoint's image frame (px).

    The closing axis is projected; its apparent length sets the image width
    and its apparent direction the image angle, so foreshortening is exact.
    """
    center = np.array([g.x, g.y, z_mm])
    d = np.array([math.cos(g.phi), math.sin(g.phi), 0.0])
    base = camera.project(center[None, :])[0]
    tip = camera.project((center + d)[None, :])[0]
    vec = tip - base
    scale = float(np.linalg.norm(vec))
    phi = math.atan2(vec[1], vec[0])
    if phi > math.pi / 2:
        phi -= math.pi
    elif phi < -math.pi / 2:
        phi += math.pi
    phi = min(max(phi, -math.pi / 2), math.pi / 2)
    return GraspRect(float(base[0]), float(base[1]), g.w * scale, phi, g.q)


def image_gt_grasps(scene: Scene, trajectory: Trajectory, t: int,
                    settings: RenderSettings = DEFAULT_RENDER, target_index: int = 0) -> list:
    """Ground-truth grasps of the target object in viewpoint t's image frame.

    Centers are projected at the top face (z = height): parallel jaws close
    around the top of the object, and that is the only height at which a
    tall object's grasp rectangle sits clear of its own side-wall silhouette.
    """
    camera = Camera(trajectory.viewpoints[t], settings.px_per_mm, settings.width, settings.height)
    obj = scene.objects[target_index]
    return [grasp_to_image(g, camera, obj.height_mm) for g in obj.gt_grasps]


# --- segmentation ------------------------------------------------------------


class OracleSegmenter:
    """Exact silhouette segmenter; dilate_px > 0 grows the mask, < 0 shrinks it."""

    def __init__(self, dilate_px: int = 0):
        self.dilate_px = dilate_px

    def __call__(self, obs: Observation) -> Polygon:
        mask = obs.mask
        if self.dilate_px > 0:
            mask = ndimage.binary_dilation(mask, iterations=self.dilate_px)
        elif self.dilate_px < 0:
            mask = ndimage.binary_erosion(mask, iterations=-self.dilate_px)
        if not mask.any():
            raise ValueError("object not visible")
        boundary = mask & ~ndimage.binary_erosion(mask)
        rows, cols = np.nonzero(boundary)
        return convex_hull(np.column_stack([cols, rows]).astype(float))


def oracle_segment(obs: Observation) -> Polygon:
    """Convex hull of the target mask's boundary pixels."""
    return OracleSegmenter()(obs)


# --- procedural object families ----------------------------------------------

FAMILIES = ("disk", "handle", "box")

# canonical in-plane base angles (degrees); jitter is applied per instance.
# handles sit so their broadside group is group 1 of the default trajectory,
# which keeps knowledge-transfer checks away from the group-0 fallback.
HANDLE_SPINE_DEG = 40.0
BOX_LONG_AXIS_DEG = -20.0
ORIENT_JITTER_DEG = 10.0


def _rot(deg: float) -> np.ndarray:
    r = math.radians(deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, -s], [s, c]])


def _wrap_half_pi(phi: float) -> float:
    while phi > math.pi / 2:
        phi -= math.pi
    while phi < -math.pi / 2:
        phi += math.pi
    return phi


def _make_disk(rng, pos):
    r = rng.uniform(5.5, 8.0)
    height = rng.uniform(5.0, 8.0)
    angles = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    verts = np.column_stack([np.cos(angles), np.sin(angles)]) * r + pos
    w = 2 * r + GT_JAW_MARGIN_MM
    grasps = tuple(
        GraspRect(pos[0], pos[1], w, _wrap_half_pi(-math.pi / 2 + k * math.pi / 8), 1.0)
        for k in range(8)
    )
    return verts, height, grasps


def _make_handle(rng, pos, orientation_deg=None):
    length = rng.uniform(55.0, 75.0)
    width = rng.uniform(11.5, 13.5)
    height = rng.uniform(8.0, 12.0)
    if orientation_deg is None:
        spine_deg = HANDLE_SPINE_DEG + rng.uniform(-ORIENT_JITTER_DEG, ORIENT_JITTER_DEG)
    else:
        spine_deg = orientation_deg
    chamfer = width / 3.0
    hl, hw = length / 2.0, width / 2.0
    local = np.array([
        [-hl + chamfer, -hw], [hl - chamfer, -hw], [hl, -hw + chamfer],
        [hl, hw - chamfer], [hl - chamfer, hw], [-hl + chamfer, hw],
        [-hl, hw - chamfer], [-hl, -hw + chamfer],
    ])
    rot = _rot(spine_deg)
    verts = local @ rot.T + pos
    phi = _wrap_half_pi(math.radians(spine_deg) + math.pi / 2)
    w = width + GT_JAW_MARGIN_MM
    spine_dir = np.array([math.cos(math.radians(spine_deg)), math.sin(math.radians(spine_deg))])
    stations = (-length / 4.0, 0.0, length / 4.0)
    grasps = tuple(
        GraspRect(pos[0] + s * spine_dir[0], pos[1] + s * spine_dir[1], w, phi, 1.0)
        for s in stations
    )
    return verts, height, grasps


def _make_box(rng, pos, orientation_deg=None):
    short = rng.uniform(10.5, 15.0)
    long_side = short * rng.uniform(2.2, 3.2)
    height = rng.uniform(25.0, 35.0)
    if orientation_deg is None:
        orientation_deg = BOX_LONG_AXIS_DEG + rng.uniform(-ORIENT_JITTER_DEG, ORIENT_JITTER_DEG)
    hl, hs = long_side / 2.0, short / 2.0
    local = np.array([[-hl, -hs], [hl, -hs], [hl, hs], [-hl, hs]])
    rot = _rot(orientation_deg)
    verts = local @ rot.T + pos
    phi = _wrap_half_pi(math.radians(orientation_deg) + math.pi / 2)
    w = short + GT_JAW_MARGIN_MM
    long_dir = np.array([math.cos(math.radians(orientation_deg)), math.sin(math.radians(orientation_deg))])
    stations = (-long_side / 4.0, 0.0, long_side / 4.0)
    grasps = tuple(
        GraspRect(pos[0] + s * long_dir[0], pos[1] + s * long_dir[1], w, phi, 1.0)
        for s in stations
    )
    return verts, height, grasps


_MAKERS = {"disk": _make_disk, "handle": _make_handle, "box": _make_box}

# Families generate_scene knows how to build, in canonical order.
OBJECT_FAMILIES = tuple(sorted(_MAKERS))


def optimal_group_for(gt: GraspRect, trajectory: Trajectory) -> int:
    """Group of the viewpoint that least foreshortens the grasp's closing axis.

    The jaws travel along the closing axis, so the viewpoint where that axis
    projects longest gives the grasp rectangle the most lateral clearance
    around the silhouette; its group is where a sweep can actually commit.
    Antipodal viewpoints tie in apparent length up to rounding, so the winner
    needs a clear margin and ties break to the earliest viewpoint, matching
    the order a sequential sweep visits.
    """
    best_t = 0
    best = -1.0
    for t in range(trajectory.V):
        vp = trajectory.viewpoints[t]
        delta = gt.phi - vp.azimuth
        apparent = math.hypot(math.sin(delta), math.sin(vp.elevation) * math.cos(delta))
        if apparent > best + 1e-9:
            best = apparent
            best_t = t
    return trajectory.group_of(best_t)


# mirrors the default embodied parameters and quality score; used only as a
# generation-time sanity gate (the assessment module owns the real filter)
_SOLVABLE_W_MM = (8.5, 21.25)
_SOLVABLE_CL_MM = (300.0, 1000.0)
_SOLVABLE_WS_RADIUS_MM = 650.0
_SOLVABLE_LAMBDA_DIST = 90.0
_SOLVABLE_LAMBDA_WIDTH = 122.0
# minimum analytic quality score: the default decision threshold plus
# headroom for the sub-pixel offset between the analytic silhouette and the
# rasterized mask the real assessment sees
_SOLVABLE_MIN_SCORE = 4.25
# geometric gates are checked with this much slack for the same reason
_SOLVABLE_GATE_MARGIN_PX = 1.5


def _hull_clearance_px(pt, hull: Polygon) -> float:
    """Signed clearance of a point against a CCW convex polygon (px).

    Positive means the point is at least that far inside every edge;
    negative means some edge line puts it at least that far outside, which
    lower-bounds its distance to the polygon itself.
    """
    v = hull.vertices
    n = len(v)
    worst = math.inf
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        length = math.hypot(ex, ey)
        if length == 0.0:
            continue
        worst = min(worst, (ex * (pt[1] - ay) - ey * (pt[0] - ax)) / length)
    return worst


def _graspable_somewhere(obj: ObjectInstance, trajectory: Trajectory) -> bool:
    """True if some viewpoint lets some gt grasp pass every embodied gate.

    Runs the same geometry the renderer and assessor use, but analytically
    (silhouette hull straight from projected vertices, no rasterization), so
    scene generation can retry draws that would leave an episode unwinnable.
    """
    verts = obj.shape.vertices
    column = np.column_stack
    faces = np.vstack([
        column([verts, np.zeros(len(verts))]),
        column([verts, np.full(len(verts), obj.height_mm)]),
    ])
    for t in range(trajectory.V):
        camera = Camera(trajectory.viewpoints[t])
        hull = convex_hull(camera.project(faces))
        centroid = polygon_centroid(hull)
        for g in obj.gt_grasps:
            img = grasp_to_image(g, camera, obj.height_mm)
            w_mm_eq = img.w / camera.px_per_mm
            if not _SOLVABLE_W_MM[0] <= w_mm_eq <= _SOLVABLE_W_MM[1]:
                continue
            center = np.array([g.x, g.y, obj.height_mm])
            depth = float(camera.depth_of(center[None, :])[0])
            if not _SOLVABLE_CL_MM[0] <= depth <= _SOLVABLE_CL_MM[1]:
                continue
            if np.linalg.norm(center) > _SOLVABLE_WS_RADIUS_MM:
                continue
            if _hull_clearance_px((img.x, img.y), hull) < _SOLVABLE_GATE_MARGIN_PX:
                continue
            corners = rect_vertices(img)
            if any(_hull_clearance_px(c, hull) > -_SOLVABLE_GATE_MARGIN_PX for c in corners):
                continue
            dist = math.hypot(img.x - centroid[0], img.y - centroid[1])
            score = (_SOLVABLE_LAMBDA_DIST / max(dist, 1.0)
                     + _SOLVABLE_LAMBDA_WIDTH / max(img.w, 1.0))
            if score < _SOLVABLE_MIN_SCORE:
                continue
            return True
    return False


def generate_scene(spec: dict, seed: int, trajectory: Trajectory = None) -> Scene:
    """Deterministic scene for (spec, seed).

    spec keys: "families" — mapping of family name to object count;
    optional "table_extent_mm" (default (112, 112)), "position_jitter_mm"
    (default 12), "uniform_orientation" (default False: families keep their
    canonical base angles; True draws box/handle angles uniformly, which is
    what detector pretraining wants).
    """
    families = spec.get("families", {})
    for name in families:
        if name not in _MAKERS:
            raise ValueError(f"unknown object family: {name!r}")
    table_extent = tuple(spec.get("table_extent_mm", (112.0, 112.0)))
    jitter = float(spec.get("position_jitter_mm", 12.0))
    uniform_orientation = bool(spec.get("uniform_orientation", False))
    if trajectory is None:
        trajectory = build_trajectory()

    rng = np.random.default_rng(seed)
    objects = []
    counter = 0
    for family in sorted(families):
        for _ in range(int(families[family])):
            for attempt in range(20):
                pos = rng.uniform(-jitter, jitter, size=2)
                if uniform_orientation and family in ("handle", "box"):
                    angle = rng.uniform(0.0, 180.0)
                    verts, height, grasps = _MAKERS[family](rng, pos, orientation_deg=angle)
                else:
                    verts, height, grasps = _MAKERS[family](rng, pos)
                obj = ObjectInstance(
                    id=f"{family}-{counter}",
                    shape=Polygon(verts),
                    height_mm=height,
                    category=family,
                    gt_grasps=grasps,
                    optimal_observation=optimal_group_for(grasps[0], trajectory),
                )
                if _graspable_somewhere(obj, trajectory):
                    break
            else:
                raise RuntimeError(f"could not place a solvable {family} object")
            objects.append(obj)
            counter += 1
    return Scene(objects=tuple(objects), table_extent_mm=table_extent, seed=seed)


# --- persistence --------------------------------------------------------------


def scene_to_dict(scene: Scene) -> dict:
    return {
        "version": 1,
        "seed": scene.seed,
        "table_extent_mm": list(scene.table_extent_mm),
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "height_mm": o.height_mm,
                "vertices_mm": o.shape.vertices.tolist(),
                "gt_grasps": [list(g.as_tuple()) for g in o.gt_grasps],
                "optimal_observation": o.optimal_observation,
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    if data.get("version") != 1:
        raise ValueError(f"unsupported scene file version: {data.get('version')!r}")
    objects = tuple(
        ObjectInstance(
            id=o["id"],
            shape=Polygon(np.array(o["vertices_mm"], dtype=float)),
            height_mm=float(o["height_mm"]),
            category=o["category"],
            gt_grasps=tuple(GraspRect(*g) for g in o["gt_grasps"]),
            optimal_observation=int(o["optimal_observation"]),
        )
        for o in data["objects"]
    )
    return Scene(objects=objects, table_extent_mm=tuple(data["table_extent_mm"]),
                 seed=int(data["seed"]))


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as f:
        json.dump(scene_to_dict(scene), f, indent=1)


def load_scene(path) -> Scene:
    with open(path) as f:
        return scene_from_dict(json.load(f))
