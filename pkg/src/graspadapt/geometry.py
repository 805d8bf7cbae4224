"""2D grasp-rectangle and convex-polygon primitives.

Angles are measured in radians in the image plane (x right, y down), and
grasp angles are pi-periodic: a rectangle closing along phi is the same
rectangle closing along phi + pi.
"""

import math
from dataclasses import dataclass, field

import numpy as np

# A grasp rectangle's extent along the jaw axis, as a fraction of the
# opening w. The plates are drawn half as long as the opening is wide.
RECT_ASPECT = 0.5

HALF_PI = math.pi / 2.0
_ANGLE_TOL = 1e-9
_AREA_TOL = 1e-12

Point2 = tuple[float, float]


@dataclass(frozen=True)
class GraspRect:
    """Oriented grasp rectangle (x, y, w, phi, q).

    x, y   center in pixels
    w      jaw opening in pixels, along the closing axis
    phi    closing-axis angle in [-pi/2, pi/2]
    q      quality in [0, 1]
    """

    x: float
    y: float
    w: float
    phi: float
    q: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.phi, self.q)):
            raise ValueError("grasp rectangle fields must be finite")
        if self.w < 0:
            raise ValueError("grasp rectangle width must be non-negative")
        if abs(self.phi) > HALF_PI + _ANGLE_TOL:
            raise ValueError("angle out of range")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("grasp rectangle quality must lie in [0, 1]")

    @property
    def h(self) -> float:
        """Extent along the jaw axis."""
        return self.w * RECT_ASPECT

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.x, self.y, self.w, self.phi, self.q)


@dataclass(frozen=True)
class Polygon:
    """Simple polygon as an (N, 2) float array of vertices, N >= 3."""

    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("degenerate polygon")
        if not np.all(np.isfinite(v)):
            raise ValueError("degenerate polygon")
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return self.vertices.shape[0]

    @property
    def signed_area(self) -> float:
        """Shoelace area; positive for counter-clockwise vertex order."""
        x = self.vertices[:, 0]
        y = self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def area(self) -> float:
        return abs(self.signed_area)


def rect_vertices(g: GraspRect) -> np.ndarray:
    """Four corners of the grasp rectangle, counter-clockwise, as (4, 2).

    The first edge (corner 0 to corner 1) runs along the closing axis, so
    its length is w and its direction is phi.
    """
    c, s = math.cos(g.phi), math.sin(g.phi)
    hw, hh = g.w / 2.0, g.h / 2.0
    local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([g.x, g.y])


def _clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: clip a convex polygon by a convex polygon.

    Both inputs must be counter-clockwise. Returns the (possibly empty)
    intersection vertex array.
    """
    output = subject
    n = clip.shape[0]
    for i in range(n):
        if output.shape[0] == 0:
            break
        a = clip[i]
        b = clip[(i + 1) % n]
        edge = b - a
        # cross(edge, p - a) >= 0 keeps the left side, the inside of a CCW clip
        d = edge[0] * (output[:, 1] - a[1]) - edge[1] * (output[:, 0] - a[0])
        keep = []
        m = output.shape[0]
        for j in range(m):
            cur, nxt = j, (j + 1) % m
            if d[cur] >= 0:
                keep.append(output[cur])
            if (d[cur] >= 0) != (d[nxt] >= 0):
                t = d[cur] / (d[cur] - d[nxt])
                keep.append(output[cur] + t * (output[nxt] - output[cur]))
        output = np.array(keep) if keep else np.empty((0, 2))
    return output


def _poly_area(v: np.ndarray) -> float:
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


def rect_iou(a: GraspRect, b: GraspRect) -> float:
    """Exact intersection-over-union of two grasp rectangles.

    Zero-area rectangles have IoU 0 against anything, except that two
    identical degenerate rectangles are rejected as an error.
    """
    area_a = a.w * a.h
    area_b = b.w * b.h
    if area_a == 0.0 or area_b == 0.0:
        same = (a.x, a.y, a.w, a.phi) == (b.x, b.y, b.w, b.phi)
        if area_a == 0.0 and area_b == 0.0 and same:
            raise ValueError("degenerate rectangles")
        return 0.0
    va = rect_vertices(a)
    vb = rect_vertices(b)
    inter = _poly_area(_clip_convex(va, vb))
    union = area_a + area_b - inter
    return inter / union


def angle_diff(phi_a: float, phi_b: float) -> float:
    """Smallest difference between two pi-periodic grasp angles, in [0, pi/2]."""
    for phi in (phi_a, phi_b):
        if not math.isfinite(phi) or abs(phi) > HALF_PI + _ANGLE_TOL:
            raise ValueError("angle out of range")
    d = math.fmod(phi_a - phi_b, math.pi)
    if d < 0:
        d += math.pi
    return min(d, math.pi - d)


def convex_hull(points) -> Polygon:
    """Convex hull of a point set (monotone chain), counter-clockwise.

    Collinear boundary points are dropped; fewer than three distinct
    non-collinear points raise an error.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("degenerate point set")
    if not np.all(np.isfinite(pts)):
        raise ValueError("degenerate point set")
    uniq = np.unique(pts, axis=0)  # sorts lexicographically by (x, y)
    if uniq.shape[0] < 3:
        raise ValueError("degenerate point set")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in uniq:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in uniq[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise ValueError("degenerate point set")
    # normalize to positive signed area so callers can rely on CCW order
    x, y = hull[:, 0], hull[:, 1]
    if 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)) < 0:
        hull = hull[::-1]
    return Polygon(hull)


def polygon_centroid(p: Polygon) -> np.ndarray:
    """Area centroid of a simple polygon, as shape (2,)."""
    v = p.vertices
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * float(np.sum(cross))
    if abs(a) < _AREA_TOL:
        raise ValueError("degenerate polygon")
    cx = float(np.sum((x + xn) * cross)) / (6.0 * a)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * a)
    return np.array([cx, cy])


def point_in_polygon(pt, p: Polygon) -> bool:
    """Boundary-inclusive point-in-polygon test (crossing number)."""
    px, py = float(pt[0]), float(pt[1])
    v = p.vertices
    n = v.shape[0]
    scale = max(1.0, float(np.max(np.abs(v))))
    tol = 1e-9 * scale
    inside = False
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        # on-segment check
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        if abs(cross) <= tol * max(1.0, math.hypot(bx - ax, by - ay)):
            if min(ax, bx) - tol <= px <= max(ax, bx) + tol and min(ay, by) - tol <= py <= max(ay, by) + tol:
                return True
        if (ay > py) != (by > py):
            t = (py - ay) / (by - ay)
            if px < ax + t * (bx - ax):
                inside = not inside
    return inside
