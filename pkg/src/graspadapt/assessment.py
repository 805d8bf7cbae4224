"""Embodied candidate filtering and grasp quality self-assessment.

Candidates first pass a hardware feasibility box (jaw opening within the
gripper's travel, center depth within the camera's operating range, center
reachable inside the workspace sphere).  Survivors are then scored against
the segmented object: hard gates require the center on the object mask and
all four rectangle vertices off the object hull, and passing candidates get
a closeness/thinness score that drives the grasp-or-keep-looking decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .detector import GraspSet
from .geometry import GraspRect, Polygon, point_in_polygon, polygon_centroid, rect_vertices

LAMBDA_DIST = 90.0
LAMBDA_WIDTH = 122.0
EPSILON_DEFAULT = 4.0

# Reciprocal floors: the score formula is singular at zero distance and zero
# width; flooring both at one pixel caps the score without reordering
# candidates away from the singularity.
_FLOOR_PX = 1.0


@dataclass(frozen=True)
class EmbodiedParams:
    """Hardware envelope used to prune infeasible candidates.

    Defaults describe a parallel-jaw gripper with 85 mm of travel, a depth
    camera rated for 300..1000 mm, and a reach sphere of 650 mm around the
    workspace origin, all at the canonical 2 px/mm image scale.
    """

    w_max_mm: float = 85.0
    px_per_mm: float = 2.0
    cl_min_mm: float = 300.0
    cl_max_mm: float = 1000.0
    workspace_center_mm: tuple = (0.0, 0.0, 0.0)
    workspace_radius_mm: float = 650.0

    def __post_init__(self):
        if not (self.w_max_mm > 0 and self.px_per_mm > 0):
            raise ValueError("gripper limits must be positive")
        if not (0 < self.cl_min_mm < self.cl_max_mm):
            raise ValueError("camera depth range must satisfy 0 < min < max")
        if not self.workspace_radius_mm > 0:
            raise ValueError("workspace radius must be positive")
        if len(self.workspace_center_mm) != 3:
            raise ValueError("workspace center must be a 3-vector")

    @property
    def w_max_px(self) -> float:
        return self.w_max_mm * self.px_per_mm

    @property
    def w_window_px(self) -> tuple:
        """Admissible jaw-opening interval in pixels."""
        return (self.w_max_px / 10.0, self.w_max_px / 4.0)


@dataclass(frozen=True)
class ScoredCandidate:
    grasp: GraspRect
    center_dist_px: float
    passed_primary: bool
    score: float | None = None

    def __post_init__(self):
        if self.center_dist_px < 0:
            raise ValueError("distance must be non-negative")
        if self.passed_primary:
            if self.score is None or not math.isfinite(self.score) \
                    or self.score <= 0:
                raise ValueError("passing candidates need a positive score")


class Action(Enum):
    GRASP = "grasp"
    EXPLORE = "explore"


def _center_depth(depth: np.ndarray, x: float, y: float):
    """Depth at the rounded center pixel, or None when off the image."""
    h, w = depth.shape
    col = int(round(x))
    row = int(round(y))
    if not (0 <= col < w and 0 <= row < h):
        return None
    return float(depth[row, col])


def filter_embodied(grasps: GraspSet, depth: np.ndarray,
                    params: EmbodiedParams,
                    camera=None) -> GraspSet:
    """Subset of candidates satisfying the hardware feasibility box.

    Rules: jaw opening inside [w_max/10, w_max/4] in image units; center
    depth inside the camera operating range; and, when a camera model is
    supplied, the back-projected 3D center inside the workspace sphere.
    An empty result is a normal outcome, not an error.
    """
    lo, hi = params.w_window_px
    center = np.asarray(params.workspace_center_mm, dtype=np.float64)
    kept = []
    for g in grasps.candidates:
        if not (lo <= g.w <= hi):
            continue
        z = _center_depth(depth, g.x, g.y)
        if z is None or not (params.cl_min_mm <= z <= params.cl_max_mm):
            continue
        if camera is not None:
            p = camera.backproject(g.x, g.y, z)
            if np.linalg.norm(p - center) > params.workspace_radius_mm:
                continue
        kept.append(g)
    return GraspSet(candidates=kept,
                    source_viewpoint=grasps.source_viewpoint)


def qa_score(grasps: GraspSet, mask: np.ndarray, hull: Polygon,
             params: EmbodiedParams,
             lambda_dist: float = LAMBDA_DIST,
             lambda_width: float = LAMBDA_WIDTH) -> list:
    """Score each candidate against the segmented object.

    Hard gates: the grasp center must land on the object mask, and all four
    rectangle vertices must lie strictly outside the object hull (the jaws
    must straddle the object, not stab it).  Gated candidates keep their
    center distance but carry no score.  Passing candidates get

        S = lambda_dist / max(dist, 1) + lambda_width / max(w, 1)

    so closer-to-centroid and thinner grasps score higher.
    """
    cx, cy = polygon_centroid(hull)
    h, w = mask.shape
    scored = []
    for g in grasps.candidates:
        dist = math.hypot(g.x - cx, g.y - cy)
        col = int(round(g.x))
        row = int(round(g.y))
        center_on_mask = (0 <= col < w and 0 <= row < h
                          and bool(mask[row, col]))
        verts_clear = all(
            not point_in_polygon((vx, vy), hull)
            for vx, vy in rect_vertices(g)
        )
        if center_on_mask and verts_clear:
            s = (lambda_dist / max(dist, _FLOOR_PX)
                 + lambda_width / max(g.w, _FLOOR_PX))
            scored.append(ScoredCandidate(grasp=g, center_dist_px=dist,
                                          passed_primary=True, score=s))
        else:
            scored.append(ScoredCandidate(grasp=g, center_dist_px=dist,
                                          passed_primary=False))
    return scored


def best_scored(scored: list):
    """Highest-scoring passing candidate, first on ties; None if none pass."""
    best = None
    for sc in scored:
        if not sc.passed_primary:
            continue
        if best is None or sc.score > best.score:
            best = sc
    return best


def decide(best, epsilon: float = EPSILON_DEFAULT) -> Action:
    """Grasp when the best passing candidate scores at least epsilon."""
    if best is not None and best.score >= epsilon:
        return Action.GRASP
    return Action.EXPLORE
