"""Grasp detectors over single-view observations.

The main detector is a linear model on hand-crafted depth/intensity patch
features, evaluated on a fixed grid of candidate cells.  Each cell owns one
candidate rectangle whose center is pinned to the cell center; the model's
three heads read out quality, jaw opening, and closing angle.  Keeping the
model linear makes the training gradient exact and cheap, which is what the
per-episode adaptation loop needs.

A geometric fallback (`HeuristicDetector`) proposes a single grasp from the
segmented silhouette.  It does not learn and serves as a reference point.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import GraspRect
from .scene import Observation

GRID_CELLS = 28
CELL_PX = 8
PATCH_HALF_PX = 8          # 17x17 patch around each cell center
N_FEATURES = 13
N_HEADS = 3                # quality, jaw width, angle
W_MAX_PX = 170.0           # saturation of the width head, in pixels

# Regression errors are scaled so every coordinate is O(1) before the
# smooth-L1 branch point at |e| = 1: widths by a 20 px tolerance band,
# centers by the cell pitch.  Quality and angle are already O(1).
W_LOSS_SCALE_PX = 20.0
XY_LOSS_SCALE_PX = float(CELL_PX)

# Elevation above table lower than this is treated as table noise.
_OBJ_ELEV_MM = 2.0
# Depth-gradient magnitude above this marks an occlusion edge.
_EDGE_GRAD_MM = 1.5

FEATURE_NAMES = (
    "bias",
    "mean_elev",
    "max_elev",
    "mean_grad",
    "std_elev",
    "obj_frac",
    "mean_intensity",
    "std_intensity",
    "tensor_cos",
    "tensor_sin",
    "edge_frac",
    "orientation",
    "coherence",
)


def _sigmoid(z):
    # Split by sign so large |z| cannot overflow exp().
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _window_sums(integral, r0, r1, c0, c1):
    """Rectangle sums for every (row window, col window) pair via np.ix_."""
    return (
        integral[np.ix_(r1, c1)]
        - integral[np.ix_(r0, c1)]
        - integral[np.ix_(r1, c0)]
        + integral[np.ix_(r0, c0)]
    )


def _integral(img):
    h, w = img.shape
    s = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=s[1:, 1:])
    return s


class FeatureExtractor:
    """Per-cell feature matrix for an observation, cached per observation.

    Cells tile the image in a `grid x grid` layout, `cell_px` apart, each
    summarizing a (2*patch_half+1)^2 patch around its center.  Patches are
    clipped at image borders; statistics use the clipped pixel count.
    """

    def __init__(self, grid: int = GRID_CELLS, cell_px: int = CELL_PX,
                 patch_half: int = PATCH_HALF_PX):
        if grid < 1 or cell_px < 1 or patch_half < 0:
            raise ValueError("bad extractor geometry")
        self.grid = grid
        self.cell_px = cell_px
        self.patch_half = patch_half
        self._cache: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()

    @property
    def n_cells(self) -> int:
        return self.grid * self.grid

    def cell_centers(self) -> np.ndarray:
        """(C, 2) array of (col, row) pixel centers, row-major cell order."""
        half = self.cell_px / 2.0
        axis = half + self.cell_px * np.arange(self.grid)
        cols, rows = np.meshgrid(axis, axis)   # rows vary along axis 0
        return np.stack([cols.ravel(), rows.ravel()], axis=1)

    def cell_index(self, x: float, y: float, image_shape) -> int:
        """Row-major index of the cell nearest to pixel (x, y).

        Raises if the point lies outside the image.
        """
        h, w = image_shape
        if not (0.0 <= x < w and 0.0 <= y < h):
            raise ValueError("target out of bounds")
        half = self.cell_px / 2.0
        col = int(np.clip(round((x - half) / self.cell_px), 0, self.grid - 1))
        row = int(np.clip(round((y - half) / self.cell_px), 0, self.grid - 1))
        return row * self.grid + col

    def extract(self, obs: Observation) -> np.ndarray:
        """(C, F) float64 feature matrix. Results are cached per observation."""
        cached = self._cache.get(obs)
        if cached is not None:
            return cached
        feats = self._compute(obs)
        self._cache[obs] = feats
        return feats

    def _compute(self, obs: Observation) -> np.ndarray:
        depth = obs.depth.astype(np.float64, copy=False)
        inten = obs.intensity.astype(np.float64, copy=False)
        h, w = depth.shape

        table_d = float(np.median(depth))
        elev = table_d - depth          # mm above the table plane, signed

        gy, gx = np.gradient(depth)     # mm per pixel
        gmag = np.clip(np.hypot(gx, gy), 0.0, 20.0)

        centers = self.cell_centers()
        rows = centers[:, 1].astype(int).reshape(self.grid, self.grid)[:, 0]
        cols = centers[:, 0].astype(int).reshape(self.grid, self.grid)[0, :]
        r0 = np.clip(rows - self.patch_half, 0, h)
        r1 = np.clip(rows + self.patch_half + 1, 0, h)
        c0 = np.clip(cols - self.patch_half, 0, w)
        c1 = np.clip(cols + self.patch_half + 1, 0, w)
        counts = (r1 - r0)[:, None] * (c1 - c0)[None, :]

        def patch_mean(img):
            return _window_sums(_integral(img), r0, r1, c0, c1) / counts

        m_elev = patch_mean(elev)
        m_elev2 = patch_mean(elev * elev)
        std_elev = np.sqrt(np.maximum(m_elev2 - m_elev**2, 0.0))
        # Shift intensity by its global mean before the moment sums; the
        # variance is unchanged but the cancellation error shrinks to nothing
        # (a constant image yields exactly zero).
        ic = float(inten.mean())
        ish = inten - ic
        m_ish = patch_mean(ish)
        m_ish2 = patch_mean(ish * ish)
        std_inten = np.sqrt(np.maximum(m_ish2 - m_ish**2, 0.0))
        m_inten = m_ish + ic
        m_gmag = patch_mean(gmag)
        obj_frac = patch_mean((elev > _OBJ_ELEV_MM).astype(np.float64))
        edge_frac = patch_mean((gmag > _EDGE_GRAD_MM).astype(np.float64))

        # Structure tensor of the raw depth gradient, normalized so that
        # (tensor_cos, tensor_sin) = coherence * (cos 2t, sin 2t) regardless
        # of object height.  t is the dominant gradient direction, which for
        # an elongated silhouette is the closing-axis direction.
        sxx = patch_mean(gx * gx)
        syy = patch_mean(gy * gy)
        sxy = patch_mean(gx * gy)
        trace = sxx + syy + 1e-9
        t_cos = (sxx - syy) / trace
        t_sin = 2.0 * sxy / trace
        orient = 0.5 * np.arctan2(2.0 * sxy, sxx - syy)
        coherence = np.hypot(t_cos, t_sin)

        size = 2 * self.patch_half + 1
        max_elev = ndimage.maximum_filter(elev, size=size, mode="nearest")
        max_elev = max_elev[np.ix_(rows, cols)]

        feats = np.stack(
            [
                np.ones_like(m_elev),
                m_elev / 20.0,
                max_elev / 20.0,
                m_gmag / 4.0,
                std_elev / 10.0,
                obj_frac,
                m_inten,
                std_inten * 2.0,
                t_cos,
                t_sin,
                edge_frac,
                orient,
                coherence,
            ],
            axis=-1,
        )
        return feats.reshape(self.n_cells, N_FEATURES)


@dataclass
class GraspSet:
    """Candidate grasps proposed from one observation."""

    candidates: list
    source_viewpoint: int = 0

    def __post_init__(self):
        for g in self.candidates:
            if not isinstance(g, GraspRect):
                raise TypeError("candidates must be GraspRect instances")

    def __len__(self):
        return len(self.candidates)


def top_candidate(grasp_set: GraspSet) -> GraspRect:
    """Highest-quality candidate; first one wins ties."""
    if len(grasp_set) == 0:
        raise ValueError("no candidates")
    qs = np.array([g.q for g in grasp_set.candidates])
    return grasp_set.candidates[int(np.argmax(qs))]


@dataclass
class TrainingSample:
    """An observation paired with grasp rectangles to regress toward."""

    observation: Observation
    targets: list

    def __post_init__(self):
        if not self.targets:
            raise ValueError("training sample has no targets")
        for g in self.targets:
            if not isinstance(g, GraspRect):
                raise TypeError("targets must be GraspRect instances")


@dataclass
class ParametricDetector:
    """Linear grasp model: per-cell logits z = weights[cell] @ features[cell].

    Head readouts:
        quality  q   = sigmoid(z0)
        width    w   = w_max_px * sigmoid(z1)
        angle    phi = (pi/2) * tanh(z2)

    Candidate centers are the cell centers themselves; the (x, y) coordinates
    carry loss terms but no trainable parameters.
    """

    weights: np.ndarray
    w_max_px: float = W_MAX_PX
    extractor: FeatureExtractor = field(default_factory=FeatureExtractor)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        expected = (self.extractor.n_cells, N_HEADS, N_FEATURES)
        if self.weights.shape != expected:
            raise ValueError(
                f"weights shape {self.weights.shape} != {expected}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("divergent update")

    @classmethod
    def zeros(cls, w_max_px: float = W_MAX_PX,
              extractor: FeatureExtractor | None = None) -> "ParametricDetector":
        ext = extractor if extractor is not None else FeatureExtractor()
        w = np.zeros((ext.n_cells, N_HEADS, N_FEATURES))
        return cls(weights=w, w_max_px=w_max_px, extractor=ext)

    @property
    def n_parameters(self) -> int:
        return self.weights.size

    def _readout(self, feats: np.ndarray):
        z = np.einsum("cf,chf->ch", feats, self.weights)
        q = _sigmoid(z[:, 0])
        w = self.w_max_px * _sigmoid(z[:, 1])
        phi = (math.pi / 2.0) * np.tanh(z[:, 2])
        return q, w, phi

    def predict(self, obs: Observation) -> GraspSet:
        feats = self.extractor.extract(obs)
        q, w, phi = self._readout(feats)
        centers = self.extractor.cell_centers()
        cands = [
            GraspRect(x=centers[c, 0], y=centers[c, 1],
                      w=float(w[c]), phi=float(phi[c]), q=float(q[c]))
            for c in range(self.extractor.n_cells)
        ]
        return GraspSet(candidates=cands,
                        source_viewpoint=obs.viewpoint_index)

    def loss_and_grad(self, batch: list):
        """Smooth-L1 regression loss and its exact weight gradient.

        Every target in the batch is assigned to its nearest cell; the loss
        sums the five coordinate terms (q, w, phi, x, y) per target and
        averages over all targets.  Width and center errors are divided by
        W_LOSS_SCALE_PX and XY_LOSS_SCALE_PX so all heads regress on a
        comparable scale.  The x and y terms compare cell centers against
        target centers and are constant in the weights.
        """
        if not batch:
            raise ValueError("empty training batch")
        centers = None
        total = 0.0
        grad = np.zeros_like(self.weights)
        n_targets = sum(len(s.targets) for s in batch)
        for sample in batch:
            feats = self.extractor.extract(sample.observation)
            if centers is None:
                centers = self.extractor.cell_centers()
            shape = sample.observation.depth.shape
            for tgt in sample.targets:
                cell = self.extractor.cell_index(tgt.x, tgt.y, shape)
                f = feats[cell]
                z = self.weights[cell] @ f
                q = float(_sigmoid(z[:1])[0])
                w = self.w_max_px * float(_sigmoid(z[1:2])[0])
                th = math.tanh(z[2])
                phi = (math.pi / 2.0) * th

                errs = np.array([
                    q - tgt.q,
                    (w - tgt.w) / W_LOSS_SCALE_PX,
                    phi - tgt.phi,
                    (centers[cell, 0] - tgt.x) / XY_LOSS_SCALE_PX,
                    (centers[cell, 1] - tgt.y) / XY_LOSS_SCALE_PX,
                ])
                a = np.abs(errs)
                total += float(
                    np.sum(np.where(a < 1.0, 0.5 * errs**2, a - 0.5)))

                dl = np.clip(errs, -1.0, 1.0)   # d smooth-l1 / d err
                dz = np.array([
                    dl[0] * q * (1.0 - q),
                    dl[1] * w * (1.0 - w / self.w_max_px) / W_LOSS_SCALE_PX,
                    dl[2] * (math.pi / 2.0) * (1.0 - th * th),
                ])
                grad[cell] += np.outer(dz, f)
        return total / n_targets, grad / n_targets

    def apply_update(self, grad: np.ndarray, lr: float) -> "ParametricDetector":
        """One gradient-descent step; returns a new detector."""
        if grad.shape != self.weights.shape:
            raise ValueError("gradient shape mismatch")
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        with np.errstate(over="ignore", invalid="ignore"):
            new_w = self.weights - lr * grad
        if not np.all(np.isfinite(new_w)):
            raise ValueError("divergent update")
        return ParametricDetector(weights=new_w, w_max_px=self.w_max_px,
                                  extractor=self.extractor)

    def save(self, path):
        np.savez(
            path,
            version=np.int64(1),
            weights=self.weights,
            w_max_px=np.float64(self.w_max_px),
            grid=np.int64(self.extractor.grid),
            cell_px=np.int64(self.extractor.cell_px),
            patch_half=np.int64(self.extractor.patch_half),
        )

    @classmethod
    def load(cls, path) -> "ParametricDetector":
        with np.load(path) as data:
            if int(data["version"]) != 1:
                raise ValueError("unsupported checkpoint version")
            ext = FeatureExtractor(
                grid=int(data["grid"]),
                cell_px=int(data["cell_px"]),
                patch_half=int(data["patch_half"]),
            )
            return cls(weights=data["weights"],
                       w_max_px=float(data["w_max_px"]), extractor=ext)


def pretrain(detector: ParametricDetector, dataset: list, epochs: int,
             lr: float) -> ParametricDetector:
    """Full-batch gradient descent over a list of TrainingSamples."""
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    d = detector
    for _ in range(epochs):
        loss, grad = d.loss_and_grad(dataset)
        if not math.isfinite(loss):
            raise ValueError("divergent training")
        d = d.apply_update(grad, lr)
    return d


class HeuristicDetector:
    """Single-candidate detector from silhouette geometry alone.

    Proposes the segmented hull's centroid, closing along the direction in
    which the hull is thinnest.  No state, nothing to train.
    """

    def __init__(self, jaw_margin_px: float = 8.0):
        self.jaw_margin_px = jaw_margin_px

    def predict(self, obs: Observation) -> GraspSet:
        from .geometry import polygon_centroid
        from .scene import oracle_segment

        hull = oracle_segment(obs)
        cx, cy = polygon_centroid(hull)
        verts = hull.vertices
        n = len(verts)
        best_width = math.inf
        best_phi = 0.0
        for i in range(n):
            a = verts[i]
            b = verts[(i + 1) % n]
            edge = b - a
            norm = math.hypot(edge[0], edge[1])
            if norm < 1e-12:
                continue
            # Extent along the edge normal: the jaw travel if closing there.
            nx, ny = -edge[1] / norm, edge[0] / norm
            proj = verts @ np.array([nx, ny])
            width = float(proj.max() - proj.min())
            if width < best_width:
                best_width = width
                phi = math.atan2(ny, nx)
                # Wrap to the canonical angle range, half-turn periodic.
                while phi > math.pi / 2.0:
                    phi -= math.pi
                while phi < -math.pi / 2.0:
                    phi += math.pi
                best_phi = phi
        w = min(best_width + self.jaw_margin_px, W_MAX_PX)
        g = GraspRect(x=float(cx), y=float(cy), w=w, phi=best_phi, q=1.0)
        return GraspSet(candidates=[g],
                        source_viewpoint=obs.viewpoint_index)
