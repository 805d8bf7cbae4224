"""Viewpoint-knowledge pool: shape descriptors, retrieval, and OPNet.

Objects are summarized by a deterministic shape/depth descriptor computed
from the segmentation mask and depth image.  A pool of (descriptor, best
observation group) entries supports cosine retrieval with a novelty cutoff,
and a small two-layer network (OPNet) generalizes the pool into a direct
descriptor -> observation-group predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .scene import Observation

FEATURE_DIM = 64
RADIAL_BINS = 32
DEPTH_BINS = 16
DEPTH_WINDOW_MM = 80.0
NOVELTY_THRESHOLD = 0.95
OPNET_HIDDEN = 32


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("feature vector must be 1-d")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature vector must be finite")
        n = np.linalg.norm(v)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("feature vector must be unit length")


@dataclass(frozen=True)
class KnowledgeEntry:
    embedding: FeatureVector
    best_observation: int
    object_tag: str = ""
    created_episode: int = 0

    def __post_init__(self):
        if self.best_observation < 0:
            raise ValueError("observation group index must be non-negative")


@dataclass(frozen=True)
class RetrievalResult:
    novel: bool
    entry: KnowledgeEntry | None = None
    similarity: float | None = None


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity of a zero vector")
    return float(np.dot(u, v) / (nu * nv))


def extract_features(obs: Observation) -> FeatureVector:
    """Deterministic 64-d shape/depth descriptor of the masked object.

    Layout: 32-bin radial histogram of boundary distances from the mask
    centroid, then [area fraction, normalized perimeter, eccentricity],
    then a 16-bin histogram of mask depths over the 80 mm window below the
    deepest mask pixel, zero-padded to 64 and L2-normalized.  The radial
    histogram is what makes the descriptor insensitive to the viewing
    azimuth for rotationally symmetric objects.
    """
    mask = obs.mask
    if not mask.any():
        raise ValueError("no object features")

    pts = np.argwhere(mask).astype(np.float64)       # (row, col)
    n_px = len(pts)
    centroid = pts.mean(axis=0)

    eroded = ndimage.binary_erosion(mask)
    boundary = mask & ~eroded
    bpts = np.argwhere(boundary).astype(np.float64)
    if len(bpts) == 0:                                # 1-px-thin masks
        bpts = pts
    dists = np.linalg.norm(bpts - centroid, axis=1)
    rmax = max(float(dists.max()), 1e-6)
    radial, _ = np.histogram(dists, bins=RADIAL_BINS, range=(0.0, rmax))
    radial = radial / radial.sum()

    area_frac = n_px / mask.size
    perim_norm = len(bpts) / (4.0 * math.sqrt(n_px))
    centered = pts - centroid
    cov = centered.T @ centered / n_px
    eigvals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    ecc = math.sqrt(max(0.0, 1.0 - eigvals[1] / max(eigvals[0], 1e-12)))
    stats = np.array([area_frac, perim_norm, ecc])

    depths = obs.depth[mask]
    dmax = float(depths.max())
    dhist, _ = np.histogram(np.clip(depths, dmax - DEPTH_WINDOW_MM, dmax),
                            bins=DEPTH_BINS,
                            range=(dmax - DEPTH_WINDOW_MM, dmax))
    dhist = dhist / dhist.sum()

    raw = np.concatenate([radial, stats, dhist])
    padded = np.zeros(FEATURE_DIM)
    padded[:raw.size] = raw
    return FeatureVector(values=padded / np.linalg.norm(padded))


def retrieve(query: FeatureVector, pool: list) -> RetrievalResult:
    """Top-1 cosine match against the pool, or Novel below the cutoff."""
    if not pool:
        return RetrievalResult(novel=True)
    sims = [cosine_similarity(query.values, e.embedding.values)
            for e in pool]
    best = int(np.argmax(sims))
    if sims[best] < NOVELTY_THRESHOLD:
        return RetrievalResult(novel=True)
    return RetrievalResult(novel=False, entry=pool[best],
                           similarity=sims[best])


def insert_entry(pool: list, embedding: FeatureVector,
                 best_observation: int, episode: int = 0,
                 object_tag: str = "", n_groups: int | None = None) -> list:
    """New pool with one appended entry; the input pool is untouched."""
    if n_groups is not None and not (0 <= best_observation < n_groups):
        raise ValueError("observation group index out of range")
    entry = KnowledgeEntry(embedding=embedding,
                           best_observation=int(best_observation),
                           object_tag=object_tag,
                           created_episode=int(episode))
    return list(pool) + [entry]


@dataclass
class OPNet:
    """Two-layer ReLU classifier from descriptors to observation groups."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        d, h = self.w1.shape
        h2, k = self.w2.shape
        if h != h2 or self.b1.shape != (h,) or self.b2.shape != (k,):
            raise ValueError("layer shapes are inconsistent")

    @property
    def d(self) -> int:
        return self.w1.shape[0]

    @property
    def k(self) -> int:
        return self.w2.shape[1]

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.d:
            raise ValueError("feature dimension mismatch")
        hidden = np.maximum(x @ self.w1 + self.b1, 0.0)
        return hidden @ self.w2 + self.b2


def init_opnet(seed: int = 0, d: int = FEATURE_DIM, k: int = 4,
               h: int = OPNET_HIDDEN) -> OPNet:
    """Small random init; zero weights would be dead through the ReLU."""
    rng = np.random.default_rng(seed)
    return OPNet(w1=rng.normal(0.0, 0.1, size=(d, h)),
                 b1=np.zeros(h),
                 w2=rng.normal(0.0, 0.1, size=(h, k)),
                 b2=np.zeros(k))


def predict_observation(net: OPNet, know: FeatureVector) -> int:
    """Observation group with the highest predicted probability.

    argmax of the logits equals argmax of their softmax; ties resolve to
    the lowest index.
    """
    logits = net.logits(know.values)
    return int(np.argmax(logits[0]))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def opnet_loss_and_grad(net: OPNet, embeddings: np.ndarray,
                        labels: np.ndarray):
    """Mean cross-entropy and its exact gradients for a labeled batch.

    Returns (loss, (gw1, gb1, gw2, gb2)).
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=int)
    n = len(y)
    # Overflow here shows up as a non-finite loss, which train_opnet turns
    # into its divergence error; no point warning on the way there.
    with np.errstate(over="ignore", invalid="ignore"):
        z1 = x @ net.w1 + net.b1
        a1 = np.maximum(z1, 0.0)
        logits = a1 @ net.w2 + net.b2
        p = _softmax(logits)
        loss = float(-np.mean(np.log(p[np.arange(n), y] + 1e-300)))

        dlogits = p.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        gw2 = a1.T @ dlogits
        gb2 = dlogits.sum(axis=0)
        da1 = dlogits @ net.w2.T
        dz1 = da1 * (z1 > 0.0)
        gw1 = x.T @ dz1
        gb1 = dz1.sum(axis=0)
    return loss, (gw1, gb1, gw2, gb2)


def train_opnet(net: OPNet, pool: list, epochs: int, lr: float = 1e-2):
    """Full-batch gradient descent on the pool; returns (net, final_loss)."""
    if not pool:
        raise ValueError("cannot train on an empty pool")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    x = np.stack([e.embedding.values for e in pool])
    y = np.array([e.best_observation for e in pool], dtype=int)
    if y.max() >= net.k:
        raise ValueError("pool label outside the network's output range")

    current = net
    loss, grads = opnet_loss_and_grad(current, x, y)
    for _ in range(epochs):
        if not math.isfinite(loss) \
                or not all(np.all(np.isfinite(g)) for g in grads):
            raise ValueError("divergent training")
        current = OPNet(w1=current.w1 - lr * grads[0],
                        b1=current.b1 - lr * grads[1],
                        w2=current.w2 - lr * grads[2],
                        b2=current.b2 - lr * grads[3])
        loss, grads = opnet_loss_and_grad(current, x, y)
    if not math.isfinite(loss):
        raise ValueError("divergent training")
    return current, loss


def save_pool(path, pool: list, net: OPNet):
    """Versioned snapshot of the pool entries and OPNet weights."""
    embeddings = (np.stack([e.embedding.values for e in pool])
                  if pool else np.zeros((0, FEATURE_DIM)))
    np.savez(
        path,
        version=np.int64(1),
        embeddings=embeddings,
        labels=np.array([e.best_observation for e in pool], dtype=np.int64),
        episodes=np.array([e.created_episode for e in pool], dtype=np.int64),
        tags=np.array([e.object_tag for e in pool], dtype="U64"),
        w1=net.w1, b1=net.b1, w2=net.w2, b2=net.b2,
    )


def load_pool(path):
    """Inverse of save_pool; returns (pool, net)."""
    with np.load(path) as data:
        if int(data["version"]) != 1:
            raise ValueError("unsupported pool snapshot version")
        pool = [
            KnowledgeEntry(
                embedding=FeatureVector(values=data["embeddings"][i]),
                best_observation=int(data["labels"][i]),
                object_tag=str(data["tags"][i]),
                created_episode=int(data["episodes"][i]),
            )
            for i in range(len(data["labels"]))
        ]
        net = OPNet(w1=data["w1"], b1=data["b1"],
                    w2=data["w2"], b2=data["b2"])
    return pool, net
