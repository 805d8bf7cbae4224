"""Test-time optimization of the detector and the viewpoint knowledge.

Finished episodes hand over their retained pseudo-labeled samples and the
group they ended up grasping in.  The detector fine-tunes on the merged
sample batch and is frozen again afterwards; the knowledge pool gains one
embedding per labeled episode and the observation net refits on the grown
pool.  Nothing in this module reads ground truth: the batch type only
carries detector-emitted candidates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .detector import ParametricDetector, TrainingSample
from .knowledge import FeatureVector, insert_entry, train_opnet

DETECTOR_STEPS_DEFAULT = 100
DETECTOR_LR_DEFAULT = 1e-2
OPNET_EPOCHS_DEFAULT = 300
OPNET_LR_DEFAULT = 0.5
_LOSS_SLACK = 1e-9


@dataclass(frozen=True)
class AdaptationBatch:
    """Merged pseudo-labeled samples from one or more episodes.

    samples may be empty (a round with nothing retained skips the detector
    update); when present they must be TrainingSamples, whose targets are
    the detector's own banked candidates.
    """

    samples: tuple
    source_episodes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "source_episodes", tuple(self.source_episodes))
        for s in self.samples:
            if not isinstance(s, TrainingSample):
                raise ValueError("adaptation batch accepts TrainingSample only")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class AdaptationReport:
    """Losses and settings of one adaptation round."""

    pre_loss: float
    post_loss: float
    opnet_loss: float
    total: float
    steps: int
    lr: float
    diverged: bool = False

    def __post_init__(self):
        for name in ("pre_loss", "post_loss", "opnet_loss", "total", "lr"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.post_loss > self.pre_loss + _LOSS_SLACK:
            raise ValueError("adaptation must not increase the batch loss")
        if abs(self.total - (self.post_loss + self.opnet_loss)) > 1e-6:
            raise ValueError("total must be the sum of detector and knowledge losses")


def _fit_detector(detector: ParametricDetector, batch: AdaptationBatch,
                  steps: int, lr: float):
    """Descent on the batch keeping the best iterate; flags divergence.

    Returns (detector, pre_loss, post_loss, diverged).  The kept iterate is
    the lowest-loss one seen (the start included), so post_loss can never
    exceed pre_loss.  A non-finite loss or update aborts and returns the
    original detector untouched.
    """
    if len(batch) == 0:
        raise ValueError("empty adaptation batch")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    samples = list(batch.samples)
    current = detector
    loss, grad = current.loss_and_grad(samples)
    if not math.isfinite(loss):
        raise ValueError("non-finite loss on adaptation batch")
    pre_loss = loss
    best, best_loss = current, loss
    for _ in range(steps):
        try:
            current = current.apply_update(grad, lr)
        except ValueError:
            return detector, pre_loss, pre_loss, True
        loss, grad = current.loss_and_grad(samples)
        if not math.isfinite(loss):
            return detector, pre_loss, pre_loss, True
        if loss < best_loss:
            best, best_loss = current, loss
    return best, pre_loss, best_loss, False


def adapt_detector(detector: ParametricDetector, batch: AdaptationBatch,
                   steps: int = DETECTOR_STEPS_DEFAULT,
                   lr: float = DETECTOR_LR_DEFAULT):
    """Fine-tune the detector on retained samples; returns (detector, pre_loss, post_loss).

    The returned detector is frozen (a plain value object; further training
    needs another explicit call).  Divergence aborts the run: the original
    detector comes back with post_loss == pre_loss and a warning.
    """
    det, pre, post, diverged = _fit_detector(detector, batch, steps, lr)
    if diverged:
        warnings.warn("adaptation diverged; detector left unchanged")
    return det, pre, post


def adapt_knowledge(pool: list, opnet, episode, first_view_features: FeatureVector | None,
                    epochs: int = OPNET_EPOCHS_DEFAULT, lr: float = OPNET_LR_DEFAULT,
                    episode_id: int = 0):
    """Extend the pool with the episode's first-view embedding and refit.

    The label is the viewpoint group the episode found graspable.  Episodes
    that earned no label, or that never produced a first-view embedding,
    are a no-op with zero loss.  Returns (pool, opnet, ce_loss).
    """
    if episode.best_observation is None or first_view_features is None:
        return pool, opnet, 0.0
    new_pool = insert_entry(pool, first_view_features, episode.best_observation,
                            episode=episode_id, n_groups=len(opnet.b2))
    net, loss = train_opnet(opnet, new_pool, epochs=epochs, lr=lr)
    return new_pool, net, loss


def adaptation_round(detector: ParametricDetector, pool: list, opnet,
                     episodes: list,
                     steps: int = DETECTOR_STEPS_DEFAULT,
                     lr: float = DETECTOR_LR_DEFAULT,
                     opnet_epochs: int = OPNET_EPOCHS_DEFAULT,
                     opnet_lr: float = OPNET_LR_DEFAULT,
                     episode_ids: list | None = None,
                     extra_samples: tuple = ()):
    """One test-time update from a batch of finished episodes.

    Merges every episode's retained samples into a single detector batch,
    then feeds each labeled episode to the knowledge side.  The reported
    opnet loss is the cross-entropy after the last pool refit, i.e. the fit
    on the fullest pool this round produced.  `extra_samples` (a replay
    buffer, say) join the detector batch but never touch the knowledge
    side.  Returns (detector, pool, opnet, report).
    """
    if not episodes:
        raise ValueError("need at least one episode")
    if episode_ids is None:
        episode_ids = list(range(len(episodes)))
    if len(episode_ids) != len(episodes):
        raise ValueError("one id per episode required")

    samples = [s for ep in episodes for s in ep.retained_samples]
    samples.extend(extra_samples)
    batch = AdaptationBatch(samples=tuple(samples),
                            source_episodes=tuple(episode_ids))
    diverged = False
    if samples:
        detector, pre_loss, post_loss, diverged = _fit_detector(detector, batch, steps, lr)
        if diverged:
            warnings.warn("adaptation diverged; detector left unchanged")
    else:
        pre_loss = post_loss = 0.0

    opnet_loss = 0.0
    for ep_id, ep in zip(episode_ids, episodes):
        pool, opnet, loss = adapt_knowledge(pool, opnet, ep, ep.first_view_features,
                                            epochs=opnet_epochs, lr=opnet_lr,
                                            episode_id=ep_id)
        if ep.best_observation is not None and ep.first_view_features is not None:
            opnet_loss = loss

    report = AdaptationReport(pre_loss=pre_loss, post_loss=post_loss,
                              opnet_loss=opnet_loss, total=post_loss + opnet_loss,
                              steps=steps, lr=lr, diverged=diverged)
    return detector, pool, opnet, report
