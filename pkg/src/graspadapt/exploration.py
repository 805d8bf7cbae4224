"""Knowledge-seeded viewpoint exploration for one grasping episode.

An episode starts with a survey glance from viewpoint 0: its shape
descriptor queries the knowledge pool, a hit picks the starting observation
group, a miss falls back to sequential order.  The episode then walks the
planned viewpoints, at each one predicting candidates, pruning them with the
embodied filter, scoring survivors against the segmented object, and either
committing to the best grasp or moving on.  Everything the later adaptation
pass needs (pseudo-labeled samples, the first-view descriptor, the grasping
group) is collected on the episode result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .assessment import (
    LAMBDA_DIST,
    LAMBDA_WIDTH,
    Action,
    EmbodiedParams,
    best_scored,
    decide,
    filter_embodied,
    qa_score,
)
from .detector import TrainingSample
from .geometry import GraspRect
from .knowledge import (
    FeatureVector,
    OPNet,
    extract_features,
    predict_observation,
    retrieve,
)
from .scene import Observation, Scene, Trajectory, oracle_segment, render


class EpisodeStatus(Enum):
    EXPLORING = "exploring"
    GRASPED = "grasped"
    EXHAUSTED = "exhausted"


# An exhausted episode only contributes a knowledge label when its best
# score reached this fraction of the grasp threshold; weaker evidence says
# nothing trustworthy about which group was best.
KNOWLEDGE_MIN_SCORE_FRACTION = 0.5


@dataclass
class TraceRow:
    """One visited viewpoint's assessment outcome."""

    viewpoint: int
    n_candidates: int
    n_passing: int
    max_score: float | None
    action: str


@dataclass
class ExplorationState:
    scene: Scene
    trajectory: Trajectory
    order: list
    target_index: int = 0
    cursor: int = 0
    visited: list = field(default_factory=list)
    retained: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    status: EpisodeStatus = EpisodeStatus.EXPLORING
    chosen_grasp: GraspRect | None = None
    chosen_viewpoint: int | None = None
    best_score_seen: float | None = None
    best_score_viewpoint: int | None = None
    first_view_features: FeatureVector | None = None

    @property
    def steps_taken(self) -> int:
        return len(self.visited)

    @property
    def current_viewpoint(self) -> int:
        return self.order[self.cursor]


@dataclass
class EpisodeResult:
    status: EpisodeStatus
    success: bool
    sg: int
    ee: float
    chosen_grasp: GraspRect | None
    chosen_viewpoint: int | None
    start_group: int
    best_observation: int | None
    retained_samples: list
    qa_trace: list
    first_view_features: FeatureVector | None

    def __post_init__(self):
        if self.sg < 1:
            raise ValueError("episodes take at least one step")
        if self.success and self.chosen_grasp is None:
            raise ValueError("successful episodes must carry a grasp")


def initial_observation(obs0: Observation, pool: list, opnet: OPNet) -> int:
    """Starting observation group for an episode.

    The survey view's descriptor queries the pool; a confident match runs
    the retrieved embedding through OPNet, anything novel starts at group 0.
    """
    features = extract_features(obs0)
    result = retrieve(features, pool)
    if result.novel:
        return 0
    return predict_observation(opnet, result.entry.embedding)


def visit_order(start_group: int, trajectory: Trajectory) -> list:
    """All viewpoints of the start group, then the other groups cyclically."""
    if not 0 <= start_group < trajectory.K:
        raise ValueError(f"group {start_group} out of range "
                         f"for K={trajectory.K}")
    order = []
    for offset in range(trajectory.K):
        g = (start_group + offset) % trajectory.K
        order.extend(trajectory.group_indices(g))
    return order


def step(state: ExplorationState, detector, segmenter, params: EmbodiedParams,
         epsilon: float = 4.0, retain_threshold: float | None = None,
         lambda_dist: float = LAMBDA_DIST, lambda_width: float = LAMBDA_WIDTH
         ) -> ExplorationState:
    """Advance the episode by one viewpoint visit.

    Renders the current viewpoint, proposes and prunes candidates, scores
    the survivors, and either grasps (retaining every passing candidate at
    or above the threshold as pseudo-labels) or moves to the next viewpoint.
    Running out of viewpoints exhausts the episode.  With retain_threshold
    set, non-grasping viewpoints also bank passing candidates scoring at or
    above it.
    """
    if state.status is not EpisodeStatus.EXPLORING:
        raise ValueError("episode already finished")
    t = state.current_viewpoint
    try:
        obs = render(state.scene, state.trajectory, t,
                     target_index=state.target_index)
        if state.first_view_features is None:
            state.first_view_features = extract_features(obs)
        raw = detector.predict(obs)
        feasible = filter_embodied(raw, obs.depth, params, camera=obs.camera)
        scored = []
        if len(feasible) > 0:
            hull = segmenter(obs)
            scored = qa_score(feasible, obs.mask, hull, params,
                              lambda_dist=lambda_dist,
                              lambda_width=lambda_width)
    except Exception as exc:
        raise RuntimeError(f"exploration failed at viewpoint {t}") from exc

    state.visited.append(t)
    state.cursor += 1

    best = best_scored(scored)
    n_passing = sum(1 for sc in scored if sc.passed_primary)
    action = decide(best, epsilon)
    if best is not None and (state.best_score_seen is None
                             or best.score > state.best_score_seen):
        state.best_score_seen = best.score
        state.best_score_viewpoint = t

    def _bank(threshold):
        labels = [
            GraspRect(x=sc.grasp.x, y=sc.grasp.y, w=sc.grasp.w,
                      phi=sc.grasp.phi, q=1.0)
            for sc in scored
            if sc.passed_primary and sc.score >= threshold
        ]
        if labels:
            state.retained.append(
                TrainingSample(observation=obs, targets=labels))

    if action is Action.GRASP:
        state.status = EpisodeStatus.GRASPED
        state.chosen_grasp = best.grasp
        state.chosen_viewpoint = t
        _bank(epsilon)
    else:
        if retain_threshold is not None:
            _bank(retain_threshold)
        if state.cursor >= len(state.order):
            state.status = EpisodeStatus.EXHAUSTED

    state.trace.append(TraceRow(
        viewpoint=t,
        n_candidates=len(raw),
        n_passing=n_passing,
        max_score=best.score if best is not None else None,
        action=action.value,
    ))
    return state


def run_episode(scene: Scene, trajectory: Trajectory, detector, pool: list,
                opnet: OPNet, params: EmbodiedParams, epsilon: float = 4.0,
                segmenter=oracle_segment, order: list | None = None,
                retain_threshold: float | None = None,
                target_index: int = 0,
                lambda_dist: float = LAMBDA_DIST,
                lambda_width: float = LAMBDA_WIDTH) -> EpisodeResult:
    """One full episode: survey, plan the route, explore until done.

    An explicit `order` overrides the knowledge-seeded route (the benchmark
    harness uses this for its sampling-strategy ablations).  The detector is
    read-only throughout; adaptation happens elsewhere.
    """
    obs0 = render(scene, trajectory, 0, target_index=target_index)
    start_group = initial_observation(obs0, pool, opnet)
    if order is None:
        order = visit_order(start_group, trajectory)
    state = ExplorationState(scene=scene, trajectory=trajectory,
                             order=list(order), target_index=target_index)
    while state.status is EpisodeStatus.EXPLORING:
        step(state, detector, segmenter, params, epsilon=epsilon,
             retain_threshold=retain_threshold,
             lambda_dist=lambda_dist, lambda_width=lambda_width)

    success = False
    if state.chosen_grasp is not None:
        from .harness import judge_in_scene

        success = judge_in_scene(state.chosen_grasp, scene, trajectory,
                                 state.chosen_viewpoint,
                                 target_index=target_index).success

    if state.status is EpisodeStatus.GRASPED:
        best_group = trajectory.group_of(state.chosen_viewpoint)
    elif (state.best_score_seen is not None
          and state.best_score_seen >= epsilon * KNOWLEDGE_MIN_SCORE_FRACTION):
        best_group = trajectory.group_of(state.best_score_viewpoint)
    else:
        best_group = None

    sg = state.steps_taken
    return EpisodeResult(
        status=state.status,
        success=success,
        sg=sg,
        ee=100.0 / sg,
        chosen_grasp=state.chosen_grasp,
        chosen_viewpoint=state.chosen_viewpoint,
        start_group=start_group,
        best_observation=best_group,
        retained_samples=state.retained,
        qa_trace=state.trace,
        first_view_features=state.first_view_features,
    )
