"""Shared test doubles for episode-level tests."""

from graspadapt.detector import GraspSet
from graspadapt.geometry import GraspRect
from graspadapt.scene import image_gt_grasps


class GroundTruthDetector:
    """Emits the target's projected gt grasps as unit-quality candidates."""

    def __init__(self, scene, trajectory, target_index=0):
        self.scene = scene
        self.trajectory = trajectory
        self.target_index = target_index

    def predict(self, obs):
        gts = image_gt_grasps(self.scene, self.trajectory,
                              obs.viewpoint_index,
                              target_index=self.target_index)
        cands = [GraspRect(x=g.x, y=g.y, w=g.w, phi=g.phi, q=1.0)
                 for g in gts]
        return GraspSet(candidates=cands,
                        source_viewpoint=obs.viewpoint_index)


class EmptyDetector:
    """Never proposes anything; episodes must exhaust the trajectory."""

    def predict(self, obs):
        return GraspSet(candidates=[],
                        source_viewpoint=obs.viewpoint_index)
