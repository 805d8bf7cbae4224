"""One full exploration episode, viewpoint by viewpoint.

Pretrains the parametric detector on handle scenes, then drops it into a
fresh scene and lets the observe / assess / decide loop run.  The per-step
trace shows candidates thinning out at bad viewpoints and the score
crossing the threshold at a good one.
"""

import time

from graspadapt.assessment import EmbodiedParams
from graspadapt.exploration import run_episode
from graspadapt.harness import BenchmarkConfig, pretrain_detector
from graspadapt.knowledge import init_opnet
from graspadapt.scene import build_trajectory, generate_scene

traj = build_trajectory()
params = EmbodiedParams()

cfg = BenchmarkConfig(families={"handle": 1}, domain="same_domain")
t0 = time.time()
detector = pretrain_detector(cfg, traj)
print(f"pretrained on {cfg.pretrain_scenes} handle scenes "
      f"({cfg.pretrain_epochs} epochs) in {time.time() - t0:.1f}s")

scene = generate_scene({"families": {"handle": 1}}, seed=400,
                       trajectory=traj)
result = run_episode(scene, traj, detector, pool=[],
                     opnet=init_opnet(seed=0, k=traj.K), params=params)

print(f"\nstart group {result.start_group} "
      f"(empty pool, so the route starts at group 0)")
print("view  cands  passing  best S  action")
for row in result.qa_trace:
    score = f"{row.max_score:.2f}" if row.max_score is not None else " -- "
    print(f"{row.viewpoint:4d}  {row.n_candidates:5d}  {row.n_passing:7d}"
          f"  {score:>6}  {row.action}")

print(f"\noutcome: {result.status.name}, sg={result.sg}, ee={result.ee:.1f}")
if result.chosen_grasp is not None:
    g = result.chosen_grasp
    print(f"grasped at viewpoint {result.chosen_viewpoint}: "
          f"({g.x:.0f}, {g.y:.0f}) w={g.w:.1f} px, success={result.success}")
print(f"retained {sum(len(s.targets) for s in result.retained_samples)} "
      f"pseudo-labels for the adaptation side")
