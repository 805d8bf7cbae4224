"""Shape retrieval: skip the bad viewpoints for objects you have met.

A handle episode that ends in a grasp stores (shape descriptor -> best
observation group) in the pool.  The next handle-like object retrieves
that entry from its survey view and starts exploring in the right group
instead of group 0.  A disk does not match and falls back to the default.
"""

from graspadapt.adaptation import adaptation_round
from graspadapt.assessment import EmbodiedParams
from graspadapt.exploration import initial_observation, run_episode
from graspadapt.harness import BenchmarkConfig, pretrain_detector
from graspadapt.knowledge import extract_features, init_opnet, retrieve
from graspadapt.scene import build_trajectory, generate_scene, render

traj = build_trajectory()
params = EmbodiedParams()
detector = pretrain_detector(
    BenchmarkConfig(families={"handle": 1}, domain="same_domain"), traj)

pool = []
opnet = init_opnet(seed=0, k=traj.K)

first = generate_scene({"families": {"handle": 1}}, seed=501,
                       trajectory=traj)
result = run_episode(first, traj, detector, pool, opnet, params)
print(f"first handle: {result.status.name} at viewpoint "
      f"{result.chosen_viewpoint}, best group {result.best_observation}")

detector, pool, opnet, _ = adaptation_round(detector, pool, opnet, [result])
print(f"pool now holds {len(pool)} entry")

print("\nobject   similarity  novel  predicted  optimal")
for family, seed in (("handle", 3001), ("handle", 3002), ("disk", 3003)):
    scene = generate_scene({"families": {family: 1}}, seed=seed,
                           trajectory=traj)
    obs0 = render(scene, traj, 0)
    match = retrieve(extract_features(obs0), pool)
    start = initial_observation(obs0, pool, opnet)
    sim = f"{match.similarity:.3f}" if match.similarity is not None else "--"
    print(f"{family:7s}  {sim:>10s}  {str(match.novel):5s}  {start:9d}  "
          f"{scene.objects[0].optimal_observation:7d}")

print("\nboth handles clear the novelty cutoff and inherit the stored "
      "group; the disk misses it and takes the default")
