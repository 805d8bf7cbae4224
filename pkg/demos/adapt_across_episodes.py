"""Test-time adaptation from the detector's own accepted grasps.

The detector is pretrained on boxes and handles only, then meets disks.
The first half drives the adaptation loop by hand: run an episode, bank
the QA-passing grasps as pseudo-labels, fit, repeat.  The second half
lets the benchmark isolate what each ingredient buys on the same family:
a frozen single shot, an adapted single view, and adapted multi-view
exploration.
"""

from graspadapt.adaptation import adaptation_round
from graspadapt.assessment import EmbodiedParams
from graspadapt.exploration import run_episode
from graspadapt.harness import (
    BenchmarkConfig,
    pretrain_detector,
    run_benchmark,
)
from graspadapt.knowledge import init_opnet
from graspadapt.scene import build_trajectory, generate_scene

traj = build_trajectory()
params = EmbodiedParams()

# cross_domain: pretraining sees every family except the test one.
cfg = BenchmarkConfig(families={"disk": 1}, domain="cross_domain")
detector = pretrain_detector(cfg, traj)
print("pretrained without ever seeing a disk")

pool = []
opnet = init_opnet(seed=0, k=traj.K)
replay = []
print("\nepisode  status     sg  retained  pool  success")
for e in range(12):
    scene = generate_scene({"families": {"disk": 1}}, seed=60_000 + e,
                           trajectory=traj)
    result = run_episode(scene, traj, detector, pool, opnet, params)
    n_ret = sum(len(s.targets) for s in result.retained_samples)
    detector, pool, opnet, report = adaptation_round(
        detector, pool, opnet, [result],
        extra_samples=tuple(replay))
    replay.extend(result.retained_samples)
    print(f"{e:7d}  {result.status.name:9s}  {result.sg:2d}  "
          f"{n_ret:8d}  {len(pool):4d}  {result.success}")

print(f"\nreplay buffer holds {sum(len(s.targets) for s in replay)} "
      f"pseudo-labels across {len(replay)} retained samples")

# The same loop, packaged: every mode shares the pretrained weights and
# the test scenes, so the differences below are exploration + adaptation.
single = run_benchmark(BenchmarkConfig(
    families={"disk": 12}, seeds=(0,), domain="cross_domain",
    mode="eta_single"))
multi = run_benchmark(BenchmarkConfig(
    families={"disk": 12}, seeds=(0,), domain="cross_domain",
    mode="eta_multi"))
print(f"\nfrozen single shot   {single.baseline_accuracy:.2f}")
print(f"adapted single view  {single.accuracy:.2f}")
print(f"adapted multi view   {multi.accuracy:.2f}")
