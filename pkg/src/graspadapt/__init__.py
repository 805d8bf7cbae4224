"""Grasp detection with embodied test-time adaptation, on a desk-scale simulator.

Layers, bottom up:

  geometry     grasp rectangles, convex polygons, IoU / angle metrics
  scene        synthetic tabletop worlds, viewpoint trajectories, rendering
  detector     per-cell parametric grasp detector with analytic gradients
  assessment   embodied feasibility filters and question-answer scoring
  knowledge    shape descriptors, retrieval pool, observation prediction net
  exploration  the per-episode observe / assess / decide loop
  adaptation   detector + knowledge updates from retained pseudo-labels
  harness      success metrics, benchmark runner, file formats
"""

__version__ = "0.1.0"
