"""Success metric, Cornell ingestion, and the benchmark runner."""

import dataclasses
import math

import numpy as np
import pytest

from graspadapt.geometry import GraspRect, rect_vertices
from graspadapt.harness import (
    BenchmarkConfig,
    EpisodeRow,
    RunReport,
    SuccessJudgment,
    config_from_dict,
    config_hash,
    config_to_dict,
    ee,
    format_aggregate,
    format_episode_csv,
    format_family_csv,
    format_sweep_table,
    judge,
    judge_in_scene,
    load_config,
    parse_cornell_rects,
    pretrain_families,
    run_benchmark,
    strategy_order,
    sweep_epsilon,
    write_cornell_rects,
    write_report,
)
from graspadapt.scene import build_trajectory, generate_scene


def _tiny_config(**overrides):
    """Cheap but complete benchmark settings for runner tests."""
    base = dict(families={"disk": 2}, seeds=(0,), pretrain_scenes=12,
                pretrain_epochs=250, adapt_steps=40, opnet_epochs=60)
    base.update(overrides)
    return BenchmarkConfig(**base)


class TestJudge:
    def test_exact_match_succeeds(self):
        g = GraspRect(100.0, 120.0, 40.0, 0.3)
        v = judge(g, [g])
        assert v.success
        assert v.iou == pytest.approx(1.0)
        assert v.angle_deg == pytest.approx(0.0)

    def test_angle_gate_dominates(self):
        # Generous overlap, but the closing angle is off by 35 degrees.
        gt = GraspRect(100.0, 100.0, 40.0, 0.0)
        pred = GraspRect(100.0, 100.0, 40.0, math.radians(35.0))
        v = judge(pred, [gt])
        assert not v.success
        assert v.angle_deg == pytest.approx(35.0)

    def test_iou_gate(self):
        gt = GraspRect(100.0, 100.0, 40.0, 0.0)
        far = GraspRect(200.0, 200.0, 40.0, 0.0)
        assert not judge(far, [gt]).success
        near = GraspRect(104.0, 102.0, 40.0, math.radians(10.0))
        v = judge(near, [gt])
        assert v.success
        assert v.iou > 0.25

    def test_best_of_several_gts(self):
        pred = GraspRect(100.0, 100.0, 40.0, 0.0)
        gts = [GraspRect(300.0, 300.0, 40.0, 1.0), pred,
               GraspRect(100.0, 100.0, 40.0, 0.2)]
        v = judge(pred, gts)
        assert v.success
        assert v.iou == pytest.approx(1.0)

    def test_empty_gts_rejected(self):
        with pytest.raises(ValueError, match="ground-truth"):
            judge(GraspRect(0.0, 0.0, 10.0, 0.0), [])

    def test_judgment_flag_must_match_thresholds(self):
        with pytest.raises(ValueError, match="success"):
            SuccessJudgment(iou=0.9, angle_deg=0.0, success=False)

    def test_judge_in_scene_matches_gt(self):
        traj = build_trajectory()
        scene = generate_scene({"families": {"disk": 1}}, seed=3,
                               trajectory=traj)
        from graspadapt.scene import image_gt_grasps
        gts = image_gt_grasps(scene, traj, 0)
        assert judge_in_scene(gts[0], scene, traj, 0).success


class TestEE:
    def test_values(self):
        assert ee(1) == 100.0
        assert ee(4) == 25.0
        assert ee(16) == 6.25

    def test_zero_steps_rejected(self):
        with pytest.raises(ValueError, match="step count"):
            ee(0)


class TestCornell:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        rects = [
            GraspRect(x=float(rng.uniform(40, 240)),
                      y=float(rng.uniform(40, 240)),
                      w=float(rng.uniform(15, 80)),
                      phi=float(rng.uniform(-math.pi / 2, math.pi / 2)))
            for _ in range(12)
        ]
        path = tmp_path / "rects.txt"
        write_cornell_rects(path, rects)
        back = parse_cornell_rects(path)
        assert len(back) == len(rects)
        for a, b in zip(rects, back):
            assert abs(a.x - b.x) < 1e-6
            assert abs(a.y - b.y) < 1e-6
            assert abs(a.w - b.w) < 1e-6
            # phi is pi-periodic: -pi/2 and pi/2 describe one closing axis
            d = abs(a.phi - b.phi)
            assert min(d, abs(d - math.pi)) < 1e-6

    def test_axis_aligned_square(self, tmp_path):
        path = tmp_path / "sq.txt"
        path.write_text("45 45\n55 45\n55 55\n45 55\n")
        (r,) = parse_cornell_rects(path)
        assert r.x == pytest.approx(50.0)
        assert r.y == pytest.approx(50.0)
        assert r.w == pytest.approx(10.0)
        assert r.phi == pytest.approx(0.0)

    def test_nan_group_skipped_with_warning(self, tmp_path):
        good = GraspRect(100.0, 100.0, 30.0, 0.4)
        lines = []
        for vx, vy in rect_vertices(good):
            lines.append(f"{vx:.4f} {vy:.4f}")
        lines += ["NaN 120.0", "130.0 120.0", "130.0 140.0", "110.0 140.0"]
        for vx, vy in rect_vertices(GraspRect(60.0, 60.0, 20.0, -0.2)):
            lines.append(f"{vx:.4f} {vy:.4f}")
        path = tmp_path / "nan.txt"
        path.write_text("\n".join(lines) + "\n")
        with pytest.warns(UserWarning, match="non-finite"):
            rects = parse_cornell_rects(path)
        assert len(rects) == 2

    def test_odd_token_count_warns(self, tmp_path):
        path = tmp_path / "odd.txt"
        quad = "0 0\n10 0\n10 10\n0 10\n7\n"
        path.write_text(quad)
        with pytest.warns(UserWarning, match="odd coordinate count"):
            rects = parse_cornell_rects(path)
        assert len(rects) == 1

    def test_degenerate_edge_skipped(self, tmp_path):
        path = tmp_path / "deg.txt"
        path.write_text("5 5\n5 5\n5 5\n5 5\n")
        with pytest.warns(UserWarning, match="degenerate"):
            assert parse_cornell_rects(path) == []


class TestConfig:
    def test_defaults_are_valid(self):
        cfg = BenchmarkConfig()
        assert cfg.epsilon == 4.0
        assert cfg.families == (("disk", 10), ("handle", 10))

    def test_dict_round_trip(self):
        cfg = _tiny_config(strategy="RO", seeds=(3, 1))
        again = config_from_dict(config_to_dict(cfg))
        assert again == cfg
        assert config_hash(again) == config_hash(cfg)

    def test_unknown_keys_rejected(self):
        d = config_to_dict(BenchmarkConfig())
        d["warp_factor"] = 9
        with pytest.raises(ValueError, match="warp_factor"):
            config_from_dict(d)

    def test_version_checked(self):
        d = config_to_dict(BenchmarkConfig())
        d["version"] = 99
        with pytest.raises(ValueError, match="version"):
            config_from_dict(d)

    def test_load_config(self, tmp_path):
        import json
        cfg = _tiny_config()
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config_to_dict(cfg)))
        assert load_config(path) == cfg

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError, match="family"):
            BenchmarkConfig(families={"sphere": 3})
        with pytest.raises(ValueError, match="count"):
            BenchmarkConfig(families={"disk": 0})
        with pytest.raises(ValueError, match="seeds"):
            BenchmarkConfig(seeds=())
        with pytest.raises(ValueError, match="duplicate"):
            BenchmarkConfig(seeds=(1, 1))
        with pytest.raises(ValueError, match="domain"):
            BenchmarkConfig(domain="other_domain")
        with pytest.raises(ValueError, match="mode"):
            BenchmarkConfig(mode="eta_triple")
        with pytest.raises(ValueError, match="strategy"):
            BenchmarkConfig(strategy="XX")
        with pytest.raises(ValueError, match="epsilon"):
            BenchmarkConfig(epsilon=0.0)
        with pytest.raises(ValueError, match="divide"):
            BenchmarkConfig(n_viewpoints=16, n_groups=5)
        with pytest.raises(ValueError, match="adapt_every"):
            BenchmarkConfig(adapt_every=0)
        with pytest.raises(ValueError, match="retain_threshold"):
            BenchmarkConfig(retain_threshold=-1.0)

    def test_hash_tracks_content(self):
        a = BenchmarkConfig()
        b = dataclasses.replace(a, epsilon=5.0)
        assert config_hash(a) != config_hash(b)

    def test_domain_split(self):
        cross = BenchmarkConfig(families={"disk": 1}, domain="cross_domain")
        assert pretrain_families(cross) == ("box", "handle")
        same = BenchmarkConfig(families={"disk": 1}, domain="same_domain")
        assert pretrain_families(same) == ("disk",)
        everything = BenchmarkConfig(
            families={"disk": 1, "handle": 1, "box": 1}, domain="cross_domain")
        with pytest.raises(ValueError, match="held-out|absent"):
            pretrain_families(everything)


class TestRowsAndReport:
    def _row(self, **over):
        base = dict(episode=0, seed=0, scene_seed=0, family="disk",
                    object_id="disk-00", strategy="KR", sg=4, ee=25.0,
                    score=5.0, success=True, retained=2, start_group=0,
                    chosen_viewpoint=3)
        base.update(over)
        return EpisodeRow(**base)

    def test_ee_must_match_sg(self):
        with pytest.raises(ValueError, match="ee"):
            self._row(sg=3, ee=25.0)

    def test_row_bounds(self):
        with pytest.raises(ValueError, match="sg"):
            self._row(sg=0, ee=100.0)
        with pytest.raises(ValueError, match="chosen_viewpoint"):
            self._row(chosen_viewpoint=-2)

    def test_report_checks_accuracy(self):
        rows = (self._row(), self._row(episode=1, success=False))
        with pytest.raises(ValueError, match="accuracy"):
            RunReport(config_hash="x", mode="eta_multi", strategy="KR",
                      domain="cross_domain", epsilon=4.0, seeds=(0,),
                      rows=rows, accuracy=1.0, baseline_accuracy=0.0,
                      delta=1.0)

    def test_report_checks_delta(self):
        rows = (self._row(),)
        with pytest.raises(ValueError, match="delta"):
            RunReport(config_hash="x", mode="eta_multi", strategy="KR",
                      domain="cross_domain", epsilon=4.0, seeds=(0,),
                      rows=rows, accuracy=1.0, baseline_accuracy=0.25,
                      delta=0.5)

    def test_retained_total(self):
        rows = (self._row(), self._row(episode=1, retained=5))
        rep = RunReport(config_hash="x", mode="eta_multi", strategy="KR",
                        domain="cross_domain", epsilon=4.0, seeds=(0,),
                        rows=rows, accuracy=1.0, baseline_accuracy=0.5,
                        delta=0.5)
        assert rep.retained_total == 7


class TestStrategyOrders:
    def setup_method(self):
        self.traj = build_trajectory()

    def test_kr_delegates(self):
        assert strategy_order("KR", self.traj, np.random.default_rng(0)) is None

    def test_se_is_sequential(self):
        order = strategy_order("SE", self.traj, np.random.default_rng(0))
        assert order == list(range(16))

    def test_rv_is_a_permutation(self):
        order = strategy_order("RV", self.traj, np.random.default_rng(0))
        assert sorted(order) == list(range(16))
        assert order != list(range(16))

    def test_ro_shuffles_groups_keeps_insides(self):
        order = strategy_order("RO", self.traj, np.random.default_rng(1))
        blocks = [order[i:i + 4] for i in range(0, 16, 4)]
        groups = []
        for block in blocks:
            g = block[0] // 4
            assert block == list(self.traj.group_indices(g))
            groups.append(g)
        assert sorted(groups) == [0, 1, 2, 3]

    def test_so_keeps_groups_shuffles_insides(self):
        order = strategy_order("SO", self.traj, np.random.default_rng(2))
        blocks = [order[i:i + 4] for i in range(0, 16, 4)]
        shuffled_somewhere = False
        for g, block in enumerate(blocks):
            expected = list(self.traj.group_indices(g))
            assert sorted(block) == expected
            shuffled_somewhere |= block != expected
        assert shuffled_somewhere

    def test_orders_are_seed_deterministic(self):
        for s in ("RV", "RO", "SO"):
            a = strategy_order(s, self.traj, np.random.default_rng(9))
            b = strategy_order(s, self.traj, np.random.default_rng(9))
            assert a == b


class TestRunBenchmark:
    def test_baseline_mode_has_zero_delta(self):
        rep = run_benchmark(_tiny_config(mode="baseline"))
        assert rep.delta == 0.0
        assert rep.accuracy == rep.baseline_accuracy
        assert all(r.sg == 1 and r.strategy == "none" for r in rep.rows)

    def test_row_shape_and_order(self):
        cfg = _tiny_config(families={"disk": 1, "handle": 1}, seeds=(0, 1))
        rep = run_benchmark(cfg)
        assert len(rep.rows) == 4
        keys = [(r.seed, r.episode) for r in rep.rows]
        assert keys == sorted(keys)
        fams = [r.family for r in rep.rows[:2]]
        assert fams == ["disk", "handle"]

    def test_reruns_are_byte_identical(self):
        cfg = _tiny_config()
        a = run_benchmark(cfg)
        b = run_benchmark(cfg)
        assert format_episode_csv(a) == format_episode_csv(b)
        assert format_aggregate(a) == format_aggregate(b)

    def test_single_view_never_leaves_viewpoint_zero(self):
        rep = run_benchmark(_tiny_config(mode="eta_single"))
        for r in rep.rows:
            assert r.sg == 1
            assert r.chosen_viewpoint in (-1, 0)

    def test_se_equals_kr_on_an_empty_pool(self):
        # With adaptation off the pool never fills, so knowledge retrieval
        # falls back to the sequential route in every episode.
        kr = run_benchmark(_tiny_config(strategy="KR", adapt=False))
        se = run_benchmark(_tiny_config(strategy="SE", adapt=False))
        for a, b in zip(kr.rows, se.rows):
            assert dataclasses.replace(a, strategy="SE") == b

    def test_finetune_runs_frozen(self):
        rep = run_benchmark(_tiny_config(mode="finetune_gt",
                                         finetune_scenes=6,
                                         finetune_epochs=80))
        assert all(r.sg == 1 for r in rep.rows)
        assert all(r.retained == 0 for r in rep.rows)

    def test_write_report(self, tmp_path):
        cfg = _tiny_config(mode="baseline")
        rep = run_benchmark(cfg, out_dir=tmp_path)
        paths = write_report(rep, tmp_path)
        with open(paths["episodes"]) as fh:
            assert fh.read() == format_episode_csv(rep)
        with open(paths["aggregate"]) as fh:
            assert fh.read() == format_aggregate(rep)

    def test_family_csv(self):
        rep = run_benchmark(_tiny_config(families={"disk": 1, "handle": 1},
                                         mode="baseline"))
        text = format_family_csv(rep)
        lines = text.strip().split("\n")
        assert lines[0] == "family,episodes,accuracy,mean_sg,mean_ee"
        assert lines[1].startswith("disk,1,")
        assert lines[2].startswith("handle,1,")


class TestSweep:
    def test_sweep_shares_scenes_and_varies_epsilon(self):
        cfg = _tiny_config(mode="eta_single", adapt=False)
        reports = sweep_epsilon(cfg, values=(3.0, 5.0))
        assert [r.epsilon for r in reports] == [3.0, 5.0]
        seeds_a = [r.scene_seed for r in reports[0].rows]
        seeds_b = [r.scene_seed for r in reports[1].rows]
        assert seeds_a == seeds_b
        table = format_sweep_table(reports)
        assert table.startswith("epsilon,accuracy,delta,retained_total")

    def test_single_view_retention_is_monotone(self):
        cfg = _tiny_config(families={"disk": 3}, mode="eta_single",
                           adapt=False)
        reports = sweep_epsilon(cfg, values=(3.0, 4.0, 5.0))
        for rows in zip(*(r.rows for r in reports)):
            counts = [r.retained for r in rows]
            assert counts == sorted(counts, reverse=True)

    def test_empty_values_rejected(self):
        with pytest.raises(ValueError, match="epsilon"):
            sweep_epsilon(_tiny_config(), values=())
