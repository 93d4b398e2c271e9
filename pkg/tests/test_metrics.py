import numpy as np
import pytest

from corrdepth.errors import ConfigError, EmptyMaskError, ShapeError
from corrdepth.grids import DepthMap
from corrdepth.metrics import (LossConfig, MetricsRecord, compute_metrics,
                               format_report, sequence_loss)
from corrdepth.seeding import uniform

from oracles import metrics_loops


def depth(arr):
    return DepthMap(np.asarray(arr, dtype=np.float64))


class TestComputeMetrics:
    def test_identity_prediction(self):
        gt = depth(uniform(1, (9, 11), 0.5, 8.0))
        rec = compute_metrics(gt, gt)
        assert rec.abs_rel == 0.0 and rec.abs == 0.0 and rec.sq_rel == 0.0
        assert rec.rmse == 0.0
        assert rec.delta_125 == 100.0
        assert rec.valid_count == 99

    def test_double_prediction_hand_values(self):
        vals = uniform(2, (6, 7), 1.0, 4.0)
        gt = depth(vals)
        rec = compute_metrics(depth(2.0 * vals), gt)
        # |2g - g|/g = 1 exactly; ratio 2 >= 1.25 so no inliers
        assert rec.abs_rel == 1.0
        assert rec.delta_125 == 0.0
        assert rec.valid_count == 42
        assert rec.abs == pytest.approx(float(np.mean(vals)), abs=1e-15)
        assert rec.sq_rel == pytest.approx(float(np.mean(vals)), abs=1e-15)
        assert rec.rmse == pytest.approx(float(np.sqrt(np.mean(vals ** 2))),
                                         abs=1e-15)

    def test_matches_scalar_reference(self):
        pred_vals = uniform(3, (8, 9), 0.4, 9.0)
        gt_vals = uniform(4, (8, 9), 0.4, 9.0)
        rec = compute_metrics(depth(pred_vals), depth(gt_vals))
        ref = metrics_loops(pred_vals, gt_vals)
        for got, want in zip((rec.abs_rel, rec.abs, rec.sq_rel, rec.rmse,
                              rec.delta_125, rec.valid_count), ref):
            assert got == pytest.approx(want, rel=1e-12)

    def test_mask_excludes_invalid_and_count_follows(self):
        gt_vals = uniform(5, (4, 6), 1.0, 3.0)
        gt_vals[:2] = 0.0
        pred_vals = gt_vals.copy()
        rec = compute_metrics(depth(pred_vals), depth(gt_vals))
        assert rec.valid_count == 12
        # predictions on invalid-gt pixels are free to be garbage
        pred_vals2 = pred_vals.copy()
        pred_vals2[0, 0] = 17.0
        rec2 = compute_metrics(depth(pred_vals2), depth(gt_vals))
        assert rec2 == rec

    def test_strict_delta_threshold(self):
        gt = depth([[4.0]])
        exactly = depth([[5.0]])  # ratio exactly 1.25 -> excluded
        under = depth([[4.999]])
        assert compute_metrics(exactly, gt).delta_125 == 0.0
        assert compute_metrics(under, gt).delta_125 == 100.0

    def test_joint_scaling_invariance(self):
        pred_vals = uniform(6, (5, 5), 1.0, 6.0)
        gt_vals = uniform(7, (5, 5), 1.0, 6.0)
        a = compute_metrics(depth(pred_vals), depth(gt_vals))
        b = compute_metrics(depth(4.0 * pred_vals), depth(4.0 * gt_vals))
        assert b.abs_rel == pytest.approx(a.abs_rel, rel=1e-12)
        assert b.delta_125 == a.delta_125
        assert b.abs == pytest.approx(4.0 * a.abs, rel=1e-12)
        assert b.sq_rel == pytest.approx(4.0 * a.sq_rel, rel=1e-12)
        assert b.rmse == pytest.approx(4.0 * a.rmse, rel=1e-12)

    def test_disjoint_masks_raise(self):
        gt_vals = np.zeros((3, 3))
        gt_vals[0] = 2.0
        pred_vals = np.zeros((3, 3))
        pred_vals[2] = 2.0
        with pytest.raises(EmptyMaskError):
            compute_metrics(depth(pred_vals), depth(gt_vals))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            compute_metrics(depth(np.ones((2, 3))), depth(np.ones((3, 2))))


class TestSequenceLoss:
    def test_zero_when_exact(self):
        gt = depth(uniform(8, (5, 6), 1.0, 4.0))
        loss = sequence_loss([gt] * 12, gt, gt, gt)
        assert loss == 0.0

    def test_t1_weight_power(self):
        assert 0.8 ** 11 == pytest.approx(0.08589934592, abs=1e-12)
        gt_vals = np.full((4, 4), 2.0)
        gt = depth(gt_vals)
        # only iterate 1 is off, by a uniform 1.0; final exact
        iterates = [depth(gt_vals + 1.0)] + [gt] * 11
        loss = sequence_loss(iterates, gt, gt, gt)
        assert loss == pytest.approx(0.08589934592, abs=1e-12)

    def test_single_iterate_uniform_offset(self):
        gt = depth(np.full((3, 5), 4.0))
        got = sequence_loss([depth(np.full((3, 5), 4.5))], gt, gt, gt,
                            LossConfig(num_iters=1))
        assert got == pytest.approx(0.5, abs=1e-15)

    def test_final_term_counts_fully(self):
        gt = depth(np.full((3, 3), 2.0))
        loss = sequence_loss([gt] * 2, gt, depth(np.full((3, 3), 2.75)), gt,
                             LossConfig(num_iters=2))
        assert loss == pytest.approx(0.75, abs=1e-15)

    def test_length_mismatch(self):
        gt = depth(np.ones((2, 2)))
        with pytest.raises(ConfigError):
            sequence_loss([gt] * 3, gt, gt, gt, LossConfig(num_iters=2))

    def test_monotone_in_each_term(self):
        gt = depth(np.full((4, 4), 3.0))
        base = [depth(np.full((4, 4), 3.2))] * 2
        worse = [depth(np.full((4, 4), 3.4)), base[1]]
        cfg = LossConfig(num_iters=2)
        assert sequence_loss(worse, gt, gt, gt, cfg) > \
            sequence_loss(base, gt, gt, gt, cfg)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            LossConfig(gamma=0.0)
        with pytest.raises(ConfigError):
            LossConfig(gamma=1.2)
        with pytest.raises(ConfigError):
            LossConfig(num_iters=0)


class TestFormatReport:
    REC = MetricsRecord(0.125, 0.5, 0.0625, 0.7, 93.75, 48)

    def test_text_mode(self):
        txt = format_report(self.REC)
        assert "abs_rel=0.125000" in txt
        assert "valid_count=48" in txt
        assert len(txt.splitlines()) == 6

    def test_structured_mode_round_trips(self):
        txt = format_report(self.REC, structured=True)
        parsed = dict(line.split("=", 1) for line in txt.splitlines())
        assert float(parsed["abs_rel"]) == self.REC.abs_rel
        assert float(parsed["rmse"]) == self.REC.rmse
        assert int(parsed["valid_count"]) == 48
