"""Center head: map ranges, box codec round trips, and all loss oracles."""

import numpy as np
import pytest

from spiketrack.autodiff import Tensor, ops
from spiketrack.head import (
    BBox,
    CenterHead,
    HeadError,
    LossWeights,
    boxes_at_cells,
    decode_box,
    encode_box,
    focal_loss,
    giou_loss,
    l1_box_loss,
    make_cls_target,
    similarity_loss,
    total_loss,
)
from spiketrack.nn.neuron import MultiSpikeNeuron


def rasterized_giou(a: BBox, b: BBox, cell: float = 1e-3) -> float:
    """Independent GIoU oracle: count cell centers inside each region."""
    ax1, ay1, ax2, ay2 = a.corners
    bx1, by1, bx2, by2 = b.corners
    x_lo, y_lo = min(ax1, bx1), min(ay1, by1)
    x_hi, y_hi = max(ax2, bx2), max(ay2, by2)
    xs = np.arange(x_lo + cell / 2, x_hi, cell)
    ys = np.arange(y_lo + cell / 2, y_hi, cell)
    gx, gy = np.meshgrid(xs, ys, sparse=True)
    in_a = (gx >= ax1) & (gx <= ax2) & (gy >= ay1) & (gy <= ay2)
    in_b = (gx >= bx1) & (gx <= bx2) & (gy >= by1) & (gy <= by2)
    area = cell * cell
    inter = np.count_nonzero(in_a & in_b) * area
    union = np.count_nonzero(in_a | in_b) * area
    enclosure = len(xs) * len(ys) * area
    return inter / union - (enclosure - union) / enclosure


class TestDecodeBox:
    def test_worked_example(self):
        """Peak at column 5, row 9; offsets (0.25, 0.5); sizes (0.3, 0.2)."""
        p = np.zeros((16, 16))
        p[9, 5] = 1.0
        size = np.zeros((2, 16, 16))
        size[0, 9, 5] = 0.3
        size[1, 9, 5] = 0.2
        offset = np.zeros((2, 16, 16))
        offset[0, 9, 5] = 0.25
        offset[1, 9, 5] = 0.5
        box, peak = decode_box(p, size, offset, 16, 256, 256)
        assert (box.cx, box.cy) == (84.0, 152.0)
        assert box.w == pytest.approx(76.8)
        assert box.h == pytest.approx(51.2)
        assert peak == 1.0

    def test_zero_offset_centers_on_cell(self):
        p = np.zeros((16, 16))
        p[8, 8] = 1.0
        size = np.full((2, 16, 16), 4.0 / 16.0)
        offset = np.zeros((2, 16, 16))
        box, _ = decode_box(p, size, offset, 16, 256, 256)
        assert (box.cx, box.cy) == (128.0, 128.0)
        assert box.w == box.h == 64.0

    def test_uniform_map_ties_to_first_cell(self):
        p = np.full((8, 8), 0.25)
        size = np.full((2, 8, 8), 0.5)
        offset = np.full((2, 8, 8), 0.5)
        box, _ = decode_box(p, size, offset, 16, 128, 128)
        assert (box.cx, box.cy) == (8.0, 8.0)  # cell (0, 0) by row-major tie-break


class TestEncodeDecodeRoundTrip:
    def test_thousand_random_boxes(self, rng):
        """encode -> decode identity within 1e-9 px at stride 16, 256 px."""
        for _ in range(1000):
            box = BBox(
                cx=float(rng.uniform(8.0, 248.0)),
                cy=float(rng.uniform(8.0, 248.0)),
                w=float(rng.uniform(10.0, 120.0)),
                h=float(rng.uniform(10.0, 120.0)),
            )
            (row, col), off, size = encode_box(box, 16, 16, 16, 256, 256)
            p = np.zeros((16, 16))
            p[row, col] = 1.0
            smap = np.zeros((2, 16, 16))
            smap[:, row, col] = size
            omap = np.zeros((2, 16, 16))
            omap[:, row, col] = off
            out, _ = decode_box(p, smap, omap, 16, 256, 256)
            assert abs(out.cx - box.cx) < 1e-9
            assert abs(out.cy - box.cy) < 1e-9
            assert abs(out.w - box.w) < 1e-9
            assert abs(out.h - box.h) < 1e-9

    def test_boxes_at_cells_matches_decode(self, rng):
        p = Tensor(rng.uniform(0, 1, (2, 4, 4)))
        size = Tensor(rng.uniform(0.1, 1, (2, 2, 4, 4)))
        offset = Tensor(rng.uniform(0, 1, (2, 2, 4, 4)))
        from spiketrack.head import ScoreMaps

        maps = ScoreMaps(p=p, size=size, offset=offset)
        cells = np.array([[1, 2], [3, 0]])
        out = boxes_at_cells(maps, cells, 16, 64, 64).data
        for b, (row, col) in enumerate(cells):
            assert out[b, 0] == pytest.approx((col + offset.data[b, 0, row, col]) * 16)
            assert out[b, 1] == pytest.approx((row + offset.data[b, 1, row, col]) * 16)
            assert out[b, 2] == pytest.approx(size.data[b, 0, row, col] * 64)
            assert out[b, 3] == pytest.approx(size.data[b, 1, row, col] * 64)


class TestFocalLoss:
    def test_near_perfect_prediction_tiny_loss(self):
        target = np.zeros((1, 5, 5))
        target[0, 2, 2] = 1.0
        p = np.full((1, 5, 5), 1e-7)
        p[0, 2, 2] = 1.0 - 1e-7
        assert focal_loss(Tensor(p), target).item() < 1e-5

    def test_single_cell_worked_value(self):
        """-(1 - 0.5)^2 ln 0.5 for a lone peak predicted at 0.5."""
        loss = focal_loss(Tensor(np.full((1, 1, 1), 0.5)), np.ones((1, 1, 1)))
        assert loss.item() == pytest.approx(0.25 * np.log(2.0), abs=1e-12)
        assert loss.item() == pytest.approx(0.1732867951, abs=1e-9)

    def test_loss_nonnegative(self, rng):
        for _ in range(30):
            target = make_cls_target(6, 6, (2, 3), (2.0, 2.0))[None]
            p = Tensor(rng.uniform(0.01, 0.99, (1, 6, 6)))
            assert focal_loss(p, target).item() >= 0.0

    def test_monotone_in_peak_probability(self):
        """On a one-cell map the loss falls as P approaches the target."""
        losses = [
            focal_loss(Tensor(np.full((1, 1, 1), v)), np.ones((1, 1, 1))).item()
            for v in np.linspace(0.05, 0.95, 10)
        ]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_target_without_peak_rejected(self):
        with pytest.raises(HeadError, match="peak"):
            focal_loss(Tensor(np.full((1, 2, 2), 0.5)), np.full((1, 2, 2), 0.4))


class TestGiouLoss:
    def test_identical_boxes_zero(self):
        box = BBox(10, 12, 4, 6)
        assert giou_loss(box, box).item() == pytest.approx(0.0, abs=1e-12)

    def test_worked_example_vs_rasterization(self):
        """Unit-overlap squares: GIoU = 1/7 - 2/9, checked two ways."""
        a = BBox.from_corner_size(0, 0, 2, 2)
        b = BBox.from_corner_size(1, 1, 2, 2)
        loss = giou_loss(a, b).item()
        expected_giou = 1.0 / 7.0 - 2.0 / 9.0
        assert loss == pytest.approx(1.0 - expected_giou, abs=1e-12)
        assert loss == pytest.approx(1.0793650794, abs=1e-9)
        oracle = rasterized_giou(a, b)
        assert (1.0 - loss) == pytest.approx(oracle, abs=1e-9)

    def test_far_separated_approaches_two(self):
        a = BBox(5, 5, 2, 2)
        b = BBox(1e6, 1e6, 2, 2)
        assert giou_loss(a, b).item() == pytest.approx(2.0, abs=1e-4)

    def test_symmetry_and_range(self, rng):
        for _ in range(100):
            a = BBox(*rng.uniform(5, 50, 2), *rng.uniform(1, 30, 2))
            b = BBox(*rng.uniform(5, 50, 2), *rng.uniform(1, 30, 2))
            lab = giou_loss(a, b).item()
            lba = giou_loss(b, a).item()
            assert lab == pytest.approx(lba, abs=1e-12)
            assert 0.0 <= lab < 2.0

    def test_random_boxes_match_rasterization(self, rng):
        for _ in range(5):
            a = BBox(*(np.round(rng.uniform(2, 8, 2), 2)), *(np.round(rng.uniform(1, 5, 2), 2)))
            b = BBox(*(np.round(rng.uniform(2, 8, 2), 2)), *(np.round(rng.uniform(1, 5, 2), 2)))
            loss = giou_loss(a, b).item()
            assert (1.0 - loss) == pytest.approx(rasterized_giou(a, b), abs=2e-3)

    def test_degenerate_box_rejected(self):
        with pytest.raises(HeadError, match="degenerate"):
            giou_loss(np.array([[1.0, 1.0, 0.0, 2.0]]), np.array([[1.0, 1.0, 2.0, 2.0]]))


class TestOtherLosses:
    def test_similarity_identical_zero(self, rng):
        f = Tensor(rng.normal(size=(3, 8)))
        assert similarity_loss(f, Tensor(f.data.copy())).item() == pytest.approx(0.0, abs=1e-12)

    def test_similarity_orthogonal_one(self):
        a = Tensor(np.array([[1.0, 0.0]]))
        b = Tensor(np.array([[0.0, 1.0]]))
        assert similarity_loss(a, b).item() == pytest.approx(1.0)

    def test_similarity_scale_invariant(self, rng):
        v = rng.normal(size=(2, 6))
        assert similarity_loss(Tensor(v), Tensor(2.0 * v)).item() == pytest.approx(0.0, abs=1e-12)

    def test_similarity_zero_vector_rejected(self):
        with pytest.raises(HeadError, match="zero"):
            similarity_loss(Tensor(np.zeros((1, 4))), Tensor(np.ones((1, 4))))

    def test_l1_normalized(self):
        pred = np.array([[128.0, 64.0, 32.0, 16.0]])
        gt = np.array([[64.0, 128.0, 64.0, 48.0]])
        loss = l1_box_loss(pred, gt, 256, 256).item()
        expected = np.mean(np.abs(pred - gt) / 256.0)
        assert loss == pytest.approx(expected, abs=1e-12)


class TestTotalLoss:
    def test_all_zero_terms(self):
        zero = Tensor(0.0)
        w = LossWeights()
        assert total_loss(zero, zero, zero, zero, zero, w).item() == 0.0

    def test_worked_weighted_sum(self):
        """Weights (2, 5, 0.1) on terms (0.1, 0.2, 0.3, 0.05), MI term 0.02."""
        w = LossWeights(lambda_iou=2.0, lambda_l1=5.0, lambda_sim=0.1)
        out = total_loss(
            Tensor(0.1), Tensor(0.2), Tensor(0.3), Tensor(0.05), Tensor(0.02), w
        )
        assert out.item() == pytest.approx(2.025, abs=1e-12)

    def test_negative_weight_rejected(self):
        with pytest.raises(HeadError):
            LossWeights(lambda_iou=-1.0)


class TestHeadForward:
    def test_outputs_in_unit_interval(self, rng):
        neuron = MultiSpikeNeuron()
        head = CenterHead(8, 6, neuron, rng)
        feats = Tensor(rng.normal(size=(2, 16, 8)) * 2)
        maps = head(feats)
        assert maps.p.shape == (2, 4, 4)
        assert maps.size.shape == (2, 2, 4, 4)
        assert maps.offset.shape == (2, 2, 4, 4)
        for t in (maps.p, maps.size, maps.offset):
            assert t.data.min() >= 0.0
            assert t.data.max() <= 1.0

    def test_zero_features_give_half(self, rng):
        """Zero input with zero final bias lands on sigmoid(0) everywhere."""
        neuron = MultiSpikeNeuron()
        head = CenterHead(8, 6, neuron, rng)
        maps = head(Tensor(np.zeros((1, 16, 8))))
        np.testing.assert_allclose(maps.p.data, 0.5, atol=1e-12)
        np.testing.assert_allclose(maps.size.data, 0.5, atol=1e-12)

    def test_non_square_token_count_rejected(self, rng):
        head = CenterHead(8, 6, MultiSpikeNeuron(), rng)
        with pytest.raises(HeadError, match="square"):
            head(Tensor(np.zeros((1, 15, 8))))


class TestClsTarget:
    def test_peak_is_exactly_one(self):
        t = make_cls_target(16, 16, (5, 9), (3.0, 2.0))
        assert t[5, 9] == 1.0
        assert t.min() >= 0.0
        assert (t == 1.0).sum() == 1

    def test_decays_from_peak(self):
        t = make_cls_target(16, 16, (8, 8), (4.0, 4.0))
        assert t[8, 8] > t[8, 10] > t[8, 13]
