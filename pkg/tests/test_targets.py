"""Target encoding: detection grids, orientation bins, pose fields."""
import math

import numpy as np
import pytest

from cpt import (
    EncoderConfig,
    InputError,
    ObjectAnnotation,
    encode_depth,
    encode_detection,
    encode_orientation,
    encode_pose,
)
from cpt.decode import decode_depth


def cfg128(**kw):
    return EncoderConfig(input_w=128, input_h=128, num_classes=3, **kw)


class TestEncoderConfig:
    def test_divisibility_enforced(self):
        with pytest.raises(InputError, match="not divisible"):
            EncoderConfig(input_w=130, input_h=128, num_classes=2)

    def test_for_image_pads_up(self):
        cfg = EncoderConfig.for_image(130, 127, num_classes=2)
        assert (cfg.input_w, cfg.input_h) == (132, 128)
        assert (cfg.grid_w, cfg.grid_h) == (33, 32)

    def test_units_validated(self):
        with pytest.raises(InputError):
            cfg128(size_units="furlongs")


class TestObjectAnnotation:
    def test_corner_order_enforced(self):
        with pytest.raises(InputError):
            ObjectAnnotation(bbox=(5, 0, 3, 4), category=0)

    def test_optional_field_validation(self):
        with pytest.raises(InputError):
            ObjectAnnotation(bbox=(0, 0, 1, 1), category=0, depth=0.0)
        with pytest.raises(InputError):
            ObjectAnnotation(bbox=(0, 0, 1, 1), category=0, dims3d=(1.0, -1.0, 1.0))
        with pytest.raises(InputError):
            ObjectAnnotation(bbox=(0, 0, 1, 1), category=0, yaw=4.0)


class TestEncodeDetection:
    def test_center_on_grid_point(self):
        ts = encode_detection([ObjectAnnotation(bbox=(8, 8, 24, 24), category=0)], cfg128())
        obj = ts.objects[0]
        assert obj.cell == (4, 4)
        assert obj.offset == (0.0, 0.0)
        assert obj.size == (16.0, 16.0)  # default units are raw pixels

    def test_cells_units(self):
        ts = encode_detection([ObjectAnnotation(bbox=(8, 8, 24, 24), category=0)], cfg128(size_units="cells"))
        assert ts.objects[0].size == (4.0, 4.0)

    def test_subcell_offset(self):
        ts = encode_detection([ObjectAnnotation(bbox=(10, 10, 20, 20), category=0)], cfg128())
        obj = ts.objects[0]
        assert obj.cell == (3, 3)
        assert obj.offset == (0.75, 0.75)

    def test_heatmap_is_one_at_center_cell(self):
        anns = [
            ObjectAnnotation(bbox=(10, 10, 20, 20), category=0),
            ObjectAnnotation(bbox=(40, 50, 90, 110), category=2),
        ]
        ts = encode_detection(anns, cfg128())
        for obj in ts.objects:
            assert ts.heatmap.data[obj.category, obj.cell[1], obj.cell[0]] == 1.0

    def test_offsets_in_unit_interval(self):
        rng = np.random.Generator(np.random.Philox(key=42))
        anns = []
        for _ in range(40):
            cx, cy = rng.uniform(6, 122, size=2)
            hw, hh = rng.uniform(1, 5, size=2)
            anns.append(ObjectAnnotation(bbox=(cx - hw, cy - hh, cx + hw, cy + hh), category=int(rng.integers(3))))
        ts = encode_detection(anns, cfg128())
        for obj in ts.objects:
            assert 0.0 <= obj.offset[0] < 1.0
            assert 0.0 <= obj.offset[1] < 1.0

    def test_same_class_collision_recorded(self):
        anns = [
            ObjectAnnotation(bbox=(10, 10, 20, 20), category=1),
            ObjectAnnotation(bbox=(12, 12, 18, 18), category=1),
        ]
        ts = encode_detection(anns, cfg128())
        assert ts.collision_count == 1
        c = ts.collisions[0]
        assert (c.first, c.second) == (0, 1)
        assert c.cell == (3, 3)
        # later object owns the shared size/offset cell
        assert ts.size.data[0, 3, 3] == 6.0

    def test_cross_class_same_cell_not_a_collision(self):
        anns = [
            ObjectAnnotation(bbox=(10, 10, 20, 20), category=0),
            ObjectAnnotation(bbox=(10, 10, 20, 20), category=1),
        ]
        assert encode_detection(anns, cfg128()).collision_count == 0

    def test_triple_collision_counts_pairs(self):
        anns = [ObjectAnnotation(bbox=(10, 10, 20, 20), category=0) for _ in range(3)]
        assert encode_detection(anns, cfg128()).collision_count == 3

    def test_heatmap_takes_elementwise_max(self):
        anns = [
            ObjectAnnotation(bbox=(8, 8, 24, 24), category=0),
            ObjectAnnotation(bbox=(16, 8, 32, 24), category=0),
        ]
        ts = encode_detection(anns, cfg128())
        assert ts.heatmap.data[0, 4, 4] == 1.0
        assert ts.heatmap.data[0, 4, 6] == 1.0

    def test_border_degenerate_center_clamped(self):
        ts = encode_detection([ObjectAnnotation(bbox=(128, 128, 128, 128), category=0)], cfg128())
        assert ts.objects[0].cell == (31, 31)
        assert ts.clamped_centers == 1

    def test_category_out_of_range(self):
        with pytest.raises(InputError, match="category"):
            encode_detection([ObjectAnnotation(bbox=(0, 0, 4, 4), category=7)], cfg128())

    def test_3d_fields_carried(self):
        ann = ObjectAnnotation(bbox=(8, 8, 24, 24), category=0, depth=12.5, dims3d=(1.5, 1.6, 3.9), yaw=0.4)
        ts = encode_detection([ann], cfg128())
        obj = ts.objects[0]
        assert obj.depth == 12.5
        assert obj.dims3d == (1.5, 1.6, 3.9)
        assert obj.orientation is not None and obj.orientation.shape == (8,)

    def test_center_mask_marks_cells(self):
        anns = [
            ObjectAnnotation(bbox=(10, 10, 20, 20), category=0),
            ObjectAnnotation(bbox=(40, 40, 60, 60), category=1),
        ]
        ts = encode_detection(anns, cfg128())
        assert ts.center_mask.data.sum() == 2.0


class TestEncodeOrientation:
    def test_at_second_bin_midpoint(self):
        a = encode_orientation(math.pi / 2)
        assert (a[1], a[5]) == (0.0, 1.0)  # in bin 2 only
        assert a[6] == pytest.approx(0.0, abs=1e-12)
        assert a[7] == pytest.approx(1.0)

    def test_overlap_region(self):
        a = encode_orientation(0.0)
        assert (a[1], a[5]) == (1.0, 1.0)
        assert a[2] == pytest.approx(1.0)  # sin(0 - (-pi/2))
        assert a[3] == pytest.approx(0.0, abs=1e-12)
        assert a[6] == pytest.approx(-1.0)
        assert a[7] == pytest.approx(0.0, abs=1e-12)

    def test_pi_in_second_bin_only(self):
        a = encode_orientation(math.pi)
        assert (a[1], a[5]) == (0.0, 1.0)
        assert a[6] == pytest.approx(1.0)
        assert a[7] == pytest.approx(0.0, abs=1e-12)

    def test_rejects_unnormalized(self):
        with pytest.raises(InputError):
            encode_orientation(3 * math.pi / 2)

    def test_classification_is_one_hot(self):
        for theta in (-2.0, 0.0, 2.0, math.pi):
            a = encode_orientation(theta)
            assert a[0] + a[1] == 1.0
            assert a[4] + a[5] == 1.0


def test_encode_depth_inverts_decode():
    for d in (0.1, 1.0, 9.0, 100.0):
        assert decode_depth(encode_depth(d)) == pytest.approx(d, rel=1e-12)
    with pytest.raises(InputError):
        encode_depth(0.0)


class TestEncodePose:
    def kp(self, *pts):
        cfg = cfg128(num_joints=len(pts))
        ann = ObjectAnnotation(bbox=(8, 8, 24, 24), category=0, keypoints=list(pts))
        return encode_pose([ann], cfg), cfg

    def test_joint_at_center(self):
        ts, _ = self.kp((16.0, 16.0, True))
        obj = ts.objects[0]
        assert tuple(obj.joint_offsets[0]) == (0.0, 0.0)
        assert obj.joint_mask[0] == 1.0

    def test_invisible_joint_masked(self):
        ts, _ = self.kp((16.0, 16.0, False))
        assert ts.objects[0].joint_mask[0] == 0.0
        assert np.all(ts.joint_heatmap.data == 0.0)

    def test_offset_arithmetic(self):
        # center cell (3, 3): joint (20, 12) gives offset (20/4 - 3, 12/4 - 3)
        cfg = cfg128(num_joints=1)
        ann = ObjectAnnotation(bbox=(10, 10, 20, 20), category=0, keypoints=[(20.0, 12.0, True)])
        ts = encode_pose([ann], cfg)
        assert ts.objects[0].cell == (3, 3)
        assert tuple(ts.objects[0].joint_offsets[0]) == (2.0, 0.0)

    def test_joint_heatmap_and_local_offset(self):
        ts, _ = self.kp((18.0, 13.0, True))
        jcx, jcy = 4, 3  # floor(18/4), floor(13/4)
        assert ts.joint_heatmap.data[0, jcy, jcx] == 1.0
        assert ts.joint_local_offset.data[0, jcy, jcx] == pytest.approx(0.5)
        assert ts.joint_local_offset.data[1, jcy, jcx] == pytest.approx(0.25)
        assert len(ts.joint_cells) == 1
        assert ts.joint_cells[0].joint == 0

    def test_joint_count_mismatch(self):
        ann = ObjectAnnotation(bbox=(0, 0, 8, 8), category=0, keypoints=[(1.0, 1.0, True)])
        with pytest.raises(InputError, match="joints"):
            encode_pose([ann], cfg128(num_joints=2))

    def test_keypoints_required(self):
        ann = ObjectAnnotation(bbox=(0, 0, 8, 8), category=0)
        with pytest.raises(InputError, match="keypoints"):
            encode_pose([ann], cfg128(num_joints=1))

    def test_out_of_grid_joint_masked(self):
        ts, _ = self.kp((200.0, 16.0, True))
        assert ts.objects[0].joint_mask[0] == 0.0
