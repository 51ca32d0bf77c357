"""Annotation analyses: collision counters and forced anchor assignments."""
import numpy as np
import pytest

from cpt import AnchorConfig, InputError, ObjectAnnotation, count_center_collisions, count_forced_assignments, count_iou_collisions
from cpt.analysis import area_bucket
from cpt.dataset import CategoryInfo, Dataset, ImageInfo


def rng(seed=0):
    return np.random.Generator(np.random.Philox(key=seed))


def build_dataset(boxes_by_image, num_classes=3, image_size=(256, 256)):
    """boxes_by_image: {image_id: [(x1, y1, x2, y2, category_index), ...]}"""
    ds = Dataset(categories=[CategoryInfo(id=c + 1, name=f"c{c}", index=c) for c in range(num_classes)])
    ann_id = 1
    for image_id, boxes in sorted(boxes_by_image.items()):
        ds.images.append(ImageInfo(id=image_id, width=image_size[0], height=image_size[1]))
        for x1, y1, x2, y2, cat in boxes:
            ds.annotations.append(
                ObjectAnnotation(bbox=(x1, y1, x2, y2), category=cat, id=ann_id, image_id=image_id)
            )
            ann_id += 1
    return ds


def random_dataset(seed, num_images=10, max_boxes=30, num_classes=3, extent=256):
    r = rng(seed)
    boxes = {}
    for image_id in range(1, num_images + 1):
        n = int(r.integers(1, max_boxes + 1))
        rows = []
        for _ in range(n):
            x1, y1 = r.uniform(0, extent - 20, size=2)
            w, h = r.uniform(1, 60, size=2)
            rows.append((x1, y1, min(x1 + w, extent), min(y1 + h, extent), int(r.integers(num_classes))))
        boxes[image_id] = rows
    return build_dataset(boxes, num_classes, (extent, extent))


class TestCenterCollisions:
    def test_same_cell_same_class_pair(self):
        ds = build_dataset({1: [(0, 0, 8, 8, 0), (2, 2, 6, 6, 0)]})
        report = count_center_collisions(ds, stride=4)
        assert report.n_center == 1
        pair = report.center_pairs[0]
        assert (pair.image_id, pair.category_id, pair.first, pair.second) == (1, 1, 1, 2)

    def test_different_categories_do_not_collide(self):
        ds = build_dataset({1: [(0, 0, 8, 8, 0), (2, 2, 6, 6, 1)]})
        assert count_center_collisions(ds, stride=4).n_center == 0

    def test_different_images_do_not_collide(self):
        ds = build_dataset({1: [(0, 0, 8, 8, 0)], 2: [(0, 0, 8, 8, 0)]})
        assert count_center_collisions(ds, stride=4).n_center == 0

    def test_stride_one_counts_exact_centers(self):
        ds = build_dataset({1: [(0, 0, 10, 10, 0), (2, 2, 8, 8, 0), (0, 0, 11, 11, 0)]})
        # centers (5,5), (5,5), (5.5,5.5): stride 1 floors the third to (5,5) as well
        assert count_center_collisions(ds, stride=1).n_center == 3

    def test_fast_path_equals_oracle(self):
        for seed in range(20):
            ds = random_dataset(seed, extent=64)
            fast = count_center_collisions(ds, stride=4)
            slow = count_center_collisions(ds, stride=4, oracle=True)
            assert fast.n_center == slow.n_center
            assert fast.center_pairs == slow.center_pairs

    def test_doubling_doubles_counters(self):
        ds = random_dataset(7, extent=64)
        doubled = Dataset(categories=ds.categories)
        offset_img = max(m.id for m in ds.images)
        offset_ann = max(a.id for a in ds.annotations)
        for copy in range(2):
            for m in ds.images:
                doubled.images.append(ImageInfo(id=m.id + copy * offset_img, width=m.width, height=m.height))
            for a in ds.annotations:
                doubled.annotations.append(
                    ObjectAnnotation(
                        bbox=a.bbox, category=a.category, id=a.id + copy * offset_ann, image_id=a.image_id + copy * offset_img
                    )
                )
        assert count_center_collisions(doubled, 4).n_center == 2 * count_center_collisions(ds, 4).n_center
        iou_a = count_iou_collisions(ds, (0.5,))
        iou_b = count_iou_collisions(doubled, (0.5,))
        assert iou_b.n_iou[0.5] == 2 * iou_a.n_iou[0.5]

    def test_matches_encoder_collision_count(self):
        from cpt import EncoderConfig, encode_detection

        ds = random_dataset(11, num_images=6, extent=64)
        by_image = ds.annotations_by_image()
        cfg = EncoderConfig(input_w=64, input_h=64, num_classes=ds.num_classes)
        encoded = sum(encode_detection(anns, cfg).collision_count for anns in by_image.values())
        assert encoded == count_center_collisions(ds, stride=4).n_center

    def test_stride_validated(self):
        with pytest.raises(InputError):
            count_center_collisions(Dataset(), stride=0)


class TestIoUCollisions:
    def test_duplicate_annotation_pairs_at_every_threshold(self):
        ds = build_dataset({1: [(0, 0, 10, 10, 0), (0, 0, 10, 10, 0)]})
        report = count_iou_collisions(ds, thresholds=(0.3, 0.5, 0.7, 0.99))
        assert all(n == 1 for n in report.n_iou.values())

    def test_strictness(self):
        # IoU exactly 0.5: not counted at t=0.5
        ds = build_dataset({1: [(0, 0, 10, 10, 0), (0, 0, 10, 5, 0)]})
        report = count_iou_collisions(ds, thresholds=(0.5,))
        assert report.n_iou[0.5] == 0

    def test_monotone_in_threshold(self):
        ds = random_dataset(3)
        report = count_iou_collisions(ds, thresholds=(0.3, 0.5, 0.7, 0.9))
        counts = [report.n_iou[t] for t in sorted(report.n_iou)]
        assert counts == sorted(counts, reverse=True)

    def test_fast_path_equals_oracle_200_boxes(self):
        ds = random_dataset(13, num_images=1, max_boxes=200)
        assert len(ds.annotations) <= 200
        fast = count_iou_collisions(ds, thresholds=(0.3, 0.5, 0.7))
        slow = count_iou_collisions(ds, thresholds=(0.3, 0.5, 0.7), oracle=True)
        assert fast.n_iou == slow.n_iou
        assert fast.iou_pairs == slow.iou_pairs

    def test_category_bound(self):
        ds = build_dataset({1: [(0, 0, 10, 10, 0), (1, 1, 10, 10, 1)]})
        assert count_iou_collisions(ds, thresholds=(0.3,)).n_iou[0.3] == 0


class TestBuckets:
    def test_coco_convention(self):
        assert area_bucket(100.0) == "small"
        assert area_bucket(32.0**2 - 1) == "small"
        assert area_bucket(32.0**2) == "medium"
        assert area_bucket(96.0**2) == "medium"
        assert area_bucket(96.0**2 + 1) == "large"

    def test_totals_reported(self):
        ds = build_dataset({1: [(0, 0, 10, 10, 0), (0, 0, 50, 50, 0), (0, 0, 200, 200, 1)]})
        report = count_center_collisions(ds, 4)
        assert report.total_objects == 3
        assert report.bucket_totals == {"small": 1, "medium": 1, "large": 1}


class TestForcedAssignments:
    def test_large_centered_square_not_forced(self):
        ds = build_dataset({1: [(144, 144, 656, 656, 0)]}, image_size=(800, 800))
        report = count_forced_assignments(ds)
        assert report.n_anchor == 0

    def test_tiny_box_forced(self):
        ds = build_dataset({1: [(400, 400, 404, 404, 0)]}, image_size=(800, 800))
        report = count_forced_assignments(ds)
        assert report.n_anchor == 1
        assert report.forced_annotations == [1]
        assert report.buckets["small"]["forced"] == 1
        assert report.buckets["small"]["fraction"] == 1.0

    def test_resize_scales_boxes(self):
        # same scene at half resolution: resize restores geometry, decisions match
        full = build_dataset({1: [(100, 100, 300, 300, 0), (10, 10, 14, 14, 0)]}, image_size=(800, 800))
        half = build_dataset({1: [(50, 50, 150, 150, 0), (5, 5, 7, 7, 0)]}, image_size=(400, 400))
        a = count_forced_assignments(full)
        b = count_forced_assignments(half)
        assert a.forced_annotations == b.forced_annotations

    def test_fast_equals_oracle(self):
        for seed in range(6):
            r = rng(100 + seed)
            w = float(r.integers(800, 1400))
            h = float(r.integers(800, 1400))
            boxes = []
            for _ in range(int(r.integers(1, 20))):
                x1, y1 = r.uniform(0, w - 40), r.uniform(0, h - 40)
                bw, bh = r.uniform(2, 300), r.uniform(2, 300)
                boxes.append((x1, y1, min(x1 + bw, w), min(y1 + bh, h), int(r.integers(2))))
            ds = build_dataset({1: boxes}, num_classes=2, image_size=(w, h))
            fast = count_forced_assignments(ds)
            slow = count_forced_assignments(ds, oracle=True)
            assert fast.forced_annotations == slow.forced_annotations
            assert fast.n_anchor == slow.n_anchor

    def test_threshold_validated(self):
        with pytest.raises(InputError):
            count_forced_assignments(Dataset(), AnchorConfig(), iou_thresh=0.0)
