"""Training objectives with analytic gradients, plus a finite-difference checker.

Every loss returns (value, gradient) where the gradient is exact for the
clamped/masked expression actually evaluated. The gradcheck harness compares
those gradients against central finite differences, skipping coordinates in
documented non-smooth neighborhoods (clamp edges, L1 kinks, softmax ties).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError
from .grid import DenseGrid
from .targets import JointCell, ObjectTarget, TargetSet, encode_orientation

L1_HEADS = ("offset", "size", "joint_offset")


@dataclass
class FocalParams:
    """Penalty-reduced focal loss hyperparameters."""

    alpha: float = 2.0
    beta: float = 4.0
    eps: float = 1e-4  # probability clamp applied to predictions before the log terms

    def __post_init__(self):
        if not self.alpha > 0:
            raise InputError(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0:
            raise InputError(f"beta must be >= 0, got {self.beta}")
        if not 0 < self.eps < 0.5:
            raise InputError(f"eps must be in (0, 0.5), got {self.eps}")


@dataclass
class LossWeights:
    """Per-term weights for the total objective."""

    size: float = 0.1
    offset: float = 1.0
    depth: float = 1.0
    dims: float = 1.0
    orientation: float = 1.0

    def __post_init__(self):
        for name in ("size", "offset", "depth", "dims", "orientation"):
            if getattr(self, name) < 0:
                raise InputError(f"loss weight {name} must be >= 0")


@dataclass
class LossReport:
    """Scalar loss terms, the weighted total, and per-head gradient grids."""

    keypoint: float
    offset: float
    size: float
    total: float
    depth: float | None = None
    dims: float | None = None
    orientation: float | None = None
    n_objects: int = 0
    n_positive_cells: int = 0
    gradients: dict[str, DenseGrid] = field(default_factory=dict)


def focal_loss(pred: DenseGrid, target: DenseGrid, params: FocalParams = FocalParams()) -> tuple[float, DenseGrid]:
    """Penalty-reduced pixel-wise focal loss over heatmaps.

    Cells with target exactly 1 are positives; everywhere else the negative
    branch applies with its (1 - target)^beta penalty reduction. Normalized
    by the positive-cell count (1 when there are none). The gradient is taken
    through the clamp: zero where the raw prediction sits in a clamped-flat
    region.
    """
    if pred.data.shape != target.data.shape:
        raise InputError(f"shape mismatch: pred {pred.data.shape} vs target {target.data.shape}")
    y = target.data.astype(np.float64, copy=False)
    if y.min() < 0.0 or y.max() > 1.0:
        raise InputError("target heatmap values must lie in [0, 1]")
    raw = pred.data.astype(np.float64, copy=False)
    a, b, eps = params.alpha, params.beta, params.eps

    yhat = np.clip(raw, eps, 1.0 - eps)
    pos = y == 1.0
    n = max(int(pos.sum()), 1)

    log_yhat = np.log(yhat)
    log_1m = np.log1p(-yhat)
    one_m = 1.0 - yhat
    pos_terms = one_m**a * log_yhat
    neg_terms = (1.0 - y) ** b * yhat**a * log_1m
    value = -(pos_terms[pos].sum() + neg_terms[~pos].sum()) / n

    grad = np.where(
        pos,
        (a * one_m ** (a - 1.0) * log_yhat - one_m**a / yhat) / n,
        (1.0 - y) ** b * (yhat**a / one_m - a * yhat ** (a - 1.0) * log_1m) / n,
    )
    grad[(raw < eps) | (raw > 1.0 - eps)] = 0.0
    return float(value), DenseGrid(grad)


def _l1_at_cells(pred: DenseGrid, entries, n: int) -> tuple[float, DenseGrid]:
    """Sum of weighted absolute residuals at supervised cells, averaged over n records.

    entries yields (channel0, cell, target_vector, weight). Gradients from
    records sharing a cell accumulate; sign(0) is 0.
    """
    grad = np.zeros_like(pred.data, dtype=np.float64)
    if n == 0:
        return 0.0, DenseGrid(grad)
    total = 0.0
    for ch0, (cx, cy), tgt, w in entries:
        tgt = np.asarray(tgt, dtype=np.float64)
        p = pred.data[ch0 : ch0 + tgt.size, cy, cx].astype(np.float64)
        diff = p - tgt
        total += w * np.abs(diff).sum()
        grad[ch0 : ch0 + tgt.size, cy, cx] += w * np.sign(diff) / n
    return float(total / n), DenseGrid(grad)


def masked_l1(pred: DenseGrid, objects: Sequence[ObjectTarget], head: str) -> tuple[float, DenseGrid]:
    """L1 loss applied only at the objects' center cells, averaged over objects.

    head selects the supervision: "offset" and "size" read 2-channel targets;
    "joint_offset" reads (2 * num_joints) channels and multiplies each joint's
    residual by its visibility mask.
    """
    if head not in L1_HEADS:
        raise InputError(f"unknown masked_l1 head {head!r}; expected one of {L1_HEADS}")
    for obj in objects:
        cx, cy = obj.cell
        if not (0 <= cx < pred.width and 0 <= cy < pred.height):
            raise InputError(f"object {obj.index}: cell {obj.cell} outside grid")

    if head == "joint_offset":
        for obj in objects:
            if obj.joint_offsets is None:
                raise InputError(f"object {obj.index}: no pose targets for joint_offset head")
            if pred.channels != 2 * obj.joint_offsets.shape[0]:
                raise InputError(
                    f"joint_offset head expects {2 * obj.joint_offsets.shape[0]} channels, "
                    f"grid has {pred.channels}"
                )

        def entries():
            for obj in objects:
                for j in range(obj.joint_offsets.shape[0]):
                    yield 2 * j, obj.cell, obj.joint_offsets[j], float(obj.joint_mask[j])
        expected = None
    else:
        def entries():
            for obj in objects:
                yield 0, obj.cell, getattr(obj, head), 1.0
        expected = 2
    if expected is not None and pred.channels != expected:
        raise InputError(f"{head} head expects {expected} channels, grid has {pred.channels}")
    return _l1_at_cells(pred, entries(), len(objects))


def joint_local_offset_loss(pred: DenseGrid, joint_cells: Sequence[JointCell]) -> tuple[float, DenseGrid]:
    """Sub-cell offset L1 at visible joints' cells, averaged over joint records."""
    if pred.channels != 2:
        raise InputError(f"joint local offset head expects 2 channels, grid has {pred.channels}")
    entries = ((0, jc.cell, np.asarray(jc.offset), 1.0) for jc in joint_cells)
    return _l1_at_cells(pred, entries, len(joint_cells))


def depth_loss(pred: np.ndarray, depths: np.ndarray) -> tuple[float, np.ndarray]:
    """L1 in the decoded depth domain: |1/sigmoid(d_hat) - 1 - d| per object.

    1/sigmoid(x) - 1 equals exp(-x) exactly, which is how the transform is
    evaluated. Gradients flow through the transform.
    """
    pred = np.asarray(pred, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    if pred.shape != depths.shape:
        raise InputError(f"shape mismatch: pred {pred.shape} vs depths {depths.shape}")
    if pred.size == 0:
        return 0.0, np.zeros_like(pred)
    decoded = np.exp(-pred)
    resid = decoded - depths
    n = pred.size
    value = float(np.abs(resid).sum() / n)
    grad = -np.sign(resid) * decoded / n
    return value, grad


def dim_loss(pred: np.ndarray, dims: np.ndarray) -> tuple[float, np.ndarray]:
    """L1 on 3D dimensions in absolute meters: sum over (h, w, l), mean over objects."""
    pred = np.asarray(pred, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.float64)
    if pred.shape != dims.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise InputError(f"expected matching (N, 3) arrays, got {pred.shape} and {dims.shape}")
    if pred.shape[0] == 0:
        return 0.0, np.zeros_like(pred)
    diff = pred - dims
    n = pred.shape[0]
    return float(np.abs(diff).sum() / n), np.sign(diff) / n


def _softmax2(logits: np.ndarray) -> np.ndarray:
    m = logits.max()
    e = np.exp(logits - m)
    return e / e.sum()


def orientation_loss(pred: np.ndarray, yaws: np.ndarray) -> tuple[float, np.ndarray]:
    """Two-bin orientation loss: per-bin softmax cross-entropy plus in-bin L1.

    pred rows are [b1 (2 logits), a1 (sin, cos), b2, a2]. The classification
    label of bin i is 1 when the yaw lies in that bin; only active bins
    contribute the L1 term on the (sin, cos) pair.
    """
    pred = np.asarray(pred, dtype=np.float64)
    yaws = np.asarray(yaws, dtype=np.float64)
    if pred.ndim != 2 or pred.shape[1] != 8 or pred.shape[0] != yaws.shape[0]:
        raise InputError(f"expected (N, 8) predictions and (N,) yaws, got {pred.shape} and {yaws.shape}")
    n = pred.shape[0]
    grad = np.zeros_like(pred)
    if n == 0:
        return 0.0, grad
    total = 0.0
    for k in range(n):
        target = encode_orientation(float(yaws[k]))
        for i in range(2):
            base = 4 * i
            logits = pred[k, base : base + 2]
            label = int(target[base + 1])  # 1 when the yaw lies in bin i
            p = _softmax2(logits)
            m = logits.max()
            lse = m + math.log(np.exp(logits - m).sum())
            total += lse - logits[label]
            g = p.copy()
            g[label] -= 1.0
            grad[k, base : base + 2] = g / n
            if label == 1:
                diff = pred[k, base + 2 : base + 4] - target[base + 2 : base + 4]
                total += np.abs(diff).sum()
                grad[k, base + 2 : base + 4] = np.sign(diff) / n
    return float(total / n), grad


def _gather(pred: DenseGrid, objects: Sequence[ObjectTarget], channels: int) -> np.ndarray:
    out = np.empty((len(objects), channels), dtype=np.float64)
    for k, obj in enumerate(objects):
        cx, cy = obj.cell
        out[k] = pred.data[:channels, cy, cx]
    return out


def _scatter(shape, objects: Sequence[ObjectTarget], grad_rows: np.ndarray) -> DenseGrid:
    grad = np.zeros(shape, dtype=np.float64)
    for k, obj in enumerate(objects):
        cx, cy = obj.cell
        grad[:, cy, cx] += grad_rows[k].reshape(-1)
    return DenseGrid(grad)


def total_loss(
    preds: dict[str, DenseGrid],
    targets: TargetSet,
    weights: LossWeights = LossWeights(),
    focal_params: FocalParams = FocalParams(),
) -> LossReport:
    """Weighted sum of the detection objective and any 3D terms with predictions present.

    preds maps head names to grids: "heatmap", "offset" and "size" are
    required; "depth" (1 ch), "dims" (3 ch) and "orientation" (8 ch) are
    added, weighted, when both the prediction and per-object targets exist.
    """
    for name in ("heatmap", "offset", "size"):
        if name not in preds:
            raise InputError(f"missing required prediction head {name!r}")

    lk, g_hm = focal_loss(preds["heatmap"], targets.heatmap, focal_params)
    loff, g_off = masked_l1(preds["offset"], targets.objects, "offset")
    lsize, g_size = masked_l1(preds["size"], targets.objects, "size")
    report = LossReport(
        keypoint=lk,
        offset=loff,
        size=lsize,
        total=lk + weights.size * lsize + weights.offset * loff,
        n_objects=len(targets.objects),
        n_positive_cells=int((targets.heatmap.data == 1.0).sum()),
        gradients={"heatmap": g_hm, "offset": g_off, "size": g_size},
    )

    if "depth" in preds:
        objs = [o for o in targets.objects if o.depth is not None]
        if objs:
            raw = _gather(preds["depth"], objs, 1)[:, 0]
            value, rows = depth_loss(raw, np.array([o.depth for o in objs]))
            report.depth = value
            report.gradients["depth"] = _scatter(preds["depth"].data.shape, objs, rows[:, None])
            report.total += weights.depth * value
    if "dims" in preds:
        objs = [o for o in targets.objects if o.dims3d is not None]
        if objs:
            value, rows = dim_loss(_gather(preds["dims"], objs, 3), np.array([o.dims3d for o in objs]))
            report.dims = value
            report.gradients["dims"] = _scatter(preds["dims"].data.shape, objs, rows)
            report.total += weights.dims * value
    if "orientation" in preds:
        objs = [o for o in targets.objects if o.yaw is not None]
        if objs:
            value, rows = orientation_loss(_gather(preds["orientation"], objs, 8), np.array([o.yaw for o in objs]))
            report.orientation = value
            report.gradients["orientation"] = _scatter(preds["orientation"].data.shape, objs, rows)
            report.total += weights.orientation * value
    return report


@dataclass
class GradcheckReport:
    """Result of comparing an analytic gradient against central differences."""

    max_rel_error: float
    checked: int
    excluded: int


def gradcheck(
    fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    step: float = 1e-6,
    exclude: np.ndarray | None = None,
) -> GradcheckReport:
    """Compare fn's analytic gradient to central finite differences coordinate-wise.

    fn maps an array to (value, gradient-of-same-shape). Relative error uses
    denominator max(|fd|, |analytic|, 1e-8). Coordinates flagged in exclude
    are skipped (callers flag clamp edges, L1 kinks and softmax ties).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    _, grad = fn(x0)
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if grad.shape != (x0.size,):
        raise InputError(f"gradient shape {grad.shape} does not match input size {x0.size}")
    skip = np.zeros(x0.size, dtype=bool) if exclude is None else np.asarray(exclude, dtype=bool).ravel()

    flat = x0.ravel()
    max_rel = 0.0
    checked = 0
    for i in range(flat.size):
        if skip[i]:
            continue
        x = flat.copy()
        x[i] = flat[i] + step
        vp = fn(x.reshape(x0.shape))[0]
        x[i] = flat[i] - step
        vm = fn(x.reshape(x0.shape))[0]
        fd = (vp - vm) / (2.0 * step)
        rel = abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-8)
        max_rel = max(max_rel, float(rel))
        checked += 1
    return GradcheckReport(max_rel_error=max_rel, checked=checked, excluded=int(skip.sum()))


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def _record(cell, offset=(0.0, 0.0), size=(0.0, 0.0)) -> ObjectTarget:
    return ObjectTarget(index=0, category=0, cell=cell, offset=offset, size=size)


def _distinct_cells(rng: np.random.Generator, count: int, w: int, h: int) -> list[tuple[int, int]]:
    flat = rng.choice(w * h, size=count, replace=False)
    return [(int(f % w), int(f // w)) for f in flat]


def gradcheck_focal(seed: int, step: float = 1e-6, shape: tuple[int, int, int] = (2, 8, 8)) -> GradcheckReport:
    """Focal loss FD check on a random heatmap pair away from the clamp edges."""
    rng = _rng(seed)
    params = FocalParams()
    y = rng.uniform(0.0, 0.6, size=shape)
    c, h, w = shape
    for _ in range(4):
        y[rng.integers(c), rng.integers(h), rng.integers(w)] = 1.0
    x0 = rng.uniform(0.05, 0.95, size=shape)
    target = DenseGrid(y)
    near_clamp = (np.abs(x0 - params.eps) < 10 * step) | (np.abs(x0 - (1.0 - params.eps)) < 10 * step)

    def fn(x: np.ndarray):
        value, grad = focal_loss(DenseGrid(x), target, params)
        return value, grad.data

    return gradcheck(fn, x0, step, near_clamp)


def _gradcheck_l1_head(seed: int, step: float, head: str, low: float, high: float) -> GradcheckReport:
    rng = _rng(seed)
    shape = (2, 8, 8)
    x0 = rng.uniform(low - 1.0, high + 1.0, size=shape)
    objects = []
    exclude = np.zeros(shape, dtype=bool)
    for cell in _distinct_cells(rng, 5, 8, 8):
        tgt = rng.uniform(low, high, size=2)
        kw = {head: tuple(tgt)}
        objects.append(_record(cell, **{"offset": (0.0, 0.0), "size": (0.0, 0.0), **kw}))
        cx, cy = cell
        exclude[:, cy, cx] |= np.abs(x0[:, cy, cx] - tgt) < 10 * step

    def fn(x: np.ndarray):
        value, grad = masked_l1(DenseGrid(x), objects, head)
        return value, grad.data

    return gradcheck(fn, x0, step, exclude)


def gradcheck_offset(seed: int, step: float = 1e-6) -> GradcheckReport:
    """Offset-head L1 FD check away from kinks."""
    return _gradcheck_l1_head(seed, step, "offset", 0.0, 1.0)


def gradcheck_size(seed: int, step: float = 1e-6) -> GradcheckReport:
    """Size-head L1 FD check away from kinks."""
    return _gradcheck_l1_head(seed, step, "size", 0.5, 20.0)


def gradcheck_depth(seed: int, step: float = 1e-6) -> GradcheckReport:
    """Depth loss FD check through the sigmoidal transform, away from kinks."""
    rng = _rng(seed)
    x0 = rng.uniform(-2.5, 2.5, size=8)
    depths = rng.uniform(0.3, 30.0, size=8)
    decoded = np.exp(-x0)
    exclude = np.abs(decoded - depths) < 10 * step * np.maximum(1.0, decoded)

    def fn(x: np.ndarray):
        return depth_loss(x, depths)

    return gradcheck(fn, x0, step, exclude)


def gradcheck_dims(seed: int, step: float = 1e-6) -> GradcheckReport:
    """Dimension loss FD check away from kinks."""
    rng = _rng(seed)
    x0 = rng.uniform(0.2, 6.0, size=(6, 3))
    dims = rng.uniform(0.2, 6.0, size=(6, 3))
    exclude = np.abs(x0 - dims) < 10 * step

    def fn(x: np.ndarray):
        return dim_loss(x, dims)

    return gradcheck(fn, x0, step, exclude)


def gradcheck_orientation(seed: int, step: float = 1e-6) -> GradcheckReport:
    """Orientation loss FD check away from L1 kinks and softmax ties."""
    rng = _rng(seed)
    n = 6
    x0 = np.zeros((n, 8))
    x0[:, [0, 1, 4, 5]] = rng.uniform(-3.0, 3.0, size=(n, 4))
    x0[:, [2, 3, 6, 7]] = rng.uniform(-1.2, 1.2, size=(n, 4))
    yaws = rng.uniform(-math.pi + 1e-3, math.pi, size=n)
    exclude = np.zeros_like(x0, dtype=bool)
    for k in range(n):
        target = encode_orientation(float(yaws[k]))
        for i in range(2):
            base = 4 * i
            if abs(x0[k, base] - x0[k, base + 1]) < 10 * step:  # softmax tie
                exclude[k, base : base + 2] = True
            if target[base + 1] == 1.0:
                kink = np.abs(x0[k, base + 2 : base + 4] - target[base + 2 : base + 4]) < 10 * step
                exclude[k, base + 2 : base + 4] |= kink

    def fn(x: np.ndarray):
        return orientation_loss(x, yaws)

    return gradcheck(fn, x0, step, exclude)


GRADCHECKS: dict[str, Callable[[int, float], GradcheckReport]] = {
    "focal": gradcheck_focal,
    "offset": gradcheck_offset,
    "size": gradcheck_size,
    "depth": gradcheck_depth,
    "dims": gradcheck_dims,
    "orientation": gradcheck_orientation,
}


def gradcheck_all(seed: int, step: float = 1e-6) -> dict[str, GradcheckReport]:
    """Run every loss's canned FD harness with a shared seed."""
    return {name: check(seed, step) for name, check in GRADCHECKS.items()}
