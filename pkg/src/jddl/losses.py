"""IoU-family bounding-box regression losses with analytic gradients.

Covers plain IoU, GIoU, DIoU, CIoU, and the scaled-auxiliary-box variants
inner-IoU and inner-CIoU. The auxiliary boxes share the originals'
centers with width and height multiplied by a ratio (usually in
[0.5, 1.5]); the scaled overlap

    inter = (min(br_a, br_b) - max(bl_a, bl_b)) * (min(bb_a, bb_b) - max(bt_a, bt_b))
    union = (w_a * h_a) * ratio^2 + (w_b * h_b) * ratio^2 - inter

defines IoU_inner = inter / union, with each axis overlap clamped at zero
so the value stays in [0, 1]. The combined loss is

    L_inner_ciou = L_ciou + IoU - IoU_inner.

Gradients are taken with respect to the predicted box (x_c, y_c, w, h);
the target box is constant. CIoU's aspect weight alpha is conventionally
held constant during differentiation. Box-edge coincidences are kinks:
`loss_gradient` reports them by default, while the descent harness
resolves them with the midpoint subgradient (which is exactly zero at
pred == gt, keeping a converged trajectory stationary).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .boxes import CenterBox

LOSS_IDS = ("iou", "giou", "diou", "ciou", "inner_iou", "inner_ciou")

RATIO_RANGE = (0.5, 1.5)

_4_OVER_PI2 = 4.0 / math.pi**2

_Z4 = (0.0, 0.0, 0.0, 0.0)


class NonDifferentiableError(ValueError):
    """Gradient requested at a kink (exactly coincident box edges)."""


def _check_ratio(ratio: float) -> None:
    if not ratio > 0:
        raise ValueError(f"auxiliary box ratio must be positive, got {ratio}")
    if not (RATIO_RANGE[0] <= ratio <= RATIO_RANGE[1]):
        warnings.warn(
            f"auxiliary box ratio {ratio} lies outside the usual range {RATIO_RANGE}",
            stacklevel=3,
        )


# --- loss values -----------------------------------------------------------


def iou(a: CenterBox, b: CenterBox) -> float:
    """Plain intersection-over-union, per-axis overlap clamped at zero."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def inner_iou(pred: CenterBox, gt: CenterBox, ratio: float = 1.0) -> float:
    """IoU of the ratio-scaled auxiliary boxes; reduces to iou() at ratio 1."""
    _check_ratio(ratio)
    pl = pred.x_c - pred.w * ratio / 2.0
    pr = pred.x_c + pred.w * ratio / 2.0
    pt = pred.y_c - pred.h * ratio / 2.0
    pb = pred.y_c + pred.h * ratio / 2.0
    gl = gt.x_c - gt.w * ratio / 2.0
    gr = gt.x_c + gt.w * ratio / 2.0
    gtp = gt.y_c - gt.h * ratio / 2.0
    gb = gt.y_c + gt.h * ratio / 2.0
    iw = min(pr, gr) - max(pl, gl)
    ih = min(pb, gb) - max(pt, gtp)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (gt.w * gt.h) * ratio**2 + (pred.w * pred.h) * ratio**2 - inter
    return inter / union


def _enclosing_sides(pred: CenterBox, gt: CenterBox) -> tuple[float, float]:
    px1, py1, px2, py2 = pred.corners()
    gx1, gy1, gx2, gy2 = gt.corners()
    return max(px2, gx2) - min(px1, gx1), max(py2, gy2) - min(py1, gy1)


def giou_loss(pred: CenterBox, gt: CenterBox) -> float:
    """1 - IoU + |C \\ (A u B)| / |C| with C the smallest enclosing box."""
    px1, py1, px2, py2 = pred.corners()
    gx1, gy1, gx2, gy2 = gt.corners()
    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    inter = iw * ih if (iw > 0.0 and ih > 0.0) else 0.0
    union = pred.w * pred.h + gt.w * gt.h - inter
    enclosing = (max(px2, gx2) - min(px1, gx1)) * (max(py2, gy2) - min(py1, gy1))
    return 1.0 - inter / union + (enclosing - union) / enclosing


def diou_loss(pred: CenterBox, gt: CenterBox) -> float:
    """1 - IoU + squared center distance over squared enclosing diagonal."""
    iou_v = iou(pred, gt)
    ew, eh = _enclosing_sides(pred, gt)
    rho2 = (pred.x_c - gt.x_c) ** 2 + (pred.y_c - gt.y_c) ** 2
    return 1.0 - iou_v + rho2 / (ew * ew + eh * eh)


def aspect_term(pred: CenterBox, gt: CenterBox) -> float:
    """CIoU's aspect-consistency term v = (4/pi^2)(atan(w_gt/h_gt) - atan(w/h))^2."""
    t = math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)
    return _4_OVER_PI2 * t * t


def ciou_alpha(pred: CenterBox, gt: CenterBox) -> float:
    """Aspect-term weight alpha = v / ((1 - IoU) + v), zero when both vanish."""
    v = aspect_term(pred, gt)
    denom = (1.0 - iou(pred, gt)) + v
    return v / denom if denom > 0.0 else 0.0


def ciou_loss(pred: CenterBox, gt: CenterBox, *, alpha: float | None = None) -> float:
    """Complete-IoU loss: 1 - IoU + rho^2/c^2 + alpha * v.

    `alpha` defaults to the value computed from the boxes; passing it
    explicitly freezes the aspect weight, which is how the loss is
    treated during differentiation.
    """
    iou_v = iou(pred, gt)
    ew, eh = _enclosing_sides(pred, gt)
    rho2 = (pred.x_c - gt.x_c) ** 2 + (pred.y_c - gt.y_c) ** 2
    v = aspect_term(pred, gt)
    if alpha is None:
        denom = (1.0 - iou_v) + v
        alpha = v / denom if denom > 0.0 else 0.0
    return 1.0 - iou_v + rho2 / (ew * ew + eh * eh) + alpha * v


def inner_ciou_loss(
    pred: CenterBox, gt: CenterBox, ratio: float = 1.0, *, alpha: float | None = None
) -> float:
    """L_ciou + IoU - IoU_inner; equals ciou_loss exactly at ratio 1."""
    return ciou_loss(pred, gt, alpha=alpha) + iou(pred, gt) - inner_iou(pred, gt, ratio)


def loss_value(loss_id: str, pred: CenterBox, gt: CenterBox, ratio: float = 1.0) -> float:
    """Scalar loss for one of LOSS_IDS; 'iou' and 'inner_iou' mean 1 - overlap."""
    if loss_id == "iou":
        return 1.0 - iou(pred, gt)
    if loss_id == "giou":
        return giou_loss(pred, gt)
    if loss_id == "diou":
        return diou_loss(pred, gt)
    if loss_id == "ciou":
        return ciou_loss(pred, gt)
    if loss_id == "inner_iou":
        return 1.0 - inner_iou(pred, gt, ratio)
    if loss_id == "inner_ciou":
        return inner_ciou_loss(pred, gt, ratio)
    raise ValueError(f"unknown loss '{loss_id}', expected one of {LOSS_IDS}")


# --- gradients --------------------------------------------------------------
#
# Scalars that depend on the prediction are carried as (value, grad) with
# grad a 4-tuple (d/dx_c, d/dy_c, d/dw, d/dh). min/max against the constant
# target edges pick a branch; an exact tie either raises (strict) or takes
# the midpoint subgradient.


def _gadd(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3])


def _gsub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3])


def _gscale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s, a[3] * s)


def _dmin(v, g, const, strict, what):
    if v == const:
        if strict:
            raise NonDifferentiableError(f"coincident {what} edges at {v}")
        return v, _gscale(g, 0.5)
    return (v, g) if v < const else (const, _Z4)


def _dmax(v, g, const, strict, what):
    if v == const:
        if strict:
            raise NonDifferentiableError(f"coincident {what} edges at {v}")
        return v, _gscale(g, 0.5)
    return (v, g) if v > const else (const, _Z4)


def _overlap_axis(p_lo, g_lo, p_hi, g_hi, c_lo, c_hi, strict, axis):
    """Clamped overlap length of the pred interval with a constant interval."""
    hi, ghi = _dmin(p_hi, g_hi, c_hi, strict, axis)
    lo, glo = _dmax(p_lo, g_lo, c_lo, strict, axis)
    width = hi - lo
    if width < 0.0:
        return 0.0, _Z4
    gw = _gsub(ghi, glo)
    if width == 0.0:
        if strict:
            raise NonDifferentiableError(f"boxes touch exactly along {axis}")
        return 0.0, _gscale(gw, 0.5)
    return width, gw


def _scaled_iou_grad(pred: CenterBox, gt: CenterBox, ratio: float, strict: bool):
    """IoU of ratio-scaled boxes with gradient; also returns (union, g_union)."""
    r = ratio
    hx = pred.w * r / 2.0
    hy = pred.h * r / 2.0
    pl, pr = pred.x_c - hx, pred.x_c + hx
    pt, pb = pred.y_c - hy, pred.y_c + hy
    g_pl = (1.0, 0.0, -r / 2.0, 0.0)
    g_pr = (1.0, 0.0, r / 2.0, 0.0)
    g_pt = (0.0, 1.0, 0.0, -r / 2.0)
    g_pb = (0.0, 1.0, 0.0, r / 2.0)
    gl, gr_ = gt.x_c - gt.w * r / 2.0, gt.x_c + gt.w * r / 2.0
    gtp, gb = gt.y_c - gt.h * r / 2.0, gt.y_c + gt.h * r / 2.0

    iw, g_iw = _overlap_axis(pl, g_pl, pr, g_pr, gl, gr_, strict, "x")
    ih, g_ih = _overlap_axis(pt, g_pt, pb, g_pb, gtp, gb, strict, "y")
    inter = iw * ih
    g_inter = _gadd(_gscale(g_ih, iw), _gscale(g_iw, ih))

    r2 = r * r
    union = (gt.w * gt.h) * r2 + (pred.w * pred.h) * r2 - inter
    g_union = _gsub((0.0, 0.0, pred.h * r2, pred.w * r2), g_inter)

    iou_v = inter / union
    g_iou = _gscale(
        _gsub(_gscale(g_inter, union), _gscale(g_union, inter)), 1.0 / (union * union)
    )
    return iou_v, g_iou, union, g_union


def _enclosing_grad(pred: CenterBox, gt: CenterBox, strict: bool):
    """Enclosing-box sides with gradients: returns (ew, gew, eh, geh)."""
    px1, py1, px2, py2 = pred.corners()
    gx1, gy1, gx2, gy2 = gt.corners()
    lo_x, g_lo_x = _dmin(px1, (1.0, 0.0, -0.5, 0.0), gx1, strict, "enclosing-x")
    hi_x, g_hi_x = _dmax(px2, (1.0, 0.0, 0.5, 0.0), gx2, strict, "enclosing-x")
    lo_y, g_lo_y = _dmin(py1, (0.0, 1.0, 0.0, -0.5), gy1, strict, "enclosing-y")
    hi_y, g_hi_y = _dmax(py2, (0.0, 1.0, 0.0, 0.5), gy2, strict, "enclosing-y")
    return hi_x - lo_x, _gsub(g_hi_x, g_lo_x), hi_y - lo_y, _gsub(g_hi_y, g_lo_y)


def _center_term_grad(pred: CenterBox, gt: CenterBox, ew, gew, eh, geh):
    """rho^2 / c^2 with gradient, given enclosing sides."""
    dx = pred.x_c - gt.x_c
    dy = pred.y_c - gt.y_c
    rho2 = dx * dx + dy * dy
    g_rho2 = (2.0 * dx, 2.0 * dy, 0.0, 0.0)
    c2 = ew * ew + eh * eh
    g_c2 = _gadd(_gscale(gew, 2.0 * ew), _gscale(geh, 2.0 * eh))
    val = rho2 / c2
    grad = _gscale(_gsub(_gscale(g_rho2, c2), _gscale(g_c2, rho2)), 1.0 / (c2 * c2))
    return val, grad


def _aspect_grad(pred: CenterBox, gt: CenterBox):
    """v with gradient (zero in the center components)."""
    q = pred.w / pred.h
    t = math.atan(gt.w / gt.h) - math.atan(q)
    v = _4_OVER_PI2 * t * t
    scale = -2.0 * _4_OVER_PI2 * t / (1.0 + q * q)
    g_v = (0.0, 0.0, scale / pred.h, -scale * pred.w / (pred.h * pred.h))
    return v, g_v


def _ciou_grad(pred: CenterBox, gt: CenterBox, strict: bool):
    iou_v, g_iou, _, _ = _scaled_iou_grad(pred, gt, 1.0, strict)
    ew, gew, eh, geh = _enclosing_grad(pred, gt, strict)
    dist, g_dist = _center_term_grad(pred, gt, ew, gew, eh, geh)
    v, g_v = _aspect_grad(pred, gt)
    denom = (1.0 - iou_v) + v
    alpha = v / denom if denom > 0.0 else 0.0  # constant during differentiation
    value = 1.0 - iou_v + dist + alpha * v
    grad = _gadd(_gsub(g_dist, g_iou), _gscale(g_v, alpha))
    return value, grad, iou_v, g_iou


def loss_gradient(
    loss_id: str,
    pred: CenterBox,
    gt: CenterBox,
    ratio: float = 1.0,
    on_tie: str = "error",
) -> np.ndarray:
    """Analytic gradient of the loss wrt (x_c, y_c, w, h) of the prediction.

    on_tie='error' raises NonDifferentiableError at exactly coincident box
    edges; on_tie='subgradient' resolves each kink with the midpoint
    subgradient instead (used by the descent harness).
    """
    if on_tie not in ("error", "subgradient"):
        raise ValueError(f"on_tie must be 'error' or 'subgradient', got '{on_tie}'")
    strict = on_tie == "error"
    if loss_id in ("inner_iou", "inner_ciou"):
        _check_ratio(ratio)

    if loss_id == "iou":
        _, g_iou, _, _ = _scaled_iou_grad(pred, gt, 1.0, strict)
        grad = _gscale(g_iou, -1.0)
    elif loss_id == "giou":
        iou_v, g_iou, union, g_union = _scaled_iou_grad(pred, gt, 1.0, strict)
        ew, gew, eh, geh = _enclosing_grad(pred, gt, strict)
        enclosing = ew * eh
        g_enc = _gadd(_gscale(gew, eh), _gscale(geh, ew))
        # d[(C - U)/C] = ((gC - gU) C - (C - U) gC) / C^2
        num = _gsub(
            _gscale(_gsub(g_enc, g_union), enclosing),
            _gscale(g_enc, enclosing - union),
        )
        grad = _gadd(_gscale(g_iou, -1.0), _gscale(num, 1.0 / (enclosing * enclosing)))
    elif loss_id == "diou":
        _, g_iou, _, _ = _scaled_iou_grad(pred, gt, 1.0, strict)
        ew, gew, eh, geh = _enclosing_grad(pred, gt, strict)
        _, g_dist = _center_term_grad(pred, gt, ew, gew, eh, geh)
        grad = _gsub(g_dist, g_iou)
    elif loss_id == "ciou":
        _, grad, _, _ = _ciou_grad(pred, gt, strict)
    elif loss_id == "inner_iou":
        _, g_inner, _, _ = _scaled_iou_grad(pred, gt, ratio, strict)
        grad = _gscale(g_inner, -1.0)
    elif loss_id == "inner_ciou":
        _, g_ciou, _, g_iou = _ciou_grad(pred, gt, strict)
        _, g_inner, _, _ = _scaled_iou_grad(pred, gt, ratio, strict)
        grad = _gsub(_gadd(g_ciou, g_iou), g_inner)
    else:
        raise ValueError(f"unknown loss '{loss_id}', expected one of {LOSS_IDS}")
    return np.array(grad, dtype=np.float64)


# --- gradient-descent harness ----------------------------------------------

MIN_BOX_SIDE = 1e-6


@dataclass(frozen=True)
class RegressionStep:
    """One point of a box-regression trajectory."""

    step: int
    box: CenterBox
    iou: float
    loss: float
    clamped: bool = False


def regress_box(
    init: CenterBox,
    gt: CenterBox,
    loss_id: str,
    ratio: float = 1.0,
    steps: int = 200,
    learning_rate: float = 0.05,
) -> list[RegressionStep]:
    """Plain gradient descent on the chosen loss; records IoU per step.

    A step that would drive the width or height non-positive is clamped
    to MIN_BOX_SIDE and flagged. The trajectory includes the initial
    state as step 0.
    """
    if not learning_rate > 0:
        raise ValueError(f"learning rate must be positive, got {learning_rate}")
    if steps < 0:
        raise ValueError(f"step count must be non-negative, got {steps}")
    box = init
    traj = [RegressionStep(0, box, iou(box, gt), loss_value(loss_id, box, gt, ratio))]
    for t in range(1, steps + 1):
        g = loss_gradient(loss_id, box, gt, ratio, on_tie="subgradient")
        x = box.x_c - learning_rate * g[0]
        y = box.y_c - learning_rate * g[1]
        w = box.w - learning_rate * g[2]
        h = box.h - learning_rate * g[3]
        clamped = w < MIN_BOX_SIDE or h < MIN_BOX_SIDE
        box = CenterBox(x, y, max(w, MIN_BOX_SIDE), max(h, MIN_BOX_SIDE))
        traj.append(
            RegressionStep(t, box, iou(box, gt), loss_value(loss_id, box, gt, ratio), clamped)
        )
    return traj


def steps_until(trajectory: list[RegressionStep], target_iou: float) -> int | None:
    """First step index whose IoU reaches the target, or None if never."""
    for rec in trajectory:
        if rec.iou >= target_iou:
            return rec.step
    return None


def sample_box_pair(
    rng: np.random.Generator,
    iou_range: tuple[float, float] = (0.0, 1.0),
    max_tries: int = 1000,
) -> tuple[CenterBox, CenterBox]:
    """Draw (init, gt) with IoU(init, gt) inside the half-open iou_range.

    The proposal spread adapts to the requested overlap so both low- and
    high-IoU regimes sample efficiently.
    """
    lo, hi = iou_range
    if not (0.0 <= lo < hi <= 1.0 + 1e-12):
        raise ValueError(f"bad iou range {iou_range}")
    mid = (lo + hi) / 2.0
    offset_scale = 3.0 * (1.0 - mid) + 0.02
    for _ in range(max_tries):
        gt = CenterBox(
            rng.uniform(-2.0, 2.0),
            rng.uniform(-2.0, 2.0),
            rng.uniform(0.8, 3.0),
            rng.uniform(0.8, 3.0),
        )
        init = CenterBox(
            gt.x_c + rng.uniform(-offset_scale, offset_scale),
            gt.y_c + rng.uniform(-offset_scale, offset_scale),
            gt.w * math.exp(rng.uniform(-0.4, 0.4) * (1.0 - mid) + rng.uniform(-0.05, 0.05)),
            gt.h * math.exp(rng.uniform(-0.4, 0.4) * (1.0 - mid) + rng.uniform(-0.05, 0.05)),
        )
        v = iou(init, gt)
        if lo <= v < hi:
            return init, gt
    raise RuntimeError(f"could not sample a box pair with IoU in {iou_range}")
