"""Guidance operations: flow/color losses, latent fusion, grid constraint.

The loss gradient is taken with respect to the decoded image and pulled
back through the codec's linear adjoint by the caller; nothing here needs
automatic differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import CapabilityError, InvalidBatch, ValidationError
from ..flow import FlowField


def guided_epsilon(eps_pred: np.ndarray, grad: np.ndarray, sigma_t: float) -> np.ndarray:
    """Classifier-guidance update of the noise prediction: eps + sigma * grad."""
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if eps_pred.shape != grad.shape:
        raise ValidationError(f"eps {eps_pred.shape} and grad {grad.shape} differ in shape")
    return eps_pred + float(sigma_t) * grad


def lsf_fuse(x_bar_prev: np.ndarray, x_w_t: np.ndarray, m_l: np.ndarray) -> np.ndarray:
    """Select warped-latent cells where the mask is set, else keep x_bar.

    The mask must be binary; selection is exact (np.where), so fusing twice
    with the same mask equals fusing once.
    """
    x_bar_prev = np.asarray(x_bar_prev, dtype=np.float64)
    x_w_t = np.asarray(x_w_t, dtype=np.float64)
    m = np.asarray(m_l)
    if m.dtype != bool:
        vals = np.unique(m)
        if not np.isin(vals, (0, 1)).all():
            raise ValidationError(f"latent mask must be binary, found values {vals[:8]}")
        m = m.astype(bool)
    return np.where(m, x_w_t, x_bar_prev)


def latent_mask(
    pixel_mask: np.ndarray, factor: int = 8, threshold: float = 0.25, dilate: int = 1
) -> np.ndarray:
    """Downsample a pixel mask to latent cells.

    A cell is set when at least `threshold` of its factor x factor pixel
    block is set; the result is then dilated by `dilate` cells (3x3
    structuring element).
    """
    mask = np.asarray(pixel_mask, dtype=bool)
    H, W = mask.shape
    if H % factor or W % factor:
        raise ValidationError(f"mask {H}x{W} not divisible by factor {factor}")
    frac = mask.reshape(H // factor, factor, W // factor, factor).mean(axis=(1, 3))
    out = frac >= threshold
    if dilate > 0 and out.any():
        out = ndimage.binary_dilation(out, structure=np.ones((3, 3), dtype=bool), iterations=dilate)
    return out


def grid_pack(x: np.ndarray) -> np.ndarray:
    """Tile a square batch of latents into one spatial grid, row-major.

    (B, C, h, w) -> (1, C, s*h, s*w) with s = sqrt(B); batch index b maps to
    tile (b // s, b % s). Exact inverse of grid_unpack.
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise InvalidBatch(f"expected (B, C, h, w), got shape {x.shape}")
    B, C, h, w = x.shape
    s = math.isqrt(B)
    if s * s != B:
        raise InvalidBatch(f"batch size {B} is not a perfect square")
    return x.reshape(s, s, C, h, w).transpose(2, 0, 3, 1, 4).reshape(1, C, s * h, s * w)


def grid_unpack(x: np.ndarray, batch: int) -> np.ndarray:
    """Inverse of grid_pack for a known batch size."""
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[0] != 1:
        raise InvalidBatch(f"expected (1, C, H, W), got shape {x.shape}")
    s = math.isqrt(batch)
    if s * s != batch:
        raise InvalidBatch(f"batch size {batch} is not a perfect square")
    _, C, H, W = x.shape
    if H % s or W % s:
        raise InvalidBatch(f"grid {H}x{W} not divisible into {s}x{s} tiles")
    h, w = H // s, W // s
    return x.reshape(C, s, h, s, w).transpose(1, 3, 0, 2, 4).reshape(batch, C, h, w)


class GridDenoiser:
    """Wraps a denoiser so each call sees the batch tiled as one latent."""

    def __init__(self, inner) -> None:
        self.inner = inner

    def predict_noise(self, x: np.ndarray, t: int, *, cond=None, cfg_scale: float = 1.0) -> np.ndarray:
        packed = grid_pack(x)
        out = self.inner.predict_noise(packed, t, cond=cond, cfg_scale=cfg_scale)
        return grid_unpack(out, x.shape[0])


# ---------------------------------------------------------------------------
# flow guidance losses


@dataclass
class FGSResult:
    flow_loss: float
    color_loss: float
    grad: np.ndarray  # d(weighted loss)/d(image_b), shape (H, W, 3)


def _bilinear_gather(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Bilinear sampling with border clamp; img is (H, W, C)."""
    H, W = img.shape[:2]
    sx = np.clip(sx, 0.0, W - 1.0)
    sy = np.clip(sy, 0.0, H - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    return (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )


def _bilinear_scatter(values: np.ndarray, sx: np.ndarray, sy: np.ndarray, shape) -> np.ndarray:
    """Adjoint of _bilinear_gather: scatter-add with the same four weights."""
    H, W = shape[:2]
    sx = np.clip(sx, 0.0, W - 1.0)
    sy = np.clip(sy, 0.0, H - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    out = np.zeros(shape, dtype=np.float64)
    np.add.at(out, (y0, x0), values * (1 - fx) * (1 - fy))
    np.add.at(out, (y0, x1), values * fx * (1 - fy))
    np.add.at(out, (y1, x0), values * (1 - fx) * fy)
    np.add.at(out, (y1, x1), values * fx * fy)
    return out


def color_loss_and_grad(
    image_a: np.ndarray, image_b: np.ndarray, flow: FlowField
) -> tuple[float, np.ndarray]:
    """Mean absolute error between image_a and image_b warped by the flow.

    The warp samples image_b at x + f(x) (bilinear, border clamp); invalid
    flow pixels compare against image_b unwarped. Returns the loss and its
    gradient with respect to image_b (exact up to the non-differentiable
    points of the absolute value).
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape or a.shape[:2] != flow.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape} vs flow {flow.shape}")
    H, W = flow.shape
    ys, xs = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    sx = np.where(flow.valid, xs + flow.u, xs)
    sy = np.where(flow.valid, ys + flow.v, ys)
    warped = _bilinear_gather(b, sx, sy)
    resid = a - warped
    loss = float(np.abs(resid).mean())
    sign = np.sign(resid) / resid.size
    grad_b = _bilinear_scatter(-sign, sx, sy, b.shape)
    return loss, grad_b


def fgs_losses(
    image_a: np.ndarray,
    image_b: np.ndarray,
    target_flow: FlowField,
    estimator,
    flow_weight: float = 1.0,
    color_weight: float = 1.0,
    finite_diff: bool = False,
    finite_diff_eps: float = 1e-4,
) -> FGSResult:
    """Flow-matching and color losses with the gradient w.r.t. image_b.

    The flow term compares the estimator's flow between the two images
    against the target flow. Its gradient comes from the estimator's
    flow_loss_and_grad capability when present (in which case the reported
    flow loss is that differentiable surrogate); otherwise, when
    finite_diff is set, the hard loss is used and the gradient is estimated
    by central differences over every pixel (desk-scale images only).

    Raises:
        CapabilityError: estimator lacks the gradient capability and finite
            differences are disabled.
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)

    def hard_flow_loss(img_b: np.ndarray) -> float:
        f_p = estimator.estimate(a, img_b)
        m = target_flow.valid
        return float((np.abs(target_flow.u - f_p.u)[m] + np.abs(target_flow.v - f_p.v)[m]).mean())

    if hasattr(estimator, "flow_loss_and_grad"):
        flow_loss, grad_flow = estimator.flow_loss_and_grad(a, b, target_flow)
    elif finite_diff:
        flow_loss = hard_flow_loss(b)
        grad_flow = np.zeros_like(b)
        it = np.nditer(b, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            bp = b.copy()
            bp[idx] += finite_diff_eps
            bm = b.copy()
            bm[idx] -= finite_diff_eps
            grad_flow[idx] = (hard_flow_loss(bp) - hard_flow_loss(bm)) / (2 * finite_diff_eps)
    else:
        raise CapabilityError(
            "flow estimator has no flow_loss_and_grad capability and finite differences are disabled"
        )

    color_loss, grad_color = color_loss_and_grad(a, b, target_flow)
    grad = float(flow_weight) * grad_flow + float(color_weight) * grad_color
    return FGSResult(flow_loss=float(flow_loss), color_loss=color_loss, grad=grad)
