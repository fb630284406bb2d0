"""Self-contained toy implementations of the pluggable model interfaces.

These exist so the full editing pipeline can run and be tested without any
learned weights: a linear contraction standing in for a denoiser, an
average-pool codec, and a classical block-matching flow estimator with a
differentiable matching surrogate.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import ValidationError
from ..flow import FlowField

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class ToyDenoiser:
    """Predicts noise as a fixed small multiple of the input latent.

    The map x -> gain * x is linear and acts elementwise, so it commutes
    with any spatial rearrangement of the latent; conditioning and
    cfg_scale are accepted and ignored.
    """

    def __init__(self, gain: float = 0.0005) -> None:
        if not 0.0 <= gain < 1.0:
            raise ValidationError(f"gain must be in [0, 1), got {gain}")
        self.gain = float(gain)

    def predict_noise(self, x: np.ndarray, t: int, *, cond=None, cfg_scale: float = 1.0) -> np.ndarray:
        return self.gain * np.asarray(x, dtype=np.float64)


class ToyCodec:
    """Average-pool encoder with nearest-neighbour decoder.

    Latent channels are [R, G, B, luma] at 1/8 spatial resolution. The
    decoder upsamples the RGB channels and ignores luma, so decode(encode(x))
    is a blockwise-constant approximation of x. decode_adjoint is the exact
    transpose of the linear part of decode (the [0, 1] clip is treated as
    identity).
    """

    spatial_factor = 8
    channels = 4

    def encode(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValidationError(f"expected (H, W, 3) image, got shape {img.shape}")
        H, W = img.shape[:2]
        f = self.spatial_factor
        if H % f or W % f:
            raise ValidationError(f"image {H}x{W} not divisible by {f}")
        pooled = img.reshape(H // f, f, W // f, f, 3).mean(axis=(1, 3))
        luma = pooled @ LUMA_WEIGHTS
        return np.concatenate([pooled.transpose(2, 0, 1), luma[None]], axis=0)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        z = np.asarray(latent, dtype=np.float64)
        if z.ndim != 3 or z.shape[0] != self.channels:
            raise ValidationError(f"expected ({self.channels}, h, w) latent, got shape {z.shape}")
        f = self.spatial_factor
        rgb = z[:3].transpose(1, 2, 0)
        up = np.repeat(np.repeat(rgb, f, axis=0), f, axis=1)
        return np.clip(up, 0.0, 1.0)

    def decode_adjoint(self, grad_image: np.ndarray) -> np.ndarray:
        g = np.asarray(grad_image, dtype=np.float64)
        if g.ndim != 3 or g.shape[2] != 3:
            raise ValidationError(f"expected (H, W, 3) gradient, got shape {g.shape}")
        H, W = g.shape[:2]
        f = self.spatial_factor
        if H % f or W % f:
            raise ValidationError(f"gradient {H}x{W} not divisible by {f}")
        sums = g.reshape(H // f, f, W // f, f, 3).sum(axis=(1, 3)).transpose(2, 0, 1)
        luma = np.zeros_like(sums[:1])
        return np.concatenate([sums, luma], axis=0)


def _to_luma(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        return img.mean(axis=2)
    return img


def _shift(img: np.ndarray, dy: int, dx: int, fill: float = 0.0) -> np.ndarray:
    """Translate so out[y, x] = img[y + dy, x + dx], `fill` outside."""
    out = np.full_like(img, fill)
    H, W = img.shape
    ys0, ys1 = max(0, -dy), min(H, H - dy)
    xs0, xs1 = max(0, -dx), min(W, W - dx)
    if ys0 < ys1 and xs0 < xs1:
        out[ys0:ys1, xs0:xs1] = img[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx]
    return out


def _block_means(img: np.ndarray, size: int) -> np.ndarray:
    """Replace each size x size tile with its mean; edge tiles may be ragged."""
    H, W = img.shape
    ys = np.arange(0, H, size)
    xs = np.arange(0, W, size)
    sums = np.add.reduceat(np.add.reduceat(img, ys, axis=0), xs, axis=1)
    hlen = np.minimum(ys + size, H) - ys
    wlen = np.minimum(xs + size, W) - xs
    means = sums / hlen[:, None] / wlen[None, :]
    return np.repeat(np.repeat(means, hlen, axis=0), wlen, axis=1)


def _charbonnier(e: np.ndarray, kappa: float) -> np.ndarray:
    return np.sqrt(e * e + kappa * kappa) - kappa


def _charbonnier_deriv(e: np.ndarray, kappa: float) -> np.ndarray:
    return e / np.sqrt(e * e + kappa * kappa)


class BlockMatchingFlow:
    """Integer-displacement block matching on luma patches.

    estimate() does a hard argmin of the patchwise SSD over all integer
    displacements within `radius`; ties go to the displacement with the
    smallest (|d|^2, dy, dx) key, so identical images yield exactly zero
    flow. flow_loss_and_grad() replaces the argmin with a softmin over
    displacements at temperature `tau` and scores each displacement against
    the target flow with a Charbonnier penalty, which makes the matching
    loss differentiable in the second image.

    With block_grid > 0 each candidate displacement is scored by shifting
    the first image, quantizing it to block_grid-sized tile means on a
    fixed grid, and differencing against the second image in place. That
    is the right comparison when image_b is itself tile-quantized (for
    example a pooled-then-upsampled reconstruction): the candidate equal
    to the true shift then reproduces image_b exactly instead of merely
    correlating with it.

    With median > 0 the estimated flow components are median-filtered over
    that window, which removes isolated mismatches near motion boundaries
    where patches straddle differently-moving content.
    """

    def __init__(
        self,
        radius: int = 3,
        patch: int = 7,
        tau: float = 0.05,
        kappa: float = 0.01,
        block_grid: int = 0,
        median: int = 0,
    ) -> None:
        if radius < 1 or patch < 1 or patch % 2 == 0:
            raise ValidationError(f"need radius >= 1 and odd patch >= 1, got {radius}, {patch}")
        if tau <= 0 or kappa <= 0:
            raise ValidationError(f"tau and kappa must be positive, got {tau}, {kappa}")
        if block_grid < 0:
            raise ValidationError(f"block_grid must be >= 0, got {block_grid}")
        if median < 0 or (median > 0 and median % 2 == 0):
            raise ValidationError(f"median must be 0 (off) or an odd window, got {median}")
        self.radius = int(radius)
        self.patch = int(patch)
        self.tau = float(tau)
        self.kappa = float(kappa)
        self.block_grid = int(block_grid)
        self.median = int(median)
        r = self.radius
        self._displacements = sorted(
            ((dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)),
            key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]),
        )

    def _box(self, img: np.ndarray) -> np.ndarray:
        return ndimage.uniform_filter(img, size=self.patch, mode="constant") * (self.patch**2)

    def _ssd(self, luma_a: np.ndarray, luma_b: np.ndarray, dy: int, dx: int) -> np.ndarray:
        diff = luma_a - _shift(luma_b, dy, dx)
        return self._box(diff * diff)

    def _candidate(self, luma_a: np.ndarray, dy: int, dx: int) -> np.ndarray:
        """Predicted appearance of luma_a after its content moves by (dx, dy)."""
        moved = _shift(luma_a, -dy, -dx)
        return _block_means(moved, self.block_grid)

    def _grid_ssd(self, luma_a: np.ndarray, luma_b: np.ndarray, dy: int, dx: int) -> np.ndarray:
        resid = self._candidate(luma_a, dy, dx) - luma_b
        # indexed at the source pixel: cost of "content here moved by d";
        # source pixels whose destination falls off-image get an infinite
        # cost so borders never prefer out-of-range displacements
        return _shift(self._box(resid * resid), dy, dx, fill=np.inf)

    def _all_ssd(self, luma_a: np.ndarray, luma_b: np.ndarray, dy: int, dx: int) -> np.ndarray:
        if self.block_grid:
            return self._grid_ssd(luma_a, luma_b, dy, dx)
        return self._ssd(luma_a, luma_b, dy, dx)

    def estimate(self, image_a: np.ndarray, image_b: np.ndarray) -> FlowField:
        la, lb = _to_luma(image_a), _to_luma(image_b)
        if la.shape != lb.shape:
            raise ValidationError(f"image shapes differ: {la.shape} vs {lb.shape}")
        best = np.full(la.shape, np.inf)
        u = np.zeros(la.shape)
        v = np.zeros(la.shape)
        for dy, dx in self._displacements:
            ssd = self._all_ssd(la, lb, dy, dx)
            better = ssd < best
            best[better] = ssd[better]
            u[better] = dx
            v[better] = dy
        if self.median:
            u = ndimage.median_filter(u, size=self.median)
            v = ndimage.median_filter(v, size=self.median)
        return FlowField(u=u, v=v, valid=np.ones(la.shape, dtype=bool))

    def flow_loss_and_grad(
        self, image_a: np.ndarray, image_b: np.ndarray, target_flow: FlowField
    ) -> tuple[float, np.ndarray]:
        la, lb = _to_luma(image_a), _to_luma(image_b)
        if la.shape != lb.shape or la.shape != target_flow.shape:
            raise ValidationError(
                f"shape mismatch: {la.shape} vs {lb.shape} vs flow {target_flow.shape}"
            )
        valid = target_flow.valid
        n_valid = int(valid.sum())
        if n_valid == 0:
            return 0.0, np.zeros(np.asarray(image_b, dtype=np.float64).shape)

        disps = self._displacements
        ssd = np.stack([self._all_ssd(la, lb, dy, dx) for dy, dx in disps])
        logits = -ssd / self.tau
        logits -= logits.max(axis=0, keepdims=True)
        weights = np.exp(logits)
        weights /= weights.sum(axis=0, keepdims=True)

        # rho[d] scores displacement d against the target at each pixel
        rho = np.stack(
            [
                _charbonnier(dx - target_flow.u, self.kappa)
                + _charbonnier(dy - target_flow.v, self.kappa)
                for dy, dx in disps
            ]
        )
        per_pixel = (weights * rho).sum(axis=0)
        loss = float(per_pixel[valid].sum() / n_valid)

        # dL/dssd[d] = mask/N * (-1/tau) * w_d * (rho_d - sum_d' w_d' rho_d')
        mask = valid.astype(np.float64) / n_valid
        dl_dssd = mask * (-1.0 / self.tau) * weights * (rho - per_pixel)

        grad_luma = np.zeros_like(lb)
        for k, (dy, dx) in enumerate(disps):
            if self.block_grid:
                resid = self._candidate(la, dy, dx) - lb
                box = self._box(_shift(dl_dssd[k], -dy, -dx))
                grad_luma += -2.0 * resid * box
            else:
                err = la - _shift(lb, dy, dx)
                box = self._box(dl_dssd[k])
                grad_luma += _shift(-2.0 * err * box, -dy, -dx)

        b = np.asarray(image_b, dtype=np.float64)
        if b.ndim == 3:
            grad = np.repeat(grad_luma[:, :, None], b.shape[2], axis=2) / b.shape[2]
        else:
            grad = grad_luma
        return loss, grad
