"""Spatial transforms: sampling grids, differentiable warping, Jacobians.

Coordinates are corner aligned: pixel (i, j) of an [H, W] image sits at
x = -1 + 2j/(W-1), y = -1 + 2i/(H-1), so the image corners map exactly
to the corners of [-1, 1]^2.  Displacement fields are [H, W, 2] arrays
of (dx, dy) offsets in these normalized units; a field warps an image by
sampling it at grid + field, which pulls moving-image content onto the
fixed grid.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def normalized_grid(height, width):
    """[H, W, 2] array of (x, y) sample positions, corner aligned."""
    if height < 2 or width < 2:
        raise ValueError("grid needs at least 2 pixels per axis")
    xs = np.linspace(-1.0, 1.0, width)
    ys = np.linspace(-1.0, 1.0, height)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


def bilinear_sample(image, points):
    """Sample an [H, W, C] image at [N, 2] normalized (x, y) points.

    Bilinear interpolation with border clamp; differentiable in both the
    image values and the sample points.  Returns [N, C].
    """
    image = image if isinstance(image, Tensor) else Tensor(image)
    points = points if isinstance(points, Tensor) else Tensor(points)
    if image.ndim != 3:
        raise ad.ShapeError(f"expected [H, W, C] image, got {image.shape}")
    if points.ndim != 2 or points.shape[1] != 2:
        raise ad.ShapeError(f"expected [N, 2] points, got {points.shape}")
    h, w, c = image.shape

    px = ad.clamp((points[:, 0] + 1.0) * (0.5 * (w - 1)), 0.0, float(w - 1))
    py = ad.clamp((points[:, 1] + 1.0) * (0.5 * (h - 1)), 0.0, float(h - 1))
    x0 = np.minimum(np.floor(px.data), w - 2).astype(np.intp)
    y0 = np.minimum(np.floor(py.data), h - 2).astype(np.intp)
    wx = px - x0.astype(np.float64)
    wy = py - y0.astype(np.float64)
    one_x = 1.0 - wx
    one_y = 1.0 - wy

    flat = image.reshape((h * w, c))
    base = y0 * w + x0
    tl = ad.gather_rows(flat, base)
    tr = ad.gather_rows(flat, base + 1)
    bl = ad.gather_rows(flat, base + w)
    br = ad.gather_rows(flat, base + w + 1)

    return (
        ad.rowscale(tl, one_y * one_x)
        + ad.rowscale(tr, one_y * wx)
        + ad.rowscale(bl, wy * one_x)
        + ad.rowscale(br, wy * wx)
    )


def warp_image(image, field):
    """Resample an [H, W, C] image through an [H, W, 2] displacement field."""
    image = image if isinstance(image, Tensor) else Tensor(image)
    field = field if isinstance(field, Tensor) else Tensor(field)
    if field.ndim != 3 or field.shape[2] != 2:
        raise ad.ShapeError(f"expected [H, W, 2] field, got {field.shape}")
    h, w = field.shape[0], field.shape[1]
    if image.shape[0] != h or image.shape[1] != w:
        raise ad.ShapeError(
            f"image {image.shape} does not match field {field.shape}"
        )
    grid = Tensor(normalized_grid(h, w).reshape(-1, 2))
    points = grid + field.reshape((h * w, 2))
    sampled = bilinear_sample(image, points)
    return sampled.reshape((h, w, image.shape[2]))


def _diff_along(values, axis, spacing):
    """Grid derivative: central differences inside, one sided at borders."""
    n = values.shape[axis]
    if n < 2:
        raise ad.ShapeError("need at least 2 samples to differentiate")

    def sl(a, b):
        key = [slice(None)] * values.ndim
        key[axis] = slice(a, b)
        return values[tuple(key)]

    first = (sl(1, 2) - sl(0, 1)) / spacing
    last = (sl(n - 1, n) - sl(n - 2, n - 1)) / spacing
    if n == 2:
        return ad.concat([first, last], axis=axis)
    mid = (sl(2, n) - sl(0, n - 2)) / (2.0 * spacing)
    return ad.concat([first, mid, last], axis=axis)


def jacobian_det(field):
    """[H, W] determinant of the warp map d(grid + field)/d(grid).

    Derivatives are taken on the pixel grid with the normalized spacing
    2/(W-1) and 2/(H-1), so an all-zero field gives determinant one
    everywhere.  Values at or below zero mark folded pixels.
    """
    field = field if isinstance(field, Tensor) else Tensor(field)
    if field.ndim != 3 or field.shape[2] != 2:
        raise ad.ShapeError(f"expected [H, W, 2] field, got {field.shape}")
    h, w = field.shape[0], field.shape[1]
    sx = 2.0 / (w - 1)
    sy = 2.0 / (h - 1)
    dx = field[:, :, 0]
    dy = field[:, :, 1]
    dxdx = _diff_along(dx, 1, sx)
    dxdy = _diff_along(dx, 0, sy)
    dydx = _diff_along(dy, 1, sx)
    dydy = _diff_along(dy, 0, sy)
    return (1.0 + dxdx) * (1.0 + dydy) - dxdy * dydx


def spatial_gradient(image, spacing=1.0):
    """[H, W, C, 2] per-channel image gradient (d/dx, d/dy) in pixel units."""
    image = image if isinstance(image, Tensor) else Tensor(image)
    if image.ndim != 3:
        raise ad.ShapeError(f"expected [H, W, C] image, got {image.shape}")
    gx = _diff_along(image, 1, spacing)
    gy = _diff_along(image, 0, spacing)
    h, w, c = image.shape
    stacked = ad.concat(
        [gx.reshape((h, w, c, 1)), gy.reshape((h, w, c, 1))], axis=3
    )
    return stacked


def invert_field(field, iterations=30):
    """Displacement v with (id + field) o (id + v) ~ id, by fixed point.

    Plain numpy; used to build synthetic pairs and to push images back
    through a recovered warp.  Converges for fields whose gradients stay
    below 1 in normalized units.
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape[0], field.shape[1]
    grid = normalized_grid(h, w).reshape(-1, 2)
    inv = np.zeros_like(grid)
    for _ in range(iterations):
        inv = -bilinear_sample(field, grid + inv).data
    return inv.reshape(h, w, 2)


def resize_bilinear(image, out_h, out_w):
    """Resize an [H, W, C] float image with pixel-center alignment.

    Sample positions follow the usual image-resize convention
    (src = (dst + 0.5) * scale - 0.5) rather than the corner-aligned
    warp grid, so downscaling averages the expected source region.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ValueError(f"expected [H, W, C] image, got {image.shape}")
    h, w, _ = image.shape
    if (h, w) == (out_h, out_w):
        return image.copy()
    sx = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    sy = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    gx, gy = np.meshgrid(np.clip(sx, 0, w - 1), np.clip(sy, 0, h - 1))
    pts = np.stack(
        [gx.ravel() / (0.5 * (w - 1)) - 1.0, gy.ravel() / (0.5 * (h - 1)) - 1.0],
        axis=-1,
    )
    out = bilinear_sample(image, pts).data
    return out.reshape(out_h, out_w, image.shape[2])
