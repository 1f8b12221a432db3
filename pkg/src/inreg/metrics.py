"""Registration quality metrics.  Plain numpy, nothing differentiable."""

import numpy as np

from . import warp


def luminance(image):
    """Channel mean of an [H, W, C] image; [H, W] passes through."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3:
        return image.mean(axis=2)
    raise ValueError(f"expected [H, W] or [H, W, C], got {image.shape}")


def foreground_mask(image, threshold=0.5):
    return luminance(image) > threshold


def dice(mask_a, mask_b):
    """Dice overlap of two boolean masks; two empty masks count as 1."""
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return 2.0 * np.logical_and(a, b).sum() / total


def warp_mask(mask, field):
    """Pull a boolean mask through a field; bilinear then >= 0.5."""
    m = np.asarray(mask, dtype=np.float64)[..., None]
    warped = warp.warp_image(m, field).data[..., 0]
    return warped >= 0.5


def dilate_mask(mask, radius):
    """Grow a boolean mask by a square structuring element of given radius."""
    out = np.asarray(mask, dtype=bool).copy()
    for axis in (0, 1):
        grown = out.copy()
        for d in range(1, radius + 1):
            shifted = np.zeros_like(out)
            src = [slice(None), slice(None)]
            dst = [slice(None), slice(None)]
            src[axis] = slice(d, None)
            dst[axis] = slice(None, -d)
            shifted[tuple(dst)] = out[tuple(src)]
            grown |= shifted
            shifted = np.zeros_like(out)
            src[axis] = slice(None, -d)
            dst[axis] = slice(d, None)
            shifted[tuple(dst)] = out[tuple(src)]
            grown |= shifted
        out = grown
    return out


def _gaussian_kernel(radius=5, sigma=1.5):
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _valid_filter(img, kernel):
    r = (kernel.size - 1) // 2
    h, w = img.shape
    rows = np.zeros((h - 2 * r, w))
    for u, kv in enumerate(kernel):
        rows += kv * img[u : u + h - 2 * r, :]
    out = np.zeros((h - 2 * r, w - 2 * r))
    for u, kv in enumerate(kernel):
        out += kv * rows[:, u : u + w - 2 * r]
    return out


def ssim(a, b, data_range=1.0, win_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean structural similarity of two [H, W] images.

    Local statistics use a Gaussian window and only windows fully inside
    the image contribute to the mean, so border pixels never see padded
    values.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"need matching [H, W] images, got {a.shape}, {b.shape}")
    r = (win_size - 1) // 2
    if min(a.shape) < win_size:
        raise ValueError(f"image smaller than the {win_size}x{win_size} window")
    kernel = _gaussian_kernel(r, sigma)
    mu_a = _valid_filter(a, kernel)
    mu_b = _valid_filter(b, kernel)
    var_a = _valid_filter(a * a, kernel) - mu_a * mu_a
    var_b = _valid_filter(b * b, kernel) - mu_b * mu_b
    cov = _valid_filter(a * b, kernel) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(s.mean())


def folding_percent(field):
    """Percentage of pixels whose warp Jacobian determinant is <= 0."""
    det = warp.jacobian_det(np.asarray(field, dtype=np.float64)).data
    return 100.0 * np.count_nonzero(det <= 0.0) / det.size


def displacement_px(field):
    """[H, W] per-pixel displacement magnitude in pixels."""
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape[0], field.shape[1]
    dx = field[..., 0] * (0.5 * (w - 1))
    dy = field[..., 1] * (0.5 * (h - 1))
    return np.hypot(dx, dy)


def mean_displacement_px(field):
    return float(displacement_px(field).mean())


def endpoint_error_px(field, reference):
    """Mean pixel-space distance between two displacement fields."""
    field = np.asarray(field, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if field.shape != reference.shape:
        raise ValueError(f"shape mismatch {field.shape} vs {reference.shape}")
    return float(displacement_px(field - reference).mean())
