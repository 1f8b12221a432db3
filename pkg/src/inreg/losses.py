"""Training losses: correlation, regularity, reconstruction, exclusion.

All losses take and return Tensors so they can sit on the tape.  Image
arguments are single-channel [H, W] luminance for the correlation
losses and full [H, W, C] stacks for reconstruction and exclusion.
"""

import numpy as np

from . import autodiff as ad
from . import warp
from .autodiff import Tensor


def _as2d(x, name):
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.ndim != 2:
        raise ad.ShapeError(f"{name} must be [H, W], got {t.shape}")
    return t


def ncc(a, b, eps=1e-5):
    """Global normalized cross-correlation of two [H, W] images.

    The epsilon sits under each square root, so correlation against a
    constant image degrades to zero instead of dividing by zero.
    """
    a = _as2d(a, "a")
    b = _as2d(b, "b")
    if a.shape != b.shape:
        raise ad.ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    ca = a - a.mean()
    cb = b - b.mean()
    num = (ca * cb).sum()
    da = ad.sqrt(ad.square(ca).sum() + eps)
    db = ad.sqrt(ad.square(cb).sum() + eps)
    return num / (da * db)


def lncc(a, b, window=(32, 32), eps=1e-5):
    """[H, W] map of local NCC over a sliding window, clipped at borders.

    Window statistics come from box sums of a, b, a^2, b^2 and ab; each
    border pixel uses its clipped window's true pixel count, so no
    padding values leak in.
    """
    a = _as2d(a, "a")
    b = _as2d(b, "b")
    if a.shape != b.shape:
        raise ad.ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    wh, ww = window
    up, down = (wh - 1) // 2, wh // 2
    left, right = (ww - 1) // 2, ww // 2
    h, w = a.shape
    rows = np.arange(h)
    cols = np.arange(w)
    n_rows = np.minimum(rows + down, h - 1) - np.maximum(rows - up, 0) + 1
    n_cols = np.minimum(cols + right, w - 1) - np.maximum(cols - left, 0) + 1
    n = np.outer(n_rows, n_cols).astype(np.float64)

    def box(t):
        return ad.box_sum2d(t, up, down, left, right)

    sa = box(a)
    sb = box(b)
    sab = box(a * b)
    saa = box(ad.square(a))
    sbb = box(ad.square(b))
    cov = sab - sa * sb / n
    var_a = saa - ad.square(sa) / n
    var_b = sbb - ad.square(sb) / n
    return cov / (ad.sqrt(var_a + eps) * ad.sqrt(var_b + eps))


def loss_cc(a, b, window=(32, 32), eps=1e-5):
    """0.5 * [(1 - NCC) + (1 - mean LNCC)]; zero for identical images."""
    return 0.5 * ((1.0 - ncc(a, b, eps)) + (1.0 - lncc(a, b, window, eps).mean()))


def loss_reg(field):
    """Mean |1 - det J| of the warp map; penalizes expansion and folding."""
    det = warp.jacobian_det(field)
    return ad.absolute(1.0 - det).mean()


def loss_recon(moving, support, residual):
    """Mean squared error of the two-part decomposition against the original."""
    moving = moving if isinstance(moving, Tensor) else Tensor(moving)
    if moving.shape != support.shape or moving.shape != residual.shape:
        raise ad.ShapeError(
            f"shape mismatch {moving.shape} / {support.shape} / {residual.shape}"
        )
    return ad.square(moving - support - residual).mean()


def loss_excl(support, residual, spacing=1.0):
    """Gradient exclusion between the two decomposition layers.

    Overlap is measured as |tanh(grad S) * tanh(grad R)| summed over
    channels and both derivative directions, averaged over pixels; it is
    zero wherever either layer is locally flat.
    """
    gs = warp.spatial_gradient(support, spacing)
    gr = warp.spatial_gradient(residual, spacing)
    h, w = gs.shape[0], gs.shape[1]
    overlap = ad.absolute(ad.tanh(gs) * ad.tanh(gr))
    return overlap.sum() / float(h * w)
