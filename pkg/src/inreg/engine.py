"""Training engine: joint registration and decomposition of an image pair.

Three coordinate networks share one optimizer: the deformation network
emits a displacement field that pulls the moving image onto the fixed
grid, and in the decomposition modes a support network and a residual
network split the moving image into content shared with the fixed image
and content unique to the moving one.  Everything trains full batch,
one tape per epoch.

Modes:
  plain     deformation only (correlation + regularity terms)
  dec       adds the support/residual split and reconstruction term
  dec_excl  adds the gradient exclusion term on top of dec
"""

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field as _field

import numpy as np

from . import autodiff as ad
from . import losses, metrics, warp
from .autodiff import Tape, Tensor
from .encoding import encoded_dim, fourier_encode
from .optim import AdamW
from .siren import Siren

MODES = ("plain", "dec", "dec_excl")


@dataclass
class RunConfig:
    mode: str = "plain"
    epochs: int = 1000
    hidden_dim: int = 256
    num_hidden: int = 5
    omega: float = 30.0
    num_frequencies: int = 6
    freq_base: float = 2.0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    w_cc: float = 1.0
    w_cc_support: float = 1.0
    w_reg: float = 1.0
    w_recon: float = 100.0
    w_excl: float = 1.0
    lncc_window: tuple = (32, 32)
    cc_eps: float = 1e-5
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.lncc_window = tuple(int(v) for v in self.lncc_window)

    def effective_weights(self):
        """Loss weights with the mode mask applied.

        plain zeroes the decomposition terms, dec zeroes only exclusion;
        the stored weights are untouched so the config digest reflects
        what the user asked for.
        """
        w = [self.w_cc, self.w_cc_support, self.w_reg, self.w_recon, self.w_excl]
        if self.mode == "plain":
            w[1] = w[3] = w[4] = 0.0
        elif self.mode == "dec":
            w[4] = 0.0
        return tuple(w)

    def to_dict(self):
        d = asdict(self)
        d["lncc_window"] = list(self.lncc_window)
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunResult:
    config: RunConfig
    field: np.ndarray  # [H, W, 2] normalized displacements
    warped: np.ndarray  # [H, W, C] moving pulled onto the fixed grid
    support: np.ndarray | None
    residual: np.ndarray | None
    warped_support: np.ndarray | None
    models: dict
    history: list
    elapsed: float


def config_digest(config_dict):
    """Digest of an arbitrary config mapping, same canonical form as RunConfig."""
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _check_pair(fixed, moving):
    fixed = np.asarray(fixed, dtype=np.float64)
    moving = np.asarray(moving, dtype=np.float64)
    if fixed.ndim != 3 or moving.ndim != 3:
        raise ValueError("images must be [H, W, C]")
    if fixed.shape != moving.shape:
        raise ValueError(f"shape mismatch {fixed.shape} vs {moving.shape}")
    return fixed, moving


def register(fixed, moving, config=None, progress=None):
    """Fit the networks to one image pair; returns a RunResult.

    ``progress(epoch, entry)`` is called after every epoch with the
    entry just appended to the history.
    """
    if config is None:
        config = RunConfig()
    fixed, moving = _check_pair(fixed, moving)
    h, w, c = fixed.shape

    coords = warp.normalized_grid(h, w).reshape(-1, 2)
    z0 = Tensor(fourier_encode(coords, config.num_frequencies, config.freq_base))
    in_dim = encoded_dim(2, config.num_frequencies)

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    deform = Siren(
        in_dim,
        2,
        hidden_dim=config.hidden_dim,
        num_hidden=config.num_hidden,
        omega=config.omega,
        rng=np.random.default_rng(seeds[0]),
    )
    models = {"deform": deform}
    decomposing = config.mode != "plain"
    if decomposing:
        models["support"] = Siren(
            in_dim,
            c,
            hidden_dim=config.hidden_dim,
            num_hidden=config.num_hidden,
            omega=config.omega,
            rng=np.random.default_rng(seeds[1]),
        )
        models["residual"] = Siren(
            in_dim,
            c,
            hidden_dim=config.hidden_dim,
            num_hidden=config.num_hidden,
            omega=config.omega,
            rng=np.random.default_rng(seeds[2]),
        )

    params = []
    for m in models.values():
        params.extend(m.parameters())
    opt = AdamW(
        params,
        lr=config.lr,
        betas=(config.beta1, config.beta2),
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
    )

    w1, w2, w3, w4, w5 = config.effective_weights()
    fixed_lum = Tensor(metrics.luminance(fixed))
    moving_t = Tensor(moving)
    window = config.lncc_window
    eps = config.cc_eps

    history = []
    start = time.perf_counter()
    for epoch in range(config.epochs):
        with Tape() as tape:
            field_t = deform(z0).reshape((h, w, 2))
            warped = warp.warp_image(moving_t, field_t)
            l_cc = losses.loss_cc(warped.mean(axis=2), fixed_lum, window, eps)
            l_reg = losses.loss_reg(field_t)
            total = w1 * l_cc + w3 * l_reg
            entry = {
                "epoch": epoch,
                "cc": l_cc.item(),
                "reg": l_reg.item(),
            }
            if decomposing:
                support = models["support"](z0).reshape((h, w, c))
                residual = models["residual"](z0).reshape((h, w, c))
                warped_support = warp.warp_image(support, field_t)
                l_cc_s = losses.loss_cc(
                    warped_support.mean(axis=2), fixed_lum, window, eps
                )
                l_recon = losses.loss_recon(moving_t, support, residual)
                total = total + w2 * l_cc_s + w4 * l_recon
                entry["cc_support"] = l_cc_s.item()
                entry["recon"] = l_recon.item()
                if w5 != 0.0:
                    l_excl = losses.loss_excl(support, residual)
                    total = total + w5 * l_excl
                    entry["excl"] = l_excl.item()
            if not np.isfinite(total.data):
                terms = "  ".join(f"{k}={v:.6g}" for k, v in entry.items())
                err = ad.NonFiniteError(
                    f"non-finite training loss at epoch {epoch} ({terms})"
                )
                err.history = history
                raise err
            entry["loss"] = total.item()
        tape.backward(total)
        opt.step()
        opt.zero_grad()
        history.append(entry)
        if progress is not None:
            progress(epoch, entry)
    elapsed = time.perf_counter() - start

    field_np = deform(z0).data.reshape(h, w, 2)
    warped_np = warp.warp_image(moving, field_np).data
    support_np = residual_np = warped_support_np = None
    if decomposing:
        support_np = models["support"](z0).data.reshape(h, w, c)
        residual_np = models["residual"](z0).data.reshape(h, w, c)
        warped_support_np = warp.warp_image(support_np, field_np).data

    return RunResult(
        config=config,
        field=field_np,
        warped=warped_np,
        support=support_np,
        residual=residual_np,
        warped_support=warped_support_np,
        models=models,
        history=history,
        elapsed=elapsed,
    )


def evaluate_pair(fixed, moving, field, thresholds=(0.25, 0.5, 0.75)):
    """Quality metrics for a field on an image pair.

    Returns {"dice": {...}, "ssim": ..., "folding_pct": ...}; dice keys
    are foreground thresholds applied to the luminance of each image,
    with the moving mask pulled through the field before comparison.
    """
    fixed, moving = _check_pair(fixed, moving)
    field = np.asarray(field, dtype=np.float64)
    warped = warp.warp_image(moving, field).data
    dice_scores = {}
    for t in thresholds:
        moving_mask = metrics.foreground_mask(moving, t)
        fixed_mask = metrics.foreground_mask(fixed, t)
        warped_mask = metrics.warp_mask(moving_mask, field)
        dice_scores[f"{t:g}"] = metrics.dice(warped_mask, fixed_mask)
    return {
        "dice": dice_scores,
        "ssim": metrics.ssim(
            metrics.luminance(warped), metrics.luminance(fixed)
        ),
        "folding_pct": metrics.folding_percent(field),
    }


# ---------------------------------------------------------------------------
# synthetic benchmark pairs


@dataclass
class SyntheticPair:
    fixed: np.ndarray  # [H, W, C]
    moving: np.ndarray  # [H, W, C]
    true_field: np.ndarray  # [H, W, 2]; warping moving by it recovers fixed
    texture_mask: np.ndarray  # [H, W] bool, moving-image space
    min_det: float  # smallest Jacobian determinant of the true warp


def _blob_image_fn(rng, num_blobs=7, background=0.08):
    centers = rng.uniform(-0.7, 0.7, size=(num_blobs, 2))
    sigmas = rng.uniform(0.12, 0.3, size=num_blobs)
    amps = rng.uniform(0.3, 0.8, size=num_blobs)

    def fn(pts):
        val = np.full(pts.shape[0], background)
        for (cx, cy), s, a in zip(centers, sigmas, amps):
            d2 = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2
            val = val + a * np.exp(-0.5 * d2 / (s * s))
        return val

    return fn


def _sinusoid_field_fn(rng, h, w, deform_amp_px):
    """Smooth displacement closure with peak magnitude deform_amp_px pixels."""
    fx, fy = rng.uniform(0.5, 0.8, size=2)
    px, py = rng.uniform(0.0, 2.0 * np.pi, size=2)
    qx, qy = rng.uniform(0.0, 2.0 * np.pi, size=2)

    def raw(pts):
        x, y = pts[:, 0], pts[:, 1]
        ux = np.sin(np.pi * fx * y + px) * np.cos(0.5 * np.pi * fx * x + qx)
        uy = np.sin(np.pi * fy * x + py) * np.cos(0.5 * np.pi * fy * y + qy)
        return np.stack([ux, uy], axis=-1)

    grid = warp.normalized_grid(h, w).reshape(-1, 2)
    sample = raw(grid)
    mag_px = np.hypot(sample[:, 0] * 0.5 * (w - 1), sample[:, 1] * 0.5 * (h - 1))
    scale = deform_amp_px / mag_px.max() if mag_px.max() > 0 else 0.0

    def fn(pts):
        return raw(pts) * scale

    return fn


def make_synthetic_pair(
    size=(64, 64),
    deform_amp=6.0,
    texture=False,
    seed=0,
    channels=1,
    num_texture_spots=9,
):
    """Build a phantom pair with a known ground-truth field.

    The fixed image is an analytic blob phantom.  The moving image is
    the fixed one pushed through the inverse of a smooth sinusoidal
    warp, evaluated analytically (fixed point per pixel), so warping the
    moving image by ``true_field`` reproduces the fixed image up to
    interpolation error.  With ``texture`` on, small bright spots that
    exist only in the moving image are added and their footprint is
    returned as a mask in moving-image space.
    """
    h, w = size
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xB10B)))
    image_fn = _blob_image_fn(rng)
    field_fn = _sinusoid_field_fn(rng, h, w, deform_amp)

    grid = warp.normalized_grid(h, w).reshape(-1, 2)
    fixed_flat = image_fn(grid)

    # invert p -> p + u(p) at every grid point: v solves v + u(v) = q
    v = grid.copy()
    for _ in range(60):
        v = grid - field_fn(v)
    moving_flat = image_fn(v)

    true_field = field_fn(grid).reshape(h, w, 2)
    det = warp.jacobian_det(true_field).data

    # normalize before adding texture so the fixed image and the ground
    # truth do not depend on whether texture is requested
    peak = max(fixed_flat.max(), moving_flat.max())
    fixed_flat = fixed_flat / peak
    moving_flat = moving_flat / peak

    texture_mask = np.zeros((h, w), dtype=bool)
    if texture:
        spots = np.zeros(h * w)
        # texture has to carry most of the energy that is absent from the
        # fixed image, otherwise the residual is dominated by plain
        # intensity offsets and the decomposition is untestable
        centers = rng.uniform(-0.65, 0.65, size=(num_texture_spots, 2))
        sigmas = rng.uniform(0.06, 0.11, size=num_texture_spots)
        amps = rng.uniform(0.75, 1.05, size=num_texture_spots)
        for (cx, cy), s, a in zip(centers, sigmas, amps):
            d2 = (grid[:, 0] - cx) ** 2 + (grid[:, 1] - cy) ** 2
            spots += a * np.exp(-0.5 * d2 / (s * s))
        moving_flat = moving_flat + spots
        texture_mask = (spots > 0.05).reshape(h, w)

    fixed_img = np.clip(fixed_flat, 0.0, 1.0).reshape(h, w, 1)
    moving_img = np.clip(moving_flat, 0.0, 1.0).reshape(h, w, 1)
    if channels > 1:
        fixed_img = np.repeat(fixed_img, channels, axis=2)
        moving_img = np.repeat(moving_img, channels, axis=2)

    return SyntheticPair(
        fixed=fixed_img,
        moving=moving_img,
        true_field=true_field,
        texture_mask=texture_mask,
        min_det=float(det.min()),
    )
