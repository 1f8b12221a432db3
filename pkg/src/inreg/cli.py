"""Command line front end.

Subcommands: register (fit a pair, write artifacts), warp (apply a
saved field to an image or mask), evaluate (metrics for a moved/fixed
pair and its field), synth (generate a benchmark pair with known
ground truth).

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from . import engine, imageio, metrics
from .engine import RunConfig


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _parse_size(text):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
        if h < 2 or w < 2:
            raise ValueError
        return h, w
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW with H,W >= 2, got {text!r}")


def _build_parser():
    parser = _Parser(prog="inreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    reg = sub.add_parser("register", help="fit a deformation to an image pair")
    reg.add_argument("--fixed", required=True, help="fixed (reference) PNG")
    reg.add_argument("--moving", required=True, help="moving PNG to align")
    reg.add_argument("--out", required=True, help="output directory")
    reg.add_argument("--mode", choices=("plain", "dec", "dec-excl"),
                     default="dec-excl")
    reg.add_argument("--epochs", type=int, default=1000)
    reg.add_argument("--size", type=_parse_size, default=(256, 256),
                     help="resize both images to HxW before fitting "
                          "(default 256x256)")
    reg.add_argument("--seed", type=int, default=0)
    reg.add_argument("--deterministic", action="store_true", default=True,
                     help="single fixed seeding path (always on; kept for scripts)")
    reg.add_argument("--hidden-dim", type=int, default=256)
    reg.add_argument("--num-hidden", type=int, default=5)
    reg.add_argument("--omega", type=float, default=30.0)
    reg.add_argument("--num-frequencies", type=int, default=6)
    reg.add_argument("--lr", type=float, default=1e-4)
    reg.add_argument("--weight-decay", type=float, default=0.01)
    reg.add_argument("--lncc-window", type=_parse_size, default=(32, 32))
    reg.add_argument("--alpha1", type=float, default=1.0,
                     help="weight of the moving-image correlation loss")
    reg.add_argument("--alpha2", type=float, default=1.0,
                     help="weight of the support-image correlation loss")
    reg.add_argument("--alpha3", type=float, default=1.0,
                     help="weight of the field regularity loss")
    reg.add_argument("--alpha4", type=float, default=100.0,
                     help="weight of the decomposition reconstruction loss")
    reg.add_argument("--alpha5", type=float, default=1.0,
                     help="weight of the gradient exclusion loss")
    reg.add_argument("--log-every", type=int, default=0,
                     help="print loss terms every N epochs (0 = silent)")

    wrp = sub.add_parser("warp", help="apply a saved field to an image")
    wrp.add_argument("--image", required=True)
    wrp.add_argument("--field", required=True)
    wrp.add_argument("--out", required=True, help="output PNG path")
    wrp.add_argument("--mask", action="store_true",
                     help="treat the image as a binary mask (threshold "
                          "the warped result at 0.5)")

    ev = sub.add_parser("evaluate", help="metrics for a moved/fixed pair")
    ev.add_argument("--moved", required=True, help="moved (warped) PNG")
    ev.add_argument("--fixed", required=True)
    ev.add_argument("--field", required=True)
    ev.add_argument("--out", required=True, help="metrics JSON path")
    ev.add_argument("--moved-mask", default=None,
                    help="moved segmentation mask PNG (see warp --mask); "
                         "with --fixed-mask, dice is computed from the masks")
    ev.add_argument("--fixed-mask", default=None,
                    help="fixed segmentation mask PNG")
    ev.add_argument("--config", default=None,
                    help="config JSON to digest (default: config.json "
                         "next to the field, when present)")

    syn = sub.add_parser("synth", help="generate a synthetic benchmark pair")
    syn.add_argument("--out", required=True, help="output directory")
    syn.add_argument("--size", type=_parse_size, default=(64, 64))
    syn.add_argument("--deform-amp", type=float, default=6.0,
                     help="peak ground-truth displacement in pixels")
    syn.add_argument("--texture", action="store_true",
                     help="add moving-only texture spots and a mask")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--channels", type=int, default=1)
    return parser


def _round_trip_field(field):
    # metrics must match a later evaluate run on the saved float32 field
    return np.asarray(field).astype("<f4").astype(np.float64)


_HISTORY_COLUMNS = ("epoch", "cc", "reg", "cc_support", "recon", "excl", "loss")


def _write_history_csv(path, history):
    present = set()
    for entry in history:
        present.update(entry)
    cols = [c for c in _HISTORY_COLUMNS if c in present]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=cols)
        writer.writeheader()
        writer.writerows(history)


def _artifact_scores(fixed, moved, field):
    """Metrics recomputable later from the saved artifacts alone.

    dice compares luminance-threshold foreground masks of the moved and
    fixed images; ssim and folding come from the same pair and field.
    """
    dice = {}
    for t in (0.25, 0.5, 0.75):
        dice[f"{t:g}"] = metrics.dice(
            metrics.foreground_mask(moved, t), metrics.foreground_mask(fixed, t)
        )
    return {
        "dice": dice,
        "ssim": metrics.ssim(metrics.luminance(moved), metrics.luminance(fixed)),
        "folding_pct": metrics.folding_percent(field),
    }


def _cmd_register(args):
    fixed = imageio.quantize_like_png(imageio.load_image(args.fixed, args.size))
    moving = imageio.quantize_like_png(imageio.load_image(args.moving, args.size))
    config = RunConfig(
        mode=args.mode.replace("-", "_"),
        epochs=args.epochs,
        hidden_dim=args.hidden_dim,
        num_hidden=args.num_hidden,
        omega=args.omega,
        num_frequencies=args.num_frequencies,
        lr=args.lr,
        weight_decay=args.weight_decay,
        lncc_window=args.lncc_window,
        seed=args.seed,
        deterministic=args.deterministic,
        w_cc=args.alpha1,
        w_cc_support=args.alpha2,
        w_reg=args.alpha3,
        w_recon=args.alpha4,
        w_excl=args.alpha5,
    )

    progress = None
    if args.log_every > 0:
        def progress(epoch, entry):
            if epoch % args.log_every == 0 or epoch == config.epochs - 1:
                terms = "  ".join(
                    f"{k}={v:.5f}" for k, v in entry.items() if k != "epoch"
                )
                print(f"epoch {epoch:5d}  {terms}")

    os.makedirs(args.out, exist_ok=True)
    out = lambda name: os.path.join(args.out, name)
    try:
        result = engine.register(fixed, moving, config, progress=progress)
    except ad.NonFiniteError as exc:
        history = getattr(exc, "history", None)
        if history is not None:  # keep what was learned before the blow-up
            _write_history_csv(out("loss_history.csv"), history)
        raise

    imageio.save_image(out("fixed.png"), fixed)
    imageio.save_image(out("moving.png"), moving)
    imageio.save_image(out("moved.png"), result.warped)
    imageio.save_field(out("field.inrf"), result.field)
    imageio.save_checkpoint(
        out("deform.ckpt"), result.models["deform"],
        config.num_frequencies, config.freq_base,
    )
    if result.support is not None:
        imageio.save_image(out("support.png"), result.support)
        imageio.save_image(out("residual.png"), result.residual)
        imageio.save_image(out("warped_support.png"), result.warped_support)
        imageio.save_checkpoint(
            out("support.ckpt"), result.models["support"],
            config.num_frequencies, config.freq_base,
        )
        imageio.save_checkpoint(
            out("residual.ckpt"), result.models["residual"],
            config.num_frequencies, config.freq_base,
        )
    imageio.save_json(out("config.json"), config.to_dict())
    _write_history_csv(out("loss_history.csv"), result.history)

    scores = _artifact_scores(
        fixed,
        imageio.quantize_like_png(result.warped),
        _round_trip_field(result.field),
    )
    scores["config_digest"] = config.digest()
    imageio.save_json(out("metrics.json"), scores)
    print(
        f"mode={config.mode} epochs={config.epochs} "
        f"elapsed={result.elapsed:.1f}s "
        f"dice@0.5={scores['dice']['0.5']:.4f} "
        f"ssim={scores['ssim']:.4f} folding={scores['folding_pct']:.3f}%"
    )


def _cmd_warp(args):
    image = imageio.load_image(args.image)
    field = imageio.load_field(args.field)
    if image.shape[:2] != field.shape[:2]:
        raise ValueError(
            f"image {image.shape[:2]} does not match field {field.shape[:2]}"
        )
    from .warp import warp_image

    if args.mask:
        mask = metrics.luminance(image) > 0.5
        imageio.save_image(args.out, metrics.warp_mask(mask, field).astype(float))
    else:
        imageio.save_image(args.out, warp_image(image, field).data)
    print(f"wrote {args.out}")


def _cmd_evaluate(args):
    fixed = imageio.load_image(args.fixed)
    moved = imageio.load_image(args.moved)
    field = imageio.load_field(args.field)
    if moved.shape[:2] != fixed.shape[:2]:
        raise ValueError(
            f"moved image {moved.shape[:2]} does not match fixed {fixed.shape[:2]}"
        )
    if fixed.shape[:2] != field.shape[:2]:
        raise ValueError(
            f"fixed image {fixed.shape[:2]} does not match field {field.shape[:2]}"
        )
    if (args.moved_mask is None) != (args.fixed_mask is None):
        raise ValueError("--moved-mask and --fixed-mask must be given together")

    scores = _artifact_scores(fixed, moved, field)
    if args.moved_mask is not None:
        mask_m = metrics.luminance(imageio.load_image(args.moved_mask)) > 0.5
        mask_f = metrics.luminance(imageio.load_image(args.fixed_mask)) > 0.5
        scores["dice"] = {"mask": metrics.dice(mask_m, mask_f)}

    config_path = args.config
    if config_path is None:
        sibling = os.path.join(os.path.dirname(args.field) or ".", "config.json")
        config_path = sibling if os.path.exists(sibling) else None
    config_dict = imageio.load_json(config_path) if config_path else {}
    scores["config_digest"] = engine.config_digest(config_dict)
    imageio.save_json(args.out, scores)
    print(json.dumps(scores, indent=2, sort_keys=True))


def _cmd_synth(args):
    pair = engine.make_synthetic_pair(
        size=args.size,
        deform_amp=args.deform_amp,
        texture=args.texture,
        seed=args.seed,
        channels=args.channels,
    )
    os.makedirs(args.out, exist_ok=True)
    out = lambda name: os.path.join(args.out, name)
    imageio.save_image(out("fixed.png"), pair.fixed)
    imageio.save_image(out("moving.png"), pair.moving)
    imageio.save_field(out("true_field.inrf"), pair.true_field)
    imageio.save_image(out("texture_mask.png"), pair.texture_mask.astype(float))
    imageio.save_json(out("meta.json"), {
        "size": list(args.size),
        "deform_amp_px": args.deform_amp,
        "texture": bool(args.texture),
        "seed": args.seed,
        "channels": args.channels,
        "min_jacobian_det": pair.min_det,
        "mean_true_disp_px": metrics.mean_displacement_px(pair.true_field),
    })
    print(f"wrote synthetic pair to {args.out} (min det {pair.min_det:.3f})")


_COMMANDS = {
    "register": _cmd_register,
    "warp": _cmd_warp,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except Exception as exc:  # runtime failures map to exit code 2
        sys.stderr.write(f"inreg {args.command}: error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
