import csv
import json

import numpy as np
import pytest

from inreg import engine, imageio
from inreg.autodiff import NonFiniteError
from inreg.cli import main


def run(*argv):
    return main(list(argv))


def register_args(tmp_path, out, extra=()):
    synth = tmp_path / "pair"
    assert run("synth", "--out", str(synth), "--size", "24x24",
               "--deform-amp", "2", "--seed", "1") == 0
    return [
        "register",
        "--fixed", str(synth / "fixed.png"),
        "--moving", str(synth / "moving.png"),
        "--out", str(out),
        "--mode", "plain",
        "--size", "24x24",
        "--epochs", "6",
        "--hidden-dim", "12",
        "--num-hidden", "2",
        "--lncc-window", "8x8",
        "--seed", "3",
        *extra,
    ]


def read_history(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_synth_writes_pair(tmp_path):
    out = tmp_path / "pair"
    assert run("synth", "--out", str(out), "--size", "20x24",
               "--texture", "--seed", "2") == 0
    fixed = imageio.load_image(out / "fixed.png")
    moving = imageio.load_image(out / "moving.png")
    field = imageio.load_field(out / "true_field.inrf")
    assert fixed.shape == (20, 24, 1) and moving.shape == (20, 24, 1)
    assert field.shape == (20, 24, 2)
    mask = imageio.load_image(out / "texture_mask.png")
    assert mask.max() == 1.0
    meta = imageio.load_json(out / "meta.json")
    assert meta["deform_amp_px"] == 6.0 and meta["min_jacobian_det"] > 0


def test_synth_without_texture_writes_empty_mask(tmp_path):
    out = tmp_path / "pair"
    assert run("synth", "--out", str(out), "--size", "16x16") == 0
    mask = imageio.load_image(out / "texture_mask.png")
    assert mask.max() == 0.0


def test_register_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    assert run(*register_args(tmp_path, out)) == 0
    for name in ("fixed.png", "moving.png", "moved.png", "field.inrf",
                 "deform.ckpt", "config.json", "metrics.json",
                 "loss_history.csv"):
        assert (out / name).exists(), name
    # plain mode emits no decomposition artifacts
    for name in ("support.png", "residual.png", "support.ckpt"):
        assert not (out / name).exists(), name
    metrics_json = imageio.load_json(out / "metrics.json")
    assert set(metrics_json) == {"dice", "ssim", "folding_pct", "config_digest"}
    field = imageio.load_field(out / "field.inrf")
    assert field.shape == (24, 24, 2)
    history = read_history(out / "loss_history.csv")
    assert len(history) == 6
    assert list(history[0]) == ["epoch", "cc", "reg", "loss"]


def test_register_dec_excl_artifacts(tmp_path):
    out = tmp_path / "run"
    # a later --mode wins over the plain default in register_args
    assert run(*register_args(tmp_path, out, ["--mode", "dec-excl"])) == 0
    for name in ("support.png", "residual.png", "warped_support.png",
                 "support.ckpt", "residual.ckpt"):
        assert (out / name).exists(), name
    history = read_history(out / "loss_history.csv")
    assert list(history[0]) == [
        "epoch", "cc", "reg", "cc_support", "recon", "excl", "loss"
    ]


def test_register_resize(tmp_path):
    out = tmp_path / "run"
    assert run(*register_args(tmp_path, out, ["--size", "16x16"])) == 0
    assert imageio.load_field(out / "field.inrf").shape == (16, 16, 2)
    assert imageio.load_image(out / "fixed.png").shape == (16, 16, 1)


def test_evaluate_reproduces_register_metrics(tmp_path):
    out = tmp_path / "run"
    assert run(*register_args(tmp_path, out)) == 0
    metrics2 = tmp_path / "metrics2.json"
    assert run("evaluate",
               "--moved", str(out / "moved.png"),
               "--fixed", str(out / "fixed.png"),
               "--field", str(out / "field.inrf"),
               "--out", str(metrics2)) == 0
    assert metrics2.read_bytes() == (out / "metrics.json").read_bytes()


def test_register_deterministic_across_runs(tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run(*register_args(tmp_path, out1)) == 0
    assert run(*register_args(tmp_path, out2)) == 0
    assert (out1 / "field.inrf").read_bytes() == (out2 / "field.inrf").read_bytes()
    assert (out1 / "metrics.json").read_bytes() == (out2 / "metrics.json").read_bytes()


def test_warp_with_true_field_improves_alignment(tmp_path):
    synth = tmp_path / "pair"
    assert run("synth", "--out", str(synth), "--size", "32x32",
               "--deform-amp", "4", "--seed", "4") == 0
    warped_path = tmp_path / "warped.png"
    assert run("warp",
               "--image", str(synth / "moving.png"),
               "--field", str(synth / "true_field.inrf"),
               "--out", str(warped_path)) == 0
    fixed = imageio.load_image(synth / "fixed.png")
    moving = imageio.load_image(synth / "moving.png")
    warped = imageio.load_image(warped_path)
    before = np.abs(moving - fixed).mean()
    after = np.abs(warped - fixed).mean()
    assert after < 0.3 * before


def test_warp_mask_output_is_binary(tmp_path):
    synth = tmp_path / "pair"
    assert run("synth", "--out", str(synth), "--size", "32x32",
               "--deform-amp", "4", "--seed", "4") == 0
    mask_path = tmp_path / "mask.png"
    moving = imageio.load_image(synth / "moving.png")
    imageio.save_image(mask_path, (moving > 0.5).astype(float))
    out_path = tmp_path / "moved_mask.png"
    assert run("warp", "--image", str(mask_path),
               "--field", str(synth / "true_field.inrf"),
               "--out", str(out_path), "--mask") == 0
    moved_mask = imageio.load_image(out_path)
    assert set(np.unique(moved_mask)) <= {0.0, 1.0}
    assert moved_mask.any()


def test_evaluate_identity_and_identical_masks(tmp_path):
    synth = tmp_path / "pair"
    assert run("synth", "--out", str(synth), "--size", "24x24",
               "--deform-amp", "0", "--seed", "5") == 0
    mask_path = tmp_path / "mask.png"
    fixed = imageio.load_image(synth / "fixed.png")
    imageio.save_image(mask_path, (fixed > 0.5).astype(float))
    out_path = tmp_path / "metrics.json"
    assert run("evaluate",
               "--moved", str(synth / "fixed.png"),
               "--fixed", str(synth / "fixed.png"),
               "--field", str(synth / "true_field.inrf"),
               "--moved-mask", str(mask_path),
               "--fixed-mask", str(mask_path),
               "--out", str(out_path)) == 0
    scores = imageio.load_json(out_path)
    assert scores["ssim"] == 1.0
    assert scores["folding_pct"] == 0.0
    assert scores["dice"] == {"mask": 1.0}


def test_evaluate_requires_both_masks(tmp_path):
    synth = tmp_path / "pair"
    assert run("synth", "--out", str(synth), "--size", "16x16",
               "--deform-amp", "0") == 0
    code = run("evaluate",
               "--moved", str(synth / "fixed.png"),
               "--fixed", str(synth / "fixed.png"),
               "--field", str(synth / "true_field.inrf"),
               "--moved-mask", str(synth / "texture_mask.png"),
               "--out", str(tmp_path / "m.json"))
    assert code == 2


def test_warp_size_mismatch_is_runtime_error(tmp_path):
    synth = tmp_path / "pair"
    assert run("synth", "--out", str(synth), "--size", "20x20") == 0
    other = tmp_path / "other.png"
    imageio.save_image(other, np.zeros((10, 10, 1)))
    code = run("warp", "--image", str(other),
               "--field", str(synth / "true_field.inrf"),
               "--out", str(tmp_path / "x.png"))
    assert code == 2


def test_missing_file_is_runtime_error(tmp_path):
    code = run("evaluate",
               "--moved", str(tmp_path / "nope.png"),
               "--fixed", str(tmp_path / "nope.png"),
               "--field", str(tmp_path / "nope.inrf"),
               "--out", str(tmp_path / "m.json"))
    assert code == 2


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        run("register")  # missing required arguments
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run("synth", "--out", "x", "--size", "notasize")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:  # unknown flags are rejected
        run("synth", "--out", "x", "--frobnicate")
    assert exc.value.code == 1
    capsys.readouterr()


def test_register_nonfinite_keeps_partial_history(tmp_path, monkeypatch):
    out = tmp_path / "run"

    def blow_up(fixed, moving, config, progress=None):
        err = NonFiniteError("non-finite training loss at epoch 2 (cc=nan)")
        err.history = [
            {"epoch": 0, "cc": 0.5, "reg": 0.1, "loss": 0.6},
            {"epoch": 1, "cc": 0.4, "reg": 0.1, "loss": 0.5},
        ]
        raise err

    monkeypatch.setattr(engine, "register", blow_up)
    code = run(*register_args(tmp_path, out))
    assert code == 2
    history = read_history(out / "loss_history.csv")
    assert len(history) == 2 and history[1]["epoch"] == "1"
    assert not (out / "metrics.json").exists()


def test_register_nonfinite_weight_aborts_with_breakdown(tmp_path):
    pair = engine.make_synthetic_pair(size=(12, 12), deform_amp=1.0, seed=0)
    cfg = engine.RunConfig(mode="plain", epochs=3, hidden_dim=8,
                           num_hidden=2, w_cc=float("nan"))
    with pytest.raises(NonFiniteError) as exc:
        engine.register(pair.fixed, pair.moving, cfg)
    assert "epoch 0" in str(exc.value)
    assert exc.value.history == []


def test_evaluate_uses_sibling_config_digest(tmp_path):
    out = tmp_path / "run"
    assert run(*register_args(tmp_path, out)) == 0
    written = imageio.load_json(out / "metrics.json")
    config = imageio.load_json(out / "config.json")
    import hashlib
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    assert written["config_digest"] == hashlib.sha256(blob.encode()).hexdigest()