import numpy as np
import pytest

from inreg import imageio
from inreg.encoding import fourier_encode
from inreg.siren import Siren


def test_png_round_trip_rgb(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((9, 7, 3))
    path = tmp_path / "x.png"
    imageio.save_image(path, img)
    back = imageio.load_image(path)
    assert back.shape == (9, 7, 3)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_png_round_trip_gray(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.random((5, 6, 1))
    path = tmp_path / "g.png"
    imageio.save_image(path, img)
    back = imageio.load_image(path)
    assert back.shape == (5, 6, 1)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_png_second_pass_is_exact(tmp_path):
    rng = np.random.default_rng(2)
    img = rng.random((8, 8, 3))
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    imageio.save_image(p1, img)
    once = imageio.load_image(p1)
    imageio.save_image(p2, once)
    np.testing.assert_array_equal(imageio.load_image(p2), once)


def test_quantize_matches_real_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    img = rng.random((6, 5, 3)) * 1.4 - 0.2  # exercise clipping too
    path = tmp_path / "q.png"
    imageio.save_image(path, img)
    np.testing.assert_array_equal(
        imageio.load_image(path), imageio.quantize_like_png(img)
    )


def test_save_image_rejects_bad_shapes(tmp_path):
    with pytest.raises(ValueError):
        imageio.save_image(tmp_path / "bad.png", np.zeros((4, 4, 2)))


def test_load_image_resize(tmp_path):
    img = np.full((8, 8, 1), 0.5)
    path = tmp_path / "r.png"
    imageio.save_image(path, img)
    back = imageio.load_image(path, size=(4, 6))
    assert back.shape == (4, 6, 1)
    np.testing.assert_allclose(back, imageio.quantize_like_png(img)[0, 0, 0])


def test_field_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(4)
    field = rng.standard_normal((11, 13, 2)) * 0.1
    p1, p2 = tmp_path / "f1.bin", tmp_path / "f2.bin"
    imageio.save_field(p1, field)
    loaded = imageio.load_field(p1)
    assert loaded.shape == (11, 13, 2)
    np.testing.assert_array_equal(loaded, field.astype(np.float32).astype(np.float64))
    imageio.save_field(p2, loaded)
    assert p1.read_bytes() == p2.read_bytes()


def test_field_header(tmp_path):
    path = tmp_path / "f.bin"
    imageio.save_field(path, np.zeros((3, 5, 2)))
    blob = path.read_bytes()
    assert blob[:4] == b"INRF"
    assert int.from_bytes(blob[4:8], "little") == 3
    assert int.from_bytes(blob[8:12], "little") == 5
    assert len(blob) == 12 + 3 * 5 * 2 * 4


def test_field_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\0" * 16)
    with pytest.raises(ValueError):
        imageio.load_field(path)


def test_field_rejects_truncation(tmp_path):
    path = tmp_path / "f.bin"
    imageio.save_field(path, np.zeros((4, 4, 2)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        imageio.load_field(path)


def test_checkpoint_round_trip(tmp_path):
    net = Siren(26, 2, hidden_dim=12, num_hidden=4, rng=np.random.default_rng(5))
    p1, p2 = tmp_path / "n1.ckpt", tmp_path / "n2.ckpt"
    imageio.save_checkpoint(p1, net, num_frequencies=6, freq_base=2.0)
    loaded, enc = imageio.load_checkpoint(p1)
    assert enc == {"num_frequencies": 6, "freq_base": 2.0}
    assert loaded.layer_dims() == net.layer_dims()
    assert loaded.omega == net.omega and loaded.skip_index == net.skip_index
    for a, b in zip(net.parameters(), loaded.parameters()):
        np.testing.assert_array_equal(a.data, b.data)
    pts = np.random.default_rng(6).uniform(-1, 1, (9, 2))
    z = fourier_encode(pts)
    np.testing.assert_array_equal(net(z).data, loaded(z).data)
    imageio.save_checkpoint(p2, loaded, num_frequencies=6, freq_base=2.0)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"XXXX" + b"\0" * 64)
    with pytest.raises(ValueError):
        imageio.load_checkpoint(path)


def test_checkpoint_magic_bytes(tmp_path):
    net = Siren(8, 1, hidden_dim=4, num_hidden=2, rng=np.random.default_rng(7))
    path = tmp_path / "n.ckpt"
    imageio.save_checkpoint(path, net, num_frequencies=3, freq_base=2.0)
    assert path.read_bytes()[:4] == b"SIRN"


def test_save_json_stable_bytes(tmp_path):
    obj = {"b": 2.5, "a": {"y": 1, "x": [1, 2]}}
    p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
    imageio.save_json(p1, obj)
    imageio.save_json(p2, {"a": {"x": [1, 2], "y": 1}, "b": 2.5})
    assert p1.read_bytes() == p2.read_bytes()
    assert imageio.load_json(p1) == obj
