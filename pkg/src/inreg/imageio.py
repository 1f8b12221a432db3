"""File formats: PNG images, displacement fields, network checkpoints.

Field files ("INRF") hold the header plus the raw float32 displacement
block; checkpoints ("SIRN") hold enough architecture information to
rebuild the network before loading its float64 parameters.  Both are
little endian regardless of host byte order, and both round trip
bit for bit.
"""

import json
import struct

import numpy as np
from PIL import Image

from .siren import Siren

FIELD_MAGIC = b"INRF"
CHECKPOINT_MAGIC = b"SIRN"
CHECKPOINT_VERSION = 1


def load_image(path, size=None):
    """Load a PNG as float64 [H, W, C] in [0, 1].

    Grayscale files keep one channel, everything else converts to RGB.
    ``size`` is an (H, W) pair; resizing happens after normalization.
    """
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.float64)[..., None] / 255.0
        elif img.mode == "I;16":
            arr = np.asarray(img, dtype=np.float64)[..., None] / 65535.0
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    if size is not None:
        from .warp import resize_bilinear

        arr = resize_bilinear(arr, size[0], size[1])
    return arr


def save_image(path, image):
    """Save [H, W] or [H, W, C] floats in [0, 1] as an 8-bit PNG."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"cannot save image of shape {arr.shape}")
    quant = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    if quant.shape[2] == 1:
        Image.fromarray(quant[..., 0], mode="L").save(path)
    else:
        Image.fromarray(quant, mode="RGB").save(path)


def quantize_like_png(image):
    """The exact values a save/load PNG round trip would produce."""
    arr = np.asarray(image, dtype=np.float64)
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0) / 255.0


def save_field(path, field):
    """Write an [H, W, 2] displacement field (stored as float32)."""
    field = np.asarray(field)
    if field.ndim != 3 or field.shape[2] != 2:
        raise ValueError(f"expected [H, W, 2] field, got {field.shape}")
    h, w = field.shape[0], field.shape[1]
    with open(path, "wb") as f:
        f.write(FIELD_MAGIC)
        f.write(struct.pack("<II", h, w))
        f.write(np.ascontiguousarray(field, dtype="<f4").tobytes())


def load_field(path):
    """Read a field file back as float64 [H, W, 2]."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FIELD_MAGIC:
            raise ValueError(f"{path}: not a field file (magic {magic!r})")
        h, w = struct.unpack("<II", f.read(8))
        blob = f.read(h * w * 2 * 4)
    if len(blob) != h * w * 2 * 4:
        raise ValueError(f"{path}: truncated field payload")
    data = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    return data.reshape(h, w, 2)


def save_checkpoint(path, model, num_frequencies, freq_base):
    """Write a network plus the encoding settings its inputs expect."""
    dims = model.layer_dims()
    header = struct.pack(
        "<4sIdIdIIIII",
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        model.omega,
        num_frequencies,
        freq_base,
        model.in_dim,
        model.out_dim,
        model.hidden_dim,
        model.num_hidden,
        model.skip_index,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(struct.pack("<I", len(dims)))
        for fan_in, fan_out in dims:
            f.write(struct.pack("<II", fan_in, fan_out))
        for p in model.parameters():
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Rebuild a Siren from a checkpoint; returns (model, encoding_info)."""
    with open(path, "rb") as f:
        head = f.read(struct.calcsize("<4sIdIdIIIII"))
        (
            magic,
            version,
            omega,
            num_frequencies,
            freq_base,
            in_dim,
            out_dim,
            hidden_dim,
            num_hidden,
            skip_index,
        ) = struct.unpack("<4sIdIdIIIII", head)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (magic {magic!r})")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (n_layers,) = struct.unpack("<I", f.read(4))
        dims = [struct.unpack("<II", f.read(8)) for _ in range(n_layers)]
        model = Siren(
            in_dim,
            out_dim,
            hidden_dim=hidden_dim,
            num_hidden=num_hidden,
            omega=omega,
            skip_index=skip_index,
            rng=np.random.default_rng(0),
        )
        expect = [tuple(d) for d in model.layer_dims()]
        if [tuple(d) for d in dims] != expect:
            raise ValueError(f"{path}: layer table {dims} does not match {expect}")
        for w, b in zip(model.weights, model.biases):
            w.data = np.frombuffer(
                f.read(w.size * 8), dtype="<f8"
            ).astype(np.float64).reshape(w.shape).copy()
            b.data = np.frombuffer(
                f.read(b.size * 8), dtype="<f8"
            ).astype(np.float64).reshape(b.shape).copy()
        trailing = f.read(1)
    if trailing:
        raise ValueError(f"{path}: trailing bytes after parameters")
    encoding_info = {"num_frequencies": num_frequencies, "freq_base": freq_base}
    return model, encoding_info


def save_json(path, obj):
    """Canonical JSON writer (sorted keys, fixed layout) for metrics/config."""
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def load_json(path):
    with open(path) as f:
        return json.load(f)
