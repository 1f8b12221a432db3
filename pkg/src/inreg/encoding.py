"""Fourier feature encoding of normalized coordinates.

Coordinates live in [-1, 1].  Each coordinate axis is expanded with
sin/cos pairs at geometrically spaced frequencies and the raw
coordinates are kept alongside, so a D-dimensional point maps to
D * (1 + 2 * num_frequencies) features.  The layout is raw coordinates
first, then for each frequency, for each axis, the cosine then the sine
component.  The encoding is a fixed transform: it is computed once per
grid with plain numpy and fed to the networks as a constant.
"""

import numpy as np


def encoded_dim(dim, num_frequencies=6):
    return dim * (1 + 2 * num_frequencies)


def fourier_encode(coords, num_frequencies=6, base=2.0):
    """Encode [B, D] coordinates to [B, D * (1 + 2 * num_frequencies)]."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2:
        raise ValueError(f"expected [B, D] coordinates, got shape {coords.shape}")
    bsz, dim = coords.shape
    freqs = 2.0 * np.pi * base ** np.arange(num_frequencies, dtype=np.float64)
    angles = coords[:, None, :] * freqs[None, :, None]  # [B, F, D]
    pairs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)  # [B, F, D, 2]
    return np.concatenate([coords, pairs.reshape(bsz, -1)], axis=1)
