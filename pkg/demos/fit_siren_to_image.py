"""Fit a sinusoidal coordinate network to a single image.

This is the smallest useful demonstration of the pieces the registration
engine is built from: encode pixel coordinates with Fourier features,
push them through a Siren, and train against the pixel values with the
tape-based autodiff and AdamW.  The network ends up being a continuous
function that reproduces the image, which is exactly the role the
support and residual networks play during decomposition.

Run from the repository root:

    python3 demos/fit_siren_to_image.py
"""

import os

import numpy as np

from inreg import Siren, Tape
from inreg.autodiff import Tensor, square
from inreg.encoding import encoded_dim, fourier_encode
from inreg.engine import make_synthetic_pair
from inreg.imageio import save_image
from inreg.optim import AdamW
from inreg.warp import normalized_grid

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")


def psnr(a, b):
    mse = float(((a - b) ** 2).mean())
    return 10.0 * np.log10(1.0 / mse) if mse > 0 else np.inf


def main():
    os.makedirs(OUT_DIR, exist_ok=True)

    # a blob phantom stands in for any grayscale photograph
    target = make_synthetic_pair(size=(48, 48), deform_amp=0.0, seed=11).fixed
    h, w, c = target.shape

    coords = normalized_grid(h, w).reshape(-1, 2)
    features = fourier_encode(coords)
    net = Siren(encoded_dim(2), c, hidden_dim=64, num_hidden=5,
                rng=np.random.default_rng(0))
    opt = AdamW(net.parameters(), lr=3e-4)
    target_t = Tensor(target.reshape(-1, c))

    for epoch in range(400):
        with Tape() as tape:
            pred = net(features)
            loss = square(pred - target_t).mean()
        tape.backward(loss)
        opt.step()
        opt.zero_grad()
        if epoch % 50 == 0 or epoch == 399:
            recon = net(features).data.reshape(h, w, c)
            print(f"epoch {epoch:4d}  mse {loss.item():.6f}  "
                  f"psnr {psnr(recon, target):5.2f} dB")

    recon = np.clip(net(features).data.reshape(h, w, c), 0, 1)
    save_image(os.path.join(OUT_DIR, "fit_target.png"), target)
    save_image(os.path.join(OUT_DIR, "fit_recon.png"), recon)
    print(f"wrote {OUT_DIR}/fit_target.png and fit_recon.png")


if __name__ == "__main__":
    main()
