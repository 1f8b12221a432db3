"""Sinusoidal coordinate MLP with a mid-network skip connection.

The network maps encoded coordinates to its outputs through
``num_hidden`` sine layers followed by a linear head.  Each layer
computes sin(omega * (z @ W - b)); after the layer at ``skip_index``
(1-based) the original input features are concatenated back onto the
activations, which counters the spectral washing-out of deep sine
stacks.

Hidden weights are drawn from U(-r, r) with r = sqrt(6 / (fan_in *
omega^2)), which keeps pre-activations in the stable range of the sine
regardless of depth.  The linear head is drawn from U(-head_scale,
head_scale) so the network starts out emitting near-zero values
(near-identity deformation, near-black image).  Biases start at zero.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Siren:
    def __init__(
        self,
        in_dim,
        out_dim,
        hidden_dim=256,
        num_hidden=5,
        omega=30.0,
        skip_index=None,
        head_scale=1e-4,
        rng=None,
    ):
        if num_hidden < 1:
            raise ValueError("need at least one hidden layer")
        if rng is None:
            rng = np.random.default_rng()
        if skip_index is None:
            skip_index = (num_hidden + 1) // 2
        if not 0 < skip_index <= num_hidden:
            raise ValueError(f"skip_index {skip_index} outside 1..{num_hidden}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden_dim = hidden_dim
        self.num_hidden = num_hidden
        self.omega = float(omega)
        self.skip_index = skip_index
        self.head_scale = float(head_scale)

        self.weights = []
        self.biases = []
        for fan_in, fan_out in self.layer_dims():
            if len(self.weights) < num_hidden:
                r = np.sqrt(6.0 / (fan_in * self.omega**2))
            else:
                r = self.head_scale
            w = rng.uniform(-r, r, size=(fan_in, fan_out))
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))

    def layer_dims(self):
        """(fan_in, fan_out) per layer, hidden layers then the linear head."""
        dims = []
        width = self.in_dim
        for layer in range(1, self.num_hidden + 1):
            dims.append((width, self.hidden_dim))
            width = self.hidden_dim
            if layer == self.skip_index:
                width += self.in_dim
        dims.append((width, self.out_dim))
        return dims

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def __call__(self, features):
        """Apply to encoded coordinates [B, in_dim]; returns [B, out_dim]."""
        z0 = features if isinstance(features, Tensor) else Tensor(features)
        if z0.shape[1] != self.in_dim:
            raise ad.ShapeError(
                f"expected input width {self.in_dim}, got {z0.shape[1]}"
            )
        z = z0
        for layer in range(self.num_hidden):
            pre = z @ self.weights[layer] - self.biases[layer]
            z = ad.sin(self.omega * pre)
            if layer + 1 == self.skip_index:
                z = ad.concat([z, z0], axis=1)
        return z @ self.weights[-1] - self.biases[-1]
