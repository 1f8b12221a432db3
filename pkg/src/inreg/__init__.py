"""Pairwise 2D image registration with implicit coordinate networks.

Registration fits a small sinusoidal MLP that maps normalized pixel
coordinates to a dense displacement field; the decomposition modes fit
two more networks that split the moving image into a support component
(content shared with the fixed image) and a residual component
(content only present in the moving image).
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor  # noqa: F401
from .engine import (  # noqa: F401
    RunConfig,
    RunResult,
    evaluate_pair,
    make_synthetic_pair,
    register,
)
from .siren import Siren  # noqa: F401
