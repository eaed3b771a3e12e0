"""Conditionally-independent pixel synthesis.

Coordinate-based image generators in which every pixel is computed
independently from its (x, y) position and a shared style vector, plus
the machinery around them: a small deterministic autodiff engine,
adversarial training at desk scale, flexible grid sampling (patches,
foveation, super-resolution, cylindrical panoramas), and spectral
diagnostics.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, no_grad, backward, grad, second_order_grad  # noqa: F401
from .optim import Adam, AdamState, adam_init, adam_step  # noqa: F401
from .gradcheck import finite_diff_check  # noqa: F401
