"""Robust multi-environment training with a learnable anisotropic
transportation cost, reference baselines, synthetic shift generators, an
exact optimal-transport oracle, and a benchmark harness.
"""

__version__ = "0.1.0"

from ._kernels import KERNEL_NAME as ACTIVE_KERNEL  # noqa: F401
