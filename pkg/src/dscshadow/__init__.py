"""Direction-aware spatial context features for shadow detection and removal.

A self-contained, CPU-scale differentiable library plus CLI: a fixed-operator
float64 autodiff core (with compiled hot kernels), the direction-aware
spatial context block, a multi-scale detection/removal network with deep
supervision, class-balanced losses, detection/removal metrics, least-squares
color compensation, and a synthetic-scene training pipeline.
"""

from .tensor import Graph, Tensor, backward
from .kernels import backend_name

__version__ = "0.1.0"

__all__ = ["Graph", "Tensor", "backward", "backend_name", "__version__"]
