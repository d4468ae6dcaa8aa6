from . import kernels, ops
from .checkpoint import CheckpointError, load_tensors, save_tensors
from .graph import GradCheckReport, Graph, GraphError, grad_check
from .tensor import Tensor, as_tensor, backward, grad_enabled, no_grad

__all__ = [
    "Tensor",
    "Graph",
    "GraphError",
    "GradCheckReport",
    "as_tensor",
    "backward",
    "grad_check",
    "grad_enabled",
    "no_grad",
    "ops",
    "kernels",
    "save_tensors",
    "load_tensors",
    "CheckpointError",
]
