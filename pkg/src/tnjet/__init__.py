"""Tensor-network jet classifiers: MPS and TTN models over particle-constituent
features, with post-training fixed-point quantization and a contraction-DAG
hardware cost model."""

__version__ = "0.1.0"

from .tensor import Tensor, ContractionSpec, contract, norm, qr_split

__all__ = [
    "Tensor",
    "ContractionSpec",
    "contract",
    "norm",
    "qr_split",
    "__version__",
]
