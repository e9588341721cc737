"""Tensor-variate Gaussians with Kronecker-separable covariance and a GP-prior VAE."""
from . import kernels, sparse_precision, tensor_core, tvgauss
from .kernels import PriorSpec, SEKernelParams, build_covariance
from .sparse_precision import BidiagonalCholesky
from .tvgauss import DenseCovariance, PrecisionCholesky, TensorNormalParams, kl_divergence, log_pdf, sample

__version__ = "0.1.0"

__all__ = [
    "kernels", "sparse_precision", "tensor_core", "tvgauss",
    "PriorSpec", "SEKernelParams", "build_covariance", "BidiagonalCholesky",
    "DenseCovariance", "PrecisionCholesky", "TensorNormalParams", "kl_divergence", "log_pdf", "sample",
]
