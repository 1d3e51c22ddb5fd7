"""Differentiable array substrate: tensors, gradients, and network blocks."""

from .tensor import (
    Parameter,
    Tensor,
    add,
    as_tensor,
    bilinear_sample,
    clip,
    concat,
    conv2d,
    cosine_similarity,
    embedding,
    exp,
    getitem,
    l2_normalize,
    layer_norm,
    log,
    logsumexp,
    matmul,
    maximum,
    mean,
    mul,
    power,
    relu,
    reshape,
    sigmoid,
    softmax_axis,
    sqrt,
    sum_,
    transpose,
)
from .gradcheck import grad_check
from .blocks import Conv2d, LayerNorm, Linear, Module, TransformerBlock, sinusoid_1d, sinusoid_2d

__all__ = [
    "Parameter",
    "Tensor",
    "add",
    "as_tensor",
    "bilinear_sample",
    "clip",
    "concat",
    "conv2d",
    "cosine_similarity",
    "embedding",
    "exp",
    "getitem",
    "grad_check",
    "l2_normalize",
    "layer_norm",
    "log",
    "logsumexp",
    "matmul",
    "maximum",
    "mean",
    "mul",
    "power",
    "relu",
    "reshape",
    "sigmoid",
    "softmax_axis",
    "sqrt",
    "sum_",
    "transpose",
    "Conv2d",
    "LayerNorm",
    "Linear",
    "Module",
    "TransformerBlock",
    "sinusoid_1d",
    "sinusoid_2d",
]
