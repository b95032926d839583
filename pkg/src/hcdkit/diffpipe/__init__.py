from .bicubic import BicubicOp, bicubic_down, bicubic_down_adjoint, cubic
from .chain import (
    CHARBONNIER_EPS,
    LOSS_KINDS,
    ActivationTape,
    LearnedDownscaler,
    ModelChain,
    forward,
    grad_input,
    grad_input_full,
    grad_params,
    load_model,
    loss,
    loss_and_grad,
    save_model,
)
from .conv import conv2d, conv2d_backward, depth_to_space, space_to_depth
from .upscaler import ConvLayer, UpscalerParams, format_arch, parse_arch


def make_chain(scale: int = 2, seed: int = 0, arch: str | None = None, learned_down: bool = False,
               channels: int = 3) -> ModelChain:
    """Fresh chain: bicubic (or learned) ``g`` plus a He-initialised upscaler."""
    arch = arch or UpscalerParams.default_arch(scale, channels)
    g = LearnedDownscaler.from_bicubic(channels, scale) if learned_down else BicubicOp(scale)
    return ModelChain(g, UpscalerParams.init(arch, seed))


__all__ = [
    "ActivationTape",
    "BicubicOp",
    "CHARBONNIER_EPS",
    "ConvLayer",
    "LOSS_KINDS",
    "LearnedDownscaler",
    "ModelChain",
    "UpscalerParams",
    "bicubic_down",
    "bicubic_down_adjoint",
    "conv2d",
    "conv2d_backward",
    "cubic",
    "depth_to_space",
    "format_arch",
    "forward",
    "grad_input",
    "grad_input_full",
    "grad_params",
    "load_model",
    "loss",
    "loss_and_grad",
    "make_chain",
    "parse_arch",
    "save_model",
    "space_to_depth",
]
