from .image import COLORSPACES, Image, crop_to_multiple
from .io import ImageFormatError, load_image, quantize, save_image
from .metrics import PSNR_CAP, psnr, rgb_to_y, rgb_to_y_array, rgb_to_ycbcr, ssim, ssim_map

__all__ = [
    "COLORSPACES",
    "Image",
    "ImageFormatError",
    "PSNR_CAP",
    "crop_to_multiple",
    "load_image",
    "psnr",
    "quantize",
    "rgb_to_y",
    "rgb_to_y_array",
    "rgb_to_ycbcr",
    "save_image",
    "ssim",
    "ssim_map",
]
