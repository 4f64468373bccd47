"""Layered, task-adaptive image and video coding on a quantized latent."""

from .errors import (CodecError, CorruptionError, DecodeOrderError, DecodingError,
                     EncodingError, FormatError, InvalidInput, InvalidMaskSet, InvalidWeights,
                     RangeError, SerializationError)
from .image import decode_image, encode_image
from .partition import PredictorConfig
from .tensors import LatentTensor, MaskSet, PixelImage
from .video import VideoConfig, decode_video, encode_video

__version__ = "0.1.0"

__all__ = [
    "CodecError", "CorruptionError", "DecodeOrderError", "DecodingError", "EncodingError",
    "FormatError", "InvalidInput", "InvalidMaskSet", "InvalidWeights", "LatentTensor",
    "MaskSet", "PixelImage", "PredictorConfig", "RangeError", "SerializationError",
    "VideoConfig", "decode_image", "decode_video", "encode_image", "encode_video",
]
