"""Generative video compression with a conditional diffusion frame predictor."""

from .container import EncodedContainer, read_container, write_container
from .pipeline import CopyLastPredictor, EncoderConfig, decode_video, encode_video, verify_threshold
from .video import Frame, VideoSequence, synth_dataset

__all__ = ["EncodedContainer", "read_container", "write_container", "CopyLastPredictor", "EncoderConfig",
           "decode_video", "encode_video", "verify_threshold", "Frame", "VideoSequence", "synth_dataset"]
__version__ = "0.1.0"
