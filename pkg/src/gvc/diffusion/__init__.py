"""Conditional denoising diffusion predictor: schedule, network, training, sampling."""

from .schedule import NoiseSchedule, make_schedule
from .sampling import DiffusionPredictor, TorchEpsModel, ZeroEpsModel, sample_next_frames

__all__ = ["NoiseSchedule", "make_schedule", "DiffusionPredictor", "TorchEpsModel", "ZeroEpsModel",
           "sample_next_frames"]
