"""Interpretable convolutional seizure detection on multichannel EEG."""

__version__ = "0.1.0"

TARGET_FS = 256
WINDOW_SAMPLES = 1280
WINDOW_STRIDE = 640
PART_SAMPLES = 15360

CHANNELS = ("F7-T7", "F8-T8", "T7-P7", "T8-P8")
