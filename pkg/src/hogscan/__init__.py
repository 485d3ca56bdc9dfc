"""
hogscan: HOG descriptors + linear SVM human detection.

Train a window classifier, scan images over a scale pyramid, and measure
detection rate, false detections and per-frame time.
"""

__version__ = "0.1.0"
__author__ = "hogscan contributors"
__license__ = "MIT"

from hogscan.config import Settings, load_settings
from hogscan.detect import Detection, DetectParams, detect, nms
from hogscan.errors import HogscanError
from hogscan.evaluation import Annotation, EvalReport, evaluate, parse_annotations, sweep
from hogscan.hog import CLASSIC, REALTIME, HogConfig, descriptor_len, window_descriptor
from hogscan.raster import GrayImage, RgbImage, decode_image, load_image
from hogscan.svm import LinearModel, TrainingSet, TrainParams, fit, load_model, save_model, train

__all__ = [
    "__version__",
    "Annotation",
    "CLASSIC",
    "Detection",
    "DetectParams",
    "EvalReport",
    "GrayImage",
    "HogConfig",
    "HogscanError",
    "LinearModel",
    "REALTIME",
    "RgbImage",
    "Settings",
    "TrainingSet",
    "TrainParams",
    "decode_image",
    "descriptor_len",
    "detect",
    "evaluate",
    "fit",
    "load_image",
    "load_model",
    "load_settings",
    "nms",
    "parse_annotations",
    "save_model",
    "sweep",
    "train",
    "window_descriptor",
]
