"""
PatchAD

Multi-scale patch MLP-Mixer time-series anomaly detection, with a small
autograd substrate and the evaluation metrics used to judge detectors.
"""

import importlib.metadata
import warnings

try:
    __version__ = importlib.metadata.version("patchad")
except importlib.metadata.PackageNotFoundError:
    __version__ = "0.0.0+unknown"
    warnings.warn("patchad is not installed, version information is unavailable")
