"""S4D dynamic range compressor: inference engine, metrics, and benchmarks."""

from . import bench, container, drc, metrics, model, ssm, stream, wavio  # noqa: F401
from .errors import S4dcError  # noqa: F401

__version__ = "0.1.0"
