from .engine import GraphHandle, GraphRuntime, LoadedGraph, NumpyOnnxRuntime
from .wire import OnnxGraph, OnnxModel, OnnxNode, parse_model

__all__ = [
    "parse_model",
    "OnnxModel",
    "OnnxGraph",
    "OnnxNode",
    "LoadedGraph",
    "NumpyOnnxRuntime",
    "GraphRuntime",
    "GraphHandle",
]
