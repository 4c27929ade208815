"""Graph execution over parsed ONNX models.

The backend contract is intentionally narrow: load a graph from a
file, then run it with named inputs and receive named outputs.  This
keeps the serialized-graph runtime swappable; the implementation here
executes graphs with numpy kernels.  Execution holds no shared mutable
state, so a loaded graph may be run from any number of threads.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Protocol, runtime_checkable

import numpy as np

from ..errors import BackendError
from .ops import KERNELS
from .wire import OnnxModel, parse_model


@runtime_checkable
class GraphHandle(Protocol):
    """A loaded, executable graph."""

    @property
    def input_names(self) -> list[str]: ...

    @property
    def output_names(self) -> list[str]: ...

    def run(
        self, feeds: Mapping[str, np.ndarray]
    ) -> dict[str, np.ndarray]: ...


@runtime_checkable
class GraphRuntime(Protocol):
    """Loads serialized graphs from disk."""

    def load_graph(self, path: str | Path) -> GraphHandle: ...


class LoadedGraph:
    """Executable ONNX graph backed by numpy kernels."""

    def __init__(self, model: OnnxModel, source: str = ""):
        self.model = model
        self.source = source
        graph = model.graph
        unsupported = sorted(
            {n.op_type for n in graph.nodes if n.op_type not in KERNELS}
        )
        if unsupported:
            raise BackendError(
                f"graph {graph.name or source!r} uses unsupported ops: "
                + ", ".join(unsupported)
            )

    @property
    def input_names(self) -> list[str]:
        return list(self.model.graph.input_names)

    @property
    def output_names(self) -> list[str]:
        return list(self.model.graph.output_names)

    def input_shape(self, name: str) -> tuple:
        return self.model.graph.input_shapes.get(name, ())

    def run(self, feeds: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        graph = self.model.graph
        missing = [n for n in graph.input_names if n not in feeds]
        if missing:
            raise BackendError(
                f"graph {graph.name!r} missing inputs: {', '.join(missing)}"
            )
        unknown = [n for n in feeds if n not in graph.input_names]
        if unknown:
            raise BackendError(
                f"graph {graph.name!r} has no inputs named: {', '.join(unknown)}"
            )

        values: dict[str, np.ndarray] = dict(graph.initializers)
        for name, arr in feeds.items():
            values[name] = np.asarray(arr)

        for node in graph.nodes:
            kernel = KERNELS[node.op_type]
            args = []
            for input_name in node.inputs:
                if input_name == "":
                    args.append(None)  # optional input left unbound
                elif input_name in values:
                    args.append(values[input_name])
                else:
                    raise BackendError(
                        f"node {node.name or node.op_type!r} reads "
                        f"{input_name!r} before it is produced"
                    )
            try:
                results = kernel(args, node.attrs)
            except BackendError:
                raise
            except Exception as e:
                raise BackendError(
                    f"node {node.name or node.op_type!r} "
                    f"({node.op_type}) failed in graph {graph.name!r}: {e}"
                ) from e
            for output_name, result in zip(node.outputs, results):
                if output_name:
                    values[output_name] = result

        outputs = {}
        for name in graph.output_names:
            if name not in values:
                raise BackendError(f"graph output {name!r} was never produced")
            outputs[name] = values[name]
        return outputs


class NumpyOnnxRuntime:
    """The shipped GraphRuntime implementation for ONNX files."""

    def load_graph(self, path: str | Path) -> LoadedGraph:
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise BackendError(f"cannot read graph file {path}: {e}") from e
        model = parse_model(data)
        return LoadedGraph(model, source=str(path))
