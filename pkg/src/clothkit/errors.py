"""Exception hierarchy shared by the library and the CLI.

Each category maps to a CLI exit code: config errors exit 2, data errors
exit 3, numerical failures exit 4.
"""


class ClothkitError(Exception):
    category = "error"
    exit_code = 1


class ConfigError(ClothkitError):
    """Malformed config file, bad flag value, unknown option."""

    category = "config"
    exit_code = 2


class DataError(ClothkitError):
    """Invalid or missing input data (meshes, manifests, maps)."""

    category = "data"
    exit_code = 3


class MeshFormatError(DataError):
    """OBJ parse failure; carries the offending line number."""

    def __init__(self, path, line_number, message):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = str(path)
        self.line_number = line_number


class TopologyError(DataError):
    """Meshes expected to share topology do not."""


class AtlasError(DataError):
    """UV atlas unusable for baking (overlapping islands)."""


class NumericalError(ClothkitError):
    """Non-finite energies, singular systems, solver breakdown."""

    category = "numerical"
    exit_code = 4


class SolverError(NumericalError):
    pass


class SingularTransformError(NumericalError):
    """A blended skinning transform is not invertible."""

    def __init__(self, vertex_indices, message=None):
        idx = list(vertex_indices)
        msg = message or f"singular blended transform at vertices {idx[:8]}"
        super().__init__(msg)
        self.vertex_indices = idx
