"""Numerical laboratory for random Schrödinger operators on quasi-one-dimensional boxes."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError, GuardError, NumericError, Q1dError, ResolutionWarning, ResonanceWarning,
)
from .lattice import (  # noqa: E402
    NoiseSpec, SpectrumSample, SymmetricOperator, assemble_box, cartesian_product,
    diagonalize, direct_spectrum, overlap_gram, path_graph, scale,
)
from .transfer import build_frame, secular_function, transfer_spectrum  # noqa: E402
