"""Guaranteed (minimax) estimation for elliptic problems with RT0/P0 mixed finite elements."""

from ._hdivmm import (
    ConfigError,
    Error,
    FluxChannel,
    InvalidArgument,
    IoError,
    Mesh,
    MeshError,
    NumericalError,
    Problem,
    ScalarChannel,
    __version__,
    flux_channel,
    run,
    scalar_channel,
)

__all__ = [
    "ConfigError",
    "Error",
    "FluxChannel",
    "InvalidArgument",
    "IoError",
    "Mesh",
    "MeshError",
    "NumericalError",
    "Problem",
    "ScalarChannel",
    "__version__",
    "flux_channel",
    "run",
    "scalar_channel",
]
