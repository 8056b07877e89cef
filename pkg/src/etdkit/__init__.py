"""Exponential time differencing integrators with tangent and adjoint solvers.

Names are imported lazily so that ``etd --threads`` can set the BLAS thread
environment before numpy loads.
"""
from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "ContourSpec": "phi", "PhiConfig": "phi", "phi": "phi",
    "SemilinearProblem": "problem", "ToyProblem": "problem", "check_problem": "problem",
    "SCHEMES": "schemes", "TimeGrid": "schemes", "integrate": "schemes", "make_tableau": "schemes",
    "sensitivity_apply": "tangent", "sensitivity_transpose": "adjoint",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
