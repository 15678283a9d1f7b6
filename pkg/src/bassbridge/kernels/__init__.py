"""Hot loops with a compiled backend and a numpy fallback.

The compiled module is picked at import when it was built; otherwise the
numpy versions in :mod:`._pykernels` are used. Both expose the same three
functions, and ``BACKEND`` names the active one. ``correlate_valid`` always
uses numpy's vectorised correlation, which beats the compiled loop.
"""
from . import _pykernels

try:
    from . import _ckernels as _active
    BACKEND = "cython"
except ImportError:  # extension not built
    _active = _pykernels
    BACKEND = "python"

thomas_solve = _active.thomas_solve
heat_steps = _active.heat_steps
correlate_valid = _pykernels.correlate_valid


def available_backends():
    """Return ``{name: module}`` for every importable backend."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["cython"] = _ckernels
    except ImportError:
        pass
    return found

__all__ = ["BACKEND", "thomas_solve", "heat_steps", "correlate_valid", "available_backends"]
