"""Kernel backend selection.

The hot per-task sweeps have two interchangeable implementations: a compiled
Cython extension and a pure-Python reference.  The compiled one is used when
importable unless ``CECFLOW_PURE_PYTHON=1`` is set in the environment.
"""

import os

from . import _pykernels

if os.environ.get("CECFLOW_PURE_PYTHON", "") == "1":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND

topo_order = _impl.topo_order
sweep_data = _impl.sweep_data
sweep_result = _impl.sweep_result
marginal_result = _impl.marginal_result
marginal_data = _impl.marginal_data
project_row = _impl.project_row
