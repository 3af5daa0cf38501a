"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``PRGF_PURE_PYTHON=1``
to force the numpy fallback. Both backends stay importable as ``compiled``
(``None`` when the extension is not built) and ``pure`` for comparisons.
"""
import os

from . import _pure as pure

try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("PRGF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    backend = compiled
else:
    backend = pure

BACKEND = backend.NAME

normalize_rows = backend.normalize_rows
combine_biased = backend.combine_biased
fd_average = backend.fd_average
F_full = backend.F_full
F_subspace = backend.F_subspace
averaging_loss = backend.averaging_loss
grid_argmax_F = backend.grid_argmax_F
grid_argmax_F_subspace = backend.grid_argmax_F_subspace
grid_argmin_averaging = backend.grid_argmin_averaging


def available_backends():
    """Name -> module for every importable backend."""
    out = {pure.NAME: pure}
    if compiled is not None:
        out[compiled.NAME] = compiled
    return out
