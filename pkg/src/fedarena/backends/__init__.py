"""Backend selection: compiled Cython kernels when available, numpy otherwise.

Set FEDARENA_BACKEND=python or FEDARENA_BACKEND=cython to force a choice;
the default (auto) prefers the compiled extension.
"""

import os

from . import pure


def _load():
    choice = os.environ.get("FEDARENA_BACKEND", "auto").lower()
    if choice == "python":
        return pure
    try:
        from . import _kernels
    except ImportError:
        if choice == "cython":
            raise RuntimeError(
                "FEDARENA_BACKEND=cython but the compiled extension is not built"
            )
        return pure
    return _kernels


backend = _load()

mlp_forward = backend.mlp_forward
mlp_loss_grads = backend.mlp_loss_grads
BACKEND_NAME = backend.NAME
