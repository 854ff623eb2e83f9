"""Kernel backend selection.

Tries the compiled extension, falls back to NumPy.  Override with the
``PANELBOOT_BACKEND`` environment variable: ``c`` (require the extension)
or ``python`` (force the fallback).
"""

from __future__ import annotations

import os

from . import _kernels_py

_requested = os.environ.get("PANELBOOT_BACKEND", "").strip().lower()

if _requested == "python":
    kernels = _kernels_py
    BACKEND = "python"
elif _requested in ("", "c"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        kernels = _compiled
        BACKEND = "c"
    except ImportError:
        if _requested == "c":
            raise ImportError(
                "PANELBOOT_BACKEND=c but the compiled extension is not available; "
                "reinstall with a working C toolchain or unset the variable"
            ) from None
        kernels = _kernels_py
        BACKEND = "python"
else:
    raise ImportError(
        f"unknown PANELBOOT_BACKEND={_requested!r}; use 'c' or 'python'"
    )

__all__ = ["kernels", "BACKEND"]
