"""Kernel backend selection.

The compiled ``_kernels`` extension is used when importable; setting
``RELPOSE_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

if os.environ.get("RELPOSE_PURE_PYTHON", "") not in ("", "0"):
    from ._pykernels import *  # noqa: F401,F403
else:
    try:
        from ._kernels import *  # noqa: F401,F403
    except ImportError:
        from ._pykernels import *  # noqa: F401,F403
