"""Backend selection for the hot simulation kernels.

The compiled extension (`_speedups`, built from `_speedups.pyx` via
`setup_speedups.py`) is used when importable; otherwise the pure numpy
twin takes over.  Setting WFDUAL_PURE_KERNELS=1 forces the fallback, which
is how the benchmark and the parity tests compare the two.
"""

import os

from . import _pure

if os.environ.get("WFDUAL_PURE_KERNELS"):
    _impl = _pure
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND
em_advance = _impl.em_advance
gillespie_finals = _impl.gillespie_finals
make_kernel_model = _pure.make_kernel_model
apply_em_step = _pure.apply_em_step

__all__ = ["BACKEND", "em_advance", "gillespie_finals", "make_kernel_model", "apply_em_step"]
