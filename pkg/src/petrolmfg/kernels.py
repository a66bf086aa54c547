"""Backend selection for the best-reply kernels.

The compiled extension is used when importable; set ``PETROLMFG_PURE=1`` to
force the numpy implementation. Both expose ``best_replies`` and
``simulate_prices`` with identical signatures and convergence rules.
"""

import os

from . import _fallback

if os.environ.get("PETROLMFG_PURE", "").strip() not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "numpy" if _impl is _fallback else "cython"

best_replies = _impl.best_replies
simulate_prices = _impl.simulate_prices
