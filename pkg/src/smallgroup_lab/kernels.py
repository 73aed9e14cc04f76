"""Hot loops behind the group and level-set code.

The Cython extension ``_ckernels`` is used when it was built; otherwise the
numpy fallbacks in ``_pykernels`` are selected. ``SMALLGROUP_LAB_PURE=1``
forces the fallback even when the extension is importable.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("SMALLGROUP_LAB_PURE"):
        raise ImportError
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on build
    _impl = _pykernels
    BACKEND = "numpy"


def _idx(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def product_set_table(table, a_idx, b_idx, impl=None):
    """Mask of ``{table[a, b] : a in a_idx, b in b_idx}``."""
    impl = impl or _impl
    return impl.product_set_table(_idx(table), _idx(a_idx), _idx(b_idx))


# The compiled pair loop costs |A||B|; the fallback's vectorised shifts cost
# about min(|A|, |B|) n / 16. Past this density the fallback wins.
DENSE_SUMSET = 16


def sumset_mod(a_mask, b_mask, impl=None):
    """Mask of ``A + B`` in Z/n for boolean masks of length n."""
    a = np.ascontiguousarray(a_mask, dtype=bool).view(np.uint8)
    b = np.ascontiguousarray(b_mask, dtype=bool).view(np.uint8)
    if impl is None:
        impl = _impl
        if max(int(a.sum()), int(b.sum())) * DENSE_SUMSET > len(a):
            impl = _pykernels
    return impl.sumset_mod(a, b)


def associativity_violation(table, impl=None):
    """First triple (x, y, z) with (xy)z != x(yz), or None."""
    impl = impl or _impl
    return impl.associativity_violation(_idx(table))
