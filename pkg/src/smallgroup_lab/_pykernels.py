"""Pure numpy versions of the compiled kernels."""
import numpy as np

_CHUNK = 1 << 22


def product_set_table(table, a_idx, b_idx):
    n = table.shape[0]
    out = np.zeros(n, dtype=bool)
    if len(a_idx) == 0 or len(b_idx) == 0:
        return out
    rows = max(1, _CHUNK // len(b_idx))
    for start in range(0, len(a_idx), rows):
        block = table[np.ix_(a_idx[start:start + rows], b_idx)]
        out[block.ravel()] = True
    return out


def sumset_mod(a, b):
    a = a.view(bool)
    b = b.view(bool)
    if a.sum() > b.sum():
        a, b = b, a
    out = np.zeros(len(a), dtype=bool)
    for shift in np.flatnonzero(a):
        out |= np.roll(b, shift)
    return out


def associativity_violation(table):
    n = table.shape[0]
    for x in range(n):
        left = table[table[x]]          # (xy)z indexed [y, z]
        right = table[x][table]         # x(yz) indexed [y, z]
        bad = np.argwhere(left != right)
        if len(bad):
            y, z = bad[0]
            return (x, int(y), int(z))
    return None
