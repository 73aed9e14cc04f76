# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled inner loops; see ``kernels.py`` for the public wrappers."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def product_set_table(const cnp.int64_t[:, :] table, const cnp.int64_t[:] a_idx,
                      const cnp.int64_t[:] b_idx):
    cdef Py_ssize_t n = table.shape[0]
    cdef Py_ssize_t i, j, na = a_idx.shape[0], nb = b_idx.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[:] o = out
    cdef cnp.int64_t x
    for i in range(na):
        x = a_idx[i]
        for j in range(nb):
            o[table[x, b_idx[j]]] = 1
    return out.view(np.bool_)


def sumset_mod(const cnp.uint8_t[:] a, const cnp.uint8_t[:] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, k
    cdef cnp.int64_t[:] ia = np.flatnonzero(np.asarray(a)).astype(np.int64)
    cdef cnp.int64_t[:] ib = np.flatnonzero(np.asarray(b)).astype(np.int64)
    out = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[:] o = out
    for i in range(ia.shape[0]):
        for j in range(ib.shape[0]):
            k = ia[i] + ib[j]
            if k >= n:
                k -= n
            o[k] = 1
    return out.view(np.bool_)


def associativity_violation(const cnp.int64_t[:, :] table):
    cdef Py_ssize_t n = table.shape[0]
    cdef Py_ssize_t x, y, z
    cdef cnp.int64_t xy
    for x in range(n):
        for y in range(n):
            xy = table[x, y]
            for z in range(n):
                if table[xy, z] != table[x, table[y, z]]:
                    return (x, y, z)
    return None
