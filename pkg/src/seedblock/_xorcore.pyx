# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled XOR kernel: ``out[i] = data[i] ^ key[i % len(key)]``."""

from cpython.bytes cimport PyBytes_FromStringAndSize, PyBytes_AS_STRING
from libc.string cimport memcpy


def xor_tile(const unsigned char[::1] data, const unsigned char[::1] key):
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t k = key.shape[0]
    cdef Py_ssize_t i, start, stop
    if k == 0:
        raise ValueError("key must not be empty")
    out = PyBytes_FromStringAndSize(NULL, n)
    cdef unsigned char *dst = <unsigned char *> PyBytes_AS_STRING(out)
    if n == 0:
        return out
    with nogil:
        start = 0
        # whole key-sized blocks; the inner loop is contiguous so it vectorises
        while start < n:
            stop = start + k
            if stop > n:
                stop = n
            for i in range(stop - start):
                dst[start + i] = data[start + i] ^ key[i]
            start = stop
    return out
