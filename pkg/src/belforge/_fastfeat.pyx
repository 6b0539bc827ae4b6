# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled character n-gram hashing kernel.

Must stay bit-compatible with belforge._pyfeat: FNV-1a 64-bit over the
UTF-8 bytes of each character n-gram, modulo the bucket count.
"""

from cpython.mem cimport PyMem_Malloc, PyMem_Free
from libc.stdint cimport uint64_t

cdef uint64_t FNV_OFFSET = <uint64_t>0xcbf29ce484222325ULL
cdef uint64_t FNV_PRIME = <uint64_t>0x100000001b3ULL


def ngram_hash_counts(str text, int n_min, int n_max, uint64_t buckets):
    """Return {bucket: count} for all char n-grams of lengths n_min..n_max."""
    cdef bytes data = text.encode("utf-8")
    cdef const unsigned char* buf = data
    cdef Py_ssize_t nchars = len(text)
    cdef Py_ssize_t nbytes = len(data)
    cdef Py_ssize_t i, b, lo, hi, j, start
    cdef int n
    cdef uint64_t h
    cdef object key
    cdef dict counts = {}

    # byte offset of each character (UTF-8 substrings are byte slices)
    cdef Py_ssize_t* offs = <Py_ssize_t*> PyMem_Malloc((nchars + 1) * sizeof(Py_ssize_t))
    if offs == NULL:
        raise MemoryError()
    try:
        b = 0
        for i in range(nchars):
            offs[i] = b
            c = ord(text[i])
            if c < 0x80:
                b += 1
            elif c < 0x800:
                b += 2
            elif c < 0x10000:
                b += 3
            else:
                b += 4
        offs[nchars] = nbytes

        for n in range(n_min, n_max + 1):
            if n < 1:
                continue
            for start in range(nchars - n + 1):
                lo = offs[start]
                hi = offs[start + n]
                h = FNV_OFFSET
                for j in range(lo, hi):
                    h = h ^ <uint64_t>buf[j]
                    h = h * FNV_PRIME
                key = h % buckets
                if key in counts:
                    counts[key] = counts[key] + 1.0
                else:
                    counts[key] = 1.0
    finally:
        PyMem_Free(offs)
    return counts
