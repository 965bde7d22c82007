# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled mining hot kernels: fixed-capacity top-k heap and packed-id set.

Mirrors the pure-Python module ``_heapcore_py``; see there for the ordering
and update semantics shared by both implementations.
"""

import numpy as np

cimport numpy as cnp
from cpython.mem cimport PyMem_Free, PyMem_Malloc
from cython.operator cimport dereference
from libc.stdint cimport int64_t
from libcpp.unordered_map cimport unordered_map
from libcpp.unordered_set cimport unordered_set

IMPLEMENTATION = "compiled"

cdef double NEG_INF = float("-inf")
cdef int64_t DUMMY_PACKED = <int64_t>1 << 62


cdef class PackedSet:
    """Hash set of packed triple ids with bulk loading."""

    cdef unordered_set[int64_t] items

    def add(self, int64_t packed):
        self.items.insert(packed)

    def add_array(self, cnp.ndarray packed):
        cdef int64_t[::1] view = np.ascontiguousarray(packed, dtype=np.int64)
        cdef Py_ssize_t i
        for i in range(view.shape[0]):
            self.items.insert(view[i])

    def contains(self, int64_t packed):
        return self.items.count(packed) != 0

    def __contains__(self, int64_t packed):
        return self.items.count(packed) != 0

    def __len__(self):
        return self.items.size()


cdef inline bint _worse(double s_a, int64_t p_a, double s_b, int64_t p_b) nogil:
    return s_a < s_b or (s_a == s_b and p_a > p_b)


cdef class TopKHeap:
    """Fixed-capacity min-heap seeded with -inf dummies; root is the worst kept."""

    cdef readonly Py_ssize_t capacity
    cdef readonly Py_ssize_t filled
    cdef double* _scores
    cdef int64_t* _packed
    cdef unordered_map[int64_t, Py_ssize_t] pos

    def __cinit__(self, Py_ssize_t capacity):
        if capacity < 1:
            raise ValueError("heap capacity must be >= 1")
        self.capacity = capacity
        self.filled = 0
        self._scores = <double*>PyMem_Malloc(capacity * sizeof(double))
        self._packed = <int64_t*>PyMem_Malloc(capacity * sizeof(int64_t))
        if self._scores == NULL or self._packed == NULL:
            raise MemoryError()
        cdef Py_ssize_t i
        for i in range(capacity):
            self._scores[i] = NEG_INF
            self._packed[i] = DUMMY_PACKED

    def __dealloc__(self):
        if self._scores != NULL:
            PyMem_Free(self._scores)
        if self._packed != NULL:
            PyMem_Free(self._packed)

    def root_score(self):
        return self._scores[0]

    def root_key(self):
        return self._scores[0], self._packed[0]

    cdef void _sift_down(self, Py_ssize_t i):
        cdef Py_ssize_t n = self.capacity
        cdef double s = self._scores[i]
        cdef int64_t p = self._packed[i]
        cdef Py_ssize_t left, right, worst
        while True:
            left = 2 * i + 1
            if left >= n:
                break
            worst = left
            right = left + 1
            if right < n and _worse(self._scores[right], self._packed[right],
                                    self._scores[left], self._packed[left]):
                worst = right
            if _worse(self._scores[worst], self._packed[worst], s, p):
                self._scores[i] = self._scores[worst]
                self._packed[i] = self._packed[worst]
                if self._packed[i] != DUMMY_PACKED:
                    self.pos[self._packed[i]] = i
                i = worst
            else:
                break
        self._scores[i] = s
        self._packed[i] = p
        if p != DUMMY_PACKED:
            self.pos[p] = i

    cdef int _offer(self, int64_t packed, double score):
        cdef unordered_map[int64_t, Py_ssize_t].iterator it = self.pos.find(packed)
        cdef Py_ssize_t at
        cdef int64_t root_p
        if it != self.pos.end():
            at = dereference(it).second
            if score > self._scores[at]:
                self._scores[at] = score
                self._sift_down(at)
                return 2
            return 0
        root_p = self._packed[0]
        if _worse(self._scores[0], root_p, score, packed):
            if root_p != DUMMY_PACKED:
                self.pos.erase(root_p)
            else:
                self.filled += 1
            self._scores[0] = score
            self._packed[0] = packed
            self._sift_down(0)
            return 1
        return 0

    def offer(self, int64_t packed, double score):
        return self._offer(packed, score)

    def push_batch(self, cnp.ndarray scores, cnp.ndarray packed, PackedSet visited):
        cdef double[::1] s = np.ascontiguousarray(scores, dtype=np.float64)
        cdef int64_t[::1] p = np.ascontiguousarray(packed, dtype=np.int64)
        cdef Py_ssize_t i, n = s.shape[0]
        cdef long inserted = 0, updated = 0
        cdef int res
        for i in range(n):
            if visited.items.count(p[i]) != 0:
                continue
            res = self._offer(p[i], s[i])
            if res == 1:
                inserted += 1
            elif res == 2:
                updated += 1
        return inserted, updated

    def contents(self):
        """Non-dummy entries sorted by (score desc, packed asc)."""
        cdef Py_ssize_t i, n = 0
        for i in range(self.capacity):
            if self._packed[i] != DUMMY_PACKED:
                n += 1
        ids = np.empty(n, np.int64)
        scs = np.empty(n, np.float64)
        cdef int64_t[::1] idv = ids
        cdef double[::1] scv = scs
        cdef Py_ssize_t j = 0
        for i in range(self.capacity):
            if self._packed[i] != DUMMY_PACKED:
                idv[j] = self._packed[i]
                scv[j] = self._scores[i]
                j += 1
        order = np.lexsort((ids, -scs))
        return ids[order], scs[order]

    def __len__(self):
        return self.filled
