# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""FFTW-backed subflow kernels.

The whole operation sequence runs in C: diagonal phase multiplies plus
batched in-place FFTs through cached FFTW plans.  Kinetic table rows
must arrive pre-scaled by 1/M because FFTW's backward transform is
unnormalised.
"""

from libc.math cimport isfinite
from libc.stdint cimport uintptr_t

import numpy as np


cdef extern from "fftw3.h" nogil:
    ctypedef double fftw_complex[2]
    ctypedef void *fftw_plan
    int FFTW_FORWARD
    int FFTW_BACKWARD
    unsigned FFTW_MEASURE
    unsigned FFTW_UNALIGNED
    fftw_plan fftw_plan_many_dft(int rank, const int *n, int howmany,
                                 fftw_complex *inp, const int *inembed,
                                 int istride, int idist,
                                 fftw_complex *out, const int *onembed,
                                 int ostride, int odist,
                                 int sign, unsigned flags)
    void fftw_execute_dft(fftw_plan p, fftw_complex *inp, fftw_complex *out)
    void fftw_destroy_plan(fftw_plan p)


# (batch, M, sign) -> plan pointer, kept for the life of the process.
# Plans are measured once on scratch storage (FFTW_MEASURE clobbers its
# planning buffer) and replayed on caller arrays via new-array execute;
# FFTW_UNALIGNED keeps that legal for any float64 array.  Creation happens
# under the GIL, and concurrent same-plan execution on distinct arrays is
# thread-safe.
cdef dict _plan_cache = {}


cdef fftw_plan _cached_plan(int B, int M, int sign):
    key = (B, M, sign)
    val = _plan_cache.get(key)
    if val is not None:
        return <fftw_plan> <uintptr_t> val
    scratch_arr = np.empty((B, M), dtype=np.complex128)
    cdef double complex[:, ::1] scratch = scratch_arr
    cdef fftw_complex *sbuf = <fftw_complex*> <void*> &scratch[0, 0]
    cdef fftw_plan p = fftw_plan_many_dft(
        1, &M, B, sbuf, NULL, 1, M, sbuf, NULL, 1, M,
        sign, FFTW_MEASURE | FFTW_UNALIGNED)
    _plan_cache[key] = <uintptr_t> p
    return p


cdef inline void _scale_rows(double complex[:, ::1] u, double complex[:, ::1] tables,
                             Py_ssize_t r) noexcept nogil:
    cdef Py_ssize_t b, m
    for b in range(u.shape[0]):
        for m in range(u.shape[1]):
            u[b, m] = u[b, m] * tables[r, m]


cdef inline void _scale_rows_conj(double complex[:, ::1] u, double complex[:, ::1] tables,
                                  Py_ssize_t r) noexcept nogil:
    cdef Py_ssize_t b, m
    for b in range(u.shape[0]):
        for m in range(u.shape[1]):
            u[b, m] = u[b, m] * tables[r, m].conjugate()


cdef inline bint _all_finite(double complex[:, ::1] u) noexcept nogil:
    cdef Py_ssize_t b, m
    for b in range(u.shape[0]):
        for m in range(u.shape[1]):
            if not (isfinite(u[b, m].real) and isfinite(u[b, m].imag)):
                return 0
    return 1


def run_plan(double complex[:, ::1] u,
             const unsigned char[::1] kinds,
             const int[::1] steps,
             const int[::1] index,
             double complex[:, ::1] tables):
    """Apply the subflow sequence to u in place.

    Returns -1, or the index of the first outer step whose end state is
    non-finite (checked once per step).
    """
    cdef Py_ssize_t n_ops = kinds.shape[0]
    cdef int B = <int> u.shape[0]
    cdef int M = <int> u.shape[1]
    if n_ops == 0 or B == 0:
        return -1
    cdef fftw_complex *buf = <fftw_complex*> <void*> &u[0, 0]
    cdef fftw_plan fwd = _cached_plan(B, M, FFTW_FORWARD)
    cdef fftw_plan bwd = _cached_plan(B, M, FFTW_BACKWARD)
    cdef Py_ssize_t i
    cdef int bad = -1
    with nogil:
        for i in range(n_ops):
            if kinds[i] == 0:
                _scale_rows(u, tables, index[i])
            else:
                fftw_execute_dft(fwd, buf, buf)
                _scale_rows(u, tables, index[i])
                fftw_execute_dft(bwd, buf, buf)
            if i + 1 == n_ops or steps[i + 1] != steps[i]:
                if not _all_finite(u):
                    bad = steps[i]
                    break
    return bad


def accumulate_time_grad(double complex[:, ::1] u,
                         double complex[:, ::1] lam,
                         const unsigned char[::1] kinds,
                         const int[::1] index,
                         double complex[:, ::1] tables,
                         const double[::1] vpot,
                         const double[::1] ksq,
                         double[::1] grad):
    """Reverse sweep for d(sum |residual|^2)/d duration_i.

    On entry u is the final forward state and lam the residual; both are
    rolled back in place through the inverse subflows while grad fills up
    back to front.
    """
    cdef Py_ssize_t n_ops = kinds.shape[0]
    cdef int B = <int> u.shape[0]
    cdef int M = <int> u.shape[1]
    if n_ops == 0 or B == 0:
        return
    cdef fftw_complex *ubuf = <fftw_complex*> <void*> &u[0, 0]
    cdef fftw_complex *lbuf = <fftw_complex*> <void*> &lam[0, 0]
    cdef fftw_plan fwd = _cached_plan(B, M, FFTW_FORWARD)
    cdef fftw_plan bwd = _cached_plan(B, M, FFTW_BACKWARD)
    cdef Py_ssize_t i, b, m
    cdef Py_ssize_t r
    cdef double g
    cdef double complex z
    with nogil:
        for i in range(n_ops - 1, -1, -1):
            r = index[i]
            if kinds[i] == 0:
                g = 0.0
                for b in range(B):
                    for m in range(M):
                        z = lam[b, m].conjugate() * u[b, m]
                        g += vpot[m] * z.imag
                grad[i] = 2.0 * g
                _scale_rows_conj(u, tables, r)
                _scale_rows_conj(lam, tables, r)
            else:
                fftw_execute_dft(fwd, ubuf, ubuf)
                fftw_execute_dft(fwd, lbuf, lbuf)
                g = 0.0
                for b in range(B):
                    for m in range(M):
                        z = lam[b, m].conjugate() * u[b, m]
                        g += ksq[m] * z.imag
                grad[i] = 2.0 * g / M
                # conj of the pre-scaled table carries the 1/M the
                # unnormalised backward transform needs
                _scale_rows_conj(u, tables, r)
                _scale_rows_conj(lam, tables, r)
                fftw_execute_dft(bwd, ubuf, ubuf)
                fftw_execute_dft(bwd, lbuf, lbuf)
