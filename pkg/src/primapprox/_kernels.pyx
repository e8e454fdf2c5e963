# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled hot kernels. Same signatures and results as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, floor, fabs
from libc.stdlib cimport llabs
from libcpp.vector cimport vector

cnp.import_array()

NAME = "cython"


cdef inline long long _gcd(long long a, long long b) noexcept nogil:
    a = llabs(a)
    b = llabs(b)
    while b:
        a, b = b, a % b
    return a


cdef inline double _margin(double c, double w) noexcept nogil:
    return 1e-9 * (1.0 + fabs(c) + w)


def count_primitive_box(int d, long long Q):
    cdef long long total = 0
    cdef vector[long long] idx
    cdef vector[long long] pref
    cdef int i, level
    idx.resize(d, 1)
    pref.resize(d + 1, 0)
    with nogil:
        # prefix gcds: pref[i+1] = gcd(idx[0..i])
        for i in range(d):
            pref[i + 1] = _gcd(pref[i], idx[i])
        while True:
            if pref[d] == 1:
                total += 1
            level = d - 1
            while level >= 0 and idx[level] == Q:
                idx[level] = 1
                level -= 1
            if level < 0:
                break
            idx[level] += 1
            for i in range(level, d):
                pref[i + 1] = _gcd(pref[i], idx[i])
    return total


cdef inline bint _primitive(long long* v, long long[::1] comp, int ncomp, int dim) noexcept nogil:
    cdef int c, i
    cdef long long g
    for c in range(ncomp):
        g = 0
        for i in range(dim):
            if comp[i] == c:
                g = _gcd(g, v[i])
        if g != 1:
            return False
    return True


def enumerate_shells(double[:, ::1] theta, phi, phi_inv, double[::1] y,
                     double[::1] psi_by_shell, long long shell_lo, long long shell_hi,
                     long long[::1] comp, int ncomp, bint constrained):
    cdef int n = theta.shape[0]
    cdef int m = theta.shape[1]
    cdef bint affine = phi is not None
    cdef double[:, ::1] ph
    cdef double[:, ::1] phinv
    cdef double phinv_norm = 0.0
    if affine:
        ph = np.ascontiguousarray(phi, dtype=np.float64)
        phinv = np.ascontiguousarray(phi_inv, dtype=np.float64)
        phinv_norm = float(np.abs(np.asarray(phinv)).max())
    else:
        ph = np.zeros((1, 1))
        phinv = np.zeros((1, 1))

    cdef vector[long long] out_q
    cdef vector[long long] out_p
    cdef vector[double] out_r
    cdef vector[long long] q
    cdef vector[long long] v
    cdef vector[long long] plo
    cdef vector[long long] phi_
    cdef vector[long long] p
    cdef vector[double] t
    cdef vector[double] rhs
    cdef vector[double] c
    q.resize(m)
    v.resize(m + n)
    plo.resize(n)
    phi_.resize(n)
    p.resize(n)
    t.resize(n)
    rhs.resize(n)
    c.resize(n)

    cdef long long s, mx, step, last
    cdef int i, j, level
    cdef double acc, w, psi, marg, r, rmax
    cdef bint empty

    with nogil:
        for s in range(max(shell_lo, 1), shell_hi):
            psi = psi_by_shell[s]
            if affine:
                w = (n * phinv_norm) * psi
            else:
                w = psi
            for j in range(m):
                q[j] = -s
            while True:
                # the prefix q[0..m-2] is fixed here; the last coordinate is
                # free only if the prefix already touches the shell
                mx = 0
                for j in range(m - 1):
                    if llabs(q[j]) > mx:
                        mx = llabs(q[j])
                step = 1 if mx == s else 2 * s
                last = -s
                while last <= s:
                    q[m - 1] = last
                    last += step
                    for i in range(n):
                        acc = 0.0
                        for j in range(m):
                            acc = acc + theta[i, j] * <double>q[j]
                        t[i] = acc
                        rhs[i] = y[i] - acc
                    if affine:
                        for i in range(n):
                            acc = 0.0
                            for j in range(n):
                                acc = acc + phinv[i, j] * rhs[j]
                            c[i] = acc
                    else:
                        for i in range(n):
                            c[i] = rhs[i]
                    empty = False
                    for i in range(n):
                        marg = _margin(c[i], w)
                        plo[i] = <long long>ceil(c[i] - w - marg)
                        phi_[i] = <long long>floor(c[i] + w + marg)
                        if phi_[i] < plo[i]:
                            empty = True
                    if empty:
                        continue
                    for i in range(n):
                        p[i] = plo[i]
                    while True:
                        rmax = 0.0
                        for i in range(n):
                            if affine:
                                acc = 0.0
                                for j in range(n):
                                    acc = acc + ph[i, j] * <double>p[j]
                            else:
                                acc = <double>p[i]
                            r = fabs((t[i] + acc) - y[i])
                            if r > rmax:
                                rmax = r
                        if rmax <= psi:
                            for j in range(m):
                                v[j] = q[j]
                            for i in range(n):
                                v[m + i] = p[i]
                            if (not constrained) or _primitive(&v[0], comp, ncomp, m + n):
                                for j in range(m):
                                    out_q.push_back(q[j])
                                for i in range(n):
                                    out_p.push_back(p[i])
                                out_r.push_back(rmax)
                        level = n - 1
                        while level >= 0 and p[level] == phi_[level]:
                            p[level] = plo[level]
                            level -= 1
                        if level < 0:
                            break
                        p[level] += 1
                level = m - 2
                while level >= 0 and q[level] == s:
                    q[level] = -s
                    level -= 1
                if level < 0:
                    break
                q[level] += 1

    cdef Py_ssize_t K = out_r.size()
    qs = np.empty((K, m), dtype=np.int64)
    ps = np.empty((K, n), dtype=np.int64)
    rs = np.empty(K, dtype=np.float64)
    cdef long long[:, ::1] qv = qs
    cdef long long[:, ::1] pv = ps
    cdef double[::1] rv = rs
    cdef Py_ssize_t k
    for k in range(K):
        for j in range(m):
            qv[k, j] = out_q[k * m + j]
        for i in range(n):
            pv[k, i] = out_p[k * n + i]
        rv[k] = out_r[k]
    return qs, ps, rs


def strip_hit_counts(double[:, :, ::1] thetas, long long[:, ::1] qs, double[::1] psi_q,
                     long long[::1] shell_q, double[::1] y, long long[::1] comp, int ncomp,
                     bint constrained, int nshells):
    cdef Py_ssize_t S = thetas.shape[0]
    cdef int n = thetas.shape[1]
    cdef int m = thetas.shape[2]
    cdef Py_ssize_t K = qs.shape[0]
    out = np.zeros((S, nshells), dtype=np.int64)
    cdef long long[:, ::1] ov = out
    cdef vector[double] t
    cdef vector[long long] plo
    cdef vector[long long] phi_
    cdef vector[long long] p
    cdef vector[long long] v
    t.resize(n)
    plo.resize(n)
    phi_.resize(n)
    p.resize(n)
    v.resize(m + n)
    cdef Py_ssize_t smp, k
    cdef int i, j, level
    cdef double acc, c, psi, marg, r
    cdef bint hit, coord, empty, ok

    with nogil:
        for smp in range(S):
            for k in range(K):
                psi = psi_q[k]
                empty = False
                for i in range(n):
                    acc = 0.0
                    for j in range(m):
                        acc = acc + thetas[smp, i, j] * <double>qs[k, j]
                    t[i] = acc
                    c = y[i] - acc
                    marg = _margin(c, psi)
                    plo[i] = <long long>ceil(c - psi - marg)
                    phi_[i] = <long long>floor(c + psi + marg)
                    if phi_[i] < plo[i]:
                        empty = True
                if empty:
                    continue
                hit = False
                if not constrained:
                    hit = True
                    for i in range(n):
                        coord = False
                        for j in range(plo[i], phi_[i] + 1):
                            r = fabs((t[i] + <double>j) - y[i])
                            if r <= psi:
                                coord = True
                                break
                        if not coord:
                            hit = False
                            break
                else:
                    for i in range(n):
                        p[i] = plo[i]
                    for j in range(m):
                        v[j] = qs[k, j]
                    while True:
                        ok = True
                        for i in range(n):
                            r = fabs((t[i] + <double>p[i]) - y[i])
                            if r > psi:
                                ok = False
                                break
                        if ok:
                            for i in range(n):
                                v[m + i] = p[i]
                            if _primitive(&v[0], comp, ncomp, m + n):
                                hit = True
                                break
                        level = n - 1
                        while level >= 0 and p[level] == phi_[level]:
                            p[level] = plo[level]
                            level -= 1
                        if level < 0:
                            break
                        p[level] += 1
                if hit:
                    ov[smp, shell_q[k]] += 1
    return out
