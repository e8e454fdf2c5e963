"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the compiled kernels are tested against. Floating-point work is
done in the same operation order as the compiled code so both backends return
bit-identical results.
"""
from __future__ import annotations

import numpy as np

NAME = "python"


def candidate_margin(center, width):
    # candidate windows are widened before rounding; every candidate is re-verified
    return 1e-9 * (1.0 + np.abs(center) + width)


def count_primitive_box(d, Q):
    ks = np.arange(1, Q + 1, dtype=np.int64)
    g = ks
    for _ in range(d - 1):
        g = np.gcd.outer(g.ravel(), ks)
    return int(np.count_nonzero(g == 1))


def shell_box(shell_lo, shell_hi, m):
    """Integer vectors with ``shell_lo <= |q| < shell_hi``, ordered by shell then lexicographically."""
    r = shell_hi - 1
    if r < 1 or shell_hi <= shell_lo:
        return np.zeros((0, m), dtype=np.int64)
    axes = np.indices((2 * r + 1,) * m, dtype=np.int64).reshape(m, -1).T - r
    shells = np.abs(axes).max(axis=1)
    keep = (shells >= max(shell_lo, 1)) & (shells < shell_hi)
    axes, shells = axes[keep], shells[keep]
    order = np.argsort(shells, kind="stable")
    return np.ascontiguousarray(axes[order])


def _linear(mat, vecs):
    # row-by-row accumulation in column order: acc = 0.0; acc += a_ij * v_j
    out = np.zeros((vecs.shape[0], mat.shape[0]), dtype=np.float64)
    for i in range(mat.shape[0]):
        acc = np.zeros(vecs.shape[0], dtype=np.float64)
        for j in range(mat.shape[1]):
            acc = acc + mat[i, j] * vecs[:, j].astype(np.float64)
        out[:, i] = acc
    return out


def _primitive_mask(vecs, comp, ncomp):
    ok = np.ones(vecs.shape[0], dtype=bool)
    for c in range(ncomp):
        cols = np.flatnonzero(comp == c)
        g = np.gcd.reduce(vecs[:, cols], axis=1)
        ok &= g == 1
    return ok


def enumerate_shells(theta, phi, phi_inv, y, psi_by_shell, shell_lo, shell_hi,
                     comp, ncomp, constrained):
    """All ``(q, p)`` with ``shell_lo <= |q| < shell_hi`` and residual within psi.

    ``phi is None`` selects the normalized system ``Theta q + p - y``; otherwise
    the residual is ``Theta q + Phi p - y`` and candidates are drawn from the box
    of half-width ``n |Phi^-1| psi`` around ``Phi^-1 (y - Theta q)``.
    Returns ``(qs, ps, residuals)``.
    """
    n, m = theta.shape
    qs = shell_box(shell_lo, shell_hi, m)
    if qs.shape[0] == 0:
        return qs, np.zeros((0, n), dtype=np.int64), np.zeros(0)
    shells = np.abs(qs).max(axis=1)
    psi = psi_by_shell[shells]
    t = _linear(theta, qs)
    rhs = y[None, :] - t
    if phi is None:
        centers = rhs
        width = psi[:, None] * np.ones((1, n))
    else:
        centers = _linear(phi_inv, rhs)
        width = (n * np.abs(phi_inv).max() * psi)[:, None] * np.ones((1, n))
    marg = candidate_margin(centers, width)
    lo = np.ceil(centers - width - marg).astype(np.int64)
    hi = np.floor(centers + width + marg).astype(np.int64)
    counts = np.maximum(hi - lo + 1, 0)

    rows = np.arange(qs.shape[0])
    pcols = np.zeros((qs.shape[0], 0), dtype=np.int64)
    for i in range(n):
        cnt = counts[rows, i]
        parent = np.repeat(np.arange(rows.size), cnt)
        starts = np.cumsum(cnt) - cnt
        offs = np.arange(parent.size) - np.repeat(starts, cnt)
        new_rows = rows[parent]
        pcols = np.column_stack([pcols[parent], lo[new_rows, i] + offs])
        rows = new_rows
    q_rows = qs[rows]
    t_rows = t[rows]
    if phi is None:
        s_rows = pcols.astype(np.float64)
    else:
        s_rows = _linear(phi, pcols)
    resid = np.abs((t_rows + s_rows) - y[None, :]).max(axis=1)
    ok = resid <= psi[rows]
    if constrained:
        ok &= _primitive_mask(np.column_stack([q_rows, pcols]), comp, ncomp)
    return (np.ascontiguousarray(q_rows[ok]), np.ascontiguousarray(pcols[ok]),
            np.ascontiguousarray(resid[ok]))


def strip_hit_counts(thetas, qs, psi_q, shell_q, y, comp, ncomp, constrained, nshells):
    """Per-sample, per-shell counts of the ``q`` whose strip contains the sample.

    ``thetas`` has shape ``(S, n, m)``. With ``constrained`` the strip is the
    union over primitive ``(q, p)`` (the E-sets); otherwise over all ``p``
    (the F-sets). Returns an int64 array of shape ``(S, nshells)``.
    """
    S, n, m = thetas.shape
    out = np.zeros((S, nshells), dtype=np.int64)
    for k in range(qs.shape[0]):
        q = qs[k]
        psi = psi_q[k]
        t = np.zeros((S, n), dtype=np.float64)
        for i in range(n):
            acc = np.zeros(S, dtype=np.float64)
            for j in range(m):
                acc = acc + thetas[:, i, j] * float(q[j])
            t[:, i] = acc
        centers = y[None, :] - t
        marg = candidate_margin(centers, psi)
        lo = np.ceil(centers - psi - marg).astype(np.int64)
        hi = np.floor(centers + psi + marg).astype(np.int64)
        span = int((hi - lo).max(initial=-1)) + 1
        if span <= 0:
            continue
        hit = np.zeros(S, dtype=bool)
        if not constrained:
            hit[:] = True
            for i in range(n):
                coord = np.zeros(S, dtype=bool)
                for off in range(span):
                    p = lo[:, i] + off
                    r = np.abs((t[:, i] + p.astype(np.float64)) - y[i])
                    coord |= (p <= hi[:, i]) & (r <= psi)
                hit &= coord
        else:
            grids = np.indices((span,) * n).reshape(n, -1).T
            for offs in grids:
                p = lo + offs[None, :]
                inside = (p <= hi).all(axis=1)
                r = np.abs((t + p.astype(np.float64)) - y[None, :]).max(axis=1)
                cand = inside & (r <= psi) & ~hit
                if cand.any():
                    idx = np.flatnonzero(cand)
                    v = np.column_stack([np.broadcast_to(q, (idx.size, m)), p[idx]])
                    prim = _primitive_mask(v, comp, ncomp)
                    hit[idx[prim]] = True
        out[:, shell_q[k]] += hit
    return out
