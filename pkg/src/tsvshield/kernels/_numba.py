"""numba-compiled versions of the hot loops (see ``_numpy`` for contracts)."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def rasterize_rects(x0, y0, x1, y1, weight, nx, ny, px, py):
    out = np.zeros((ny, nx))
    for k in range(x0.shape[0]):
        ix0 = max(int(math.floor(x0[k] / px)), 0)
        ix1 = min(int(math.ceil(x1[k] / px)), nx)
        iy0 = max(int(math.floor(y0[k] / py)), 0)
        iy1 = min(int(math.ceil(y1[k] / py)), ny)
        for iy in range(iy0, iy1):
            oy = min(y1[k], (iy + 1) * py) - max(y0[k], iy * py)
            if oy <= 0.0:
                continue
            for ix in range(ix0, ix1):
                ox = min(x1[k], (ix + 1) * px) - max(x0[k], ix * px)
                if ox > 0.0:
                    out[iy, ix] += weight[k] * (oy * ox)
    return out


@njit(cache=True)
def sp_pack(gp, gm, w, h):
    n = gp.shape[0]
    pos_m = np.empty(n, dtype=np.int64)
    for k in range(n):
        pos_m[gm[k]] = k
    x = np.zeros(n)
    y = np.zeros(n)
    for i in range(n):
        b = gp[i]
        best = 0.0
        for j in range(i):
            a = gp[j]
            if pos_m[a] < pos_m[b]:
                v = x[a] + w[a]
                if v > best:
                    best = v
        x[b] = best
    for i in range(n - 1, -1, -1):
        b = gp[i]
        best = 0.0
        for j in range(i + 1, n):
            a = gp[j]
            if pos_m[a] < pos_m[b]:
                v = y[a] + h[a]
                if v > best:
                    best = v
        y[b] = best
    return x, y


@njit(cache=True)
def longest_path(order, in_ptr, in_src, in_delay, out_ptr, out_dst, out_delay,
                 node_delay, clock):
    n = node_delay.shape[0]
    arr = np.zeros(n)
    for k in range(order.shape[0]):
        v = order[k]
        best = 0.0
        for e in range(in_ptr[v], in_ptr[v + 1]):
            c = arr[in_src[e]] + in_delay[e]
            if c > best:
                best = c
        arr[v] = best + node_delay[v]
    req = np.full(n, clock * 1.0)
    for k in range(order.shape[0] - 1, -1, -1):
        v = order[k]
        for e in range(out_ptr[v], out_ptr[v + 1]):
            d = out_dst[e]
            c = req[d] - node_delay[d] - out_delay[e]
            if c < req[v]:
                req[v] = c
    return arr, req


@njit(cache=True)
def class_distance_sums(labels, k):
    ny, nx = labels.shape
    hx = np.zeros((k, nx))
    hy = np.zeros((k, ny))
    for iy in range(ny):
        for ix in range(nx):
            c = labels[iy, ix]
            hx[c, ix] += 1.0
            hy[c, iy] += 1.0
    totx = np.zeros(nx)
    toty = np.zeros(ny)
    for c in range(k):
        for a in range(nx):
            totx[a] += hx[c, a]
        for a in range(ny):
            toty[a] += hy[c, a]
    intra = np.zeros(k)
    cross = np.zeros(k)
    for c in range(k):
        s_in = 0.0
        s_all = 0.0
        for a in range(nx):
            if hx[c, a] == 0.0:
                continue
            for b in range(nx):
                d = abs(a - b)
                s_in += hx[c, a] * hx[c, b] * d
                s_all += hx[c, a] * totx[b] * d
        for a in range(ny):
            if hy[c, a] == 0.0:
                continue
            for b in range(ny):
                d = abs(a - b)
                s_in += hy[c, a] * hy[c, b] * d
                s_all += hy[c, a] * toty[b] * d
        intra[c] = 0.5 * s_in
        cross[c] = s_all - s_in
    return intra, cross


@njit(cache=True)
def _residual(t, p, gx, gy, gv, ga):
    _, ny, nx = p.shape
    tot = 0.0
    for l in range(2):
        o = 1 - l
        for iy in range(ny):
            for ix in range(nx):
                tc = t[l, iy, ix]
                s = p[l, iy, ix] - ga[l] * tc + gv[iy, ix] * (t[o, iy, ix] - tc)
                if ix > 0:
                    s += gx * (t[l, iy, ix - 1] - tc)
                if ix < nx - 1:
                    s += gx * (t[l, iy, ix + 1] - tc)
                if iy > 0:
                    s += gy * (t[l, iy - 1, ix] - tc)
                if iy < ny - 1:
                    s += gy * (t[l, iy + 1, ix] - tc)
                tot += abs(s)
    return tot


@njit(cache=True)
def sor_solve(p, gx, gy, gv, ga, omega, tol_abs, max_iter, check_every):
    """Lexicographic Gauss-Seidel SOR over both layers."""
    _, ny, nx = p.shape
    t = np.zeros_like(p)
    resid = _residual(t, p, gx, gy, gv, ga)
    sweeps = 0
    while sweeps < max_iter and resid > tol_abs:
        for l in range(2):
            o = 1 - l
            for iy in range(ny):
                for ix in range(nx):
                    num = p[l, iy, ix] + gv[iy, ix] * t[o, iy, ix]
                    den = ga[l] + gv[iy, ix]
                    if ix > 0:
                        num += gx * t[l, iy, ix - 1]
                        den += gx
                    if ix < nx - 1:
                        num += gx * t[l, iy, ix + 1]
                        den += gx
                    if iy > 0:
                        num += gy * t[l, iy - 1, ix]
                        den += gy
                    if iy < ny - 1:
                        num += gy * t[l, iy + 1, ix]
                        den += gy
                    t[l, iy, ix] += omega * (num / den - t[l, iy, ix])
        sweeps += 1
        if sweeps % check_every == 0 or sweeps == max_iter:
            resid = _residual(t, p, gx, gy, gv, ga)
    return t, resid, sweeps


@njit(cache=True)
def assign_sites(free, tx, ty, max_radius):
    sy, sx = free.shape
    n = tx.shape[0]
    ox = np.full(n, -1, dtype=np.int64)
    oy = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        cx = tx[k]
        cy = ty[k]
        for r in range(max_radius + 1):
            xa = max(cx - r, 0)
            xb = min(cx + r, sx - 1)
            ya = max(cy - r, 0)
            yb = min(cy + r, sy - 1)
            best = -1
            bx = -1
            by = -1
            for yy in range(ya, yb + 1):
                for xx in range(xa, xb + 1):
                    if not free[yy, xx]:
                        continue
                    if max(abs(xx - cx), abs(yy - cy)) != r:
                        continue
                    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
                    if best < 0 or d2 < best:
                        best = d2
                        bx = xx
                        by = yy
            if best >= 0:
                ox[k] = bx
                oy[k] = by
                free[by, bx] = False
                break
    return ox, oy


@njit(cache=True)
def nested_means_bounds(s, eps):
    n = s.size
    st_lo = np.empty(n + 1, dtype=np.int64)
    st_hi = np.empty(n + 1, dtype=np.int64)
    bounds = np.empty(n, dtype=np.int64)
    nb = 0
    top = 0
    st_lo[0] = 0
    st_hi[0] = n
    top = 1
    while top > 0:
        top -= 1
        lo = st_lo[top]
        hi = st_hi[top]
        m = hi - lo
        if m < 2:
            bounds[nb] = lo
            nb += 1
            continue
        mean = s[lo:hi].mean()
        acc = 0.0
        for i in range(lo, hi):
            d = s[i] - mean
            acc += d * d
        if np.sqrt(acc / m) <= eps:
            bounds[nb] = lo
            nb += 1
            continue
        cut = lo + np.searchsorted(s[lo:hi], mean, side="left")
        if cut == lo or cut == hi:
            bounds[nb] = lo
            nb += 1
            continue
        st_lo[top] = cut
        st_hi[top] = hi
        top += 1
        st_lo[top] = lo
        st_hi[top] = cut
        top += 1
    return np.sort(bounds[:nb])


@njit(cache=True)
def grow_trees(adj, feas, cap):
    n, W = adj.shape
    total = n * cap
    masks = np.zeros((total, W), dtype=np.uint64)
    fms = np.zeros(total, dtype=np.int64)
    pars = np.full(total, -1, dtype=np.int64)
    roots = np.zeros(total, dtype=np.int64)
    front = np.zeros((cap, W), dtype=np.uint64)
    one = np.uint64(1)
    cnt = 0
    for r in range(n):
        if feas[r] == 0:
            continue
        base = cnt
        masks[base, r >> 6] = one << np.uint64(r & 63)
        fms[base] = feas[r]
        pars[base] = -1
        roots[base] = r
        for w in range(W):
            front[0, w] = adj[r, w]
        k = 1
        head = 0
        while head < k and k < cap:
            ph = base + head
            for j in range(n):
                w = j >> 6
                bit = one << np.uint64(j & 63)
                if (front[head, w] & bit) == 0 or (masks[ph, w] & bit) != 0:
                    continue
                nf = fms[ph] & feas[j]
                if nf == 0:
                    continue
                dup = False
                for q in range(k):
                    same = True
                    for ww in range(W):
                        v = masks[ph, ww]
                        if ww == w:
                            v = v | bit
                        if masks[base + q, ww] != v:
                            same = False
                            break
                    if same:
                        dup = True
                        break
                if dup:
                    continue
                c = base + k
                for ww in range(W):
                    masks[c, ww] = masks[ph, ww]
                    front[k, ww] = front[head, ww] | adj[j, ww]
                masks[c, w] = masks[c, w] | bit
                fms[c] = nf
                pars[c] = head
                roots[c] = r
                k += 1
                if k >= cap:
                    break
            head += 1
        cnt = base + k
    return masks[:cnt], fms[:cnt], pars[:cnt], roots[:cnt]


@njit(cache=True)
def greedy_cover(masks, order):
    C, W = masks.shape
    keep = np.zeros(C, dtype=np.bool_)
    taken = np.zeros(W, dtype=np.uint64)
    for c in order:
        hit = False
        for w in range(W):
            if masks[c, w] & taken[w]:
                hit = True
                break
        if not hit:
            keep[c] = True
            for w in range(W):
                taken[w] = taken[w] | masks[c, w]
    return keep
