"""Pure-numpy versions of the hot loops.

Every function here has a twin with the same signature in ``_numba``; the
two are interchangeable and the test-suite checks them against each other.
"""
import numpy as np


def rasterize_rects(x0, y0, x1, y1, weight, nx, ny, px, py):
    """Accumulate ``weight * overlap_area`` of each rectangle into a (ny, nx) grid."""
    out = np.zeros((ny, nx))
    for k in range(len(x0)):
        ix0 = max(int(np.floor(x0[k] / px)), 0)
        ix1 = min(int(np.ceil(x1[k] / px)), nx)
        iy0 = max(int(np.floor(y0[k] / py)), 0)
        iy1 = min(int(np.ceil(y1[k] / py)), ny)
        if ix1 <= ix0 or iy1 <= iy0:
            continue
        ex = np.arange(ix0, ix1 + 1) * px
        ey = np.arange(iy0, iy1 + 1) * py
        ox = np.minimum(x1[k], ex[1:]) - np.maximum(x0[k], ex[:-1])
        oy = np.minimum(y1[k], ey[1:]) - np.maximum(y0[k], ey[:-1])
        np.clip(ox, 0.0, None, out=ox)
        np.clip(oy, 0.0, None, out=oy)
        out[iy0:iy1, ix0:ix1] += weight[k] * np.outer(oy, ox)
    return out


def sp_pack(gp, gm, w, h):
    """Sequence-pair packing: lower-left coordinates from two permutations.

    ``a`` is left of ``b`` iff it precedes ``b`` in both sequences; ``a`` is
    below ``b`` iff it follows ``b`` in ``gp`` and precedes it in ``gm``.
    """
    n = len(gp)
    pos_m = np.empty(n, dtype=np.int64)
    pos_m[gm] = np.arange(n)
    x = np.zeros(n)
    y = np.zeros(n)
    rank_m = pos_m[gp]
    for i in range(n):
        b = gp[i]
        if i:
            prev = gp[:i]
            sel = rank_m[:i] < pos_m[b]
            if sel.any():
                a = prev[sel]
                x[b] = np.max(x[a] + w[a])
    for i in range(n - 1, -1, -1):
        b = gp[i]
        if i < n - 1:
            nxt = gp[i + 1:]
            sel = rank_m[i + 1:] < pos_m[b]
            if sel.any():
                a = nxt[sel]
                y[b] = np.max(y[a] + h[a])
    return x, y


def longest_path(order, in_ptr, in_src, in_delay, out_ptr, out_dst, out_delay,
                 node_delay, clock):
    n = len(node_delay)
    arr = np.zeros(n)
    for v in order:
        lo, hi = in_ptr[v], in_ptr[v + 1]
        best = 0.0
        if hi > lo:
            best = max(0.0, float(np.max(arr[in_src[lo:hi]] + in_delay[lo:hi])))
        arr[v] = best + node_delay[v]
    req = np.full(n, float(clock))
    for v in order[::-1]:
        lo, hi = out_ptr[v], out_ptr[v + 1]
        if hi > lo:
            d = out_dst[lo:hi]
            req[v] = min(req[v], float(np.min(req[d] - node_delay[d] - out_delay[lo:hi])))
    return arr, req


def class_distance_sums(labels, k):
    """Per-class Manhattan distance sums on a bin grid.

    Returns ``(intra, cross)``: the sum over unordered member pairs, and the
    sum over (member, non-member) pairs, both in bin units.
    """
    ny, nx = labels.shape
    lab = labels.astype(np.int64)
    hx = np.bincount((lab * nx + np.arange(nx)[None, :]).ravel(), minlength=k * nx).reshape(k, nx).astype(float)
    hy = np.bincount((lab * ny + np.arange(ny)[:, None]).ravel(), minlength=k * ny).reshape(k, ny).astype(float)
    ax = np.arange(nx, dtype=float)
    ay = np.arange(ny, dtype=float)
    dx = np.abs(ax[:, None] - ax[None, :])
    dy = np.abs(ay[:, None] - ay[None, :])
    hxd = hx @ dx
    hyd = hy @ dy
    intra = 0.5 * (np.einsum("ka,ka->k", hxd, hx) + np.einsum("ka,ka->k", hyd, hy))
    to_all = hxd @ hx.sum(axis=0) + hyd @ hy.sum(axis=0)
    return intra, to_all - 2.0 * intra


def _sor_residual(t, p, gx, gy, gv, ga):
    lap = np.zeros_like(t)
    lap[:, :, 1:] += gx * (t[:, :, :-1] - t[:, :, 1:])
    lap[:, :, :-1] += gx * (t[:, :, 1:] - t[:, :, :-1])
    lap[:, 1:, :] += gy * (t[:, :-1, :] - t[:, 1:, :])
    lap[:, :-1, :] += gy * (t[:, 1:, :] - t[:, :-1, :])
    lap[0] += gv * (t[1] - t[0])
    lap[1] += gv * (t[0] - t[1])
    lap[0] -= ga[0] * t[0]
    lap[1] -= ga[1] * t[1]
    return float(np.abs(p + lap).sum())


def sor_solve(p, gx, gy, gv, ga, omega, tol_abs, max_iter, check_every):
    """Red-black SOR on the two-layer grid network; returns (rise, residual, sweeps)."""
    _, ny, nx = p.shape
    t = np.zeros_like(p)
    il, iy, ix = np.indices(p.shape)
    colors = [((il + iy + ix) % 2) == c for c in (0, 1)]
    diag = np.zeros_like(p)
    diag[:, :, 1:] += gx
    diag[:, :, :-1] += gx
    diag[:, 1:, :] += gy
    diag[:, :-1, :] += gy
    diag[0] += gv + ga[0]
    diag[1] += gv + ga[1]
    nb = np.empty_like(p)
    resid = _sor_residual(t, p, gx, gy, gv, ga)
    sweeps = 0
    while sweeps < max_iter and resid > tol_abs:
        for mask in colors:
            nb[:] = 0.0
            nb[:, :, 1:] += gx * t[:, :, :-1]
            nb[:, :, :-1] += gx * t[:, :, 1:]
            nb[:, 1:, :] += gy * t[:, :-1, :]
            nb[:, :-1, :] += gy * t[:, 1:, :]
            nb[0] += gv * t[1]
            nb[1] += gv * t[0]
            gs = (p + nb) / diag
            t[mask] += omega * (gs[mask] - t[mask])
        sweeps += 1
        if sweeps % check_every == 0 or sweeps == max_iter:
            resid = _sor_residual(t, p, gx, gy, gv, ga)
    return t, resid, sweeps


def assign_sites(free, tx, ty, max_radius):
    """Claim the nearest free site for each target in order (Chebyshev rings,
    Euclidean tie-break). ``free`` is modified in place. Unplaceable targets get -1."""
    sy, sx = free.shape
    ox = np.full(len(tx), -1, dtype=np.int64)
    oy = np.full(len(tx), -1, dtype=np.int64)
    for k in range(len(tx)):
        cx, cy = int(tx[k]), int(ty[k])
        for r in range(max_radius + 1):
            xa, xb = max(cx - r, 0), min(cx + r, sx - 1)
            ya, yb = max(cy - r, 0), min(cy + r, sy - 1)
            if xa > xb or ya > yb:
                continue
            win = free[ya:yb + 1, xa:xb + 1]
            if not win.any():
                continue
            yy, xx = np.nonzero(win)
            yy = yy + ya
            xx = xx + xa
            ring = np.maximum(np.abs(xx - cx), np.abs(yy - cy)) == r
            if not ring.any():
                continue
            yy, xx = yy[ring], xx[ring]
            d2 = (xx - cx) ** 2 + (yy - cy) ** 2
            j = int(np.argmin(d2))
            ox[k], oy[k] = xx[j], yy[j]
            free[yy[j], xx[j]] = False
            break
    return ox, oy


def nested_means_bounds(s, eps):
    """Class start offsets of nested-means partitioning over sorted values ``s``."""
    bounds = []
    stack = [(0, s.size)]
    while stack:
        lo, hi = stack.pop()
        seg = s[lo:hi]
        if seg.size < 2 or seg.std() <= eps:
            bounds.append(lo)
            continue
        cut = lo + int(np.searchsorted(seg, seg.mean(), side="left"))
        if cut == lo or cut == hi:
            bounds.append(lo)
            continue
        stack.append((cut, hi))
        stack.append((lo, cut))
    return np.array(sorted(bounds), dtype=np.int64)


def _row_int(row):
    return int.from_bytes(row.astype("<u8").tobytes(), "little")


def _int_row(v, W):
    return np.frombuffer(v.to_bytes(8 * W, "little"), dtype="<u8").astype(np.uint64)


def grow_trees(adj, feas, cap):
    """Breadth-first volume trees for every root over bitmask rows.

    ``adj`` is (n, W) uint64 neighbour words. Returns member words, feasible
    masks, parent positions (within the root's tree) and the root of every
    node, trees concatenated in root order.
    """
    n, W = adj.shape
    adj_i = [_row_int(adj[i]) for i in range(n)]
    masks, fms, pars, roots = [], [], [], []
    for r in range(n):
        if not feas[r]:
            continue
        tm = [1 << r]
        tf = [int(feas[r])]
        tp = [-1]
        fr = [adj_i[r]]
        seen = {tm[0]}
        head = 0
        while head < len(tm) and len(tm) < cap:
            m, f, front = tm[head], tf[head], fr[head]
            bits = front & ~m
            j = 0
            while bits:
                if bits & 1:
                    nf = f & int(feas[j])
                    nm = m | (1 << j)
                    if nf and nm not in seen:
                        seen.add(nm)
                        tm.append(nm)
                        tf.append(nf)
                        tp.append(head)
                        fr.append(front | adj_i[j])
                        if len(tm) >= cap:
                            break
                bits >>= 1
                j += 1
            head += 1
        masks += tm
        fms += tf
        pars += tp
        roots += [r] * len(tm)
    out = np.zeros((len(masks), W), dtype=np.uint64)
    for k, m in enumerate(masks):
        out[k] = _int_row(m, W)
    return (out, np.array(fms, dtype=np.int64), np.array(pars, dtype=np.int64),
            np.array(roots, dtype=np.int64))


def greedy_cover(masks, order):
    """Walk candidates in ``order`` and keep each one disjoint from those kept."""
    C, W = masks.shape
    keep = np.zeros(C, dtype=np.bool_)
    taken = np.zeros(W, dtype=np.uint64)
    for c in order:
        if not np.any(masks[c] & taken):
            keep[c] = True
            taken |= masks[c]
    return keep
