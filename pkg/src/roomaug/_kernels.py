"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Every public kernel exists twice: once in :data:`numpy_impl` (vectorized
numpy, or plain Python loops where vectorizing buys nothing) and once in
:data:`numba_impl` (``@njit`` loops). The module-level names dispatch to the
numba versions unless numba is missing or ``ROOMAUG_DISABLE_NUMBA=1`` is set.

Box footprints are passed as ``(n, 4, 2)`` corner arrays in counter-clockwise
order. Reductions inside each kernel run sequentially per output element, so
results do not depend on the numba thread count.
"""

from __future__ import annotations

import math
import os
import warnings
import types

import numpy as np

RAY_TOL = 1e-9
OVERLAP_TOL = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)
_LOG_HALF = math.log(0.5)


def _env_disabled() -> bool:
    return os.environ.get("ROOMAUG_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}


# ---------------------------------------------------------------------------
# scalar helpers shared by both paths (plain Python; numba compiles them too)
# ---------------------------------------------------------------------------


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _point_seg(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    ll = ex * ex + ey * ey
    if ll == 0.0:
        dx = px - ax
        dy = py - ay
        return math.sqrt(dx * dx + dy * dy)
    t = ((px - ax) * ex + (py - ay) * ey) / ll
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    dx = px - (ax + t * ex)
    dy = py - (ay + t * ey)
    return math.sqrt(dx * dx + dy * dy)


def _seg_seg(p1x, p1y, p2x, p2y, q1x, q1y, q2x, q2y):
    o1 = _cross(p2x - p1x, p2y - p1y, q1x - p1x, q1y - p1y)
    o2 = _cross(p2x - p1x, p2y - p1y, q2x - p1x, q2y - p1y)
    o3 = _cross(q2x - q1x, q2y - q1y, p1x - q1x, p1y - q1y)
    o4 = _cross(q2x - q1x, q2y - q1y, p2x - q1x, p2y - q1y)
    if ((o1 > 0.0 and o2 < 0.0) or (o1 < 0.0 and o2 > 0.0)) and (
        (o3 > 0.0 and o4 < 0.0) or (o3 < 0.0 and o4 > 0.0)
    ):
        return 0.0
    d = _point_seg(p1x, p1y, q1x, q1y, q2x, q2y)
    d = min(d, _point_seg(p2x, p2y, q1x, q1y, q2x, q2y))
    d = min(d, _point_seg(q1x, q1y, p1x, p1y, p2x, p2y))
    d = min(d, _point_seg(q2x, q2y, p1x, p1y, p2x, p2y))
    return d


def _quad_area(c):
    s = 0.0
    for i in range(4):
        j = (i + 1) % 4
        s += c[i, 0] * c[j, 1] - c[j, 0] * c[i, 1]
    return 0.5 * s


def _in_quad(px, py, c):
    # inclusive; caller guarantees c is CCW with positive area
    for i in range(4):
        j = (i + 1) % 4
        if _cross(c[j, 0] - c[i, 0], c[j, 1] - c[i, 1], px - c[i, 0], py - c[i, 1]) < 0.0:
            return False
    return True


def _box_box(a, b):
    best = np.inf
    for i in range(4):
        i2 = (i + 1) % 4
        for j in range(4):
            j2 = (j + 1) % 4
            d = _seg_seg(a[i, 0], a[i, 1], a[i2, 0], a[i2, 1], b[j, 0], b[j, 1], b[j2, 0], b[j2, 1])
            if d < best:
                best = d
    if best > 0.0:
        if _quad_area(b) > 1e-15 and _in_quad(a[0, 0], a[0, 1], b):
            return 0.0
        if _quad_area(a) > 1e-15 and _in_quad(b[0, 0], b[0, 1], a):
            return 0.0
    return best


def _ray_seg(ox, oy, dx, dy, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    wx = ax - ox
    wy = ay - oy
    den = _cross(dx, dy, ex, ey)
    scale = math.sqrt(ex * ex + ey * ey)
    if abs(den) > 1e-12 * max(scale, 1e-300):
        g = _cross(wx, wy, ex, ey) / den
        u = _cross(wx, wy, dx, dy) / den
        return g >= -RAY_TOL and u >= -RAY_TOL and u <= 1.0 + RAY_TOL
    # parallel: hit only when collinear and some part of the segment lies ahead
    if abs(_cross(wx, wy, dx, dy)) > RAY_TOL * max(scale, 1.0):
        return False
    t0 = wx * dx + wy * dy
    t1 = (bx - ox) * dx + (by - oy) * dy
    return max(t0, t1) >= -RAY_TOL


def _ray_box(ox, oy, dx, dy, cx, cy, ax, ay, h0, h1):
    rx = ox - cx
    ry = oy - cy
    # local frame: a and b = a rotated +90 degrees
    lo0 = rx * ax + ry * ay
    lo1 = -rx * ay + ry * ax
    ld0 = dx * ax + dy * ay
    ld1 = -dx * ay + dy * ax
    tmin = 0.0
    tmax = np.inf
    for k in range(2):
        lo = lo0 if k == 0 else lo1
        ld = ld0 if k == 0 else ld1
        h = h0 if k == 0 else h1
        if abs(ld) < 1e-15:
            if lo < -h - RAY_TOL or lo > h + RAY_TOL:
                return False
        else:
            t1 = (-h - lo) / ld
            t2 = (h - lo) / ld
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
    return tmax >= tmin - RAY_TOL


def _sat_overlap(a, b):
    if _quad_area(a) <= 1e-15 or _quad_area(b) <= 1e-15:
        return False
    for which in range(2):
        poly = a if which == 0 else b
        for e in range(2):
            nx = -(poly[e + 1, 1] - poly[e, 1])
            ny = poly[e + 1, 0] - poly[e, 0]
            nn = math.sqrt(nx * nx + ny * ny)
            if nn == 0.0:
                continue
            nx /= nn
            ny /= nn
            amin = np.inf
            amax = -np.inf
            bmin = np.inf
            bmax = -np.inf
            for k in range(4):
                pa = a[k, 0] * nx + a[k, 1] * ny
                pb = b[k, 0] * nx + b[k, 1] * ny
                amin = min(amin, pa)
                amax = max(amax, pa)
                bmin = min(bmin, pb)
                bmax = max(bmax, pb)
            if min(amax, bmax) - max(amin, bmin) <= OVERLAP_TOL:
                return False
    return True


def _clip_area(a, b):
    # Sutherland-Hodgman: clip convex CCW quad a against convex CCW quad b
    if _quad_area(a) <= 1e-15 or _quad_area(b) <= 1e-15:
        return 0.0
    px = np.empty(16)
    py = np.empty(16)
    qx = np.empty(16)
    qy = np.empty(16)
    n = 4
    for k in range(4):
        px[k] = a[k, 0]
        py[k] = a[k, 1]
    for e in range(4):
        e2 = (e + 1) % 4
        ex = b[e2, 0] - b[e, 0]
        ey = b[e2, 1] - b[e, 1]
        m = 0
        for k in range(n):
            k2 = (k + 1) % n
            sa = _cross(ex, ey, px[k] - b[e, 0], py[k] - b[e, 1])
            sb = _cross(ex, ey, px[k2] - b[e, 0], py[k2] - b[e, 1])
            if sa >= 0.0:
                qx[m] = px[k]
                qy[m] = py[k]
                m += 1
            if (sa >= 0.0) != (sb >= 0.0):
                t = sa / (sa - sb)
                qx[m] = px[k] + t * (px[k2] - px[k])
                qy[m] = py[k] + t * (py[k2] - py[k])
                m += 1
        n = m
        if n == 0:
            return 0.0
        for k in range(n):
            px[k] = qx[k]
            py[k] = qy[k]
    s = 0.0
    for k in range(n):
        k2 = (k + 1) % n
        s += px[k] * py[k2] - px[k2] * py[k]
    return abs(0.5 * s)


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _np_point_segment_distances(points, segs):
    p = points[:, None, :]
    a = segs[None, :, 0, :]
    e = segs[None, :, 1, :] - a
    ll = np.sum(e * e, axis=-1)
    safe = np.where(ll == 0.0, 1.0, ll)
    t = np.clip(np.sum((p - a) * e, axis=-1) / safe, 0.0, 1.0)
    t = np.where(ll == 0.0, 0.0, t)
    d = p - (a + t[..., None] * e)
    return np.sqrt(np.sum(d * d, axis=-1))


def _np_box_box_distances(cq, ct):
    out = np.empty((cq.shape[0], ct.shape[0]))
    for i in range(cq.shape[0]):
        for j in range(ct.shape[0]):
            out[i, j] = _box_box(cq[i], ct[j])
    return out


def _np_ray_segment_hits(origins, dirs, segs):
    o = origins[:, None, :]
    d = dirs[:, None, :]
    a = segs[None, :, 0, :]
    e = segs[None, :, 1, :] - a
    w = a - o
    den = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
    scale = np.sqrt(np.sum(e * e, axis=-1))
    wxe = w[..., 0] * e[..., 1] - w[..., 1] * e[..., 0]
    wxd = w[..., 0] * d[..., 1] - w[..., 1] * d[..., 0]
    regular = np.abs(den) > 1e-12 * np.maximum(scale, 1e-300)
    safe = np.where(regular, den, 1.0)
    g = wxe / safe
    u = wxd / safe
    hit_regular = (g >= -RAY_TOL) & (u >= -RAY_TOL) & (u <= 1.0 + RAY_TOL)
    collinear = np.abs(wxd) <= RAY_TOL * np.maximum(scale, 1.0)
    t0 = np.sum(w * d, axis=-1)
    t1 = np.sum((segs[None, :, 1, :] - o) * d, axis=-1)
    hit_parallel = collinear & (np.maximum(t0, t1) >= -RAY_TOL)
    return np.where(regular, hit_regular, hit_parallel)


def _np_ray_box_hits(origins, dirs, centers, axes, halfs):
    r = origins[:, None, :] - centers[None, :, :]
    ax = axes[None, :, 0]
    ay = axes[None, :, 1]
    lo = np.stack([r[..., 0] * ax + r[..., 1] * ay, -r[..., 0] * ay + r[..., 1] * ax], axis=-1)
    dx = dirs[:, None, 0]
    dy = dirs[:, None, 1]
    ld = np.stack([dx * ax + dy * ay, -dx * ay + dy * ax], axis=-1)
    h = np.broadcast_to(halfs[None, :, :], lo.shape)
    flat = np.abs(ld) < 1e-15
    outside_flat = flat & ((lo < -h - RAY_TOL) | (lo > h + RAY_TOL))
    safe = np.where(flat, 1.0, ld)
    t1 = (-h - lo) / safe
    t2 = (h - lo) / safe
    tlo = np.where(flat, -np.inf, np.minimum(t1, t2))
    thi = np.where(flat, np.inf, np.maximum(t1, t2))
    tmin = np.maximum(np.max(tlo, axis=-1), 0.0)
    tmax = np.min(thi, axis=-1)
    return (tmax >= tmin - RAY_TOL) & ~np.any(outside_flat, axis=-1)


def _np_footprint_overlaps(cq, ct):
    out = np.zeros((cq.shape[0], ct.shape[0]), dtype=np.bool_)
    for i in range(cq.shape[0]):
        for j in range(ct.shape[0]):
            out[i, j] = _sat_overlap(cq[i], ct[j])
    return out


def _np_overlap_areas(cq, ct):
    out = np.zeros((cq.shape[0], ct.shape[0]))
    for i in range(cq.shape[0]):
        for j in range(ct.shape[0]):
            out[i, j] = _clip_area(cq[i], ct[j])
    return out


def _np_kde_log_pdf(queries, obs, bw, discrete, chunk=64):
    n = obs.shape[0]
    out = np.empty(queries.shape[0])
    cont = ~discrete
    log_h = np.log(bw)
    lam = np.where(discrete, bw, 0.5)
    log_same = np.log1p(-lam)
    log_lam = np.log(lam)
    for s in range(0, queries.shape[0], chunk):
        q = queries[s : s + chunk]
        diff = q[:, None, :] - obs[None, :, :]
        z = diff / bw
        lk_c = -0.5 * z * z - log_h - 0.5 * _LOG_2PI
        ad = np.abs(diff)
        lk_d = np.where(ad < 1e-9, log_same, _LOG_HALF + log_same + ad * log_lam)
        lk = np.where(cont, lk_c, lk_d)
        row = np.sum(lk, axis=-1)
        mx = np.max(row, axis=1, keepdims=True)
        out[s : s + chunk] = mx[:, 0] + np.log(np.sum(np.exp(row - mx), axis=1)) - math.log(n)
    return out


numpy_impl = types.SimpleNamespace(
    point_segment_distances=_np_point_segment_distances,
    box_box_distances=_np_box_box_distances,
    ray_segment_hits=_np_ray_segment_hits,
    ray_box_hits=_np_ray_box_hits,
    footprint_overlaps=_np_footprint_overlaps,
    overlap_areas=_np_overlap_areas,
    kde_log_pdf=_np_kde_log_pdf,
    name="numpy",
)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


def _build_numba():
    import numba
    from numba import njit, prange

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the service calls kernels from several Python threads at once
        numba.config.THREADING_LAYER = "threadsafe"
    # an old system TBB is probed first and skipped in favour of OpenMP
    warnings.filterwarnings("ignore", message="The TBB threading layer requires", category=numba.NumbaWarning)

    jit = njit(cache=True)
    cross = jit(_cross)

    point_seg = njit(cache=True)(_point_seg)
    seg_seg = _rebind(_seg_seg, {"_cross": cross, "_point_seg": point_seg})
    quad_area = jit(_quad_area)
    in_quad = _rebind(_in_quad, {"_cross": cross})
    box_box = _rebind(_box_box, {"_seg_seg": seg_seg, "_quad_area": quad_area, "_in_quad": in_quad})
    ray_seg = _rebind(_ray_seg, {"_cross": cross})
    ray_box = jit(_ray_box)
    sat = _rebind(_sat_overlap, {"_quad_area": quad_area})
    clip = _rebind(_clip_area, {"_cross": cross, "_quad_area": quad_area})

    @njit(cache=True, parallel=True)
    def point_segment_distances(points, segs):
        out = np.empty((points.shape[0], segs.shape[0]))
        for i in prange(points.shape[0]):
            for j in range(segs.shape[0]):
                out[i, j] = point_seg(
                    points[i, 0], points[i, 1], segs[j, 0, 0], segs[j, 0, 1], segs[j, 1, 0], segs[j, 1, 1]
                )
        return out

    @njit(cache=True, parallel=True)
    def box_box_distances(cq, ct):
        out = np.empty((cq.shape[0], ct.shape[0]))
        for i in prange(cq.shape[0]):
            for j in range(ct.shape[0]):
                out[i, j] = box_box(cq[i], ct[j])
        return out

    @njit(cache=True, parallel=True)
    def ray_segment_hits(origins, dirs, segs):
        out = np.zeros((origins.shape[0], segs.shape[0]), dtype=np.bool_)
        for i in prange(origins.shape[0]):
            for j in range(segs.shape[0]):
                out[i, j] = ray_seg(
                    origins[i, 0], origins[i, 1], dirs[i, 0], dirs[i, 1],
                    segs[j, 0, 0], segs[j, 0, 1], segs[j, 1, 0], segs[j, 1, 1],
                )
        return out

    @njit(cache=True, parallel=True)
    def ray_box_hits(origins, dirs, centers, axes, halfs):
        out = np.zeros((origins.shape[0], centers.shape[0]), dtype=np.bool_)
        for i in prange(origins.shape[0]):
            for j in range(centers.shape[0]):
                out[i, j] = ray_box(
                    origins[i, 0], origins[i, 1], dirs[i, 0], dirs[i, 1],
                    centers[j, 0], centers[j, 1], axes[j, 0], axes[j, 1], halfs[j, 0], halfs[j, 1],
                )
        return out

    @njit(cache=True, parallel=True)
    def footprint_overlaps(cq, ct):
        out = np.zeros((cq.shape[0], ct.shape[0]), dtype=np.bool_)
        for i in prange(cq.shape[0]):
            for j in range(ct.shape[0]):
                out[i, j] = sat(cq[i], ct[j])
        return out

    @njit(cache=True, parallel=True)
    def overlap_areas(cq, ct):
        out = np.zeros((cq.shape[0], ct.shape[0]))
        for i in prange(cq.shape[0]):
            for j in range(ct.shape[0]):
                out[i, j] = clip(cq[i], ct[j])
        return out

    @njit(cache=True, parallel=True)
    def kde_log_pdf(queries, obs, bw, discrete):
        nq = queries.shape[0]
        n = obs.shape[0]
        d = obs.shape[1]
        out = np.empty(nq)
        log_h = np.log(bw)
        log_same = np.empty(d)
        log_lam = np.empty(d)
        for j in range(d):
            lam = bw[j] if discrete[j] else 0.5
            log_same[j] = math.log1p(-lam)
            log_lam[j] = math.log(lam)
        log_n = math.log(n)
        for q in prange(nq):
            row = np.empty(n)
            mx = -np.inf
            for i in range(n):
                s = 0.0
                for j in range(d):
                    diff = queries[q, j] - obs[i, j]
                    if discrete[j]:
                        ad = abs(diff)
                        if ad < 1e-9:
                            s += log_same[j]
                        else:
                            s += _LOG_HALF + log_same[j] + ad * log_lam[j]
                    else:
                        z = diff / bw[j]
                        s += -0.5 * z * z - log_h[j] - 0.5 * _LOG_2PI
                row[i] = s
                if s > mx:
                    mx = s
            acc = 0.0
            for i in range(n):
                acc += math.exp(row[i] - mx)
            out[q] = mx + math.log(acc) - log_n
        return out

    return types.SimpleNamespace(
        point_segment_distances=point_segment_distances,
        box_box_distances=box_box_distances,
        ray_segment_hits=ray_segment_hits,
        ray_box_hits=ray_box_hits,
        footprint_overlaps=footprint_overlaps,
        overlap_areas=overlap_areas,
        kde_log_pdf=kde_log_pdf,
        name="numba",
        numba=numba,
    )


def _rebind(fn, names):
    """Recompile ``fn`` with its global helpers swapped for jitted versions."""
    from numba import njit

    g = dict(fn.__globals__)
    g.update(names)
    clone = types.FunctionType(fn.__code__, g, fn.__name__, fn.__defaults__, fn.__closure__)
    clone.__module__ = fn.__module__
    clone.__qualname__ = fn.__qualname__
    return njit(cache=True)(clone)


try:
    numba_impl = _build_numba()
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba_impl = None

_active = numpy_impl if (numba_impl is None or _env_disabled()) else numba_impl
BACKEND: str = _active.name


def _as2(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def point_segment_distances(points, segs):
    """Distances (p, l) from points (p, 2) to segments (l, 2, 2)."""
    points, segs = _as2(points), _as2(segs)
    if points.shape[0] == 0 or segs.shape[0] == 0:
        return np.zeros((points.shape[0], segs.shape[0]))
    return _active.point_segment_distances(points, segs)


def box_box_distances(cq, ct):
    """Shortest footprint distances (q, t); 0 where footprints touch or intersect."""
    cq, ct = _as2(cq), _as2(ct)
    if cq.shape[0] == 0 or ct.shape[0] == 0:
        return np.zeros((cq.shape[0], ct.shape[0]))
    return _active.box_box_distances(cq, ct)


def ray_segment_hits(origins, dirs, segs):
    origins, dirs, segs = _as2(origins), _as2(dirs), _as2(segs)
    if origins.shape[0] == 0 or segs.shape[0] == 0:
        return np.zeros((origins.shape[0], segs.shape[0]), dtype=bool)
    return _active.ray_segment_hits(origins, dirs, segs)


def ray_box_hits(origins, dirs, centers, axes, halfs):
    """Whether each ray (q) meets each box footprint (t); ``axes`` holds the unit primary axes."""
    origins, dirs = _as2(origins), _as2(dirs)
    centers, axes, halfs = _as2(centers), _as2(axes), _as2(halfs)
    if origins.shape[0] == 0 or centers.shape[0] == 0:
        return np.zeros((origins.shape[0], centers.shape[0]), dtype=bool)
    return _active.ray_box_hits(origins, dirs, centers, axes, halfs)


def footprint_overlaps(cq, ct):
    """True where footprint interiors overlap by more than the tolerance (touching is not overlap)."""
    cq, ct = _as2(cq), _as2(ct)
    if cq.shape[0] == 0 or ct.shape[0] == 0:
        return np.zeros((cq.shape[0], ct.shape[0]), dtype=bool)
    return _active.footprint_overlaps(cq, ct)


def overlap_areas(cq, ct):
    cq, ct = _as2(cq), _as2(ct)
    if cq.shape[0] == 0 or ct.shape[0] == 0:
        return np.zeros((cq.shape[0], ct.shape[0]))
    return _active.overlap_areas(cq, ct)


def kde_log_pdf(queries, obs, bw, discrete):
    """Log of the mixed product-kernel density at each query row."""
    queries, obs, bw = _as2(queries), _as2(obs), _as2(bw)
    discrete = np.ascontiguousarray(discrete, dtype=np.bool_)
    if queries.shape[0] == 0:
        return np.zeros(0)
    return _active.kde_log_pdf(queries, obs, bw, discrete)
