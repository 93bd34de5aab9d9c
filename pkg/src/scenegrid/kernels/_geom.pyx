# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels; mirrors ``_geom_py`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs, hypot, isnan

cnp.import_array()

cdef double _EPS = 1e-12


cdef inline void _corners(double cx, double cy, double length, double width,
                          double heading, double* xs, double* ys) noexcept nogil:
    cdef double c = cos(heading), s = sin(heading)
    cdef double hl = 0.5 * length, hw = 0.5 * width
    xs[0] = cx + c * hl - s * hw
    ys[0] = cy + s * hl + c * hw
    xs[1] = cx - c * hl - s * hw
    ys[1] = cy - s * hl + c * hw
    xs[2] = cx - c * hl + s * hw
    ys[2] = cy - s * hl - c * hw
    xs[3] = cx + c * hl + s * hw
    ys[3] = cy + s * hl - c * hw


cdef int _clip(double* sx, double* sy, int n, double ax, double ay,
               double bx, double by, double* ox, double* oy) noexcept nogil:
    cdef double ex = bx - ax, ey = by - ay
    cdef int i, m = 0
    cdef double px, py, cx_, cy_, ps, cs, t
    if n == 0:
        return 0
    px = sx[n - 1]
    py = sy[n - 1]
    ps = ex * (py - ay) - ey * (px - ax)
    for i in range(n):
        cx_ = sx[i]
        cy_ = sy[i]
        cs = ex * (cy_ - ay) - ey * (cx_ - ax)
        if cs >= 0.0:
            if ps < 0.0:
                t = ps / (ps - cs)
                ox[m] = px + t * (cx_ - px)
                oy[m] = py + t * (cy_ - py)
                m += 1
            ox[m] = cx_
            oy[m] = cy_
            m += 1
        elif ps >= 0.0:
            t = ps / (ps - cs)
            ox[m] = px + t * (cx_ - px)
            oy[m] = py + t * (cy_ - py)
            m += 1
        px = cx_
        py = cy_
        ps = cs
    return m


cdef double _iou(double ax, double ay, double al, double aw, double ah,
                 double bx, double by, double bl, double bw, double bh) noexcept nogil:
    cdef double dx = ax - bx, dy = ay - by
    cdef double ra = 0.5 * hypot(al, aw), rb = 0.5 * hypot(bl, bw)
    cdef double pxa[4]
    cdef double pya[4]
    cdef double pxb[4]
    cdef double pyb[4]
    cdef double bufx[2][16]
    cdef double bufy[2][16]
    cdef int i, n, cur = 0
    cdef double area = 0.0, union_
    if dx * dx + dy * dy > (ra + rb) * (ra + rb):
        return 0.0
    _corners(ax, ay, al, aw, ah, pxa, pya)
    _corners(bx, by, bl, bw, bh, pxb, pyb)
    for i in range(4):
        bufx[0][i] = pxa[i]
        bufy[0][i] = pya[i]
    n = 4
    for i in range(4):
        n = _clip(bufx[cur], bufy[cur], n, pxb[i], pyb[i], pxb[(i + 1) % 4],
                  pyb[(i + 1) % 4], bufx[1 - cur], bufy[1 - cur])
        cur = 1 - cur
        if n == 0:
            return 0.0
    for i in range(n):
        area += bufx[cur][i] * bufy[cur][(i + 1) % n] - bufx[cur][(i + 1) % n] * bufy[cur][i]
    area *= 0.5
    if area <= 0.0:
        return 0.0
    union_ = al * aw + bl * bw - area
    if union_ <= 0.0:
        return 0.0
    if area / union_ > 1.0:
        return 1.0
    return area / union_


cdef bint _overlap(double ax, double ay, double al, double aw, double ah,
                   double bx, double by, double bl, double bw, double bh) noexcept nogil:
    cdef double dx = ax - bx, dy = ay - by
    cdef double ra = 0.5 * hypot(al, aw), rb = 0.5 * hypot(bl, bw)
    cdef double ca = cos(ah), sa = sin(ah), cb = cos(bh), sb = sin(bh)
    cdef double axes[4][2]
    cdef int k
    cdef double ux, uy, pa, pb
    if dx * dx + dy * dy >= (ra + rb) * (ra + rb):
        return False
    axes[0][0] = ca
    axes[0][1] = sa
    axes[1][0] = -sa
    axes[1][1] = ca
    axes[2][0] = cb
    axes[2][1] = sb
    axes[3][0] = -sb
    axes[3][1] = cb
    for k in range(4):
        ux = axes[k][0]
        uy = axes[k][1]
        pa = 0.5 * al * fabs(ux * ca + uy * sa) + 0.5 * aw * fabs(-ux * sa + uy * ca)
        pb = 0.5 * bl * fabs(ux * cb + uy * sb) + 0.5 * bw * fabs(-ux * sb + uy * cb)
        if fabs(dx * ux + dy * uy) >= pa + pb:
            return False
    return True


def box_corners(double cx, double cy, double length, double width, double heading):
    cdef double xs[4]
    cdef double ys[4]
    _corners(cx, cy, length, width, heading, xs, ys)
    return [(xs[i], ys[i]) for i in range(4)]


def polygon_area(pts):
    cdef Py_ssize_t i, n = len(pts)
    cdef double acc = 0.0
    for i in range(n):
        acc += pts[i][0] * pts[(i + 1) % n][1] - pts[(i + 1) % n][0] * pts[i][1]
    return 0.5 * acc


def obb_iou(a, b):
    return _iou(a[0], a[1], a[2], a[3], a[4], b[0], b[1], b[2], b[3], b[4])


def obb_overlap(a, b):
    return bool(_overlap(a[0], a[1], a[2], a[3], a[4], b[0], b[1], b[2], b[3], b[4]))


def tick_collision_flags(boxes, double threshold):
    cdef double[:, ::1] bx = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 5)
    cdef Py_ssize_t n = bx.shape[0], i, j
    out = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[::1] flags = out.view(np.uint8)
    cdef double dx, dy, ri, rj
    with nogil:
        for i in range(n - 1):
            ri = 0.5 * hypot(bx[i, 2], bx[i, 3])
            for j in range(i + 1, n):
                if flags[i] and flags[j]:
                    continue
                rj = 0.5 * hypot(bx[j, 2], bx[j, 3])
                dx = bx[i, 0] - bx[j, 0]
                dy = bx[i, 1] - bx[j, 1]
                if dx * dx + dy * dy > (ri + rj) * (ri + rj):
                    continue
                if _iou(bx[i, 0], bx[i, 1], bx[i, 2], bx[i, 3], bx[i, 4],
                        bx[j, 0], bx[j, 1], bx[j, 2], bx[j, 3], bx[j, 4]) > threshold:
                    flags[i] = 1
                    flags[j] = 1
    return out


def track_conflict(track, others, double length, double width):
    cdef double[:, ::1] tr = np.ascontiguousarray(track, dtype=np.float64).reshape(-1, 3)
    oth = np.ascontiguousarray(others, dtype=np.float64)
    if oth.size == 0:
        return -1
    cdef double[:, :, ::1] ot = oth.reshape(-1, tr.shape[0], 3)
    cdef Py_ssize_t m, h, nm = ot.shape[0], nh = tr.shape[0]
    cdef double reach2 = length * length + width * width
    cdef double dx, dy
    cdef Py_ssize_t hit = -1
    with nogil:
        for m in range(nm):
            for h in range(nh):
                if isnan(ot[m, h, 0]) or isnan(tr[h, 0]):
                    continue
                dx = ot[m, h, 0] - tr[h, 0]
                dy = ot[m, h, 1] - tr[h, 1]
                if dx * dx + dy * dy >= reach2:
                    continue
                if _overlap(tr[h, 0], tr[h, 1], length, width, tr[h, 2],
                            ot[m, h, 0], ot[m, h, 1], length, width, ot[m, h, 2]):
                    hit = m
                    break
            if hit >= 0:
                break
    return int(hit)


def points_in_polygon(points, polygon):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    cdef double[:, ::1] poly = np.ascontiguousarray(polygon, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t k, i, j, n = poly.shape[0], npts = pts.shape[0]
    out = np.zeros(npts, dtype=bool)
    cdef cnp.uint8_t[::1] res = out.view(np.uint8)
    cdef double px, py, xi, yi, xj, yj, cross, xc
    cdef bint inside, on_edge
    with nogil:
        for k in range(npts):
            px = pts[k, 0]
            py = pts[k, 1]
            inside = False
            on_edge = False
            j = n - 1
            for i in range(n):
                xi = poly[i, 0]
                yi = poly[i, 1]
                xj = poly[j, 0]
                yj = poly[j, 1]
                cross = (xj - xi) * (py - yi) - (yj - yi) * (px - xi)
                if (fabs(cross) <= _EPS * (1.0 if fabs(xj - xi) + fabs(yj - yi) < 1.0 else fabs(xj - xi) + fabs(yj - yi))
                        and (xi if xi < xj else xj) - _EPS <= px <= (xj if xi < xj else xi) + _EPS
                        and (yi if yi < yj else yj) - _EPS <= py <= (yj if yi < yj else yi) + _EPS):
                    on_edge = True
                    break
                if (yi > py) != (yj > py):
                    xc = xi + (py - yi) * (xj - xi) / (yj - yi)
                    if px < xc:
                        inside = not inside
                j = i
            res[k] = 1 if (inside or on_edge) else 0
    return out
