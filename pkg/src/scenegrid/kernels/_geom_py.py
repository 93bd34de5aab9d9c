"""Pure-Python geometry kernels.

Reference implementation of the hot loops; the Cython module ``_geom``
exposes the same functions with the same semantics.

A box is a 5-tuple ``(cx, cy, length, width, heading)``.
"""

from __future__ import annotations

import math

import numpy as np

_EPS = 1e-12


def box_corners(cx, cy, length, width, heading):
    """Corners of an oriented box in counter-clockwise order."""
    c = math.cos(heading)
    s = math.sin(heading)
    hl = 0.5 * length
    hw = 0.5 * width
    out = []
    for lx, ly in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        out.append((cx + c * lx - s * ly, cy + s * lx + c * ly))
    return out


def polygon_area(pts):
    n = len(pts)
    acc = 0.0
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def _clip(subject, a, b):
    # keep the part of `subject` left of the directed edge a->b
    ax, ay = a
    ex = b[0] - ax
    ey = b[1] - ay
    out = []
    n = len(subject)
    if n == 0:
        return out
    prev = subject[-1]
    prev_side = ex * (prev[1] - ay) - ey * (prev[0] - ax)
    for cur in subject:
        cur_side = ex * (cur[1] - ay) - ey * (cur[0] - ax)
        if cur_side >= 0.0:
            if prev_side < 0.0:
                t = prev_side / (prev_side - cur_side)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            out.append(cur)
        elif prev_side >= 0.0:
            t = prev_side / (prev_side - cur_side)
            out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
        prev = cur
        prev_side = cur_side
    return out


def obb_iou(a, b):
    """Intersection-over-union of two oriented boxes via convex clipping."""
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    ra = 0.5 * math.hypot(a[2], a[3])
    rb = 0.5 * math.hypot(b[2], b[3])
    if dx * dx + dy * dy > (ra + rb) * (ra + rb):
        return 0.0
    pa = box_corners(*a)
    pb = box_corners(*b)
    inter = pa
    for i in range(4):
        inter = _clip(inter, pb[i], pb[(i + 1) % 4])
        if not inter:
            return 0.0
    ai = polygon_area(inter)
    if ai <= 0.0:
        return 0.0
    union = a[2] * a[3] + b[2] * b[3] - ai
    if union <= 0.0:
        return 0.0
    return min(1.0, ai / union)


def obb_overlap(a, b):
    """Separating-axis test; touching boxes do not overlap."""
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    ra = 0.5 * math.hypot(a[2], a[3])
    rb = 0.5 * math.hypot(b[2], b[3])
    if dx * dx + dy * dy >= (ra + rb) * (ra + rb):
        return False
    for box in (a, b):
        c = math.cos(box[4])
        s = math.sin(box[4])
        for ux, uy in ((c, s), (-s, c)):
            # projected half extents
            pa = 0.5 * a[2] * abs(ux * math.cos(a[4]) + uy * math.sin(a[4])) + 0.5 * a[3] * abs(
                -ux * math.sin(a[4]) + uy * math.cos(a[4])
            )
            pb = 0.5 * b[2] * abs(ux * math.cos(b[4]) + uy * math.sin(b[4])) + 0.5 * b[3] * abs(
                -ux * math.sin(b[4]) + uy * math.cos(b[4])
            )
            if abs(dx * ux + dy * uy) >= pa + pb:
                return False
    return True


def tick_collision_flags(boxes, threshold):
    """Flag every box whose IoU with some other box exceeds ``threshold``."""
    boxes = np.asarray(boxes, dtype=float)
    n = boxes.shape[0]
    flags = np.zeros(n, dtype=bool)
    if n < 2:
        return flags
    radius = 0.5 * np.hypot(boxes[:, 2], boxes[:, 3])
    for i in range(n - 1):
        d2 = (boxes[i + 1 :, 0] - boxes[i, 0]) ** 2 + (boxes[i + 1 :, 1] - boxes[i, 1]) ** 2
        reach = (radius[i + 1 :] + radius[i]) ** 2
        for k in np.nonzero(d2 <= reach)[0]:
            j = i + 1 + int(k)
            if flags[i] and flags[j]:
                continue
            if obb_iou(tuple(boxes[i]), tuple(boxes[j])) > threshold:
                flags[i] = True
                flags[j] = True
    return flags


def track_conflict(track, others, length, width):
    """Index of the first track in ``others`` that overlaps ``track`` at a common step.

    ``track`` has shape (H, 3) holding (x, y, heading); ``others`` has shape
    (M, H, 3). Rows containing NaN are absent at that step. Returns -1 when
    no overlap exists.
    """
    track = np.asarray(track, dtype=float)
    others = np.asarray(others, dtype=float)
    if others.size == 0:
        return -1
    reach = math.hypot(length, width)
    d2 = (others[:, :, 0] - track[None, :, 0]) ** 2 + (others[:, :, 1] - track[None, :, 1]) ** 2
    close = d2 < reach * reach  # NaN compares False
    for m in np.nonzero(close.any(axis=1))[0]:
        for h in np.nonzero(close[m])[0]:
            a = (track[h, 0], track[h, 1], length, width, track[h, 2])
            o = others[m, h]
            if obb_overlap(a, (o[0], o[1], length, width, o[2])):
                return int(m)
    return -1


def points_in_polygon(points, polygon):
    """Even-odd containment; points on the boundary count as inside."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    poly = np.asarray(polygon, dtype=float)
    n = poly.shape[0]
    out = np.zeros(pts.shape[0], dtype=bool)
    for k in range(pts.shape[0]):
        px = pts[k, 0]
        py = pts[k, 1]
        inside = False
        on_edge = False
        j = n - 1
        for i in range(n):
            xi, yi = poly[i]
            xj, yj = poly[j]
            cross = (xj - xi) * (py - yi) - (yj - yi) * (px - xi)
            if (
                abs(cross) <= _EPS * max(1.0, abs(xj - xi) + abs(yj - yi))
                and min(xi, xj) - _EPS <= px <= max(xi, xj) + _EPS
                and min(yi, yj) - _EPS <= py <= max(yi, yj) + _EPS
            ):
                on_edge = True
                break
            if (yi > py) != (yj > py):
                x_cross = xi + (py - yi) * (xj - xi) / (yj - yi)
                if px < x_cross:
                    inside = not inside
            j = i
        out[k] = inside or on_edge
    return out
