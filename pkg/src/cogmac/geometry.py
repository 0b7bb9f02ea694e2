"""Planar disc geometry: lens areas and areas of a disc minus a union of discs."""
from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def lens_area(r1, r2, d):
    """Area of the intersection of two discs of radii ``r1``, ``r2`` at centre distance ``d``.

    Accepts scalars or broadcastable arrays; returns a float for scalar input.
    """
    r1, r2, d = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r1, r2, d)))
    out = np.zeros(r1.shape)
    small = np.minimum(r1, r2)
    inside = d <= np.abs(r1 - r2)
    out[inside] = math.pi * small[inside] ** 2
    part = ~inside & (d < r1 + r2)
    if np.any(part):
        a, b, c = r1[part], r2[part], d[part]
        ca = np.clip((c * c + a * a - b * b) / (2.0 * c * a), -1.0, 1.0)
        cb = np.clip((c * c + b * b - a * a) / (2.0 * c * b), -1.0, 1.0)
        k = (-c + a + b) * (c + a - b) * (c - a + b) * (c + a + b)
        out[part] = (a * a * np.arccos(ca) + b * b * np.arccos(cb)
                     - 0.5 * np.sqrt(np.maximum(k, 0.0)))
    return float(out) if out.ndim == 0 else out


def _circle_crossings(c1, c2):
    """Angles on circle ``c1`` where it properly crosses circle ``c2``."""
    x1, y1, r1 = c1
    x2, y2, r2 = c2
    dx, dy = x2 - x1, y2 - y1
    d = math.hypot(dx, dy)
    if d >= r1 + r2 or d <= abs(r1 - r2) or d == 0.0:
        return ()
    base = math.atan2(dy, dx)
    half = math.acos(max(-1.0, min(1.0, (d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1))))
    return (base - half) % TWO_PI, (base + half) % TWO_PI


def _inside(pt, c):
    x, y, r = c
    return math.hypot(pt[0] - x, pt[1] - y) < r * (1.0 - 1e-12)


def _same(c1, c2, tol=1e-12):
    return all(abs(a - b) <= tol * (1.0 + abs(a)) for a, b in zip(c1, c2))


def disc_minus_union_area(outer, holes) -> float:
    """Exact area of ``outer`` minus the union of ``holes``; circles are (x, y, r).

    The region boundary is a set of circular arcs; the area is the boundary
    integral (x dy - y dx)/2, taken counter-clockwise on the outer circle and
    clockwise on the holes.
    """
    outer = tuple(float(v) for v in outer)
    if outer[2] <= 0.0:
        return 0.0
    uniq = []
    for h in holes:
        h = tuple(float(v) for v in h)
        if h[2] <= 0.0:
            continue
        if _same(h, outer):
            return 0.0
        if not any(_same(h, u) for u in uniq):
            uniq.append(h)
    circles = [outer] + uniq
    total = 0.0
    for k, (cx, cy, r) in enumerate(circles):
        angles = sorted(a for m, other in enumerate(circles) if m != k
                        for a in _circle_crossings(circles[k], other))
        if angles:
            arcs = list(zip(angles, angles[1:] + [angles[0] + TWO_PI]))
        else:
            arcs = [(0.0, TWO_PI)]
        for t1, t2 in arcs:
            if t2 - t1 <= 0.0:
                continue
            tm = 0.5 * (t1 + t2)
            mid = (cx + r * math.cos(tm), cy + r * math.sin(tm))
            others = [c for m, c in enumerate(circles) if m != k and m != 0]
            if k == 0:
                on_boundary = not any(_inside(mid, h) for h in uniq)
                sign = 1.0
            else:
                on_boundary = _inside(mid, outer) and not any(_inside(mid, h) for h in others)
                sign = -1.0
            if on_boundary:
                total += sign * 0.5 * (r * r * (t2 - t1)
                                       + cx * r * (math.sin(t2) - math.sin(t1))
                                       - cy * r * (math.cos(t2) - math.cos(t1)))
    return max(total, 0.0)


def disc_minus_union_area_batch(circles) -> np.ndarray:
    """Vectorized :func:`disc_minus_union_area`.

    ``circles`` has shape (B, K, 3): entry 0 along axis 1 is the outer disc,
    the rest are holes.  Coincident holes are counted once.
    """
    c = np.array(circles, dtype=float)
    if c.ndim != 3 or c.shape[2] != 3:
        raise ValueError("circles must have shape (B, K, 3)")
    b, k = c.shape[:2]
    r = c[:, :, 2].copy()
    r[r < 0] = 0.0
    # drop holes that duplicate an earlier hole
    for i in range(1, k):
        for m in range(1, i):
            same = np.all(np.abs(c[:, i] - c[:, m]) <= 1e-12 * (1.0 + np.abs(c[:, m])), axis=1)
            r[same, i] = 0.0
    cx, cy = c[:, :, 0], c[:, :, 1]
    outer_same = np.zeros(b, dtype=bool)
    for i in range(1, k):
        outer_same |= np.all(np.abs(c[:, i] - c[:, 0]) <= 1e-12 * (1.0 + np.abs(c[:, 0])), axis=1) & (r[:, i] > 0)

    # crossing angles of circle i with every other circle m
    n_ang = 2 * (k - 1)
    ang = np.full((b, k, n_ang), np.nan)
    for i in range(k):
        slot = 0
        for m in range(k):
            if m == i:
                continue
            dx, dy = cx[:, m] - cx[:, i], cy[:, m] - cy[:, i]
            d = np.hypot(dx, dy)
            ok = (d < r[:, i] + r[:, m]) & (d > np.abs(r[:, i] - r[:, m])) & (r[:, i] > 0) & (r[:, m] > 0)
            with np.errstate(invalid="ignore", divide="ignore"):
                cosv = (d * d + r[:, i] ** 2 - r[:, m] ** 2) / (2.0 * d * r[:, i])
            half = np.arccos(np.clip(np.where(ok, cosv, 0.0), -1.0, 1.0))
            base = np.arctan2(dy, dx)
            ang[:, i, slot] = np.where(ok, (base - half) % TWO_PI, np.nan)
            ang[:, i, slot + 1] = np.where(ok, (base + half) % TWO_PI, np.nan)
            slot += 2
    ang = np.sort(ang, axis=2)
    count = np.sum(~np.isnan(ang), axis=2)
    first = ang[:, :, :1]
    nxt = np.concatenate([ang[:, :, 1:], np.full((b, k, 1), np.nan)], axis=2)
    idx = np.arange(n_ang)[None, None, :]
    end = np.where(idx == (count - 1)[:, :, None], first + TWO_PI, nxt)
    start = ang.copy()
    valid = idx < count[:, :, None]
    full = count == 0
    start[:, :, 0] = np.where(full, 0.0, start[:, :, 0])
    end[:, :, 0] = np.where(full, TWO_PI, end[:, :, 0])
    valid[:, :, 0] |= full
    start = np.where(valid, start, 0.0)
    end = np.where(valid, end, 0.0)

    mid = 0.5 * (start + end)
    px = cx[:, :, None] + r[:, :, None] * np.cos(mid)
    py = cy[:, :, None] + r[:, :, None] * np.sin(mid)
    # inside[b, i, a, m]: arc midpoint a of circle i strictly inside circle m
    dist = np.hypot(px[:, :, :, None] - cx[:, None, None, :], py[:, :, :, None] - cy[:, None, None, :])
    inside = dist < (r * (1.0 - 1e-12))[:, None, None, :]
    eye = np.eye(k, dtype=bool)[None, :, None, :]
    inside &= ~eye
    hole_mask = np.zeros(k, dtype=bool)
    hole_mask[1:] = True
    in_hole = np.any(inside & hole_mask[None, None, None, :], axis=3)
    in_outer = inside[:, :, :, 0]
    on_boundary = np.where(np.arange(k)[None, :, None] == 0, ~in_hole, in_outer & ~in_hole)
    sign = np.where(np.arange(k) == 0, 1.0, -1.0)[None, :, None]
    rr = r[:, :, None]
    contrib = 0.5 * (rr * rr * (end - start)
                     + cx[:, :, None] * rr * (np.sin(end) - np.sin(start))
                     - cy[:, :, None] * rr * (np.cos(end) - np.cos(start)))
    total = np.sum(np.where(valid & on_boundary & (rr > 0), sign * contrib, 0.0), axis=(1, 2))
    total = np.where(outer_same | (r[:, 0] <= 0), 0.0, total)
    return np.maximum(total, 0.0)
