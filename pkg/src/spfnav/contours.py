"""Marching-squares isoline extraction for field and figure output.

Operates on a scalar grid sampled over a regular lattice and returns stitched
polylines; loops around closed level sets come back closed (first point equals
last). Saddle cells are disambiguated with the cell-center average.
"""
from __future__ import annotations

import numpy as np

# (corner_a, corner_b) index pairs per cell edge: bottom, right, top, left
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))

# active edge pairs per marching-squares case (corner bit order: bl, br, tr, tl)
_CASE_SEGMENTS = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)],
    11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
}
_SADDLE_CASES = {
    5: ([(3, 2), (1, 0)], [(3, 0), (1, 2)]),
    10: ([(0, 3), (2, 1)], [(0, 1), (2, 3)]),
}


def _interp(level, pa, va, pb, vb):
    t = (level - va) / (vb - va)
    return pa + t * (pb - pa)


def extract_contours(xs: np.ndarray, ys: np.ndarray, values: np.ndarray,
                     level: float) -> list[np.ndarray]:
    """Isolines of values[i, j] = f(xs[i], ys[j]) at the given level.

    Returns a list of (K, 2) polylines; closed loops repeat their first point.
    """
    # nudge node values lying exactly on the level so no segment degenerates
    delta = np.asarray(values, dtype=float) - level
    eps = 1e-12 * max(1.0, float(np.max(np.abs(delta))))
    delta = np.where(delta == 0.0, eps, delta)

    segments = []
    for i in range(delta.shape[0] - 1):
        for j in range(delta.shape[1] - 1):
            vals = (delta[i, j], delta[i + 1, j],
                    delta[i + 1, j + 1], delta[i, j + 1])
            case = sum(1 << k for k in range(4) if vals[k] < 0.0)
            if case in (0, 15):
                continue
            corners = (np.array([xs[i], ys[j]]),
                       np.array([xs[i + 1], ys[j]]),
                       np.array([xs[i + 1], ys[j + 1]]),
                       np.array([xs[i], ys[j + 1]]))
            if case in _SADDLE_CASES:
                center = 0.25 * sum(vals)
                pairs = _SADDLE_CASES[case][0 if center < 0.0 else 1]
            else:
                pairs = _CASE_SEGMENTS[case]
            for ea, eb in pairs:
                a0, a1 = _EDGE_CORNERS[ea]
                b0, b1 = _EDGE_CORNERS[eb]
                p = _interp(0.0, corners[a0], vals[a0], corners[a1], vals[a1])
                q = _interp(0.0, corners[b0], vals[b0], corners[b1], vals[b1])
                segments.append((p, q))
    lines = _stitch(segments)
    # closed slivers from nudged nodes carry no geometry
    return [ln for ln in lines
            if not (np.array_equal(ln[0], ln[-1]) and len(ln) < 5)]


def _stitch(segments) -> list[np.ndarray]:
    """Join segments into polylines, following either endpoint orientation."""
    if not segments:
        return []
    span = max(float(np.max(np.abs(np.concatenate(pair)))) for pair in segments)
    scale = 1e9 / max(1.0, span)

    def key(point):
        return (round(point[0] * scale), round(point[1] * scale))

    incident: dict = {}
    for idx, (p, q) in enumerate(segments):
        incident.setdefault(key(p), []).append((idx, 0))
        incident.setdefault(key(q), []).append((idx, 1))

    used = [False] * len(segments)
    lines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        p, q = segments[start]
        chain = [p, q]
        for _ in range(2):  # extend forward from the tail, then from the head
            cursor = chain[-1]
            while True:
                hit = None
                for idx, end in incident.get(key(cursor), []):
                    if not used[idx]:
                        hit = (idx, end)
                        break
                if hit is None:
                    break
                idx, end = hit
                used[idx] = True
                cursor = segments[idx][1 - end]
                chain.append(cursor)
                if key(cursor) == key(chain[0]):
                    break
            if key(chain[-1]) == key(chain[0]):
                chain[-1] = chain[0]
                break
            chain.reverse()
        lines.append(np.array(chain))
    return lines
