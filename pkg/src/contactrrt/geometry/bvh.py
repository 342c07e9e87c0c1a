"""Axis-aligned bounding volume hierarchy over mesh faces.

Only used to prune candidate faces; the exact tests are the same vectorised
kernels as the linear scan, so both paths return identical answers.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

LEAF_SIZE = 16


class BVH:
    def __init__(self, mesh, leaf_size: int = LEAF_SIZE):
        v0, v1, v2 = mesh.corners
        lo = np.minimum(np.minimum(v0, v1), v2)
        hi = np.maximum(np.maximum(v0, v1), v2)
        centroids = mesh.centroids
        order = np.arange(mesh.n_faces)
        self.node_lo: list = []
        self.node_hi: list = []
        self.children: list = []  # (left, right) or None for leaves
        self.leaf_faces: list = []

        stack = [(order, -1, 0)]
        # iterative build; each entry records where to hook the new node into its parent
        while stack:
            ids, parent, side = stack.pop()
            node = len(self.node_lo)
            self.node_lo.append(tuple(lo[ids].min(0)))
            self.node_hi.append(tuple(hi[ids].max(0)))
            self.children.append(None)
            self.leaf_faces.append(None)
            if parent >= 0:
                left, right = self.children[parent]
                self.children[parent] = (node, right) if side == 0 else (left, node)
            if len(ids) <= leaf_size:
                self.leaf_faces[node] = np.sort(ids)
                continue
            c = centroids[ids]
            axis = int(np.argmax(c.max(0) - c.min(0)))
            split = np.argsort(c[:, axis], kind="stable")
            half = len(ids) // 2
            self.children[node] = (-1, -1)
            stack.append((ids[split[half:]], node, 1))
            stack.append((ids[split[:half]], node, 0))

    def ray_candidates(self, origin, direction, t_min=0.0, t_max=math.inf) -> np.ndarray:
        ox, oy, oz = (float(x) for x in origin)
        inv = [1.0 / d if d != 0.0 else math.inf for d in (float(x) for x in direction)]
        found = []
        stack = [0]
        while stack:
            node = stack.pop()
            lo, hi = self.node_lo[node], self.node_hi[node]
            t0, t1 = -math.inf, math.inf
            for o, i, a, b in ((ox, inv[0], lo[0], hi[0]), (oy, inv[1], lo[1], hi[1]),
                               (oz, inv[2], lo[2], hi[2])):
                if math.isinf(i):
                    if o < a or o > b:
                        t0 = math.inf
                        break
                    continue
                ta, tb = (a - o) * i, (b - o) * i
                if ta > tb:
                    ta, tb = tb, ta
                t0, t1 = max(t0, ta), min(t1, tb)
            pad = 1e-9 * (1.0 + abs(t1))
            if t0 > t1 + pad or t1 < t_min - pad or t0 > t_max + pad:
                continue
            kids = self.children[node]
            if kids is None:
                found.append(self.leaf_faces[node])
            else:
                stack.extend(kids)
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(found))

    def _box_dist2(self, node, p) -> float:
        lo, hi = self.node_lo[node], self.node_hi[node]
        s = 0.0
        for x, a, b in zip(p, lo, hi):
            if x < a:
                s += (a - x) ** 2
            elif x > b:
                s += (x - b) ** 2
        return s

    def nearest_candidates(self, point) -> np.ndarray:
        """Faces whose boxes are no farther than the nearest leaf's best bound.

        The bound is taken as the farthest point of the closest leaf box, which
        is guaranteed to be at least the true closest distance.
        """
        p = tuple(float(x) for x in point)
        heap = [(self._box_dist2(0, p), 0)]
        ub = math.inf
        found = []
        while heap:
            d2, node = heapq.heappop(heap)
            if d2 > ub * (1 + 1e-12) + 1e-18:
                break
            kids = self.children[node]
            if kids is None:
                found.append(self.leaf_faces[node])
                lo, hi = self.node_lo[node], self.node_hi[node]
                far = sum(max(abs(x - a), abs(x - b)) ** 2 for x, a, b in zip(p, lo, hi))
                ub = min(ub, far)
                continue
            for k in kids:
                heapq.heappush(heap, (self._box_dist2(k, p), k))
        return np.sort(np.concatenate(found))
