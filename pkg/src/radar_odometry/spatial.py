"""Uniform-grid spatial hash over 2-D points with radius queries.

Cells are floor(p / cell_size) pairs; each occupied cell maps to the indices
of the points inside it. Queries scan only the cells overlapping the query
disc bounding box, so cost scales with local density rather than set size.
"""

from __future__ import annotations

import numpy as np


def _group_by_cell(cells: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Unique cell rows plus, per cell, the indices of its members."""
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=len(uniq))
    bounds = np.append(0, np.cumsum(counts))
    groups = [order[bounds[i] : bounds[i + 1]] for i in range(len(uniq))]
    return uniq, groups


class UniformGrid:
    def __init__(self, xy: np.ndarray, cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        xy = np.asarray(xy, dtype=float)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise ValueError("xy must be (N, 2)")
        self.xy = xy
        self.cell_size = float(cell_size)
        self._buckets: dict[tuple[int, int], np.ndarray] = {}
        if len(xy):
            cells = np.floor(xy / cell_size).astype(np.int64)
            uniq, groups = _group_by_cell(cells)
            for cell, members in zip(uniq, groups):
                self._buckets[(int(cell[0]), int(cell[1]))] = members

    def __len__(self) -> int:
        return len(self.xy)

    def occupied_cells(self) -> list[tuple[int, int]]:
        """Occupied cell coordinates in deterministic sorted order."""
        return sorted(self._buckets)

    def cell_points(self, cell: tuple[int, int]) -> np.ndarray:
        return self._buckets.get(cell, np.empty(0, dtype=np.intp))

    def _candidates(self, center: np.ndarray, radius: float) -> np.ndarray:
        s = self.cell_size
        cx0 = int(np.floor((center[0] - radius) / s))
        cx1 = int(np.floor((center[0] + radius) / s))
        cy0 = int(np.floor((center[1] - radius) / s))
        cy1 = int(np.floor((center[1] + radius) / s))
        parts = []
        for cx in range(cx0, cx1 + 1):
            for cy in range(cy0, cy1 + 1):
                b = self._buckets.get((cx, cy))
                if b is not None:
                    parts.append(b)
        if not parts:
            return np.empty(0, dtype=np.intp)
        return np.concatenate(parts)

    def query_radius(self, center, radius: float) -> np.ndarray:
        """Indices of points with ||p - center|| <= radius, nearest first.

        Ties in distance break on the smaller point index so results are
        reproducible.
        """
        center = np.asarray(center, dtype=float)
        cand = self._candidates(center, radius)
        if cand.size == 0:
            return cand
        d = self.xy[cand] - center
        d2 = d[:, 0] ** 2 + d[:, 1] ** 2
        inside = d2 <= radius * radius
        cand = cand[inside]
        d2 = d2[inside]
        order = np.lexsort((cand, d2))
        return cand[order]

    def nearest_within(self, center, radius: float) -> int:
        """Index of the nearest point within radius, or -1."""
        center = np.asarray(center, dtype=float)
        cand = self._candidates(center, radius)
        if cand.size == 0:
            return -1
        cand = np.sort(cand)
        d = self.xy[cand] - center
        d2 = d[:, 0] ** 2 + d[:, 1] ** 2
        best = int(np.argmin(d2))
        if d2[best] > radius * radius:
            return -1
        return int(cand[best])

    def nearest_within_batch(self, queries: np.ndarray, radius: float) -> np.ndarray:
        """nearest_within for every row of queries, vectorized.

        Queries sharing a grid cell share one candidate gather, then a small
        dense distance block resolves the nearest neighbor per query.
        """
        queries = np.asarray(queries, dtype=float)
        out = np.full(len(queries), -1, dtype=np.intp)
        if len(queries) == 0 or len(self.xy) == 0:
            return out
        qcells = np.floor(queries / self.cell_size).astype(np.int64)
        reach = int(np.ceil(radius / self.cell_size))
        r2 = radius * radius
        _, groups = _group_by_cell(qcells)
        for group in groups:
            cx, cy = (int(v) for v in qcells[group[0]])
            parts = []
            for dx in range(-reach, reach + 1):
                for dy in range(-reach, reach + 1):
                    b = self._buckets.get((cx + dx, cy + dy))
                    if b is not None:
                        parts.append(b)
            if not parts:
                continue
            cand = np.sort(np.concatenate(parts))
            diff = queries[group][:, None, :] - self.xy[cand][None, :, :]
            d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
            best = np.argmin(d2, axis=1)
            ok = d2[np.arange(len(group)), best] <= r2
            out[group[ok]] = cand[best[ok]]
        return out
