"""RSS fingerprint completion, distance, and the sliding-window vicinity threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from trajalign.core import RSS_FLOOR_DBM, NodeId, RssFingerprint

Readings = Mapping[str, float]


class UndefinedThreshold(ValueError):
    """Raised when a window holds fewer than two fingerprints."""


def _readings(fp: RssFingerprint | Readings) -> Readings:
    return fp.readings if isinstance(fp, RssFingerprint) else fp


@dataclass(frozen=True, slots=True)
class CompletedRssPair:
    ap_ids: tuple[str, ...]
    values_k: np.ndarray
    values_q: np.ndarray

    @property
    def size(self) -> int:
        return len(self.ap_ids)


def complete_pair(fp_k: RssFingerprint | Readings, fp_q: RssFingerprint | Readings) -> CompletedRssPair:
    """Align two fingerprints on the sorted union of their APs.

    An AP heard by only one side is filled in at -110 dBm on the other.
    """
    rk, rq = _readings(fp_k), _readings(fp_q)
    ap_ids = tuple(sorted(set(rk) | set(rq)))
    if not ap_ids:
        raise ValueError("cannot complete two empty fingerprints")
    vk = np.array([rk.get(ap, RSS_FLOOR_DBM) for ap in ap_ids], dtype=float)
    vq = np.array([rq.get(ap, RSS_FLOOR_DBM) for ap in ap_ids], dtype=float)
    return CompletedRssPair(ap_ids, vk, vq)


def rss_distance(fp_k: RssFingerprint | Readings, fp_q: RssFingerprint | Readings) -> float:
    """Root-mean-square dB difference over the completed AP vectors."""
    pair = complete_pair(fp_k, fp_q)
    diff = pair.values_k - pair.values_q
    return math.sqrt(float(np.dot(diff, diff)) / pair.size)


def median_threshold(distances: Sequence[float]) -> float:
    """Median of window distances; even counts average the two middle values."""
    if len(distances) == 0:
        raise UndefinedThreshold("no pairwise distances in window")
    return float(np.median(np.asarray(distances, dtype=float)))


def _check_window(L: int) -> int:
    if L < 2 or L % 2:
        raise ValueError(f"window length must be an even integer >= 2, got {L}")
    return L // 2


def window_median_threshold(traj_fps: Sequence[RssFingerprint], k: int, L: int) -> float:
    """Adaptive vicinity threshold for step ``k`` of one trajectory.

    Takes the median over every unordered pair of fingerprints whose step
    index lies in ``[k - L/2, k + L/2]``. Empty fingerprints are ignored.
    """
    half = _check_window(L)
    window = [
        fp for fp in traj_fps
        if k - half <= fp.node.step_index <= k + half and not fp.is_empty
    ]
    if len(window) < 2:
        raise UndefinedThreshold(f"window around step {k} holds {len(window)} fingerprint(s)")
    dists = [rss_distance(window[i], window[j]) for i in range(len(window)) for j in range(i + 1, len(window))]
    return median_threshold(dists)


class RssMatrix:
    """Dense fingerprint table over the global AP list, for batched distances.

    Missing readings hold the -110 dBm sentinel. Since an AP absent from both
    fingerprints contributes a zero difference, summing over every column
    and dividing by the size of the pair's AP union reproduces
    :func:`rss_distance` up to summation rounding.
    """

    def __init__(self, fingerprints: Sequence[RssFingerprint]):
        self.fingerprints = list(fingerprints)
        self.nodes = [fp.node for fp in self.fingerprints]
        self.ap_ids = sorted({ap for fp in self.fingerprints for ap in fp.readings})
        col = {ap: j for j, ap in enumerate(self.ap_ids)}
        n, m = len(self.fingerprints), len(self.ap_ids)
        self.values = np.full((n, m), RSS_FLOOR_DBM)
        self.heard = np.zeros((n, m), dtype=bool)
        for i, fp in enumerate(self.fingerprints):
            for ap, v in fp.readings.items():
                self.values[i, col[ap]] = v
                self.heard[i, col[ap]] = True
        self.nonempty = self.heard.any(axis=1)

    def __len__(self) -> int:
        return len(self.fingerprints)

    def distances(self, i: int, others: np.ndarray) -> np.ndarray:
        """Distances from row ``i`` to each row in ``others`` (all non-empty)."""
        diff = self.values[others] - self.values[i]
        union = (self.heard[others] | self.heard[i]).sum(axis=1)
        return np.sqrt(np.einsum("ij,ij->i", diff, diff) / union)


def compute_thresholds(fingerprints: Sequence[RssFingerprint], L: int) -> dict[NodeId, float | None]:
    """Window-median threshold for every fingerprinted node (``None`` if undefined)."""
    half = _check_window(L)
    matrix = RssMatrix(fingerprints)
    by_traj: dict[int, list[int]] = {}
    for i, node in enumerate(matrix.nodes):
        if matrix.nonempty[i]:
            by_traj.setdefault(node.trajectory_index, []).append(i)
    out: dict[NodeId, float | None] = {node: None for node in matrix.nodes}
    for rows in by_traj.values():
        rows.sort(key=lambda r: matrix.nodes[r].step_index)
        steps = np.array([matrix.nodes[r].step_index for r in rows])
        rows_arr = np.array(rows)
        for r in rows:
            k = matrix.nodes[r].step_index
            lo, hi = np.searchsorted(steps, k - half, "left"), np.searchsorted(steps, k + half, "right")
            window = rows_arr[lo:hi]
            if len(window) < 2:
                continue
            dists = np.concatenate([matrix.distances(window[a], window[a + 1:]) for a in range(len(window) - 1)])
            out[matrix.nodes[r]] = float(np.median(dists))
    return out


# suppress(later_row, earlier_rows) -> mask of pairs to drop; rows index the
# fingerprints sorted by node id.
SuppressFn = Callable[[int, np.ndarray], np.ndarray]


def vicinity_candidates(
    all_fps: Sequence[RssFingerprint],
    thresholds: Mapping[NodeId, float | None],
    suppress: SuppressFn | None = None,
    cap_per_node: int = 5,
) -> list[tuple[NodeId, NodeId, float]]:
    """Node pairs that are close in RSS space.

    Fingerprints are scanned in :class:`NodeId` order; each one is tested
    against every earlier fingerprint using its own threshold, with a strict
    ``<`` comparison. ``suppress`` drops same-trajectory pairs that are near
    in time or space before the per-node cap keeps the ``cap_per_node``
    smallest distances (``0`` disables the cap).

    Returns ``(a, b, distance)`` triples with ``a < b``, sorted by node pair.
    """
    fps = sorted(all_fps, key=lambda fp: fp.node)
    matrix = RssMatrix(fps)
    eligible = np.flatnonzero(matrix.nonempty)
    out: list[tuple[NodeId, NodeId, float]] = []
    for pos, i in enumerate(eligible):
        d_med = thresholds.get(matrix.nodes[i])
        if d_med is None or pos == 0:
            continue
        earlier = eligible[:pos]
        if suppress is not None:
            earlier = earlier[~suppress(int(i), earlier)]
            if earlier.size == 0:
                continue
        d = matrix.distances(int(i), earlier)
        keep = d < d_med
        hits, hd = earlier[keep], d[keep]
        if cap_per_node and hits.size > cap_per_node:
            order = np.argsort(hd, kind="stable")[:cap_per_node]
            hits, hd = hits[order], hd[order]
        for j, dist in zip(hits, hd):
            out.append((matrix.nodes[j], matrix.nodes[i], float(dist)))
    out.sort(key=lambda t: (t[0], t[1]))
    return out
