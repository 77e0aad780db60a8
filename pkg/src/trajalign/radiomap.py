"""Crowdsourced radio map construction, kNN fingerprint localization, error CDFs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from trajalign.core import RSS_FLOOR_DBM, NodeId, PoseGraph, RssFingerprint, RssScan

PositionLike = Sequence[float]


@dataclass(slots=True)
class RadioMapEntry:
    position: tuple[float, float]
    rss: dict[str, float]
    counts: dict[str, int]
    n_samples: int = 1


@dataclass(slots=True)
class RadioMap:
    entries: list[RadioMapEntry] = field(default_factory=list)
    grid_size: float = 1.0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def is_empty(self) -> bool:
        return not self.entries


@dataclass(slots=True)
class LocalizationResult:
    estimated_position: tuple[float, float]
    neighbor_ids: list[int]
    neighbor_distances: list[float]


def build_radio_map_from_positions(
    fingerprints: Sequence[RssFingerprint],
    positions: Mapping[NodeId, PositionLike],
    grid_size: float = 1.0,
) -> RadioMap:
    """Bin fingerprints at the given node positions onto a regular grid.

    Each bin keeps the per-AP arithmetic mean of the dBm readings that fell
    into it. Entries are ordered by bin index, so the result does not depend
    on the order of ``fingerprints``.
    """
    if grid_size <= 0:
        raise ValueError("grid_size must be positive")
    bins: dict[tuple[int, int], tuple[dict[str, list[float]], list[int]]] = {}
    for fp in fingerprints:
        if fp.is_empty:
            continue
        x, y = positions[fp.node][0], positions[fp.node][1]
        key = (math.floor(x / grid_size), math.floor(y / grid_size))
        per_ap, n = bins.setdefault(key, ({}, [0]))
        n[0] += 1
        for ap, v in fp.readings.items():
            per_ap.setdefault(ap, []).append(v)
    entries = []
    for (ix, iy) in sorted(bins):
        per_ap, n = bins[(ix, iy)]
        entries.append(RadioMapEntry(
            ((ix + 0.5) * grid_size, (iy + 0.5) * grid_size),
            {ap: math.fsum(sorted(vals)) / len(vals) for ap, vals in sorted(per_ap.items())},
            {ap: len(vals) for ap, vals in sorted(per_ap.items())},
            n[0],
        ))
    return RadioMap(entries, grid_size)


def build_radio_map(graph: PoseGraph, fingerprints: Sequence[RssFingerprint], grid_size: float = 1.0) -> RadioMap:
    """Radio map from fingerprints placed at the graph's optimized node positions."""
    positions = {n: graph.estimates[i, :2] for i, n in enumerate(graph.node_ids)}
    return build_radio_map_from_positions(fingerprints, positions, grid_size)


class _EntryTable:
    def __init__(self, rm: RadioMap):
        self.ap_ids = sorted({ap for e in rm.entries for ap in e.rss})
        self.col = {ap: j for j, ap in enumerate(self.ap_ids)}
        self.values = np.full((len(rm.entries), len(self.ap_ids)), RSS_FLOOR_DBM)
        self.heard = np.zeros(self.values.shape, dtype=bool)
        for i, e in enumerate(rm.entries):
            for ap, v in e.rss.items():
                self.values[i, self.col[ap]] = v
                self.heard[i, self.col[ap]] = True
        self.positions = np.array([e.position for e in rm.entries], dtype=float).reshape(-1, 2)

    def distances(self, readings: Mapping[str, float]) -> np.ndarray:
        q = np.full(len(self.ap_ids), RSS_FLOOR_DBM)
        qh = np.zeros(len(self.ap_ids), dtype=bool)
        extra_sq, extra_n = 0.0, 0
        for ap, v in readings.items():
            j = self.col.get(ap)
            if j is None:
                # AP unknown to the map: every entry holds the floor there
                extra_sq += (v - RSS_FLOOR_DBM) ** 2
                extra_n += 1
            else:
                q[j], qh[j] = v, True
        diff = self.values - q
        union = (self.heard | qh).sum(axis=1) + extra_n
        return np.sqrt((np.einsum("ij,ij->i", diff, diff) + extra_sq) / np.maximum(union, 1))


def knn_localize(
    rm: RadioMap, query: RssFingerprint | RssScan | Mapping[str, float], k: int = 3, _table: _EntryTable | None = None
) -> LocalizationResult:
    """Unweighted kNN: mean position of the ``k`` entries nearest in RSS space.

    Ties keep map order; ``k`` larger than the map uses every entry.
    """
    if rm.is_empty:
        raise ValueError("radio map is empty")
    if k < 1:
        raise ValueError("k must be at least 1")
    readings = query if isinstance(query, Mapping) else query.readings
    table = _table or _EntryTable(rm)
    d = table.distances(readings)
    order = np.argsort(d, kind="stable")[: min(k, len(d))]
    est = table.positions[order].mean(axis=0)
    return LocalizationResult((float(est[0]), float(est[1])), [int(i) for i in order], [float(d[i]) for i in order])


def localize_all(rm: RadioMap, queries: Sequence[RssScan | RssFingerprint], k: int = 3) -> list[LocalizationResult]:
    table = _EntryTable(rm) if not rm.is_empty else None
    return [knn_localize(rm, q, k, table) for q in queries]


@dataclass(slots=True)
class CdfReport:
    errors: np.ndarray
    probabilities: np.ndarray
    p_under_10m: float
    mean: float
    std: float
    max: float
    median: float

    def rows(self) -> list[tuple[float, float]]:
        return [(float(e), float(p)) for e, p in zip(self.errors, self.probabilities)]


def error_cdf(results: Sequence[tuple[PositionLike, PositionLike]]) -> CdfReport:
    """Empirical CDF of planar errors between ``(estimate, truth)`` pairs."""
    if not len(results):
        raise ValueError("no results to summarize")
    est = np.array([r[0][:2] for r in results], dtype=float)
    tru = np.array([r[1][:2] for r in results], dtype=float)
    err = np.sort(np.hypot(est[:, 0] - tru[:, 0], est[:, 1] - tru[:, 1]))
    n = len(err)
    return CdfReport(
        errors=err,
        probabilities=np.arange(1, n + 1) / n,
        p_under_10m=float(np.count_nonzero(err < 10.0) / n),
        mean=float(err.mean()),
        std=float(err.std()),
        max=float(err.max()),
        median=float(np.median(err)),
    )
