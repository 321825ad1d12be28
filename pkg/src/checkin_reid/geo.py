"""Great-circle distances and nearest-neighbour search over venue coordinates.

Nearest-neighbour queries rank candidates by squared chord length between
unit vectors, which is monotone in great-circle distance and uses only
correctly rounded arithmetic.  The brute-force scan and the grid index
therefore evaluate the very same floating-point expression per pair and
agree bit for bit; the winning chord is converted to metres once, with
``2 R asin(chord / 2)`` (the haversine identity).
"""

from __future__ import annotations

import math

import numpy as np

EARTH_RADIUS_M = 6_371_008.8


def haversine_m(lat1, lon1, lat2, lon2):
    """Haversine distance in metres; accepts scalars or numpy arrays (degrees)."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def unit_vectors(lat, lon) -> np.ndarray:
    phi = np.radians(np.asarray(lat, dtype=np.float64))
    lam = np.radians(np.asarray(lon, dtype=np.float64))
    c = np.cos(phi)
    return np.stack([c * np.cos(lam), c * np.sin(lam), np.sin(phi)], axis=-1)


def _chord2(xyz: np.ndarray, a: int, idx: np.ndarray) -> np.ndarray:
    d = xyz[a] - xyz[idx]
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


def chord2_to_m(chord2: np.ndarray) -> np.ndarray:
    half = np.sqrt(np.asarray(chord2, dtype=np.float64)) / 2.0
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(half, 1.0))


def _check(lat, lon):
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if lat.shape != lon.shape or lat.ndim != 1:
        raise ValueError("lat and lon must be 1-d arrays of equal length")
    if len(lat) < 2:
        raise ValueError("nearest-neighbour distance needs at least two points")
    return lat, lon


def nn_chord2_brute(lat, lon, block: int = 512) -> np.ndarray:
    """Squared chord to the nearest other point, by exhaustive O(n^2) scan."""
    lat, lon = _check(lat, lon)
    xyz = unit_vectors(lat, lon)
    n = len(xyz)
    out = np.empty(n)
    for start in range(0, n, block):
        rows = np.arange(start, min(n, start + block))
        d = xyz[rows, None, :] - xyz[None, :, :]
        c2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
        c2[np.arange(len(rows)), rows] = np.inf
        out[rows] = c2.min(axis=1)
    return out


def nn_distance_brute(lat, lon) -> np.ndarray:
    return chord2_to_m(nn_chord2_brute(lat, lon))


class GridIndex:
    """Uniform lat/lon grid with expanding ring search.

    ``cell_deg`` is the cell side in degrees; by default it is chosen so
    that an average occupied cell holds a handful of points.
    """

    _STOP_MARGIN = 1e-9

    def __init__(self, lat, lon, cell_deg: float | None = None):
        lat, lon = _check(lat, lon)
        self.lat = lat
        self.lon = lon
        self.xyz = unit_vectors(lat, lon)
        n = len(lat)
        if cell_deg is None:
            span = max(np.ptp(lat), 1e-6) * max(np.ptp(lon), 1e-6)
            cell_deg = float(np.clip(math.sqrt(4.0 * span / n), 1e-4, 10.0))
        # cells must tile the full circle exactly for wrap-around bounds
        self.n_lon = int(math.ceil(360.0 / float(cell_deg)))
        self.h = 360.0 / self.n_lon
        self.n_lat = int(math.ceil(180.0 / self.h))
        self.ci = np.minimum(((lat + 90.0) // self.h).astype(np.int64), self.n_lat - 1)
        self.cj = np.minimum(((lon + 180.0) // self.h).astype(np.int64), self.n_lon - 1)
        cells: dict[tuple[int, int], list[int]] = {}
        for k, key in enumerate(zip(self.ci.tolist(), self.cj.tolist())):
            cells.setdefault(key, []).append(k)
        self.cells = {key: np.asarray(v, dtype=np.int64) for key, v in cells.items()}
        self.n = n

    def _ring(self, i: int, j: int, r: int):
        if r == 0:
            yield i, j
            return
        for di in range(-r, r + 1):
            ii = i + di
            if ii < 0 or ii >= self.n_lat:
                continue
            if abs(di) == r:
                djs = range(-r, r + 1)
            else:
                djs = (-r, r)
            for dj in djs:
                yield ii, (j + dj) % self.n_lon

    def _bound(self, a: int, i: int, j: int, r: int) -> float:
        """Lower bound on the squared chord to any point outside ring ``r``."""
        phi = math.radians(self.lat[a])
        lo = (i - r) * self.h - 90.0
        hi = (i + r + 1) * self.h - 90.0
        g_lat = math.inf
        if lo > -90.0:
            g_lat = min(g_lat, phi - math.radians(lo))
        if hi < 90.0:
            g_lat = min(g_lat, math.radians(hi) - phi)
        lat_b = math.inf if g_lat == math.inf else 4.0 * math.sin(min(max(g_lat, 0.0), math.pi) / 2.0) ** 2
        if 2 * r + 1 >= self.n_lon:
            lon_b = math.inf
        else:
            lam = math.radians(self.lon[a])
            west = (j - r) * self.h - 180.0
            east = (j + r + 1) * self.h - 180.0
            g_lon = min(lam - math.radians(west), math.radians(east) - lam, math.pi)
            band_lo = math.radians(max(lo, -90.0))
            band_hi = math.radians(min(hi, 90.0))
            c_min = max(min(math.cos(band_lo), math.cos(band_hi)), 0.0)
            lon_b = 4.0 * math.cos(phi) * c_min * math.sin(max(g_lon, 0.0) / 2.0) ** 2
        return min(lat_b, lon_b)

    def nearest_chord2(self, a: int) -> float:
        i, j = int(self.ci[a]), int(self.cj[a])
        best = math.inf
        budget = 2 * len(self.cells) + 64
        r = 0
        while True:
            wrap = 2 * r + 1 >= self.n_lon
            keys = set(self._ring(i, j, r)) if wrap else self._ring(i, j, r)
            for key in keys:
                budget -= 1
                idx = self.cells.get(key)
                if idx is None:
                    continue
                idx = idx[idx != a]
                if len(idx):
                    m = float(_chord2(self.xyz, a, idx).min())
                    if m < best:
                        best = m
            if best <= self._bound(a, i, j, r) * (1.0 - self._STOP_MARGIN):
                return best
            r += 1
            if budget <= 0 or r > self.n_lat + self.n_lon:
                # sparse or polar neighbourhood: finish with a full scan
                idx = np.arange(self.n)
                idx = idx[idx != a]
                return float(_chord2(self.xyz, a, idx).min())

    def nn_chord2(self) -> np.ndarray:
        return np.array([self.nearest_chord2(a) for a in range(self.n)])


def nn_distance_grid(lat, lon, cell_deg: float | None = None) -> np.ndarray:
    return chord2_to_m(GridIndex(lat, lon, cell_deg).nn_chord2())
