"""Shape-adaptive spectral reconstruction.

Each pixel gets a convex, spatially adaptive neighborhood sized from the
local smoothness of the image's first principal component: order-0 local
averages are computed along eight compass rays at several lengths, a
confidence-interval intersection rule picks the longest statistically
consistent length per ray, and the convex hull of the eight ray endpoints
defines the neighborhood.  The pixel's spectrum is then replaced by a
correlation-weighted average of the neighborhood spectra.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import PcScalarField, PixelCloud, first_pc

__all__ = [
    "DIRECTION_STEPS",
    "LpaKernel",
    "IciConfig",
    "SaRegion",
    "build_lpa_kernels",
    "lpa_estimate",
    "ici_select_length",
    "build_sa_region",
    "reconstruct_pixel",
    "estimate_noise_sigma",
    "sar",
]

# Unit steps for the eight rays, 45 degrees apart, starting east and
# proceeding counterclockwise: direction m (1-based) steps by
# DIRECTION_STEPS[m - 1] == (d_row, d_col) per sample.
DIRECTION_STEPS: tuple[tuple[int, int], ...] = (
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
)


@dataclass(frozen=True)
class LpaKernel:
    """A directional order-0 averaging kernel of a given length.

    ``offsets[s]`` is the (row, col) displacement of sample ``s`` from the
    center, ``weights[s]`` its weight.  Sample 0 is the center itself and
    offsets must proceed outward along a single ray.
    """

    direction: int
    length: int
    offsets: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        offsets = np.ascontiguousarray(np.asarray(self.offsets, dtype=np.intp))
        weights = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if not 1 <= self.direction <= 8:
            raise ValueError("direction must be in 1..8")
        if self.length < 1 or offsets.shape != (self.length, 2) or weights.shape != (self.length,):
            raise ValueError("offsets/weights do not match kernel length")
        if tuple(offsets[0]) != (0, 0):
            raise ValueError("kernel sample 0 must sit on the center pixel")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError("kernel weights must sum to 1")
        if float(np.linalg.norm(weights)) > 1.0 + 1e-12:
            raise ValueError("kernel weight norm must not exceed 1")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "weights", weights)

    @property
    def gnorm2(self) -> float:
        """Euclidean norm of the weights (the estimator's noise gain)."""
        return float(np.linalg.norm(self.weights))


@dataclass(frozen=True)
class IciConfig:
    """Parameters of the confidence-interval length selection.

    ``sigma`` is the noise standard deviation of the scalar field; ``None``
    means estimate it from the field itself.  ``lengths`` is the strictly
    increasing ladder of candidate ray lengths.
    """

    tau: float = 2.0
    sigma: float | None = None
    lengths: tuple[int, ...] = (1, 2, 3, 5, 7, 9)

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.sigma is not None and not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        lengths = tuple(int(l) for l in self.lengths)
        if not lengths:
            raise ValueError("lengths must be non-empty")
        if lengths[0] < 1 or any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValueError("lengths must be strictly increasing and at least 1")
        object.__setattr__(self, "lengths", lengths)


@dataclass(frozen=True)
class SaRegion:
    """A pixel's adaptive neighborhood: flat indices inside the convex hull
    of the eight selected ray endpoints, clipped to the grid."""

    center: int
    dir_lengths: tuple[int, ...]
    members: np.ndarray

    def __post_init__(self) -> None:
        members = np.ascontiguousarray(np.asarray(self.members, dtype=np.intp))
        if members.ndim != 1 or members.size < 1:
            raise ValueError("members must be a non-empty 1-D index array")
        if np.any(np.diff(members) <= 0):
            raise ValueError("members must be strictly increasing")
        if len(self.dir_lengths) != 8 or any(l < 1 for l in self.dir_lengths):
            raise ValueError("dir_lengths must be eight lengths >= 1")
        if self.center not in members:
            raise ValueError("center must be a member of its own region")
        object.__setattr__(self, "dir_lengths", tuple(int(l) for l in self.dir_lengths))
        object.__setattr__(self, "members", members)


def build_lpa_kernels(lengths: Sequence[int]) -> dict[tuple[int, int], LpaKernel]:
    """Build uniform directional kernels for all 8 directions and lengths.

    Returns a dict keyed by ``(direction, length)`` with direction in 1..8.
    A kernel of length ``l`` averages ``l`` samples along its ray with equal
    weights ``1/l``, so its weights sum to 1 and have norm ``1/sqrt(l)``.
    """
    lengths = tuple(int(l) for l in lengths)
    if not lengths or any(l < 1 for l in lengths):
        raise ValueError("lengths must be positive")
    kernels: dict[tuple[int, int], LpaKernel] = {}
    for direction, (dr, dc) in enumerate(DIRECTION_STEPS, start=1):
        for length in lengths:
            steps = np.arange(length, dtype=np.intp)
            offsets = np.column_stack((steps * dr, steps * dc))
            weights = np.full(length, 1.0 / length)
            kernels[(direction, length)] = LpaKernel(direction, length, offsets, weights)
    return kernels


def lpa_estimate(
    field: PcScalarField, kernel: LpaKernel, center: tuple[int, int]
) -> tuple[float, float]:
    """Directional local average at ``center``, with replicate padding.

    Samples falling outside the grid are replaced by the nearest in-bounds
    pixel along the ray, so every tap is used.  Returns ``(estimate,
    gnorm2)`` where ``gnorm2`` is the Euclidean norm of the weights.
    """
    grid = field.grid()
    h, w = grid.shape
    r0, c0 = int(center[0]), int(center[1])
    if not (0 <= r0 < h and 0 <= c0 < w):
        raise ValueError("center is outside the grid")
    est = 0.0
    last_r, last_c = r0, c0
    for s in range(kernel.length):
        rr = r0 + int(kernel.offsets[s, 0])
        cc = c0 + int(kernel.offsets[s, 1])
        if 0 <= rr < h and 0 <= cc < w:
            last_r, last_c = rr, cc
        est += kernel.weights[s] * grid[last_r, last_c]
    return float(est), kernel.gnorm2


def ici_select_length(
    estimates: Sequence[tuple[float, float]], config: IciConfig
) -> int:
    """Pick the largest candidate length whose confidence interval still
    intersects all shorter ones.

    ``estimates`` holds one ``(estimate, gnorm2)`` pair per candidate
    length, aligned with ``config.lengths``.  Interval ``l`` is
    ``estimate ± tau * sigma * gnorm2``; the selected length is the last one
    for which the running intersection ``[max lower, min upper]`` over the
    prefix is non-empty.  The first interval is always non-empty, so the
    smallest length is the fallback.
    """
    if config.sigma is None:
        raise ValueError("config.sigma must be set for length selection")
    if len(estimates) != len(config.lengths):
        raise ValueError("one (estimate, gnorm2) pair per candidate length required")
    lower = -np.inf
    upper = np.inf
    selected = config.lengths[0]
    for (estimate, gnorm2), length in zip(estimates, config.lengths):
        half = config.tau * config.sigma * gnorm2
        lower = max(lower, estimate - half)
        upper = min(upper, estimate + half)
        if lower > upper:
            break
        selected = length
    return selected


# ---------------------------------------------------------------------------
# Region geometry

_HULL_TOL = 1e-9


def _convex_hull_ccw(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; expects >= 3 unique non-collinear points."""
    pts = points[np.lexsort((points[:, 1], points[:, 0]))]

    def half(iterable):
        chain: list[np.ndarray] = []
        for p in iterable:
            while len(chain) >= 2:
                a, b = chain[-2], chain[-1]
                cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
                if cross <= 0:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _points_in_hull(candidates: np.ndarray, vertices: np.ndarray, tol: float = _HULL_TOL) -> np.ndarray:
    """Boolean mask of candidate points inside the convex hull of ``vertices``.

    Handles the degenerate cases (all vertices equal, all collinear) and uses
    half-plane tests with an absolute tolerance otherwise.  Coordinates here
    are small integers stored as floats, so the arithmetic is exact and the
    tolerance only guards the phrasing of boundary inclusion.
    """
    cand = np.asarray(candidates, dtype=np.float64)
    verts = np.unique(np.asarray(vertices, dtype=np.float64), axis=0)
    if verts.shape[0] == 1:
        return np.all(np.abs(cand - verts[0]) <= tol, axis=1)
    base = verts[0]
    dirs = verts[1:] - base
    ref = dirs[np.argmax(np.abs(dirs).sum(axis=1))]
    cross_to_ref = dirs[:, 0] * ref[1] - dirs[:, 1] * ref[0]
    if np.all(np.abs(cross_to_ref) <= tol):
        # Collinear vertex set: the hull is a segment along ref.
        t_verts = dirs @ ref
        t_lo, t_hi = float(t_verts.min()), float(t_verts.max())
        t_lo = min(t_lo, 0.0)
        t_hi = max(t_hi, 0.0)
        rel = cand - base
        off_line = np.abs(rel[:, 0] * ref[1] - rel[:, 1] * ref[0])
        t = rel @ ref
        return (off_line <= tol) & (t >= t_lo - tol) & (t <= t_hi + tol)
    hull = _convex_hull_ccw(verts)
    inside = np.ones(cand.shape[0], dtype=bool)
    for i in range(hull.shape[0]):
        a = hull[i]
        b = hull[(i + 1) % hull.shape[0]]
        cross = (b[0] - a[0]) * (cand[:, 1] - a[1]) - (b[1] - a[1]) * (cand[:, 0] - a[0])
        inside &= cross >= -tol
    return inside


@lru_cache(maxsize=4096)
def _region_offsets(dir_lengths: tuple[int, ...]) -> np.ndarray:
    """Integer (row, col) offsets inside the hull of the 8 ray endpoints.

    Translation-invariant, hence cached on the length tuple alone.  The
    endpoint of direction m at length l sits at ``(l - 1) * step_m``; length
    1 keeps the endpoint on the center.
    """
    endpoints = np.array(
        [((l - 1) * dr, (l - 1) * dc) for l, (dr, dc) in zip(dir_lengths, DIRECTION_STEPS)],
        dtype=np.float64,
    )
    r_lo, c_lo = np.floor(endpoints.min(axis=0)).astype(int)
    r_hi, c_hi = np.ceil(endpoints.max(axis=0)).astype(int)
    rr, cc = np.meshgrid(np.arange(r_lo, r_hi + 1), np.arange(c_lo, c_hi + 1), indexing="ij")
    cand = np.column_stack((rr.ravel(), cc.ravel())).astype(np.float64)
    mask = _points_in_hull(cand, endpoints)
    offsets = cand[mask].astype(np.intp)
    offsets.setflags(write=False)
    return offsets


def build_sa_region(
    center: tuple[int, int], dir_lengths: Sequence[int], shape: tuple[int, int]
) -> SaRegion:
    """Rasterize the adaptive neighborhood for one pixel.

    ``dir_lengths`` gives the selected length per direction (order matching
    :data:`DIRECTION_STEPS`); members are the in-bounds integer pixels inside
    the closed convex hull of the eight ray endpoints, as flat row-major
    indices into a grid of the given ``shape``.
    """
    h, w = int(shape[0]), int(shape[1])
    lengths = tuple(int(l) for l in dir_lengths)
    if len(lengths) != 8 or any(l < 1 for l in lengths):
        raise ValueError("dir_lengths must be eight lengths >= 1")
    r0, c0 = int(center[0]), int(center[1])
    if not (0 <= r0 < h and 0 <= c0 < w):
        raise ValueError("center is outside the grid")
    offsets = _region_offsets(lengths)
    rows = r0 + offsets[:, 0]
    cols = c0 + offsets[:, 1]
    keep = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    members = np.sort(rows[keep] * w + cols[keep])
    return SaRegion(r0 * w + c0, lengths, members)


# ---------------------------------------------------------------------------
# Reconstruction


def _correlation_weights(x: np.ndarray, neighborhood: np.ndarray, center_pos: int) -> np.ndarray:
    """Clipped Pearson correlations of ``x`` against each neighborhood row.

    Negative correlations are zeroed; rows with zero variance get weight 0
    (Pearson is undefined there); the center's weight is forced to 1.
    """
    weights = np.zeros(neighborhood.shape[0])
    xc = x - x.mean()
    x_norm = float(np.linalg.norm(xc))
    if x_norm > 0.0:
        yc = neighborhood - neighborhood.mean(axis=1, keepdims=True)
        y_norm = np.sqrt((yc * yc).sum(axis=1))
        ok = y_norm > 0.0
        weights[ok] = (yc[ok] @ xc) / (y_norm[ok] * x_norm)
        np.clip(weights, 0.0, None, out=weights)
    weights[center_pos] = 1.0
    return weights


def reconstruct_pixel(x: np.ndarray, region: SaRegion, cloud: PixelCloud) -> np.ndarray:
    """Correlation-weighted average of the region's spectra.

    The result is a convex combination of member spectra (weights are
    non-negative and the center's own weight is 1, so the total is
    positive), which keeps each band inside the member min/max envelope.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cloud.bands,):
        raise ValueError("x must be a single spectrum matching the cloud's bands")
    members = region.members
    if members.max() >= cloud.n:
        raise ValueError("region indices fall outside the cloud")
    neighborhood = cloud.spectra[members]
    center_pos = int(np.searchsorted(members, region.center))
    weights = _correlation_weights(x, neighborhood, center_pos)
    total = float(weights.sum())
    if total <= 0.0:
        return x.copy()
    return (weights @ neighborhood) / total


def estimate_noise_sigma(grid: np.ndarray) -> float:
    """Robust noise scale of a 2-D field via horizontal first differences.

    Uses the median absolute deviation of ``grid[:, 1:] - grid[:, :-1]``
    scaled by ``0.6745 * sqrt(2)``; a difference of two i.i.d. noise values
    has ``sqrt(2)`` times the noise sigma, and 0.6745 converts MAD to a
    Gaussian standard deviation.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("expected a 2-D field")
    diffs = np.diff(grid, axis=1).ravel()
    if diffs.size == 0:
        return 0.0
    mad = float(np.median(np.abs(diffs - np.median(diffs))))
    return mad / (0.6745 * np.sqrt(2.0))


def _directional_estimate_stacks(
    grid: np.ndarray,
    kernels: dict[tuple[int, int], LpaKernel],
    lengths: tuple[int, ...],
) -> list[np.ndarray]:
    """Per-direction stacks of LPA estimates, shape ``(len(lengths), h, w)``.

    Vectorized over the grid but accumulating samples in the same order as
    :func:`lpa_estimate`, so values agree bit for bit with the scalar path.
    """
    h, w = grid.shape
    max_len = max(lengths)
    rows = np.arange(h, dtype=np.intp)[:, None]
    cols = np.arange(w, dtype=np.intp)[None, :]
    stacks: list[np.ndarray] = []
    for direction, (dr, dc) in enumerate(DIRECTION_STEPS, start=1):
        # Steps available before the ray leaves the grid, per pixel.
        avail = np.full((h, w), max_len, dtype=np.intp)
        if dr > 0:
            avail = np.minimum(avail, h - 1 - rows)
        elif dr < 0:
            avail = np.minimum(avail, rows)
        if dc > 0:
            avail = np.minimum(avail, w - 1 - cols)
        elif dc < 0:
            avail = np.minimum(avail, cols)
        samples = []
        for s in range(max_len):
            step = np.minimum(s, avail)
            samples.append(grid[rows + step * dr, cols + step * dc])
        stack = np.empty((len(lengths), h, w))
        for li, length in enumerate(lengths):
            weights = kernels[(direction, length)].weights
            acc = np.zeros((h, w))
            for s in range(length):
                acc += weights[s] * samples[s]
            stack[li] = acc
        stacks.append(stack)
    return stacks


def sar(cloud: PixelCloud, config: IciConfig | None = None) -> PixelCloud:
    """Shape-adaptive reconstruction of every spectrum in a full-grid cloud.

    Pipeline per pixel: directional local averages of the first-PC field at
    each candidate length, confidence-interval length selection per
    direction, convex-hull rasterization of the eight ray endpoints, and a
    correlation-weighted average of the member spectra.  When
    ``config.sigma`` is ``None`` the noise scale is estimated from the PC
    field itself.

    A cloud whose spectra are all identical is returned unchanged: there is
    no principal axis to adapt to, and any neighborhood average of equal
    spectra reproduces the input.
    """
    if config is None:
        config = IciConfig()
    shape = cloud.grid_shape()
    if shape is None:
        raise ValueError("reconstruction requires a full-grid cloud")
    if np.all(cloud.spectra == cloud.spectra[0]):
        return PixelCloud(cloud.spectra.copy(), cloud.coords.copy())
    field = first_pc(cloud)
    grid = field.grid()
    sigma = config.sigma if config.sigma is not None else estimate_noise_sigma(grid)
    config = dataclasses.replace(config, sigma=sigma)
    kernels = build_lpa_kernels(config.lengths)
    stacks = _directional_estimate_stacks(grid, kernels, config.lengths)
    gnorms = [
        [kernels[(direction, length)].gnorm2 for length in config.lengths]
        for direction in range(1, 9)
    ]
    out = np.empty_like(cloud.spectra)
    n_lengths = len(config.lengths)
    for i in range(cloud.n):
        r, c = int(cloud.coords[i, 0]), int(cloud.coords[i, 1])
        selected = tuple(
            ici_select_length(
                [(stacks[m][li, r, c], gnorms[m][li]) for li in range(n_lengths)],
                config,
            )
            for m in range(8)
        )
        region = build_sa_region((r, c), selected, shape)
        out[i] = reconstruct_pixel(cloud.spectra[i], region, cloud)
    return PixelCloud(out, cloud.coords.copy())
