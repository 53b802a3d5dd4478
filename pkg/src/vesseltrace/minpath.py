"""Minimum-cost path extraction for low-contrast vessel segments.

A terrain-cost volume is derived from normalized vesselness and a sigmoid
intensity transfer; probable vessel voxels come out cheap (close to 1 per mm)
and background voxels expensive.  A* searches the 26-connected voxel grid
with spacing-aware Euclidean edge lengths and the straight-line mm distance
as the heuristic, which is admissible because every per-mm cost is at
least 1.  A heuristic-free Dijkstra twin serves as the optimality oracle.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import ComputeError, DataError, OutOfBoundsError
from .tracker import FASCIA_REACHED, Centerline
from .volume import COST, NORMALIZED_UNIT, Volume, require_same_geometry

BRIGHT_IS_COSTLY = "bright-is-costly"
BRIGHT_IS_CHEAP = "bright-is-cheap"

# sigmoid steepness / threshold grids reported for the parameter sweep
SWEEP_A_VALUES = (7.5, 15.0, 22.5, 30.0, 37.5, 45.0)
SWEEP_B_VALUES = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80)


@dataclass(frozen=True)
class SigmoidParams:
    """Shape of the intensity transfer feeding the terrain cost."""

    a_s: float = 45.0
    b_s: float = 0.60
    epsilon: float = 1e-3
    orientation: str = BRIGHT_IS_CHEAP

    def __post_init__(self):
        if self.epsilon <= 0:
            raise DataError("epsilon must be positive")
        if not (0.0 <= self.b_s <= 1.0):
            raise DataError("b_s must lie in [0, 1]")
        if self.orientation not in (BRIGHT_IS_COSTLY, BRIGHT_IS_CHEAP):
            raise DataError(f"unknown sigmoid orientation {self.orientation!r}")


@dataclass
class VoxelPath:
    """26-connected voxel chain with search bookkeeping."""

    indices: list[tuple[int, int, int]]
    total_cost: float
    expanded_nodes: int
    elapsed_s: float


def sigmoid_transfer(intensity, p: SigmoidParams):
    """Intensity transfer T in (0, 1).

    ``bright-is-costly`` uses exponent +a_s (I - b_s): bright voxels map low.
    ``bright-is-cheap`` flips the exponent sign so bright voxels map high
    and therefore cheap once inverted into a cost.
    """
    i = np.asarray(intensity, dtype=np.float64)
    sign = 1.0 if p.orientation == BRIGHT_IS_COSTLY else -1.0
    expo = np.clip(sign * p.a_s * (i - p.b_s), -500.0, 500.0)
    out = 1.0 / (1.0 + np.exp(expo))
    if np.ndim(intensity) == 0:
        return float(out)
    return out


def build_cost_volume(
    vness_norm: Volume, intensity_norm: Volume, p: SigmoidParams
) -> Volume:
    """Terrain cost C = 1 / (vesselness * T(intensity) + epsilon), floor 1.

    Both inputs must be normalized to [0, 1] and share geometry.  The floor
    keeps every per-mm cost >= 1, which the A* heuristic relies on.
    """
    require_same_geometry(vness_norm, intensity_norm,
                          "vesselness and intensity volumes")
    for vol, name in ((vness_norm, "vesselness"), (intensity_norm, "intensity")):
        if vol.value_kind != NORMALIZED_UNIT:
            raise DataError(f"{name} volume must be normalized-unit, got {vol.value_kind}")
    t = sigmoid_transfer(intensity_norm.data.astype(np.float64), p)
    denom = vness_norm.data.astype(np.float64) * t + p.epsilon
    cost = np.maximum(1.0 / denom, 1.0).astype(np.float32)
    return vness_norm.with_data(cost, COST)


def _neighbor_table(dims, spacing):
    """(flat offsets, mm distances) for 26-connectivity on a (nz,ny,nx) grid."""
    nx, ny, _ = dims
    sx, sy, sz = spacing
    offsets = []
    dists = []
    steps = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == dy == dz == 0:
                    continue
                offsets.append((dz * ny + dy) * nx + dx)
                steps.append((dx, dy, dz))
                dists.append(math.sqrt((dx * sx) ** 2 + (dy * sy) ** 2 + (dz * sz) ** 2))
    return offsets, steps, dists


def _check_voxel(dims, idx, name):
    i, j, k = (int(v) for v in idx)
    nx, ny, nz = dims
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
        raise OutOfBoundsError(f"{name} voxel {(i, j, k)} outside dims {dims}")
    return i, j, k


def _flat(dims, ijk):
    nx, ny, _ = dims
    i, j, k = ijk
    return (k * ny + j) * nx + i


def _unflat(dims, flat):
    nx, ny, _ = dims
    i = flat % nx
    j = (flat // nx) % ny
    k = flat // (nx * ny)
    return (int(i), int(j), int(k))


def _heuristic_grid(costs: Volume, goal_ijk) -> np.ndarray:
    """Euclidean mm distance from every voxel to the goal, flat layout."""
    nx, ny, nz = costs.dims
    sx, sy, sz = costs.spacing
    gi, gj, gk = goal_ijk
    dx = ((np.arange(nx) - gi) * sx) ** 2
    dy = ((np.arange(ny) - gj) * sy) ** 2
    dz = ((np.arange(nz) - gk) * sz) ** 2
    h = np.sqrt(dz[:, None, None] + dy[None, :, None] + dx[None, None, :])
    return h.reshape(-1)


def _validate_cost_volume(costs: Volume) -> np.ndarray:
    if costs.value_kind != COST:
        raise DataError(f"expected a cost volume, got {costs.value_kind}")
    flat = costs.data.astype(np.float64).reshape(-1)
    if flat.min() < 1.0 - 1e-9:
        raise DataError("cost volume has values below 1")
    return flat

def astar(costs: Volume, start, goal) -> VoxelPath:
    """Cost-optimal 26-connected voxel path from start to goal.

    Edge cost is C(neighbor) * mm distance; the heuristic is the mm distance
    to the goal.  Ties in f are broken by the smaller flat voxel index
    ((z, y, x)-lexicographic), making the returned path deterministic.
    """
    t0 = time.perf_counter()
    cost_flat = _validate_cost_volume(costs)
    dims = costs.dims
    start_ijk = _check_voxel(dims, start, "start")
    goal_ijk = _check_voxel(dims, goal, "goal")
    s = _flat(dims, start_ijk)
    g = _flat(dims, goal_ijk)

    if s == g:
        return VoxelPath([start_ijk], 0.0, 0, time.perf_counter() - t0)

    offsets, steps, dists = _neighbor_table(dims, costs.spacing)
    h = _heuristic_grid(costs, goal_ijk)
    nx, ny, nz = dims

    gscore = np.full(cost_flat.size, np.inf)
    came = np.full(cost_flat.size, -1, dtype=np.int64)
    done = np.zeros(cost_flat.size, dtype=bool)
    gscore[s] = 0.0
    heap = [(h[s], s)]
    expanded = 0

    while heap:
        f, node = heapq.heappop(heap)
        if done[node]:
            continue
        done[node] = True
        expanded += 1
        if node == g:
            path = _reconstruct(dims, came, s, g)
            return VoxelPath(path, float(gscore[g]), expanded,
                             time.perf_counter() - t0)
        base = gscore[node]
        i = node % nx
        j = (node // nx) % ny
        k = node // (nx * ny)
        for off, (dx, dy, dz), d in zip(offsets, steps, dists):
            ii, jj, kk = i + dx, j + dy, k + dz
            if not (0 <= ii < nx and 0 <= jj < ny and 0 <= kk < nz):
                continue
            nb = node + off
            if done[nb]:
                continue
            cand = base + cost_flat[nb] * d
            if cand < gscore[nb]:
                gscore[nb] = cand
                came[nb] = node
                heapq.heappush(heap, (cand + h[nb], nb))
    raise ComputeError("goal unreachable from start")


def dijkstra_oracle(costs: Volume, start, goal) -> VoxelPath:
    """Heuristic-free settled-node expansion; the optimality reference."""
    t0 = time.perf_counter()
    cost_flat = _validate_cost_volume(costs)
    dims = costs.dims
    start_ijk = _check_voxel(dims, start, "start")
    goal_ijk = _check_voxel(dims, goal, "goal")
    s = _flat(dims, start_ijk)
    g = _flat(dims, goal_ijk)

    if s == g:
        return VoxelPath([start_ijk], 0.0, 0, time.perf_counter() - t0)

    offsets, steps, dists = _neighbor_table(dims, costs.spacing)
    nx, ny, nz = dims
    dist = np.full(cost_flat.size, np.inf)
    came = np.full(cost_flat.size, -1, dtype=np.int64)
    done = np.zeros(cost_flat.size, dtype=bool)
    dist[s] = 0.0
    heap = [(0.0, s)]
    expanded = 0

    while heap:
        dcur, node = heapq.heappop(heap)
        if done[node]:
            continue
        done[node] = True
        expanded += 1
        if node == g:
            path = _reconstruct(dims, came, s, g)
            return VoxelPath(path, float(dist[g]), expanded,
                             time.perf_counter() - t0)
        i = node % nx
        j = (node // nx) % ny
        k = node // (nx * ny)
        for off, (dx, dy, dz), d in zip(offsets, steps, dists):
            ii, jj, kk = i + dx, j + dy, k + dz
            if not (0 <= ii < nx and 0 <= jj < ny and 0 <= kk < nz):
                continue
            nb = node + off
            if done[nb]:
                continue
            cand = dist[node] + cost_flat[nb] * d
            if cand < dist[nb]:
                dist[nb] = cand
                came[nb] = node
                heapq.heappush(heap, (cand, nb))
    raise ComputeError("goal unreachable from start")


def _reconstruct(dims, came, s, g):
    chain = [g]
    node = g
    while node != s:
        node = int(came[node])
        if node < 0:
            raise ComputeError("broken predecessor chain")
        chain.append(node)
    chain.reverse()
    return [_unflat(dims, f) for f in chain]


def refine_path(path: VoxelPath, costs: Volume, smooth: bool = True) -> Centerline:
    """Voxel chain -> mm polyline, optionally moving-average smoothed.

    Smoothing uses a window of 3 with both endpoints fixed.  Per-point
    "vesselness" is the reciprocal terrain cost (1 = certain corridor), and
    directions are unit tangents of the polyline.
    """
    if not path.indices:
        raise DataError("cannot refine an empty path")
    pts = np.array([costs.index_to_mm(ijk) for ijk in path.indices], dtype=np.float64)
    if smooth and len(pts) >= 3:
        sm = pts.copy()
        sm[1:-1] = (pts[:-2] + pts[1:-1] + pts[2:]) / 3.0
        pts = sm

    n = len(pts)
    dirs = np.zeros((n, 3), dtype=np.float64)
    if n == 1:
        dirs[0] = (0.0, 0.0, 1.0)
    else:
        seg = np.diff(pts, axis=0)
        dirs[0] = seg[0]
        dirs[-1] = seg[-1]
        if n > 2:
            dirs[1:-1] = seg[:-1] + seg[1:]
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        dirs = dirs / norms

    inv_cost = np.array(
        [1.0 / costs.voxel_value(ijk) for ijk in path.indices], dtype=np.float64
    )
    return Centerline(
        points=pts,
        directions=dirs,
        vesselness=inv_cost,
        termination_reason=FASCIA_REACHED,
        total_cost=path.total_cost,
        expanded_nodes=path.expanded_nodes,
        elapsed_s=path.elapsed_s,
    )


def sweep_cells(a_values=SWEEP_A_VALUES, b_values=SWEEP_B_VALUES):
    """The (a_s, b_s) grid of the reported parameter sweep, row-major."""
    return [(a, b) for a in a_values for b in b_values]


def run_sweep_cell(
    vness_norm: Volume,
    intensity_norm: Volume,
    start,
    goal,
    a_s: float,
    b_s: float,
    epsilon: float = 1e-3,
    orientation: str = BRIGHT_IS_CHEAP,
    landmarks=None,
) -> dict:
    """Build the cost volume for one (a_s, b_s) cell, search, and score."""
    params = SigmoidParams(a_s=a_s, b_s=b_s, epsilon=epsilon,
                           orientation=orientation)
    costs = build_cost_volume(vness_norm, intensity_norm, params)
    path = astar(costs, start, goal)
    line = refine_path(path, costs)
    row = {
        "a_s": a_s,
        "b_s": b_s,
        "mean_euclidean_mm": float("nan"),
        "hausdorff_mm": float("nan"),
        "elapsed_s": path.elapsed_s,
        "expanded_nodes": path.expanded_nodes,
    }
    if landmarks is not None:
        from .metrics import evaluate

        m = evaluate(landmarks, line)
        row["mean_euclidean_mm"] = m.mean_distance_mm
        row["hausdorff_mm"] = m.hausdorff_mm
    return row
