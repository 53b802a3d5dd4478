"""Iterative centerline tracking for high-contrast vessel segments.

Each step estimates the local vessel direction as the weakest eigenvector of
the gradient correlation matrix gathered inside a small window of the
vessel-enhanced volume, bounds the turn angle to a spherical cap around the
previous direction, and advances by a fixed step.  Every N iterations a
ridge-based correction re-centers the point using the cross-correlation of
the cross-section's gradient orientation field with a center-seeking
template.  Tracking stops at the fascia mask, on sustained loss of
vesselness, at the volume border, or at the iteration cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ComputeError, DataError, OutOfBoundsError
from .volume import (
    Volume,
    as_point,
    gradients_at,
    in_bounds_mm,
    require_same_geometry,
    sample_points,
    sample_trilinear,
)

FASCIA_REACHED = "fascia-reached"
LOW_VESSELNESS = "low-vesselness"
OUT_OF_BOUNDS = "out-of-bounds"
MAX_ITERATIONS = "max-iterations"

# consecutive below-threshold samples required to stop
_LOW_VESSELNESS_RUN = 3


@dataclass
class TrackerConfig:
    """Step, window, correction cadence, and termination settings."""

    step_delta_mm: float = 1.0
    window_side_mm: float = 4.0
    correction_interval: int = 3
    max_turn_deg: float = 60.0
    cross_section_side_mm: float = 4.0
    cross_section_resolution_mm: float = 0.25
    min_vesselness: float = 0.01
    max_iterations: int = 500

    def __post_init__(self):
        if self.step_delta_mm <= 0 or self.window_side_mm <= 0:
            raise DataError("step and window size must be positive")
        if self.correction_interval < 1 or self.max_iterations < 1:
            raise DataError("correction_interval and max_iterations must be >= 1")
        if not (0.0 < self.max_turn_deg <= 90.0):
            raise DataError("max_turn_deg must lie in (0, 90]")
        if self.cross_section_resolution_mm > self.cross_section_side_mm / 8.0:
            raise DataError(
                "cross-section resolution must be at most side/8 for a usable patch"
            )
        if not (0.0 <= self.min_vesselness <= 1.0):
            raise DataError("min_vesselness must lie in [0, 1]")


@dataclass
class Centerline:
    """Ordered sub-voxel polyline with per-point direction and vesselness."""

    points: np.ndarray          # (n, 3) mm
    directions: np.ndarray      # (n, 3) unit
    vesselness: np.ndarray      # (n,)
    termination_reason: str
    total_cost: float | None = None
    expanded_nodes: int | None = None
    elapsed_s: float | None = None

    def __len__(self) -> int:
        return len(self.points)

    def to_dict(self, include_timing: bool = False) -> dict:
        doc = {
            "points_mm": [[float(c) for c in p] for p in self.points],
            "directions": [[float(c) for c in d] for d in self.directions],
            "vesselness": [float(v) for v in self.vesselness],
            "termination": self.termination_reason,
        }
        if self.total_cost is not None:
            doc["total_cost"] = float(self.total_cost)
        if self.expanded_nodes is not None:
            doc["expanded_nodes"] = int(self.expanded_nodes)
        if include_timing and self.elapsed_s is not None:
            doc["elapsed_ms"] = float(self.elapsed_s * 1000.0)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Centerline":
        return cls(
            points=np.asarray(doc["points_mm"], dtype=np.float64),
            directions=np.asarray(doc["directions"], dtype=np.float64),
            vesselness=np.asarray(doc["vesselness"], dtype=np.float64),
            termination_reason=doc["termination"],
            total_cost=doc.get("total_cost"),
            expanded_nodes=doc.get("expanded_nodes"),
        )


@dataclass
class FasciaMask:
    """Binary label volume: 1 marks the muscle side of the anterior fascia."""

    volume: Volume

    def __post_init__(self):
        if not np.isin(np.unique(self.volume.data), (0, 1)).all():
            raise DataError("fascia mask must be binary")

    def contains(self, p) -> bool:
        """Nearest-voxel lookup; points outside the volume are not inside."""
        idx = np.round(self.volume.mm_to_index(p)).astype(int)
        nx, ny, nz = self.volume.dims
        i, j, k = idx
        if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
            return False
        return bool(self.volume.data[k, j, i] >= 0.5)


def estimate_direction(
    gradients, previous=None, degenerate_rtol: float = 5e-2
) -> tuple[np.ndarray, bool]:
    """Direction minimizing the mean squared projection of the gradients.

    Returns ``(direction, degenerate)``: the unit eigenvector of the gradient
    correlation matrix with smallest eigenvalue, oriented along ``previous``
    when given.  ``degenerate`` is set when the two smallest eigenvalues are
    indistinguishable relative to the largest, in which case the direction is
    not determined by the field and the caller should fall back to
    ``previous``.  The relative gap test keeps the flag invariant to positive
    scaling of the gradients, matching the estimator's own scale invariance.
    """
    g = np.atleast_2d(np.asarray(gradients, dtype=np.float64))
    if g.shape[0] < 6 or g.shape[1] != 3:
        raise ComputeError(f"need at least 6 gradient samples, got {g.shape}")
    corr = (g.T @ g) / g.shape[0]
    w, v = np.linalg.eigh(corr)  # ascending eigenvalues
    direction = v[:, 0]
    scale = max(float(w[2]), 1e-300)
    degenerate = (w[1] - w[0]) <= degenerate_rtol * scale

    if previous is not None:
        prev = as_point(previous)
        if float(direction @ prev) < 0:
            direction = -direction
    else:
        lead = int(np.argmax(np.abs(direction)))
        if direction[lead] < 0:
            direction = -direction
    return direction / np.linalg.norm(direction), bool(degenerate)


def clamp_direction(candidate, previous, max_turn_deg: float) -> np.ndarray:
    """Project a direction onto the spherical cap around the previous one.

    Inside the cap the candidate passes through unchanged; outside, the
    result lies in the (previous, candidate) plane at exactly the cap angle.
    An anti-parallel candidate leaves the plane undefined, so the previous
    direction is returned.
    """
    cand = as_point(candidate)
    prev = as_point(previous)
    cand = cand / np.linalg.norm(cand)
    prev = prev / np.linalg.norm(prev)

    cos_angle = float(np.clip(cand @ prev, -1.0, 1.0))
    angle = math.degrees(math.acos(cos_angle))
    if angle <= max_turn_deg:
        return cand
    # in-plane unit vector orthogonal to prev, pointing toward the candidate
    ortho = cand - cos_angle * prev
    norm = np.linalg.norm(ortho)
    if norm < 1e-12:
        return prev
    ortho /= norm
    cap = math.radians(max_turn_deg)
    return math.cos(cap) * prev + math.sin(cap) * ortho


@dataclass
class CrossSection:
    """Planar patch sampled orthogonally to the vessel direction."""

    image: np.ndarray           # (n, n), rows along basis_v, cols along basis_u
    basis_u: np.ndarray
    basis_v: np.ndarray
    resolution_mm: float
    coverage: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal in-plane basis for a unit normal."""
    n = normal / np.linalg.norm(normal)
    axis = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[axis] = 1.0
    u = np.cross(e, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


def extract_cross_section(
    vol: Volume, center, normal, cfg: TrackerConfig
) -> CrossSection:
    """Sample a square patch orthogonal to ``normal`` centered at ``center``.

    Samples falling outside the volume read as 0 and lower the coverage
    fraction; coverage below 0.5 raises.
    """
    c = as_point(center)
    n = as_point(normal)
    u, v = _plane_basis(n)
    half = int(round(cfg.cross_section_side_mm / (2.0 * cfg.cross_section_resolution_mm)))
    coords = (np.arange(2 * half + 1) - half) * cfg.cross_section_resolution_mm
    cu, cv = np.meshgrid(coords, coords, indexing="xy")
    pts = c + cu[..., None] * u + cv[..., None] * v
    flat = pts.reshape(-1, 3)
    ok = in_bounds_mm(vol, flat)
    values = np.zeros(len(flat), dtype=np.float64)
    if ok.any():
        values[ok] = sample_points(vol, flat[ok])
    coverage = float(ok.mean())
    if coverage < 0.5:
        raise OutOfBoundsError(
            f"cross-section out of volume: coverage {coverage:.2f} < 0.5"
        )
    image = values.reshape(cu.shape)
    return CrossSection(image, u, v, cfg.cross_section_resolution_mm, coverage, c)


def center_template(side: int) -> tuple[np.ndarray, np.ndarray]:
    """(ty, tx) unit vectors pointing from each cell toward the template
    center, zero at the center cell."""
    c = (side - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    tr = c - rr
    tc = c - cc
    mag = np.hypot(tr, tc)
    safe = np.where(mag > 0, mag, 1.0)
    return np.where(mag > 0, tr / safe, 0.0), np.where(mag > 0, tc / safe, 0.0)


def ridge_correct(patch: np.ndarray, resolution_mm: float = 1.0) -> np.ndarray:
    """In-plane offset (mm) of the ridge center from the patch center.

    The patch's unit gradient orientation field is cross-correlated (summed
    vector dot products) with a center-seeking template of inward-pointing
    unit vectors.  The template spans half the patch and slides only where it
    fully overlaps, so the response is comparable across displacements; its
    maximum marks the ridge center.  Offsets are returned as
    (row, col) * resolution, row along the patch's first axis.
    """
    img = np.asarray(patch, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 8:
        raise ComputeError(f"ridge_correct needs a patch of at least 8x8, got {img.shape}")
    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    fx = np.where(mag > 1e-9, gx / np.where(mag > 0, mag, 1.0), 0.0)
    fy = np.where(mag > 1e-9, gy / np.where(mag > 0, mag, 1.0), 0.0)
    if not np.any(mag > 1e-9):
        return np.zeros(2)

    rows, cols = img.shape
    side = max(3, (min(rows, cols) // 2) - ((min(rows, cols) // 2 + 1) % 2))
    ty, tx = center_template(side)
    half = (side - 1) / 2.0

    best = -np.inf
    best_off = (0.0, 0.0)
    for p in range(rows - side + 1):
        for q in range(cols - side + 1):
            resp = float(
                np.sum(fy[p : p + side, q : q + side] * ty)
                + np.sum(fx[p : p + side, q : q + side] * tx)
            )
            if resp > best + 1e-15:
                best = resp
                best_off = (p + half - (rows - 1) / 2.0, q + half - (cols - 1) / 2.0)
    return np.array(best_off, dtype=np.float64) * resolution_mm


def _window_lattice(cfg: TrackerConfig, spacing) -> np.ndarray:
    """Relative sample offsets filling the local window, step = min spacing."""
    step = min(spacing)
    half = cfg.window_side_mm / 2.0
    n = int(math.floor(half / step))
    offs = np.arange(-n, n + 1) * step
    ox, oy, oz = np.meshgrid(offs, offs, offs, indexing="ij")
    return np.stack([ox.ravel(), oy.ravel(), oz.ravel()], axis=1)


def track(
    vesselness_vol: Volume,
    intensity_vol: Volume | None,
    seed,
    initial_dir,
    fascia: FasciaMask | None,
    cfg: TrackerConfig,
) -> Centerline:
    """Trace a centerline from a seed until a termination condition fires.

    Direction estimation and the ridge correction both read the vesselness
    volume; ``intensity_vol`` must share its geometry when given (it rides
    along for pipeline symmetry).  Deterministic for identical inputs.
    """
    if intensity_vol is not None:
        require_same_geometry(vesselness_vol, intensity_vol,
                              "vesselness and intensity volumes")
    if fascia is not None:
        require_same_geometry(vesselness_vol, fascia.volume,
                              "vesselness volume and fascia mask")

    seed = as_point(seed)
    if not in_bounds_mm(vesselness_vol, seed[None, :])[0]:
        raise OutOfBoundsError(f"seed {seed.tolist()} outside the volume")
    seed_vness = sample_trilinear(vesselness_vol, seed)
    if seed_vness < cfg.min_vesselness:
        raise ComputeError(
            f"seed not on vessel: vesselness {seed_vness:.4f} < {cfg.min_vesselness}"
        )

    direction = as_point(initial_dir)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ComputeError("initial direction must be nonzero")
    direction = direction / norm

    grad_h = min(vesselness_vol.spacing) / 2.0
    lattice = _window_lattice(cfg, vesselness_vol.spacing)
    # keep step length within 2*delta even after an in-plane correction:
    # sqrt(delta^2 + (sqrt(3) delta)^2) = 2 delta
    max_corr = min(cfg.window_side_mm / 2.0,
                   math.sqrt(3.0) * cfg.step_delta_mm)

    points = [seed.copy()]
    directions = [direction.copy()]
    vness_values = [seed_vness]
    reason = MAX_ITERATIONS
    low_run = 0
    current = seed.copy()

    if fascia is not None and fascia.contains(current):
        return Centerline(
            np.array(points), np.array(directions), np.array(vness_values),
            FASCIA_REACHED,
        )

    for iteration in range(1, cfg.max_iterations + 1):
        samples = current + lattice
        ok = in_bounds_mm(vesselness_vol, samples, margin_mm=grad_h)
        if int(ok.sum()) < 6:
            reason = OUT_OF_BOUNDS
            break
        grads = gradients_at(vesselness_vol, samples[ok], h=grad_h)
        estimate, degenerate = estimate_direction(grads, previous=direction)
        if degenerate:
            estimate = direction
        step_dir = clamp_direction(estimate, direction, cfg.max_turn_deg)
        nxt = current + cfg.step_delta_mm * step_dir
        if not in_bounds_mm(vesselness_vol, nxt[None, :])[0]:
            reason = OUT_OF_BOUNDS
            break

        if iteration % cfg.correction_interval == 0:
            try:
                cs = extract_cross_section(vesselness_vol, nxt, step_dir, cfg)
            except OutOfBoundsError:
                cs = None
            if cs is not None:
                off = ridge_correct(cs.image, cs.resolution_mm)
                shift = off[0] * cs.basis_v + off[1] * cs.basis_u
                mag = float(np.linalg.norm(shift))
                if mag > max_corr:
                    shift *= max_corr / mag
                corrected = nxt + shift
                if in_bounds_mm(vesselness_vol, corrected[None, :])[0]:
                    nxt = corrected

        vness = sample_trilinear(vesselness_vol, nxt)
        points.append(nxt)
        directions.append(step_dir)
        vness_values.append(vness)

        if fascia is not None and fascia.contains(nxt):
            reason = FASCIA_REACHED
            break
        if vness < cfg.min_vesselness:
            low_run += 1
            if low_run >= _LOW_VESSELNESS_RUN:
                reason = LOW_VESSELNESS
                break
        else:
            low_run = 0

        current = nxt
        direction = step_dir

    return Centerline(
        np.array(points), np.array(directions), np.array(vness_values), reason
    )
