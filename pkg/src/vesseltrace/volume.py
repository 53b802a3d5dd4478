"""Anisotropic 3-D scalar volumes: container I/O, windowing, and sampling.

Conventions used across the toolkit:

* ``dims`` counts voxels per axis as ``(nx, ny, nz)``; ``spacing`` is mm per
  voxel along x, y, z; ``origin`` is the mm position of voxel ``(0, 0, 0)``.
  Spacing may differ per axis (anisotropic grids are first-class).
* Voxel data lives in a C-order numpy array of shape ``(nz, ny, nx)``, so
  ``data[k, j, i]`` addresses voxel ``(i, j, k)`` and x varies fastest in
  memory, matching the ``.raw`` payload order.
* Physical positions are mm 3-vectors ``(x, y, z)``.  They map to continuous
  indices via ``index = (p - origin) / spacing``.  The valid sampling domain
  is the hull of voxel centers, ``[origin, origin + (dims - 1) * spacing]``.
* Stored voxel values are float32 (int16 for raw CT payloads); all sampling
  arithmetic is done in float64.

The on-disk container is a two-file pair: ``<name>.json`` holding
``{dims, spacing_mm, origin_mm, dtype, value_kind}`` (plus an optional free
``meta`` object) and ``<name>.raw`` holding the little-endian payload in
x-fastest order.  A detached-header NRRD subset can be imported as well.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ComputeError, DataError, GeometryMismatchError, OutOfBoundsError

# Value kinds a Volume can carry.
RAW_STORED = "raw-stored"
HOUNSFIELD = "hounsfield"
NORMALIZED_UNIT = "normalized-unit"
VESSELNESS = "vesselness"
COST = "cost"

VALUE_KINDS = (RAW_STORED, HOUNSFIELD, NORMALIZED_UNIT, VESSELNESS, COST)

_DTYPES = {"f32": np.dtype("<f4"), "i16": np.dtype("<i2")}


def as_point(p) -> np.ndarray:
    """Coerce a point-like (x, y, z) into a float64 array of shape (3,)."""
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


@dataclass
class Volume:
    """A 3-D scalar grid with physical spacing.

    ``data`` has shape ``(nz, ny, nx)`` and is addressed ``data[k, j, i]``
    for voxel ``(i, j, k)``.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data: np.ndarray
    value_kind: str = RAW_STORED

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)
        if len(self.dims) != 3 or any(d < 2 for d in self.dims):
            raise DataError(f"dims must be three integers >= 2, got {self.dims}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise DataError(f"spacing must be three positive reals, got {self.spacing}")
        if self.value_kind not in VALUE_KINDS:
            raise DataError(f"unknown value_kind {self.value_kind!r}")
        nx, ny, nz = self.dims
        expected = (nz, ny, nx)
        if self.data.shape != expected:
            if self.data.size == nx * ny * nz:
                self.data = self.data.reshape(expected)
            else:
                raise DataError(
                    f"payload size mismatch: dims {self.dims} need {nx * ny * nz} "
                    f"values, data has {self.data.size}"
                )
        if self.value_kind == NORMALIZED_UNIT:
            lo = float(self.data.min())
            hi = float(self.data.max())
            if lo < -1e-6 or hi > 1.0 + 1e-6:
                raise DataError(
                    f"normalized-unit volume has values outside [0, 1]: [{lo}, {hi}]"
                )

    @property
    def spacing_arr(self) -> np.ndarray:
        return np.asarray(self.spacing, dtype=np.float64)

    @property
    def origin_arr(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64)

    def bounds_mm(self) -> tuple[np.ndarray, np.ndarray]:
        """(low, high) corners of the voxel-center hull, in mm."""
        lo = self.origin_arr
        hi = lo + (np.asarray(self.dims) - 1) * self.spacing_arr
        return lo, hi

    def index_to_mm(self, index) -> np.ndarray:
        """Physical position of a (possibly fractional) voxel index (i, j, k)."""
        return self.origin_arr + np.asarray(index, dtype=np.float64) * self.spacing_arr

    def mm_to_index(self, p) -> np.ndarray:
        """Continuous index (i, j, k) of a physical point."""
        return (as_point(p) - self.origin_arr) / self.spacing_arr

    def voxel_value(self, index) -> float:
        i, j, k = (int(v) for v in index)
        return float(self.data[k, j, i])

    def with_data(self, data: np.ndarray, value_kind: str) -> "Volume":
        """Same geometry, new payload."""
        return Volume(self.dims, self.spacing, self.origin, data, value_kind)

    def same_geometry(self, other: "Volume") -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing)
            and np.allclose(self.origin, other.origin)
        )


def require_same_geometry(a: Volume, b: Volume, what: str = "volumes") -> None:
    if not a.same_geometry(b):
        raise GeometryMismatchError(
            f"{what} must share geometry: {a.dims}/{a.spacing} vs {b.dims}/{b.spacing}"
        )


@dataclass
class WindowParams:
    """CT windowing parameters (HU)."""

    window_center: float = 60.0
    window_width: float = 400.0
    rescale_intercept: float = -1024.0
    rescale_slope: float = 1.0

    def __post_init__(self):
        if self.window_width <= 0:
            raise DataError("window_width must be positive")
        if self.rescale_slope == 0:
            raise DataError("rescale_slope must be nonzero")


# --------------------------------------------------------------------------
# Container I/O
# --------------------------------------------------------------------------


def save_volume(vol: Volume, base_path, meta: dict | None = None) -> Path:
    """Write ``<base>.json`` + ``<base>.raw``. Returns the header path.

    f32 volumes are stored bit-exactly; i16 data is written as i16.
    """
    base = Path(base_path)
    if base.suffix == ".json":
        base = base.with_suffix("")
    header_path = base.with_suffix(".json")
    raw_path = base.with_suffix(".raw")

    if vol.data.dtype == np.int16:
        dtype_name = "i16"
        payload = np.ascontiguousarray(vol.data, dtype=_DTYPES["i16"])
    else:
        dtype_name = "f32"
        payload = np.ascontiguousarray(vol.data, dtype=_DTYPES["f32"])

    header = {
        "dims": list(vol.dims),
        "spacing_mm": list(vol.spacing),
        "origin_mm": list(vol.origin),
        "dtype": dtype_name,
        "value_kind": vol.value_kind,
    }
    if meta:
        header["meta"] = meta
    header_path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    raw_path.write_bytes(payload.tobytes(order="C"))
    return header_path


def load_volume(path) -> Volume:
    """Load a volume from its ``.json`` header (or extensionless base path)."""
    p = Path(path)
    if p.suffix == ".raw":
        p = p.with_suffix(".json")
    elif p.suffix != ".json":
        p = p.with_suffix(".json")
    if not p.exists():
        raise DataError(f"volume header not found: {p}")
    try:
        header = json.loads(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise DataError(f"corrupt volume header {p}: {e}") from e

    for key in ("dims", "spacing_mm", "origin_mm", "dtype", "value_kind"):
        if key not in header:
            raise DataError(f"volume header {p} missing field {key!r}")
    dims = tuple(int(d) for d in header["dims"])
    spacing = tuple(float(s) for s in header["spacing_mm"])
    origin = tuple(float(o) for o in header["origin_mm"])
    dtype_name = header["dtype"]
    if dtype_name not in _DTYPES:
        raise DataError(f"unsupported dtype {dtype_name!r} in {p}")

    raw_path = p.with_suffix(".raw")
    if not raw_path.exists():
        raise DataError(f"volume payload not found: {raw_path}")
    payload = np.frombuffer(raw_path.read_bytes(), dtype=_DTYPES[dtype_name])
    nx, ny, nz = dims
    if payload.size != nx * ny * nz:
        raise DataError(
            f"payload size mismatch: header {dims} needs {nx * ny * nz} values, "
            f"{raw_path} holds {payload.size}"
        )
    data = payload.reshape((nz, ny, nx)).copy()
    return Volume(dims, spacing, origin, data, header["value_kind"])


def load_nrrd(path) -> Volume:
    """Import a detached-header NRRD (3-D, diagonal space directions).

    Supported fields: type, dimension, sizes, space directions, endian,
    space origin, data file.  Values come back as ``raw-stored``.
    """
    p = Path(path)
    if not p.exists():
        raise DataError(f"NRRD header not found: {p}")
    fields: dict[str, str] = {}
    lines = p.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("NRRD"):
        raise DataError(f"{p} is not an NRRD header")
    for line in lines[1:]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            continue
        key, _, value = line.partition(":")
        fields[key.strip().lower()] = value.lstrip("=").strip()

    if fields.get("dimension") != "3":
        raise DataError("only 3-D NRRD volumes are supported")
    type_map = {
        "float": "f32",
        "float32": "f32",
        "short": "i16",
        "int16": "i16",
        "signed short": "i16",
    }
    nrrd_type = fields.get("type", "")
    if nrrd_type not in type_map:
        raise DataError(f"unsupported NRRD type {nrrd_type!r}")
    dtype = _DTYPES[type_map[nrrd_type]]
    endian = fields.get("endian", "little")
    if endian not in ("little", ""):
        raise DataError("only little-endian NRRD payloads are supported")

    sizes = tuple(int(s) for s in fields["sizes"].split())
    if len(sizes) != 3:
        raise DataError("NRRD sizes must have three entries")

    spacing = [0.0, 0.0, 0.0]
    directions = fields.get("space directions", "")
    vecs = [v for v in directions.replace(")", "(").split("(") if v.strip()]
    if len(vecs) != 3:
        raise DataError("NRRD space directions must hold three vectors")
    for axis, vec in enumerate(vecs):
        comps = [float(c) for c in vec.replace(",", " ").split()]
        for i, c in enumerate(comps):
            if i != axis and abs(c) > 1e-9:
                raise DataError("only diagonal NRRD space directions are supported")
        spacing[axis] = comps[axis]
    if any(s <= 0 for s in spacing):
        raise DataError(f"non-positive NRRD spacing {spacing}")

    origin = (0.0, 0.0, 0.0)
    if "space origin" in fields:
        comps = [
            float(c)
            for c in fields["space origin"].strip("()").replace(",", " ").split()
        ]
        origin = tuple(comps)

    data_file = fields.get("data file") or fields.get("datafile")
    if not data_file:
        raise DataError("detached NRRD header is missing 'data file'")
    raw_path = (p.parent / data_file).resolve()
    if not raw_path.exists():
        raise DataError(f"NRRD payload not found: {raw_path}")
    payload = np.frombuffer(raw_path.read_bytes(), dtype=dtype)
    nx, ny, nz = sizes
    if payload.size != nx * ny * nz:
        raise DataError(
            f"payload size mismatch: NRRD sizes {sizes} need {nx * ny * nz} values, "
            f"{raw_path} holds {payload.size}"
        )
    data = payload.reshape((nz, ny, nx)).copy()
    return Volume(sizes, tuple(spacing), origin, data, RAW_STORED)


# --------------------------------------------------------------------------
# Intensity windowing
# --------------------------------------------------------------------------


def apply_window(values: np.ndarray, w: WindowParams) -> np.ndarray:
    """Map stored values through rescale + window to [0, 1], clamped.

    ``HU = stored * rescale_slope + rescale_intercept`` followed by an affine
    map of ``[center - width/2, center + width/2]`` onto [0, 1].
    """
    hu = np.asarray(values, dtype=np.float64) * w.rescale_slope + w.rescale_intercept
    low = w.window_center - w.window_width / 2.0
    unit = (hu - low) / w.window_width
    return np.clip(unit, 0.0, 1.0)


def normalize_hu(vol: Volume, w: WindowParams) -> Volume:
    """Window a raw-stored volume into normalized [0, 1] working units."""
    if vol.value_kind != RAW_STORED:
        raise DataError(f"normalize_hu expects raw-stored input, got {vol.value_kind}")
    unit = apply_window(vol.data, w).astype(np.float32)
    return vol.with_data(unit, NORMALIZED_UNIT)


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def in_bounds_mm(vol: Volume, points: np.ndarray, margin_mm: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside the voxel-center hull shrunk by margin."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lo, hi = vol.bounds_mm()
    ok = np.all(pts >= lo + margin_mm, axis=1) & np.all(pts <= hi - margin_mm, axis=1)
    return ok


def sample_points(vol: Volume, points: np.ndarray) -> np.ndarray:
    """Trilinear-interpolate many mm points at once.

    All points must lie inside the voxel-center hull; raises OutOfBoundsError
    otherwise.  Returns float64 values.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    idx = (pts - vol.origin_arr) / vol.spacing_arr
    dims = np.asarray(vol.dims)
    eps = 1e-9
    if np.any(idx < -eps) or np.any(idx > dims - 1 + eps):
        bad = pts[(idx < -eps).any(axis=1) | (idx > dims - 1 + eps).any(axis=1)][0]
        raise OutOfBoundsError(f"point {bad.tolist()} outside volume sampling domain")
    idx = np.clip(idx, 0.0, dims - 1)

    i0 = np.minimum(np.floor(idx).astype(np.intp), dims - 2)
    f = idx - i0
    ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]

    d = vol.data
    c000 = d[iz, iy, ix].astype(np.float64)
    c100 = d[iz, iy, ix + 1].astype(np.float64)
    c010 = d[iz, iy + 1, ix].astype(np.float64)
    c110 = d[iz, iy + 1, ix + 1].astype(np.float64)
    c001 = d[iz + 1, iy, ix].astype(np.float64)
    c101 = d[iz + 1, iy, ix + 1].astype(np.float64)
    c011 = d[iz + 1, iy + 1, ix].astype(np.float64)
    c111 = d[iz + 1, iy + 1, ix + 1].astype(np.float64)

    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def sample_trilinear(vol: Volume, p) -> float:
    """Trilinear interpolation of one mm point."""
    return float(sample_points(vol, as_point(p)[None, :])[0])


def default_gradient_step(vol: Volume) -> float:
    """Central-difference step: half the smallest spacing component."""
    return min(vol.spacing) / 2.0


def gradients_at(vol: Volume, points: np.ndarray, h: float | None = None) -> np.ndarray:
    """Central-difference gradients (per mm) of many points, shape (N, 3).

    Every point needs margin ``h`` inside the sampling domain.
    """
    if h is None:
        h = default_gradient_step(vol)
    if h <= 0:
        raise ValueError("gradient step h must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = pts.shape[0]
    stencil = np.zeros((n, 6, 3), dtype=np.float64)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        stencil[:, 2 * axis, :] = pts + e
        stencil[:, 2 * axis + 1, :] = pts - e
    values = sample_points(vol, stencil.reshape(-1, 3)).reshape(n, 6)
    grad = np.empty((n, 3), dtype=np.float64)
    for axis in range(3):
        grad[:, axis] = (values[:, 2 * axis] - values[:, 2 * axis + 1]) / (2.0 * h)
    return grad


def gradient_at(vol: Volume, p, h: float | None = None) -> np.ndarray:
    """Central-difference gradient (per mm) of one point."""
    return gradients_at(vol, as_point(p)[None, :], h)[0]


# --------------------------------------------------------------------------
# Gaussian derivative kernels and Hessians
# --------------------------------------------------------------------------


def gaussian_kernel1d(sigma_mm: float, spacing_mm: float, order: int) -> np.ndarray:
    """1-D Gaussian (derivative) kernel sampled on a grid with given spacing.

    Radius is ceil(3 sigma / spacing).  Kernels are discretely normalized so
    that correlation reproduces polynomials exactly: order 0 preserves
    constants, order 1 gives slope 1 on a unit ramp, order 2 gives 2 on x^2.
    Returned in offset order k = -r..r for use with correlate semantics
    ``out[i] = sum_k kernel[k] * f(x_i + k * spacing)``.
    """
    if sigma_mm <= 0:
        raise ValueError("sigma must be positive")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1, or 2")
    r = int(math.ceil(3.0 * sigma_mm / spacing_mm))
    x = np.arange(-r, r + 1, dtype=np.float64) * spacing_mm
    g = np.exp(-(x**2) / (2.0 * sigma_mm**2))
    if order == 0:
        return g / g.sum()
    if order == 1:
        k = x * g
        return k / np.sum(k * x)
    k = (x**2 - sigma_mm**2) * g
    k = k - k.mean()
    return 2.0 * k / np.sum(k * x**2)


_HESSIAN_ORDERS = {
    (0, 0): (2, 0, 0),
    (1, 1): (0, 2, 0),
    (2, 2): (0, 0, 2),
    (0, 1): (1, 1, 0),
    (0, 2): (1, 0, 1),
    (1, 2): (0, 1, 1),
}


def _check_scale(vol: Volume, sigma_mm: float) -> None:
    if sigma_mm < min(vol.spacing) / 2.0:
        raise ComputeError(
            f"under-resolved scale: sigma {sigma_mm} mm < half the smallest "
            f"spacing {min(vol.spacing) / 2.0} mm"
        )


def hessian_volumes(vol: Volume, sigma_mm: float) -> dict[tuple[int, int], np.ndarray]:
    """Gaussian second-derivative volumes (per mm^2), keyed by (axis_a, axis_b).

    Separable correlation along each axis, reflect (edge-inclusive symmetric)
    border handling.  Keys use axis indices 0=x, 1=y, 2=z with a <= b.
    """
    from scipy.ndimage import correlate1d

    _check_scale(vol, sigma_mm)
    data = vol.data.astype(np.float64, copy=False)
    kernels = {
        axis: {
            order: gaussian_kernel1d(sigma_mm, vol.spacing[axis], order)
            for order in (0, 1, 2)
        }
        for axis in range(3)
    }
    out: dict[tuple[int, int], np.ndarray] = {}
    for key, orders in _HESSIAN_ORDERS.items():
        arr = data
        # data axes are (z, y, x): physical axis a maps to array axis 2 - a.
        for phys_axis in range(3):
            arr = correlate1d(
                arr,
                kernels[phys_axis][orders[phys_axis]],
                axis=2 - phys_axis,
                mode="reflect",
            )
        out[key] = arr
    return out


def _reflect_indices(idx: np.ndarray, n: int) -> np.ndarray:
    """Map integer indices onto [0, n) by edge-inclusive symmetric reflection."""
    idx = np.asarray(idx, dtype=np.int64)
    period = 2 * n
    idx = np.mod(idx, period)
    idx = np.where(idx < 0, idx + period, idx)
    return np.where(idx >= n, period - 1 - idx, idx)


def hessian_at_scale(vol: Volume, index, sigma_mm: float) -> np.ndarray:
    """Gaussian-smoothed Hessian (per mm^2) at a single voxel.

    Evaluates the separable kernel stencil over a local cube, with reflected
    indices at the volume border, so the result matches the full-volume
    filtering of :func:`hessian_volumes` at that voxel.
    """
    _check_scale(vol, sigma_mm)
    i, j, k = (int(v) for v in index)
    nx, ny, nz = vol.dims
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
        raise OutOfBoundsError(f"voxel index {(i, j, k)} outside dims {vol.dims}")

    kernels = {
        axis: {
            order: gaussian_kernel1d(sigma_mm, vol.spacing[axis], order)
            for order in (0, 1, 2)
        }
        for axis in range(3)
    }
    radii = {axis: (len(kernels[axis][0]) - 1) // 2 for axis in range(3)}
    gx = _reflect_indices(np.arange(i - radii[0], i + radii[0] + 1), nx)
    gy = _reflect_indices(np.arange(j - radii[1], j + radii[1] + 1), ny)
    gz = _reflect_indices(np.arange(k - radii[2], k + radii[2] + 1), nz)
    cube = vol.data[np.ix_(gz, gy, gx)].astype(np.float64)

    h = np.zeros((3, 3), dtype=np.float64)
    for (a, b), orders in _HESSIAN_ORDERS.items():
        # cube axes are (z, y, x); contract x, then y, then z.
        val = np.einsum(
            "zyx,x,y,z->",
            cube,
            kernels[0][orders[0]],
            kernels[1][orders[1]],
            kernels[2][orders[2]],
        )
        h[a, b] = val
        h[b, a] = val
    return h
