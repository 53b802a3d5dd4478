"""Hessian eigen-analysis and the tubularity (vesselness) measure.

The measure is zero wherever the two strongest eigenvalues are not both
negative (bright tube on dark background), and otherwise combines three
eigenvalue ratios: plate-vs-line discrimination, blob deviation, and overall
amount of structure.  Filtering a normalized volume produces a vessel-enhanced
volume that the tracker and the cost model both consume.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .volume import (
    NORMALIZED_UNIT,
    VESSELNESS,
    Volume,
    hessian_volumes,
)

BRIGHT_ON_DARK = "bright-on-dark"
DARK_ON_BRIGHT = "dark-on-bright"


@dataclass(frozen=True)
class FrangiParams:
    """Sensitivity constants for the vesselness ratios plus the filter scale."""

    alpha: float = 0.5
    beta: float = 10.0
    c: float = 500.0
    sigma_mm: float = 1.0
    polarity: str = BRIGHT_ON_DARK

    def __post_init__(self):
        for name in ("alpha", "beta", "c", "sigma_mm"):
            if getattr(self, name) <= 0:
                raise DataError(f"FrangiParams.{name} must be positive")
        if self.polarity not in (BRIGHT_ON_DARK, DARK_ON_BRIGHT):
            raise DataError(f"unknown polarity {self.polarity!r}")


# Named parameterizations for the two vessel compartments.
PRESETS = {
    "subcutaneous": FrangiParams(alpha=0.5, beta=10.0, c=500.0, sigma_mm=1.0),
    "intramuscular": FrangiParams(alpha=0.5, beta=0.5, c=100.0, sigma_mm=1.0),
}


@dataclass
class EigenTriple:
    """Eigenpairs of a symmetric 3x3 matrix ordered by increasing |lambda|.

    ``vectors[:, i]`` is the unit eigenvector paired with ``lambdas[i]``.
    """

    lambdas: np.ndarray
    vectors: np.ndarray

    @property
    def lambda1(self) -> float:
        return float(self.lambdas[0])

    @property
    def lambda2(self) -> float:
        return float(self.lambdas[1])

    @property
    def lambda3(self) -> float:
        return float(self.lambdas[2])


def order_by_abs(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Indices that sort eigenvalues by |value|, stable for ties."""
    return np.argsort(np.abs(values), axis=axis, kind="stable")


def eig3_symmetric(m) -> EigenTriple:
    """Eigendecomposition of a symmetric 3x3 matrix.

    Ordering is by increasing absolute eigenvalue.  Each eigenvector's sign
    is fixed so its largest-magnitude component (earliest axis on ties) is
    non-negative, which makes the output deterministic.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {a.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric")

    w, v = np.linalg.eigh(a)
    order = order_by_abs(w)
    w = w[order]
    v = v[:, order]
    for i in range(3):
        col = v[:, i]
        lead = int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            v[:, i] = -col
    return EigenTriple(w, v)


def _frangi_terms(l1, l2, l3, p: FrangiParams):
    """Vectorized vesselness from |lambda|-ordered eigenvalue arrays."""
    l1 = np.asarray(l1, dtype=np.float64)
    l2 = np.asarray(l2, dtype=np.float64)
    l3 = np.asarray(l3, dtype=np.float64)
    if p.polarity == DARK_ON_BRIGHT:
        l1, l2, l3 = -l1, -l2, -l3

    sign_ok = (l2 <= 0) & (l3 <= 0)
    has_structure = l3 != 0

    abs2 = np.abs(l2)
    abs3 = np.abs(l3)
    safe3 = np.where(abs3 == 0, 1.0, abs3)
    ra = abs2 / safe3
    rb_den = np.sqrt(np.where(abs2 * abs3 == 0, 1.0, abs2 * abs3))
    rb = np.abs(l1) / rb_den
    s2 = l1**2 + l2**2 + l3**2

    out = (
        (1.0 - np.exp(-(ra**2) / (2.0 * p.alpha**2)))
        * np.exp(-(rb**2) / (2.0 * p.beta**2))
        * (1.0 - np.exp(-s2 / (2.0 * p.c**2)))
    )
    return np.where(sign_ok & has_structure, out, 0.0)


def frangi_vesselness(eig: EigenTriple, p: FrangiParams) -> float:
    """Tubularity score in [0, 1) for one eigenvalue triple."""
    return float(_frangi_terms(eig.lambda1, eig.lambda2, eig.lambda3, p))


def enhance_volume(vol: Volume, p: FrangiParams, chunk: int = 1 << 18) -> Volume:
    """Per-voxel vesselness of a normalized volume at the configured scale.

    Equivalent to hessian_at_scale -> eig3_symmetric -> frangi_vesselness at
    every voxel, evaluated with batched filtering and eigensolves.
    """
    if vol.value_kind != NORMALIZED_UNIT:
        raise DataError(
            f"enhance_volume expects normalized-unit input, got {vol.value_kind}"
        )
    comps = hessian_volumes(vol, p.sigma_mm)
    n = vol.data.size
    flat = {key: arr.reshape(-1) for key, arr in comps.items()}
    out = np.empty(n, dtype=np.float64)
    h = np.empty((min(chunk, n), 3, 3), dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        m = stop - start
        block = h[:m]
        for (a, b), arr in flat.items():
            block[:, a, b] = arr[start:stop]
            block[:, b, a] = arr[start:stop]
        w = np.linalg.eigvalsh(block)
        order = order_by_abs(w)
        w = np.take_along_axis(w, order, axis=1)
        out[start:stop] = _frangi_terms(w[:, 0], w[:, 1], w[:, 2], p)
    data = out.reshape(vol.data.shape).astype(np.float32)
    return vol.with_data(data, VESSELNESS)


def enhance_multiscale(vol: Volume, p: FrangiParams, sigmas_mm) -> Volume:
    """Voxelwise maximum of single-scale responses over a list of scales."""
    best: np.ndarray | None = None
    for sigma in sigmas_mm:
        resp = enhance_volume(vol, replace(p, sigma_mm=float(sigma))).data
        best = resp if best is None else np.maximum(best, resp)
    if best is None:
        raise DataError("enhance_multiscale needs at least one scale")
    return vol.with_data(best, VESSELNESS)


def normalize_vesselness(vol: Volume) -> Volume:
    """Affinely map a vesselness volume onto [0, 1] (all zeros if constant)."""
    if vol.value_kind != VESSELNESS:
        raise DataError(
            f"normalize_vesselness expects vesselness input, got {vol.value_kind}"
        )
    lo = float(vol.data.min())
    hi = float(vol.data.max())
    if hi == lo:
        data = np.zeros_like(vol.data, dtype=np.float32)
    else:
        data = ((vol.data.astype(np.float64) - lo) / (hi - lo)).astype(np.float32)
        data = np.clip(data, 0.0, 1.0)
    return vol.with_data(data, NORMALIZED_UNIT)
