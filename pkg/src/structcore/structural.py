"""Structure-aware image scoring on top of anomaly maps.

A 3-D descriptor of the map (dispersion, top-k tail mass, total variation)
is calibrated against train-good statistics; its standardized distance is
blended with the max-pooled base score through an automatic scale weight.
Population (divide-by-N) standard deviations are used throughout so the
weight and the distance stay mutually consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import DISTANCE_KINDS, PHI_COMPONENTS
from .errors import InvariantError
from .map_ops import AnomalyMap

# Floor for the denominator guard when the train struct scores carry no
# variance (n=1 or identical maps); keeps lambda_auto finite and flagged.
_DEGENERATE_EPS_FLOOR = 1e-6


@dataclass
class StructDescriptor:
    sigma_s: float  # population std of the flattened map
    topk_mean: float  # mean of the top max(1, floor(HW*r)) scores
    tv: float  # total variation, normalized by HW

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma_s, self.topk_mean, self.tv], dtype=np.float64)


def describe(amap: AnomalyMap, topk_ratio: float) -> StructDescriptor:
    """Compute the 3-D structural descriptor of an anomaly map.

    TV sums forward differences only where the neighbor exists (no wrap,
    no padding) and divides by HW. The map itself is never mutated.
    """
    if not 0.0 < topk_ratio <= 1.0:
        raise InvariantError(f"topk ratio must be in (0, 1], got {topk_ratio}")
    s = amap.data.astype(np.float64)
    hw = s.size
    flat = s.ravel()
    sigma_s = float(flat.std())
    k = max(1, int(math.floor(hw * topk_ratio)))
    topk = np.partition(flat, hw - k)[hw - k :]
    topk_mean = float(topk.sum() / k)
    tv = float(
        (np.abs(np.diff(s, axis=0)).sum() + np.abs(np.diff(s, axis=1)).sum()) / hw
    )
    return StructDescriptor(sigma_s=sigma_s, topk_mean=topk_mean, tv=tv)


@dataclass
class StructCalibration:
    mu: np.ndarray  # (3,) float64, train-good descriptor mean
    sigma: np.ndarray  # (3,) float64, per-dimension population std
    lambda_auto: float
    epsilon: float = 1e-8
    topk_ratio: float = 0.01
    active_components: tuple[str, ...] = PHI_COMPONENTS
    distance_kind: str = "diag-mahalanobis"
    degenerate: bool = False
    train_base_scores: np.ndarray = field(default_factory=lambda: np.empty(0))
    train_struct_scores: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.mu.shape != (3,) or self.sigma.shape != (3,):
            raise InvariantError("calibration mu/sigma must be 3-vectors")
        if (self.sigma < 0).any():
            raise InvariantError("calibration sigma must be >= 0")
        if self.lambda_auto < 0:
            raise InvariantError("lambda_auto must be >= 0")
        if self.distance_kind not in DISTANCE_KINDS:
            raise InvariantError(f"unknown distance kind {self.distance_kind!r}")
        self.active_components = tuple(self.active_components)
        bad = [c for c in self.active_components if c not in PHI_COMPONENTS]
        if bad or not self.active_components:
            raise InvariantError("active_components must be a non-empty phi subset")

    @property
    def active_mask(self) -> np.ndarray:
        return np.array([c in self.active_components for c in PHI_COMPONENTS])


def _masked(vec: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return vec[mask]


def struct_distance(phi: np.ndarray, calib: StructCalibration) -> float:
    """Distance of a descriptor from the calibrated normal statistics.

    Standardized kinds divide residuals by sigma+epsilon; plain kinds use
    raw residuals; cosine compares phi against mu directly (0 when either
    is the zero vector).
    """
    mask = calib.active_mask
    phi_a = _masked(np.asarray(phi, dtype=np.float64), mask)
    mu_a = _masked(calib.mu, mask)
    resid = phi_a - mu_a
    kind = calib.distance_kind
    if kind in ("diag-mahalanobis", "l1-std", "chebyshev-std"):
        z = resid / (_masked(calib.sigma, mask) + calib.epsilon)
        if kind == "diag-mahalanobis":
            return float(np.sqrt((z * z).sum()))
        if kind == "l1-std":
            return float(np.abs(z).sum())
        return float(np.abs(z).max())
    if kind == "manhattan":
        return float(np.abs(resid).sum())
    if kind == "euclidean":
        return float(np.sqrt((resid * resid).sum()))
    if kind == "chebyshev":
        return float(np.abs(resid).max())
    # cosine: 1 - cos(phi, mu), defined as 0 for a zero vector on either side
    np_phi = float(np.sqrt((phi_a * phi_a).sum()))
    np_mu = float(np.sqrt((mu_a * mu_a).sum()))
    if np_phi == 0.0 or np_mu == 0.0:
        return 0.0
    return float(1.0 - float(phi_a @ mu_a) / (np_phi * np_mu))


def struct_score(amap: AnomalyMap, calib: StructCalibration) -> float:
    """Structural anomaly score of one map under a fitted calibration."""
    phi = describe(amap, calib.topk_ratio).as_array()
    return struct_distance(phi, calib)


def fit_calibration(
    train_maps: list[AnomalyMap],
    base_scores,
    *,
    topk_ratio: float = 0.01,
    epsilon: float = 1e-8,
    active_components: tuple[str, ...] = PHI_COMPONENTS,
    distance_kind: str = "diag-mahalanobis",
) -> StructCalibration:
    """Fit normal statistics from train-good maps only.

    mu/sigma are per-dimension population stats of the descriptors; the
    automatic weight is Std(base)/(Std(train struct distances)+epsilon).
    Zero-variance struct distances (always the case for n=1) make the fit
    degenerate: the weight is clamped to Std(base)/max(epsilon, 1e-6) and
    flagged so callers can surface it.
    """
    if len(train_maps) == 0:
        raise InvariantError("calibration needs at least one train-good map")
    phis = np.stack([describe(m, topk_ratio).as_array() for m in train_maps])
    return fit_calibration_from_descriptors(
        phis,
        base_scores,
        topk_ratio=topk_ratio,
        epsilon=epsilon,
        active_components=active_components,
        distance_kind=distance_kind,
    )


def fit_calibration_from_descriptors(
    phis: np.ndarray,
    base_scores,
    *,
    topk_ratio: float = 0.01,
    epsilon: float = 1e-8,
    active_components: tuple[str, ...] = PHI_COMPONENTS,
    distance_kind: str = "diag-mahalanobis",
) -> StructCalibration:
    """fit_calibration on precomputed (n, 3) descriptor rows."""
    phis = np.asarray(phis, dtype=np.float64)
    if phis.ndim != 2 or phis.shape[1] != 3 or phis.shape[0] == 0:
        raise InvariantError("descriptor matrix must be (n, 3) with n >= 1")
    base = np.asarray(base_scores, dtype=np.float64)
    if base.shape != (phis.shape[0],):
        raise InvariantError("base_scores must align 1:1 with train maps")
    mu = phis.mean(axis=0)
    sigma = phis.std(axis=0)
    calib = StructCalibration(
        mu=mu,
        sigma=sigma,
        lambda_auto=0.0,
        epsilon=epsilon,
        topk_ratio=topk_ratio,
        active_components=active_components,
        distance_kind=distance_kind,
    )
    d_struct = np.array([struct_distance(phi, calib) for phi in phis])
    std_base = float(base.std())
    std_struct = float(d_struct.std())
    cap = std_base / max(epsilon, _DEGENERATE_EPS_FLOOR)
    # zero variance up to rounding noise: n=2 always lands here because the
    # standardized residuals are symmetric, identical only in exact arithmetic
    degenerate = phis.shape[0] == 1 or std_struct <= 1e-9 * float(d_struct.mean())
    if degenerate:
        lam = cap
    else:
        lam = min(std_base / (std_struct + epsilon), cap)
    calib.lambda_auto = lam
    calib.degenerate = degenerate
    calib.train_base_scores = base
    calib.train_struct_scores = d_struct
    return calib


def hybrid_score(base: float, amap: AnomalyMap, calib: StructCalibration,
                 lambda_override: float | None = None) -> tuple[float, float]:
    """(struct, hybrid) image scores: hybrid = base + lambda * struct."""
    d = struct_score(amap, calib)
    lam = calib.lambda_auto if lambda_override is None else lambda_override
    return d, base + lam * d
