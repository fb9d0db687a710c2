"""Mask simulators for the three classical missingness mechanisms.

MCAR draws each cell independently. MAR keeps a random subset of columns
fully observed and masks the rest through a logistic model of the observed
columns, with the bias calibrated by bisection to hit the requested rate.
MNAR reuses the MAR construction and then hides parts of the logistic
model's own inputs with an extra MCAR overlay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

MAX_MASK_ATTEMPTS = 100


class Mechanism(str, Enum):
    MCAR = "mcar"
    MAR = "mar"
    MNAR = "mnar"


@dataclass(frozen=True)
class MissingSpec:
    """Target mechanism and rates for mask simulation.

    rate: missing fraction over maskable cells, open interval (0, 1).
    observed_fraction: fraction of columns kept fully observed (MAR/MNAR).
    mcar_overlay_rate: MCAR rate applied to the logistic-input columns
    (MNAR only); defaults to rate when omitted.
    """

    mechanism: Mechanism
    rate: float
    observed_fraction: float = 0.3
    mcar_overlay_rate: Optional[float] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.rate < 1.0:
            raise ValueError(f"rate must be in (0, 1), got {self.rate}")
        if not 0.0 < self.observed_fraction < 1.0:
            raise ValueError(
                f"observed_fraction must be in (0, 1), got {self.observed_fraction}"
            )
        if self.mcar_overlay_rate is not None and not 0.0 < self.mcar_overlay_rate < 1.0:
            raise ValueError(
                f"mcar_overlay_rate must be in (0, 1), got {self.mcar_overlay_rate}"
            )

    @property
    def overlay_rate(self) -> float:
        return self.rate if self.mcar_overlay_rate is None else self.mcar_overlay_rate


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def calibrate_bias(logits: np.ndarray, target_rate: float, tol: float = 1e-6) -> float:
    """Bias b with mean(sigmoid(logits + b)) within tol of target_rate.

    mean sigmoid is strictly increasing in b, so a bracketing bisection
    always succeeds for target_rate in (0, 1).
    """
    if not 0.0 < target_rate < 1.0:
        raise ValueError(f"target_rate must be in (0, 1), got {target_rate}")
    logits = np.asarray(logits, dtype=np.float64).ravel()

    def mean_prob(b: float) -> float:
        return float(_sigmoid(logits + b).mean())

    lo, hi = -1.0, 1.0
    while mean_prob(lo) > target_rate:
        lo *= 2.0
    while mean_prob(hi) < target_rate:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if abs(mean_prob(mid) - target_rate) <= tol:
            return mid
        if mean_prob(mid) < target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def simulate_mcar(n: int, d: int, rate: float, seed: int) -> np.ndarray:
    """Independent Bernoulli mask: each cell missing with probability rate.

    Columns are not guaranteed to retain an observed entry; callers that
    need one must validate.
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"rate must be in (0, 1), got {rate}")
    if n < 1 or d < 1:
        raise ValueError(f"mask shape must be positive, got {n}x{d}")
    rng = np.random.default_rng(seed)
    return (rng.random((n, d)) >= rate).astype(np.float64)


def _standardize_columns(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1]), 1e-12)
    return (x - mean) / std


def _mar_attempt(
    truth: np.ndarray,
    spec: MissingSpec,
    rng: np.random.Generator,
    weight_scale: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One MAR draw; returns (mask, indices of fully observed columns)."""
    n, d = truth.shape
    k = math.ceil(spec.observed_fraction * d)
    if k < 1 or k >= d:
        raise ValueError(
            f"observed_fraction {spec.observed_fraction} keeps {k} of {d} columns; "
            "need at least 1 and fewer than all"
        )
    observed_cols = rng.choice(d, size=k, replace=False)
    maskable_cols = np.setdiff1d(np.arange(d), observed_cols)
    inputs = _standardize_columns(truth[:, observed_cols])
    weights = weight_scale * rng.standard_normal((k, maskable_cols.size))
    logits = inputs @ weights
    bias = calibrate_bias(logits, spec.rate)
    prob_missing = _sigmoid(logits + bias)
    draws = rng.random((n, maskable_cols.size))
    mask = np.ones((n, d), dtype=np.float64)
    mask[:, maskable_cols] = (draws >= prob_missing).astype(np.float64)
    return mask, observed_cols


def _guarded(build, seed: int) -> np.ndarray:
    """Redraw with an incremented seed until no column is fully missing."""
    for attempt in range(MAX_MASK_ATTEMPTS):
        mask = build(seed + attempt)
        if np.all(mask.sum(axis=0) >= 1.0):
            return mask
        last = mask
    fully_missing = int(np.argmin(last.sum(axis=0)))
    raise RuntimeError(
        f"could not draw a mask without a fully missing column "
        f"(column {fully_missing}) in {MAX_MASK_ATTEMPTS} attempts"
    )


def simulate_mar(
    truth: np.ndarray,
    spec: MissingSpec,
    weight_scale: float = 1.0,
) -> np.ndarray:
    """MAR mask: k = ceil(observed_fraction * D) columns stay fully observed,
    the rest go missing through a logistic model of those columns.

    weight_scale scales the logistic weights; 0 collapses the model to MCAR
    at spec.rate on the maskable cells.
    """
    truth = _check_complete(truth)

    def build(seed: int) -> np.ndarray:
        mask, _ = _mar_attempt(truth, spec, np.random.default_rng(seed), weight_scale)
        return mask

    return _guarded(build, spec.seed)


def simulate_mnar(
    truth: np.ndarray,
    spec: MissingSpec,
    weight_scale: float = 1.0,
) -> np.ndarray:
    """MNAR mask: the MAR construction, with the logistic-input columns then
    hidden by an independent MCAR overlay so missingness depends on values
    that are themselves unobserved."""
    truth = _check_complete(truth)

    def build(seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        mask, observed_cols = _mar_attempt(truth, spec, rng, weight_scale)
        overlay_draws = rng.random((truth.shape[0], observed_cols.size))
        overlay = (overlay_draws >= spec.overlay_rate).astype(np.float64)
        mask[:, observed_cols] = np.minimum(mask[:, observed_cols], overlay)
        return mask

    return _guarded(build, spec.seed)


def simulate(truth: np.ndarray, spec: MissingSpec) -> np.ndarray:
    """Dispatch on spec.mechanism."""
    if spec.mechanism is Mechanism.MCAR:
        n, d = np.asarray(truth).shape
        return simulate_mcar(n, d, spec.rate, spec.seed)
    if spec.mechanism is Mechanism.MAR:
        return simulate_mar(truth, spec)
    return simulate_mnar(truth, spec)


def _check_complete(truth: np.ndarray) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.float64)
    if truth.ndim != 2:
        raise ValueError(f"truth must be 2-D, got shape {truth.shape}")
    if not np.all(np.isfinite(truth)):
        raise ValueError("truth must be complete (no NaN or infinite entries)")
    return truth
