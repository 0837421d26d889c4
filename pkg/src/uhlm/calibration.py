"""Calibrating the uncertainty gate.

Fits the linear map from measured uncertainty to rejection probability,
estimates the probability that the target underestimates the draft,
derives the risk-averse and risk-prone skip thresholds, and evaluates the
expected rejection risk of risk-prone skipping together with its
Cauchy-Schwarz upper bound against the empirical uncertainty density.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateFitError, ValidationError

_MASS_SUM_TOL = 1e-9

# Slopes below this are indistinguishable from flat data (OLS on constant
# rejection values returns denormal, not exactly zero, slopes).
_MIN_SLOPE = 1e-12


def lattice_bin_edges(k: int = 20) -> np.ndarray:
    """Histogram edges for k+1 bins centered on the uncertainty lattice
    {0, 1/k, ..., 1}, so the intrinsically discrete scores don't alias."""
    half = 0.5 / k
    return np.linspace(-half, 1.0 + half, k + 2)


@dataclass(frozen=True)
class UncertaintyHistogram:
    """Discrete empirical probability density of uncertainty.

    ``masses[i]`` is the probability mass in ``[bin_edges[i], bin_edges[i+1])``;
    the implied density is piecewise constant (mass / width per bin).
    """

    bin_edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        masses = np.asarray(self.masses, dtype=np.float64)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "masses", masses)
        if edges.ndim != 1 or masses.ndim != 1 or masses.size != edges.size - 1:
            raise ValidationError("need len(masses) == len(bin_edges) - 1")
        if np.any(np.diff(edges) <= 0):
            raise ValidationError("bin edges must be strictly ascending")
        if edges[0] > 0.0 or edges[-1] < 1.0:
            raise ValidationError("bin edges must cover [0, 1]")
        if np.any(masses < 0):
            raise ValidationError("bin masses must be non-negative")
        if abs(float(masses.sum()) - 1.0) > _MASS_SUM_TOL:
            raise ValidationError(f"bin masses sum to {float(masses.sum())!r}, not 1")

    @classmethod
    def from_samples(
        cls, us: Sequence[float], bin_edges: np.ndarray | None = None
    ) -> "UncertaintyHistogram":
        us = np.asarray(us, dtype=np.float64)
        if us.size == 0:
            raise ValidationError("cannot build a histogram from zero samples")
        edges = lattice_bin_edges() if bin_edges is None else np.asarray(bin_edges)
        counts, _ = np.histogram(us, bins=edges)
        return cls(edges, counts / counts.sum())

    def densities(self) -> np.ndarray:
        """Piecewise-constant density value per bin."""
        return self.masses / np.diff(self.bin_edges)


def fit_linear(pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Ordinary least squares of rejection probability on uncertainty.

    Returns ``(slope, intercept)``. Requires at least two distinct
    uncertainty values; a flat design is a degenerate fit.
    """
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise DegenerateFitError("need at least two (u, beta) pairs")
    u, beta = arr[:, 0], arr[:, 1]
    if np.ptp(u) == 0.0:
        raise DegenerateFitError("all uncertainty values identical; slope undefined")
    slope, intercept = np.polyfit(u, beta, 1)
    return float(slope), float(intercept)


def estimate_delta(samples: Sequence[tuple[float, float]]) -> float:
    """Fraction of ``(x_d, y_d)`` samples with the target probability
    strictly below the draft probability."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("cannot estimate from an empty sample list")
    return float(np.mean(arr[:, 1] < arr[:, 0]))


def thresholds(a: float, b: float, delta: float) -> tuple[float, float]:
    """Skip thresholds implied by the fitted line and ``delta``.

    Returns ``(u_th_averse, u_th_prone) = (-b/a, (delta - b)/a)``: the
    risk-averse threshold skips only drafts predicted certain to be
    accepted; the risk-prone one also skips probabilistically accepted
    drafts.
    """
    if not a > _MIN_SLOPE:
        raise DegenerateFitError(f"slope must be positive, got {a!r}")
    return -b / a, (delta - b) / a


def _clamped_line_integral(a: float, b: float, lo: float, hi: float) -> float:
    """Closed-form integral of max(a*u + b, 0) over [lo, hi]."""
    if hi <= lo:
        return 0.0
    if a == 0.0:
        return max(b, 0.0) * (hi - lo)
    root = -b / a
    if a > 0.0:
        s, t = max(lo, root), hi
    else:
        s, t = lo, min(hi, root)
    if t <= s:
        return 0.0
    return 0.5 * a * (t * t - s * s) + b * (t - s)


def _overlaps(hist: UncertaintyHistogram, u_lo: float, u_hi: float):
    """(lo, hi, density) per bin segment intersecting [u_lo, u_hi]."""
    edges = hist.bin_edges
    for i, density in enumerate(hist.densities()):
        lo = max(float(edges[i]), u_lo)
        hi = min(float(edges[i + 1]), u_hi)
        if hi > lo and density > 0.0:
            yield lo, hi, float(density)


def expected_risk(
    a: float, b: float, hist: UncertaintyHistogram, u_lo: float, u_hi: float
) -> float:
    """Expected extra rejection probability of skipping over [u_lo, u_hi].

    Integrates the fitted line, clamped at zero from below, against the
    histogram's piecewise-constant density. Partial bins contribute their
    exact segment integral, so fully covered bins reduce to
    (line at bin midpoint) * (bin mass).
    """
    if u_hi <= u_lo:
        return 0.0
    return sum(
        density * _clamped_line_integral(a, b, lo, hi)
        for lo, hi, density in _overlaps(hist, u_lo, u_hi)
    )


def risk_upper_bound(
    a: float, b: float, hist: UncertaintyHistogram, u_lo: float, u_hi: float
) -> float:
    """Cauchy-Schwarz bound on :func:`expected_risk`:
    sqrt(int |a*u+b|^2 du) * sqrt(int f(u)^2 du) over [u_lo, u_hi]."""
    if u_hi <= u_lo:
        return 0.0
    if a == 0.0:
        line_sq = b * b * (u_hi - u_lo)
    else:
        line_sq = ((a * u_hi + b) ** 3 - (a * u_lo + b) ** 3) / (3.0 * a)
    density_sq = sum(
        density * density * (hi - lo) for lo, hi, density in _overlaps(hist, u_lo, u_hi)
    )
    return float(np.sqrt(max(line_sq, 0.0)) * np.sqrt(density_sq))


@dataclass(frozen=True)
class CalibrationModel:
    """Fitted uncertainty-to-rejection map plus everything derived from it."""

    a: float
    b: float
    delta: float
    u_th_averse: float
    u_th_prone: float
    density: UncertaintyHistogram

    def __post_init__(self) -> None:
        if not self.a > _MIN_SLOPE:
            raise DegenerateFitError(f"calibration slope must be positive, got {self.a!r}")
        averse, prone = thresholds(self.a, self.b, self.delta)
        if abs(averse - self.u_th_averse) > 1e-9 or abs(prone - self.u_th_prone) > 1e-9:
            raise ValidationError("thresholds inconsistent with (a, b, delta)")
        if self.u_th_averse > self.u_th_prone + 1e-12:
            raise ValidationError("risk-averse threshold exceeds risk-prone threshold")

    @classmethod
    def from_fit(
        cls, a: float, b: float, delta: float, density: UncertaintyHistogram
    ) -> "CalibrationModel":
        averse, prone = thresholds(a, b, delta)
        return cls(a=a, b=b, delta=delta, u_th_averse=averse, u_th_prone=prone, density=density)

    def expected_risk(self) -> float:
        """Risk of risk-prone skipping over [u_th_averse, u_th_prone]."""
        return expected_risk(self.a, self.b, self.density, self.u_th_averse, self.u_th_prone)

    def risk_upper_bound(self) -> float:
        return risk_upper_bound(self.a, self.b, self.density, self.u_th_averse, self.u_th_prone)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "delta": self.delta,
            "u_th_averse": self.u_th_averse,
            "u_th_prone": self.u_th_prone,
            "bin_edges": self.density.bin_edges.tolist(),
            "masses": self.density.masses.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationModel":
        density = UncertaintyHistogram(
            np.asarray(doc["bin_edges"], dtype=np.float64),
            np.asarray(doc["masses"], dtype=np.float64),
        )
        return cls(
            a=float(doc["a"]),
            b=float(doc["b"]),
            delta=float(doc["delta"]),
            u_th_averse=float(doc["u_th_averse"]),
            u_th_prone=float(doc["u_th_prone"]),
            density=density,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_model(
    us: Sequence[float],
    betas: Sequence[float],
    draft_target_pairs: Sequence[tuple[float, float]],
    bin_edges: np.ndarray | None = None,
) -> CalibrationModel:
    """Fit a calibration model from per-round observations collected under
    always-transmit operation (never from skipped rounds)."""
    a, b = fit_linear(list(zip(us, betas)))
    if not a > _MIN_SLOPE:
        raise DegenerateFitError(
            f"fitted slope {a:.4g} is not positive; uncertainty does not predict rejection"
        )
    delta = estimate_delta(draft_target_pairs)
    density = UncertaintyHistogram.from_samples(us, bin_edges)
    return CalibrationModel.from_fit(a, b, delta, density)
