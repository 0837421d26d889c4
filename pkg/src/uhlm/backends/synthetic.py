"""Synthetic distribution-pair backends.

Two controllable generators stand in for real model pairs:

* ``DirichletPairModel`` draws a sharp target distribution and couples the
  draft to it, optionally auto-tuning the coupling so the expected
  rejection probability of a sampled draft hits a planted value.

* ``PlantedLinearPairModel`` manufactures rounds whose rejection
  probability follows a chosen linear function of the *measured*
  temperature-perturbation uncertainty, enabling exact validation of the
  calibration pipeline and both skip thresholds.

Both are sequence-agnostic in spirit (fresh pair statistics per round) but
pure per sequence: the pair is a deterministic function of (seed, tokens).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

from ..core import RandomStream, TokenSequence, Vocabulary
from ..errors import CalibrationInfeasibleError, ValidationError
from .base import DistributionPairModel, sequence_digest

# Strictly positive floor so log-prob logits stay finite and every token is
# a legal draft for the verifier.
_PROB_FLOOR = 1e-12


def _floor_and_normalize(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, _PROB_FLOOR, None)
    return p / p.sum()


# ---------------------------------------------------------------------------
# Dirichlet coupled pair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticPairConfig:
    """Controls for the Dirichlet pair generator.

    ``coupling`` = 1 makes draft and target identical; 0 makes them
    independent draws. ``planted_rejection_mean``, when set, overrides
    ``coupling`` with a bisection-tuned value whose expected per-draft
    rejection probability matches the target.
    """

    vocab_size: int = 512
    eos_id: int | None = None
    dirichlet_alpha: float = 0.05
    coupling: float = 0.7
    planted_rejection_mean: float | None = None
    seed: int = 0
    tuning_pairs: int = 8192
    tuning_tolerance: float = 0.005

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValidationError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.dirichlet_alpha <= 0:
            raise ValidationError(f"dirichlet_alpha must be positive, got {self.dirichlet_alpha}")
        if not 0.0 <= self.coupling <= 1.0:
            raise ValidationError(f"coupling must lie in [0,1], got {self.coupling}")
        if self.planted_rejection_mean is not None and not 0.0 <= self.planted_rejection_mean <= 1.0:
            raise ValidationError("planted_rejection_mean must lie in [0,1]")

    @property
    def resolved_eos_id(self) -> int:
        return self.vocab_size - 1 if self.eos_id is None else self.eos_id


def synthetic_pair(
    cfg: SyntheticPairConfig, rng: RandomStream, coupling: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """One (draft, target) pair: target ~ Dirichlet(alpha), draft a convex
    blend of the target with an independent Dirichlet draw."""
    c = cfg.coupling if coupling is None else coupling
    alpha = np.full(cfg.vocab_size, cfg.dirichlet_alpha)
    y = rng.generator.dirichlet(alpha)
    if c == 1.0:
        y = _floor_and_normalize(y)
        return y, y
    y_other = rng.generator.dirichlet(alpha)
    y = _floor_and_normalize(y)
    x = _floor_and_normalize(c * y + (1.0 - c) * _floor_and_normalize(y_other))
    return x, y


def expected_rejection(x: np.ndarray, y: np.ndarray) -> float:
    """Expected rejection probability of a draft sampled from ``x``:
    sum_v x_v * max(1 - y_v/x_v, 0) = total variation mass of x over y."""
    return float(np.maximum(x - y, 0.0).sum())


def tune_coupling(cfg: SyntheticPairConfig) -> float:
    """Bisection on the coupling so that the Monte-Carlo mean of
    :func:`expected_rejection` matches ``planted_rejection_mean``.

    Uses common random pairs across candidate couplings, so the objective
    is smooth and strictly decreasing in the coupling.
    """
    target = cfg.planted_rejection_mean
    if target is None:
        return cfg.coupling
    rng = RandomStream(cfg.seed, "synthetic/tune")
    alpha = np.full(cfg.vocab_size, cfg.dirichlet_alpha)
    ys = rng.generator.dirichlet(alpha, size=cfg.tuning_pairs)
    others = rng.generator.dirichlet(alpha, size=cfg.tuning_pairs)
    ys = np.clip(ys, _PROB_FLOOR, None)
    ys /= ys.sum(axis=1, keepdims=True)
    others = np.clip(others, _PROB_FLOOR, None)
    others /= others.sum(axis=1, keepdims=True)

    def mean_rejection(c: float) -> float:
        xs = c * ys + (1.0 - c) * others
        xs = xs / xs.sum(axis=1, keepdims=True)
        return float(np.maximum(xs - ys, 0.0).sum(axis=1).mean())

    lo_val, hi_val = mean_rejection(1.0), mean_rejection(0.0)
    if not lo_val <= target <= hi_val:
        raise CalibrationInfeasibleError(
            f"planted rejection mean {target} outside achievable range "
            f"[{lo_val:.4f}, {hi_val:.4f}] for this sharpness"
        )
    lo_c, hi_c = 0.0, 1.0  # rejection decreases in coupling
    for _ in range(60):
        mid = 0.5 * (lo_c + hi_c)
        if mean_rejection(mid) > target:
            lo_c = mid
        else:
            hi_c = mid
    mid = 0.5 * (lo_c + hi_c)
    if abs(mean_rejection(mid) - target) > cfg.tuning_tolerance:
        raise CalibrationInfeasibleError(
            f"bisection could not reach {target} within {cfg.tuning_tolerance}"
        )
    return mid


class DirichletPairModel(DistributionPairModel):
    """Sequence-keyed Dirichlet pair generator."""

    def __init__(self, cfg: SyntheticPairConfig) -> None:
        self.cfg = cfg
        self.vocab = Vocabulary(cfg.vocab_size, cfg.resolved_eos_id)
        self.coupling = tune_coupling(cfg)
        self._cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def distributions(self, sequence: TokenSequence) -> tuple[np.ndarray, np.ndarray]:
        digest = sequence_digest(self.cfg.seed, sequence)
        if digest not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            rng = RandomStream(self.cfg.seed, f"synthetic/pair/{digest}")
            self._cache[digest] = synthetic_pair(self.cfg, rng, coupling=self.coupling)
        return self._cache[digest]


# ---------------------------------------------------------------------------
# Planted linear uncertainty-to-rejection pair
# ---------------------------------------------------------------------------

# Mixture of uniform segments for the draft token's resample-mismatch rate,
# shaped like a language model's uncertainty profile: most rounds confident,
# a band of genuinely unstable rounds, nothing just above the zero-crossing
# of the planted line (so certain-accept skipping stays clean).
_MISMATCH_MIXTURE = ((0.72, 0.04, 0.10), (0.28, 0.32, 0.45))

# Tokens 2..5 receive the rejected probability mass in the target.
_RESAMPLE_TOKENS = 4


@dataclass(frozen=True)
class PlantedLinearConfig:
    """Plants E[rejection | measured uncertainty u] = slope * u + intercept
    (clamped to [0,1]) under the given perturbation settings."""

    slope: float = 0.82
    intercept: float = -0.06
    vocab_size: int = 64
    k_perturb: int = 20
    theta_min: float = 1e-3
    theta_max: float = 2.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size < 2 + _RESAMPLE_TOKENS + 2:
            raise ValidationError(f"vocab_size must be >= {_RESAMPLE_TOKENS + 4}")
        if self.slope <= 0:
            raise ValidationError("planted slope must be positive")
        if self.k_perturb < 1:
            raise ValidationError("k_perturb must be >= 1")


class _MismatchCurve:
    """Maps a draft token's probability p (in a two-token pair) to its
    expected disagreement rate under uniform-temperature resampling, and
    back."""

    def __init__(self, theta_min: float, theta_max: float) -> None:
        nodes, weights = np.polynomial.legendre.leggauss(192)
        self.thetas = 0.5 * (theta_max - theta_min) * nodes + 0.5 * (theta_max + theta_min)
        self.weights = weights / weights.sum()
        self.p_grid = special.expit(np.linspace(-13.0, 13.0, 2601))
        logits = special.logit(self.p_grid)
        agree = special.expit(logits[:, None] / self.thetas[None, :])
        self.pi_grid = (1.0 - agree) @ self.weights

    def pi_of_p(self, p: float) -> float:
        return float(np.interp(p, self.p_grid, self.pi_grid))

    def p_of_pi(self, pi: np.ndarray | float) -> np.ndarray | float:
        # pi decreases in p, so flip both grids for ascending interp.
        return np.interp(pi, self.pi_grid[::-1], self.p_grid[::-1])


def _mixture_quadrature(n_per_segment: int = 600) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint-rule nodes and weights for the mismatch-rate mixture."""
    nodes, weights = [], []
    for w, lo, hi in _MISMATCH_MIXTURE:
        edges = np.linspace(lo, hi, n_per_segment + 1)
        nodes.append(0.5 * (edges[:-1] + edges[1:]))
        weights.append(np.full(n_per_segment, w / n_per_segment))
    return np.concatenate(nodes), np.concatenate(weights)


def solve_planted_coefficients(cfg: PlantedLinearConfig) -> tuple[float, float, _MismatchCurve]:
    """Find per-token line coefficients (a*, b*) such that the population
    least-squares fit of rejection on the K-sample uncertainty score equals
    the configured (slope, intercept).

    Regressing on the noisy count-based score attenuates any slope planted
    directly in the mismatch rate, so the coefficients are solved against
    the exact joint law of (score, rejection) implied by the mixture.
    """
    curve = _MismatchCurve(cfg.theta_min, cfg.theta_max)
    t, g = _mixture_quadrature()
    p = np.asarray(curve.p_of_pi(t), dtype=np.float64)
    k = cfg.k_perturb
    m = np.arange(k + 1)
    pmf_main = stats.binom.pmf(m[:, None], k, t[None, :])
    pmf_sib = stats.binom.pmf(m[:, None], k, (1.0 - t)[None, :])
    w_main = g * p
    w_sib = g * (1.0 - p)
    prob_m = pmf_main @ w_main + pmf_sib @ w_sib
    u = m / k
    u_bar = float(prob_m @ u)
    var_u = float(prob_m @ (u - u_bar) ** 2)

    def ols_limit(ab: np.ndarray) -> np.ndarray:
        a_star, b_star = ab
        beta_main = np.clip(a_star * t + b_star, 0.0, 1.0)
        beta_sib = np.clip(a_star * (1.0 - t) + b_star, 0.0, 1.0)
        phi_mass = pmf_main @ (w_main * beta_main) + pmf_sib @ (w_sib * beta_sib)
        mean_beta = float(phi_mass.sum())
        cov = float(phi_mass @ u) - mean_beta * u_bar
        slope = cov / var_u
        intercept = mean_beta - slope * u_bar
        return np.array([slope - cfg.slope, intercept - cfg.intercept])

    x0 = np.array(
        [cfg.slope * (k + 2) / k, cfg.intercept - cfg.slope / k]
    )
    result = optimize.root(ols_limit, x0, method="hybr", tol=1e-12)
    if not result.success or np.max(np.abs(result.fun)) > 1e-9:
        raise CalibrationInfeasibleError(
            f"could not realize slope={cfg.slope}, intercept={cfg.intercept}: {result.message}"
        )
    a_star, b_star = (float(v) for v in result.x)
    return a_star, b_star, curve


class PlantedLinearPairModel(DistributionPairModel):
    """Two-token rounds whose rejection probabilities sit exactly on a line
    in the token's resample-mismatch rate, tuned so the measured-score
    regression recovers the configured (slope, intercept)."""

    def __init__(self, cfg: PlantedLinearConfig) -> None:
        self.cfg = cfg
        self.vocab = Vocabulary(cfg.vocab_size, cfg.vocab_size - 1)
        self.a_star, self.b_star, self._curve = solve_planted_coefficients(cfg)
        self._cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def _token_rejection(self, pi: float) -> float:
        return float(np.clip(self.a_star * pi + self.b_star, 0.0, 1.0))

    def _build_pair(self, rng: RandomStream) -> tuple[np.ndarray, np.ndarray]:
        # Component choice, then a uniform mismatch target within it.
        roll = rng.uniform()
        acc = 0.0
        lo = hi = 0.0
        for w, seg_lo, seg_hi in _MISMATCH_MIXTURE:
            acc += w
            lo, hi = seg_lo, seg_hi
            if roll < acc:
                break
        pi_target = lo + (hi - lo) * rng.uniform()
        p = float(self._curve.p_of_pi(pi_target))

        size = self.cfg.vocab_size
        x = np.full(size, _PROB_FLOOR)
        x[0], x[1] = p, 1.0 - p
        x = x / x.sum()

        beta0 = self._token_rejection(pi_target)
        beta1 = self._token_rejection(1.0 - pi_target)
        # No final renormalization: the construction conserves mass to a few
        # ulp, and renormalizing would break the exact y_d == x_d equality
        # of zero-rejection tokens that the delta estimate relies on.
        y = x.copy()
        y[0] = x[0] * (1.0 - beta0)
        y[1] = x[1] * (1.0 - beta1)
        rejected_mass = x[0] * beta0 + x[1] * beta1
        y[2 : 2 + _RESAMPLE_TOKENS] += rejected_mass / _RESAMPLE_TOKENS
        return x, y

    def distributions(self, sequence: TokenSequence) -> tuple[np.ndarray, np.ndarray]:
        digest = sequence_digest(self.cfg.seed, sequence)
        if digest not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            rng = RandomStream(self.cfg.seed, f"planted/pair/{digest}")
            self._cache[digest] = self._build_pair(rng)
        return self._cache[digest]
