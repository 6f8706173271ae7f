"""Negative binomial sentence-length distributions.

Sentence lengths in months are negative binomial, floored at one month so
every sentence produces at least one infectious month. The fitter matches a
target mean exactly (success probability solved by root finding at each
candidate dispersion) and requires the floored median to hit the target
exactly; among dispersions on the exact-median plateau it keeps the one whose
CDF clears the 0.5 crossing by the widest margin, which makes the selection
stable under grid refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq
from scipy.stats import nbinom

from .errors import FitError

SUPPORT_MAX = 2000


@dataclass(frozen=True)
class SentenceDistribution:
    """Floored negative binomial over sentence lengths in months.

    ``dispersion`` and ``success_prob`` parameterize a standard negative
    binomial over non-negative integers (number of failures before the
    ``dispersion``-th success); draws below ``floor`` are mapped to ``floor``.
    """

    dispersion: float
    success_prob: float
    floor: int = 1
    label: str = ""
    support_max: int = field(default=SUPPORT_MAX, repr=False)

    def __post_init__(self):
        if self.dispersion <= 0:
            raise ValueError(f"dispersion must be positive, got {self.dispersion}")
        if not 0.0 < self.success_prob < 1.0:
            raise ValueError(f"success_prob must lie in (0,1), got {self.success_prob}")
        if self.floor < 1:
            raise ValueError(f"floor must be >= 1, got {self.floor}")

    @cached_property
    def _cdf_table(self):
        # Unfloored CDF over 0..support_max; shared by sampling and median.
        support = np.arange(self.support_max + 1)
        return nbinom.cdf(support, self.dispersion, self.success_prob)

    @property
    def cdf_table(self) -> np.ndarray:
        """Unfloored CDF over 0..support_max, as used by inverse-CDF sampling."""
        return self._cdf_table

    @property
    def mean(self) -> float:
        """Mean of the floored distribution."""
        r, q = self.dispersion, self.success_prob
        raw_mean = r * (1.0 - q) / q
        below = np.arange(self.floor)
        pmf_below = nbinom.pmf(below, r, q)
        return float(raw_mean + np.sum((self.floor - below) * pmf_below))

    @property
    def median(self) -> int:
        """Smallest m >= floor with floored CDF(m) >= 0.5."""
        m = int(np.searchsorted(self._cdf_table, 0.5, side="left"))
        return max(m, self.floor)

    def cdf(self, s: int) -> float:
        if s < self.floor:
            return 0.0
        return float(self._cdf_table[min(int(s), self.support_max)])

    def pmf(self, s: int) -> float:
        """Probability mass at s of the floored distribution; 0 below floor."""
        s = int(s)
        if s < self.floor:
            return 0.0
        if s == self.floor:
            return float(self._cdf_table[self.floor])
        return float(nbinom.pmf(s, self.dispersion, self.success_prob))

    def pmf_array(self) -> np.ndarray:
        """Floored pmf over floor..support_max (sub-floor mass collapsed)."""
        support = np.arange(self.floor, self.support_max + 1)
        masses = nbinom.pmf(support, self.dispersion, self.success_prob)
        masses[0] = self._cdf_table[self.floor]
        return masses

    def sentences_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF sentences for uniform draws in [0,1)."""
        draws = np.searchsorted(self._cdf_table, u, side="right")
        return np.clip(draws, self.floor, self.support_max).astype(np.int64)

    def sample(self, rng, size=None):
        """Draw sentence lengths; scalar for size=None, else an int64 array."""
        if size is None:
            return int(self.sentences_from_uniforms(np.array([rng.random()]))[0])
        return self.sentences_from_uniforms(rng.random(size))

    def params(self) -> dict:
        return {
            "dispersion": self.dispersion,
            "success_prob": self.success_prob,
            "floor": self.floor,
            "label": self.label,
        }


def _floored_mean(r: float, q: float, floor: int = 1) -> float:
    if floor == 1:
        return r * (1.0 - q) / q + q**r
    below = np.arange(floor)
    return float(r * (1.0 - q) / q + np.sum((floor - below) * nbinom.pmf(below, r, q)))


def _solve_success_prob(r: float, target_mean: float, floor: int = 1) -> float:
    # Floored mean is strictly decreasing in q, from +inf (q -> 0) to floor (q -> 1).
    lo, hi = 1e-12, 1.0 - 1e-12
    return brentq(
        lambda q: _floored_mean(r, q, floor) - target_mean,
        lo,
        hi,
        xtol=1e-15,
        rtol=8.9e-16,
    )


def _median_and_margin(r: float, q: float, floor: int, target_median: int):
    cdf_m = nbinom.cdf(target_median, r, q)
    cdf_prev = nbinom.cdf(target_median - 1, r, q) if target_median > floor else 0.0
    if cdf_m >= 0.5 and cdf_prev < 0.5:
        return target_median, float(min(cdf_m - 0.5, 0.5 - cdf_prev))
    support = np.arange(max(floor, 1), SUPPORT_MAX + 1)
    table = nbinom.cdf(support, r, q)
    m = int(support[np.searchsorted(table, 0.5, side="left")])
    return m, 0.0


def fit_negative_binomial(
    target_mean: float, target_median: int, label: str = ""
) -> SentenceDistribution:
    """Fit a floored negative binomial to a (mean, median) target pair.

    Deterministic 1-D search over dispersion: each candidate's success
    probability is solved to match the mean, then the dispersion achieving the
    exact floored median with the widest CDF margin around 0.5 wins. Raises
    FitError with the best achieved residuals when no candidate hits the
    median.
    """
    if int(target_median) != target_median:
        raise ValueError(f"target median must be an integer, got {target_median}")
    if not target_mean > target_median >= 1:
        raise ValueError(
            f"targets must satisfy mean > median >= 1, got ({target_mean}, {target_median})"
        )
    target_median = int(target_median)
    floor = 1

    def evaluate(r):
        q = _solve_success_prob(r, target_mean, floor)
        median, margin = _median_and_margin(r, q, floor, target_median)
        return q, median, margin

    lo, hi = 0.02, 200.0
    best = None
    for _ in range(64):
        grid = np.geomspace(lo, hi, 41)
        scored = []
        for r in grid:
            q, median, margin = evaluate(r)
            scored.append((abs(median - target_median), -margin, r, q, median))
        scored.sort(key=lambda t: (t[0], t[1], t[2]))
        best = scored[0]
        idx = int(np.argmin(np.abs(grid - best[2])))
        lo = grid[max(idx - 1, 0)]
        hi = grid[min(idx + 1, len(grid) - 1)]
        if hi / lo - 1.0 < 1e-12:
            break

    median_err, neg_margin, r, q, median = best
    dist = SentenceDistribution(
        dispersion=float(r), success_prob=float(q), floor=floor, label=label
    )
    if median_err != 0:
        raise FitError(
            f"no negative binomial matches mean {target_mean} with median {target_median}; "
            f"best achieved median {median} at dispersion {r:.6g}",
            residuals={
                "target_mean": target_mean,
                "target_median": target_median,
                "achieved_mean": dist.mean,
                "achieved_median": median,
                "dispersion": float(r),
                "success_prob": float(q),
            },
        )
    return dist


def fit_report(dist: SentenceDistribution, target_mean: float, target_median: int) -> dict:
    """Fit artifact: parameters plus achieved-versus-target residuals."""
    return {
        **dist.params(),
        "target_mean": target_mean,
        "target_median": int(target_median),
        "achieved_mean": dist.mean,
        "achieved_median": dist.median,
        "mean_residual": dist.mean - target_mean,
        "median_margin": float(
            min(dist.cdf(dist.median) - 0.5, 0.5 - dist.cdf(dist.median - 1))
        ),
    }
