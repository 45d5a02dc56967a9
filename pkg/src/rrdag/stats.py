"""
Goodness-of-fit and interval checks used to judge Monte Carlo output.

Every check returns a GofReport carrying its statistic, p-value, reference
parameters, sample size and the threshold it was judged at, so a result file
records exactly what was tested. Distributional tests pass when p >= alpha;
z-band checks pass when |z| stays inside the configured number of sigmas.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

logger = logging.getLogger("rrdag")

DEFAULT_ALPHA = 0.01
DEFAULT_SIGMAS = 4.0

# Every chi-square cell needs at least this expected count.
MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class GofReport:
    """Outcome of one check."""

    test: str
    statistic: float
    p_value: float
    passed: bool
    sample_size: int
    params: dict = field(default_factory=dict)
    alpha: float | None = None
    sigmas: float | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("statistic", "p_value"):
            value = out[key]
            if isinstance(value, float) and not math.isfinite(value):
                out[key] = str(value)
        return out


def _sigma_level(sigmas: float) -> float:
    """Two-sided confidence level of a ±sigmas normal band."""
    return 1.0 - 2.0 * float(stats.norm.sf(sigmas))


# ---------------------------------------------------------------------------
# Proportions
# ---------------------------------------------------------------------------

def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion at a ±z normal band."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must lie in [0, {trials}], got {successes}")
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=_sigma_level(z), method="wilson"
    )
    return float(ci.low), float(ci.high)


def proportion_test(successes: int, trials: int, p0: float, sigmas: float = DEFAULT_SIGMAS) -> GofReport:
    """Two-sided z-test of successes/trials against p0, with a Wilson band attached.

    p0 in {0, 1} is degenerate: the check passes iff every trial agrees with it.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0 must lie in [0, 1], got {p0}")
    phat = successes / trials
    lo, hi = wilson_interval(successes, trials, z=sigmas)
    params = {"p0": p0, "estimate": phat, "ci_lo": lo, "ci_hi": hi}

    if p0 in (0.0, 1.0):
        agree = successes == round(p0 * trials)
        return GofReport(
            test="proportion_z",
            statistic=0.0 if agree else math.inf,
            p_value=1.0 if agree else 0.0,
            passed=agree,
            sample_size=trials,
            params={**params, "degenerate": True},
            sigmas=sigmas,
        )

    z = (phat - p0) / math.sqrt(p0 * (1.0 - p0) / trials)
    return GofReport(
        test="proportion_z",
        statistic=z,
        p_value=float(2.0 * stats.norm.sf(abs(z))),
        passed=abs(z) <= sigmas,
        sample_size=trials,
        params=params,
        sigmas=sigmas,
    )


def upper_bound_check(successes: int, trials: int, bound: float, sigmas: float = 3.0) -> GofReport:
    """One-sided check that successes/trials <= bound + sigmas·σ̂."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    phat = successes / trials
    sd = math.sqrt(phat * (1.0 - phat) / trials)
    excess = phat - bound
    if sd > 0:
        z = excess / sd
    else:
        z = 0.0 if excess <= 0 else math.inf
    return GofReport(
        test="upper_bound",
        statistic=z,
        p_value=float(stats.norm.sf(z)),
        passed=z <= sigmas,
        sample_size=trials,
        params={"bound": bound, "estimate": phat, "stderr": sd},
        sigmas=sigmas,
    )


def moment_check(estimate: float, stderr: float, reference: float,
                 sigmas: float = DEFAULT_SIGMAS, sample_size: int = 0, name: str = "moment_z") -> GofReport:
    """z-band check of a sample mean against its reference value."""
    diff = estimate - reference
    if stderr > 0:
        z = diff / stderr
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return GofReport(
        test=name,
        statistic=z,
        p_value=float(2.0 * stats.norm.sf(abs(z))),
        passed=abs(z) <= sigmas,
        sample_size=sample_size,
        params={"estimate": estimate, "stderr": stderr, "reference": reference},
        sigmas=sigmas,
    )


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

def _poisson_cells(total: int, mean: float) -> list[int]:
    """Start index of each chi-square cell; the last cell is open-ended."""
    starts = [0]
    acc = 0.0
    j = 0
    while True:
        acc += total * stats.poisson.pmf(j, mean)
        tail = total * stats.poisson.sf(j, mean)
        if tail < MIN_EXPECTED:
            return starts
        if acc >= MIN_EXPECTED:
            starts.append(j + 1)
            acc = 0.0
        j += 1


def chisq_vs_poisson(histogram: Sequence[int], mean: float, alpha: float = DEFAULT_ALPHA) -> GofReport:
    """Chi-square test of a count histogram against Poisson(mean).

    ``histogram[j]`` is the number of trials that observed the value j.
    Neighbouring values are merged until every cell expects at least five
    trials; the last cell collects the whole upper tail.

    Raises:
        ValueError: With fewer than 50 trials or fewer than two cells.
    """
    hist = np.asarray(histogram, dtype=np.int64)
    total = int(hist.sum())
    if total < 50:
        raise ValueError(f"insufficient data: {total} trials, need at least 50")
    if mean <= 0:
        raise ValueError(f"Poisson mean must be positive, got {mean}")

    starts = _poisson_cells(total, mean)
    if len(starts) < 2:
        raise ValueError(f"insufficient data: {total} trials give a single cell at mean {mean}")

    observed = []
    expected = []
    for lo, hi in zip(starts, starts[1:] + [None]):
        if hi is None:
            observed.append(int(hist[lo:].sum()))
            expected.append(total * float(stats.poisson.sf(lo - 1, mean)))
        else:
            observed.append(int(hist[lo:hi].sum()))
            expected.append(total * float(stats.poisson.cdf(hi - 1, mean) - stats.poisson.cdf(lo - 1, mean)))
    expected = np.asarray(expected)
    expected *= total / expected.sum()

    result = stats.chisquare(np.asarray(observed, dtype=float), expected)
    p = float(result.pvalue)
    return GofReport(
        test="chisq_poisson",
        statistic=float(result.statistic),
        p_value=p,
        passed=p >= alpha,
        sample_size=total,
        params={"mean": mean, "cells": starts, "dof": len(starts) - 1},
        alpha=alpha,
    )


def ks_normal(samples: Sequence[float], alpha: float = DEFAULT_ALPHA) -> GofReport:
    """One-sample Kolmogorov-Smirnov test against the standard normal (asymptotic p-value).

    Raises:
        ValueError: With fewer than 100 samples.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 100:
        raise ValueError(f"insufficient data: {x.size} samples, need at least 100")
    result = stats.kstest(x, "norm", method="asymp")
    p = float(result.pvalue)
    return GofReport(
        test="ks_normal",
        statistic=float(result.statistic),
        p_value=p,
        passed=p >= alpha,
        sample_size=int(x.size),
        params={"mean": float(x.mean()), "std": float(x.std(ddof=1))},
        alpha=alpha,
    )


def correlation_ci(x: Sequence[float], y: Sequence[float], level: float = 0.95) -> tuple[float, tuple[float, float]]:
    """Pearson r with a Fisher-z confidence interval.

    Raises:
        ValueError: With fewer than 100 pairs, mismatched lengths or zero variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"paired samples differ in length: {x.size} vs {y.size}")
    if x.size < 100:
        raise ValueError(f"insufficient data: {x.size} pairs, need at least 100")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("zero variance in one coordinate; correlation undefined")

    result = stats.pearsonr(x, y)
    r = float(result.statistic)
    if abs(r) >= 1.0:
        return r, (r, r)
    ci = result.confidence_interval(confidence_level=level)
    return r, (float(ci.low), float(ci.high))
