"""
Limit laws and exact combinatorial reference values.

Everything the statistical harness compares against lives here: the lattice
offset eps_n, geometric degree tails, Poisson rates of the near-maximal
degree counts, the maximum-degree limit, the normal limits of counts, depths
and labels, the auxiliary polynomial f_m, the tau_k tail bound, and the exact
connection-set selection probabilities.

Throughout, q = m/(m+1) and logarithms are natural unless a base is named.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np
from scipy import integrate
from scipy.stats import norm

logger = logging.getLogger("rrdag")


def _check_m(m: int) -> None:
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")


def ratio(m: int) -> float:
    """q = m/(m+1)."""
    _check_m(m)
    return m / (m + 1)


# ---------------------------------------------------------------------------
# Lattice offset
# ---------------------------------------------------------------------------

def floor_log(n: int, m: int) -> int:
    """Exact floor of log_{(m+1)/m} n, i.e. the largest k with (m+1)^k <= n·m^k."""
    _check_m(m)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    k = max(0, int(math.log(n) / math.log((m + 1) / m)))
    while k > 0 and (m + 1) ** k > n * m**k:
        k -= 1
    while (m + 1) ** (k + 1) <= n * m ** (k + 1):
        k += 1
    return k


def epsilon_n(n: int, m: int) -> float:
    """Fractional part of log_{(m+1)/m} n, in [0, 1), exactly 0 at exact powers."""
    k = floor_log(n, m)
    if (m + 1) ** k == n * m**k:
        return 0.0
    frac = math.log(n) / math.log((m + 1) / m) - k
    return min(max(frac, 0.0), math.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class LimitParams:
    """Reference parameters at a fixed (m, n), optionally for a degree threshold d."""

    m: int
    n: int
    base: int
    eps_n: float
    d: int | None = None
    a: float | None = None

    @property
    def q(self) -> float:
        return self.m / (self.m + 1)

    def threshold(self, i: int) -> int:
        """Degree ⌊log_{(m+1)/m} n⌋ + i."""
        return self.base + i


def limit_params(m: int, n: int, d: int | None = None) -> LimitParams:
    """Collect eps_n, the base degree and, given d, the growth ratio a = d / log n."""
    base = floor_log(n, m)
    a = None
    if d is not None:
        if d < 0:
            raise ValueError(f"d must be >= 0, got {d}")
        a = d / math.log(n) if n > 1 else 0.0
    return LimitParams(m=m, n=n, base=base, eps_n=epsilon_n(n, m), d=d, a=a)


# ---------------------------------------------------------------------------
# Degree tails and Poisson counts
# ---------------------------------------------------------------------------

def geometric_tail(m: int, dvec: Sequence[int]) -> float:
    """Joint degree tail limit (m/(m+1))^{sum d}."""
    if any(d < 0 for d in dvec):
        raise ValueError(f"degree thresholds must be >= 0, got {list(dvec)}")
    return ratio(m) ** sum(dvec)


def poisson_rate(m: int, x: float) -> float:
    """Intensity λ(x) = q^x log((m+1)/m) of the limiting point process."""
    return ratio(m) ** x * math.log((m + 1) / m)


def poisson_param(m: int, i: int, eps: float) -> float:
    """Mean of the count at offset i: q^{i-eps} / (m+1)."""
    return ratio(m) ** (i - eps) / (m + 1)


def poisson_rate_integral(m: int, lo: float, hi: float) -> float:
    """Numerical integral of poisson_rate over [lo, hi]."""
    value, _ = integrate.quad(lambda x: poisson_rate(m, x), lo, hi, epsabs=1e-13, epsrel=1e-12)
    return value


def count_vector_params(m: int, eps: float, i: int, i_prime: int) -> list[float]:
    """Means of (P{i}, ..., P{i'-1}, P[i', inf)); the tail mean is q^{i'-eps}."""
    if i_prime < i:
        raise ValueError(f"i_prime ({i_prime}) must be >= i ({i})")
    means = [poisson_param(m, j, eps) for j in range(i, i_prime)]
    means.append(ratio(m) ** (i_prime - eps))
    return means


def factorial_moment_limit(m: int, eps: float, orders: dict[int, int],
                           tail: tuple[int, int] | None = None) -> float:
    """Leading-order limit of E[(X_{>=i'})_{a'} prod_j (X_j)_{a_j}].

    Args:
        orders: Offset j -> factorial order a_j of the exact count X_j.
        tail: Optional (i', a') for the tail count X_{>=i'}.
    """
    value = 1.0
    for j, a in orders.items():
        if a < 0:
            raise ValueError(f"factorial order must be >= 0, got {a} at offset {j}")
        value *= poisson_param(m, j, eps) ** a
    if tail is not None:
        i_prime, a = tail
        value *= (ratio(m) ** (i_prime - eps)) ** a
    return value


def sample_limit_process(m: int, lower: float, rng: np.random.Generator) -> np.ndarray:
    """Points of the Poisson process with intensity λ on [lower, inf), sorted.

    The total mass is q^lower; offsets above lower are exponential with rate
    log((m+1)/m).
    """
    mass = ratio(m) ** lower
    count = rng.poisson(mass)
    points = lower + rng.exponential(1.0 / math.log((m + 1) / m), size=count)
    return np.sort(points)


def limit_counts(points: np.ndarray, eps: float, i: int, i_prime: int) -> list[int]:
    """Map process points to (P{i}, ..., P{i'-1}, P[i', inf)), P{j} counting [j-eps, j+1-eps)."""
    cells = np.floor(np.asarray(points) + eps).astype(np.int64)
    counts = [int(np.count_nonzero(cells == j)) for j in range(i, i_prime)]
    counts.append(int(np.count_nonzero(cells >= i_prime)))
    return counts


def max_degree_tail_limit(m: int, i_minus_eps: float) -> float:
    """Limit of P(Δ_n >= base + i): 1 - exp(-q^{i - eps})."""
    exponent = i_minus_eps * math.log(ratio(m))
    if exponent > 700:
        return 1.0
    return -math.expm1(-math.exp(exponent))


def xin_normal_params(m: int, i_n: int, eps_n: float) -> tuple[float, float]:
    """Normal centering and scale of X_{i_n} when i_n diverges to -inf."""
    mean = poisson_param(m, i_n, eps_n)
    return mean, math.sqrt(mean)


# ---------------------------------------------------------------------------
# Depth and label limits
# ---------------------------------------------------------------------------

def correlation_limit(m: int, a: float) -> float:
    """ρ = sqrt(ma / ((m+1)^2 - a)), the limiting depth/label correlation."""
    _check_m(m)
    if not 0 <= a < m + 1:
        raise ValueError(f"a must lie in [0, {m + 1}), got {a}")
    return math.sqrt(m * a / ((m + 1) ** 2 - a))


def depth_label_limit(m: int, a: float, x: float, y: float) -> float:
    """P(ρM + sqrt(1-ρ²)N <= y, M > x) for independent standard normals M, N.

    Integrates the conditional normal CDF over M > x with scipy quad; at
    ρ = 0 the two events are independent and the product is returned.
    """
    rho = correlation_limit(m, a)
    if rho == 0.0:
        return float(norm.cdf(y) * norm.sf(x))
    if x == math.inf or y == -math.inf:
        return 0.0
    scale = math.sqrt(1.0 - rho * rho)

    def integrand(t: float) -> float:
        return norm.pdf(t) * norm.cdf((y - rho * t) / scale)

    value, _ = integrate.quad(integrand, x, math.inf, epsabs=1e-12, epsrel=1e-10, limit=200)
    return min(max(value, 0.0), 1.0)


def multi_label_limit(xs: Sequence[float]) -> float:
    """prod_i P(M_i > x_i) for independent standard normals."""
    return float(np.prod(norm.sf(np.asarray(xs, dtype=float)))) if len(xs) else 1.0


def standardize_depth(m: int, n: int, d: int, u: np.ndarray | float) -> np.ndarray | float:
    """(u - (m log n - md/(m+1))) / sqrt(m log n - md/(m+1)^2).

    Raises:
        ValueError: If the variance term is not positive.
    """
    log_n = math.log(n)
    var = m * log_n - m * d / (m + 1) ** 2
    if var <= 0:
        raise ValueError(f"depth variance m log n - md/(m+1)^2 = {var:.4g} is not positive")
    return (u - (m * log_n - m * d / (m + 1))) / math.sqrt(var)


def standardize_label(m: int, n: int, d: int, label: np.ndarray | float) -> np.ndarray | float:
    """(log label - (log n - d/(m+1))) / sqrt(d/(m+1)^2).

    Raises:
        ValueError: If d = 0 (zero variance).
    """
    if d <= 0:
        raise ValueError("label standardization needs d >= 1 (variance d/(m+1)^2 is zero)")
    return (np.log(label) - (math.log(n) - d / (m + 1))) / math.sqrt(d / (m + 1) ** 2)


# ---------------------------------------------------------------------------
# Auxiliary polynomial and tau_k
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntPolynomial:
    """Integer polynomial, coefficients from the constant term upward."""

    coeffs: tuple[int, ...]

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1 if self.coeffs else -1

    @property
    def leading(self) -> int:
        return self.coeffs[-1] if self.coeffs else 0

    def __call__(self, x: int) -> int:
        value = 0
        for c in reversed(self.coeffs):
            value = value * x + c
        return value


def _polymul(a: list[int], b: list[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _falling(start_shift: int, count: int) -> list[int]:
    """prod_{j=0}^{count-1} (i - start_shift - j) as coefficients in i."""
    poly = [1]
    for j in range(count):
        poly = _polymul(poly, [-(start_shift + j), 1])
    return poly


def fm_polynomial(m: int, k: int) -> IntPolynomial:
    """f_m(i) = prod_{j=0}^{m}(i-j) - (i + m(k-1)) prod_{j=0}^{m-1}(i-k-j), exactly."""
    _check_m(m)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    first = _falling(0, m + 1)
    second = _polymul([m * (k - 1), 1], _falling(k, m))
    coeffs = [x - y for x, y in zip(first, second)]
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    return IntPolynomial(tuple(coeffs))


def fm_direct(m: int, k: int, i: int) -> int:
    """f_m(i) evaluated straight from its defining products."""
    return math.prod(i - j for j in range(m + 1)) - (i + m * (k - 1)) * math.prod(
        i - k - j for j in range(m)
    )


def tau_tail_bound(m: int, k: int, t: int) -> float:
    """Upper bound (m+1)m·k(k-1)/(t-m-1) on P(τ_k >= t), clamped to [0, 1].

    Raises:
        ValueError: If t <= m+1.
    """
    _check_m(m)
    if t <= m + 1:
        raise ValueError(f"t must exceed m+1={m + 1}, got {t}")
    return min(1.0, (m + 1) * m * k * (k - 1) / (t - m - 1))


def connection_selection_prob(m: int, i: int, phase: Literal["pre-loss", "post-loss"],
                              exact: bool = False) -> "float | Fraction":
    """Probability that exactly one root of the connection set is selected at step i.

    Before the tracked vertex loses, the set is a single root: C(i-1,m)/C(i,m+1).
    Afterwards it holds m roots: m·C(i-m,m)/C(i,m+1).

    Raises:
        ValueError: If i < 2m or phase is unknown.
    """
    _check_m(m)
    if i < 2 * m:
        raise ValueError(f"step {i} is below 2m={2 * m}")
    denom = math.comb(i, m + 1)
    if phase == "pre-loss":
        value = Fraction(math.comb(i - 1, m), denom)
    elif phase == "post-loss":
        value = Fraction(m * math.comb(i - m, m), denom)
    else:
        raise ValueError(f"phase must be 'pre-loss' or 'post-loss', got '{phase}'")
    return value if exact else float(value)
