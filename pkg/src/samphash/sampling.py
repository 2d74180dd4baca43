"""Averaging samplers over index subsets and the parameter calculators built on them.

Hoeffding-type bounds use the natural exponential; rate losses and
``kappa`` terms are in bits (base-2 logarithms).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

KAPPA_MAX = 0.15
EXACT_TAIL_MAX_N = 100_000


@dataclass(frozen=True)
class SamplerSpec:
    """Uniform sampler over r-subsets of n indices with accuracy `xi`.

    `eps` defaults to the Hoeffding-type failure probability of the
    subset sampler.
    """

    n: int
    r: int
    xi: float
    eps: float | None = None

    def __post_init__(self):
        if not 0 < self.r <= self.n:
            raise ValueError(f"need 0 < r <= n, got r={self.r}, n={self.n}")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [0, 1], got {self.xi}")
        if self.eps is None:
            object.__setattr__(self, "eps", subset_sampler_epsilon(self.r, self.xi))
        elif not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")


@dataclass(frozen=True)
class ParallelSpec:
    n: int
    xi: float
    delta: float
    eps: float

    def __post_init__(self):
        for name in ("delta", "eps"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def subset_sampler_epsilon(r: int, xi: float) -> float:
    """Failure probability ``exp(-r xi^2 / 2)`` of the uniform r-subset sampler."""
    if r < 1:
        raise ValueError("r must be positive")
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [0, 1], got {xi}")
    return math.exp(-r * xi * xi / 2)


def _tail_threshold(n: int, ones: int, r: int, xi) -> int | None:
    # largest k with k/r <= ones/n - xi, None if there is none
    bound = Fraction(r) * (Fraction(ones, n) - Fraction(xi))
    if bound < 0:
        return None
    return math.floor(bound)


def hypergeometric_tail(n: int, ones: int, r: int, xi: float) -> float:
    """Exact probability that a uniform r-subset of a 0/1 vector undershoots its mean by `xi`.

    The vector has `ones` ones among `n` entries; the event is
    ``sample mean <= ones/n - xi``. The comparison is done in exact
    rational arithmetic on the binary value of `xi`.

    Examples
    --------
    >>> hypergeometric_tail(4, 2, 2, 0.4)
    0.16666666666666666
    """
    if not 0 <= ones <= n:
        raise ValueError(f"need 0 <= ones <= n, got ones={ones}, n={n}")
    if not 0 < r <= n:
        raise ValueError(f"need 0 < r <= n, got r={r}, n={n}")
    kmax = _tail_threshold(n, ones, r, xi)
    if kmax is None:
        return 0.0
    lo = max(0, r - (n - ones))
    hi = min(kmax, ones, r)
    if hi < lo:
        return 0.0
    if n <= EXACT_TAIL_MAX_N:
        num = sum(math.comb(ones, k) * math.comb(n - ones, r - k) for k in range(lo, hi + 1))
        return float(Fraction(num, math.comb(n, r)))
    # log-space for very large populations
    def lc(a, b):
        return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)
    terms = [lc(ones, k) + lc(n - ones, r - k) for k in range(lo, hi + 1)]
    top = max(terms)
    return min(1.0, math.exp(top + math.log(sum(math.exp(t - top) for t in terms)) - lc(n, r)))


def max_binary_tail(n: int, r: int, xi: float) -> float:
    """Largest hypergeometric tail over all 0/1 vectors of length n."""
    return max(hypergeometric_tail(n, k, r, xi) for k in range(n + 1))


def exact_sampler_epsilon(n: int, r: int, xi: float, max_subsets: int = 20) -> float:
    """Exact failure probability of the uniform r-subset sampler over all of [0,1]^n.

    Enumerates every collection of r-subsets and asks a linear program
    whether one vector makes all of them undershoot at once. Only
    feasible for ``C(n, r) <= max_subsets``.
    """
    from scipy.optimize import linprog

    subsets = list(itertools.combinations(range(n), r))
    if len(subsets) > max_subsets:
        raise ValueError(f"C({n},{r}) = {len(subsets)} subsets exceed max_subsets={max_subsets}")

    rows = []
    for s in subsets:
        # sample mean - full mean <= -xi
        a = np.full(n, -1.0 / n)
        a[list(s)] += 1.0 / r
        rows.append(a)
    rows = np.array(rows)

    best = 0
    # largest collections first, to stop early
    for size in range(len(subsets), 0, -1):
        for coll in itertools.combinations(range(len(subsets)), size):
            res = linprog(np.zeros(n), A_ub=rows[list(coll)], b_ub=np.full(size, -xi),
                          bounds=[(0, 1)] * n, method="highs")
            if res.status == 0:
                best = size
                break
        if best:
            break
    return best / len(subsets)


def bad_set(beta, subset, xi: float) -> np.ndarray:
    """Indices of the rows whose average over `subset` undershoots the full average by `xi`.

    `subset` holds 1-based column indices.
    """
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if beta.size and (beta.min() < 0 or beta.max() > 1):
        raise ValueError("entries of beta must lie in [0, 1]; normalize entropies by the alphabet size first")
    cols = np.asarray(sorted(set(int(i) for i in subset)), dtype=int) - 1
    if cols.size == 0 or cols.min() < 0 or cols.max() >= beta.shape[1]:
        raise ValueError(f"subset must be a nonempty set of indices in 1..{beta.shape[1]}")
    sampled = beta[:, cols].mean(axis=1)
    full = beta.mean(axis=1)
    return np.flatnonzero(sampled <= full - xi)


def parallel_from_plain(spec: SamplerSpec) -> ParallelSpec:
    """Markov's inequality turns a plain sampler into a parallel one with ``delta = eps = sqrt(eps)``."""
    root = math.sqrt(spec.eps)
    return ParallelSpec(spec.n, spec.xi, root, root)


def sampling_theorem_lambda(h_root: float, h_e: float, n: int, r: int, alphabet_bits: float,
                            m: int, xi: float) -> float:
    """Rate threshold below which sampled paths are rare.

    ``h_root`` is H(X^n|E) and ``h_e`` is H(E), both relative to sigma and
    in bits.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if not 0 < r <= n:
        raise ValueError(f"need 0 < r <= n, got r={r}, n={n}")
    return (h_root / (n * alphabet_bits) + (n - r) * h_e / (r * n * alphabet_bits)
            - (1.0 / m + xi))


def kappa_term(kappa: float) -> float:
    """``2 kappa log2(1/kappa)``."""
    return 0.0 if kappa == 0 else 2 * kappa * math.log2(1 / kappa)


def choose_m(kappa: float) -> int:
    """Smallest integer in ``[ln2/(2 kappa), 1/(2 kappa)]``.

    For such m, ``1/m + 2 kappa log2 m <= 2 kappa log2(1/kappa)``.

    >>> choose_m(0.1)
    4
    """
    if not 0 < kappa <= KAPPA_MAX:
        raise ValueError(f"kappa={kappa} is outside (0, {KAPPA_MAX}]; pass an explicit m instead")
    return math.ceil(math.log(2) / (2 * kappa) - 1e-12)


@dataclass(frozen=True)
class MainBoundParams:
    """Inputs of the sampled-rate bound.

    For the plain-sampler form, `eps` is the sampler failure probability
    and `theta` is fixed internally. For the parallel-sampler form, `eps`
    and `delta` are the parallel-sampler parameters and `theta` must be
    given.
    """

    n: int
    r: int
    alphabet_bits: float
    xi: float
    eps: float
    theta: float | None = None
    tau: float = 0.0
    delta: float | None = None

    @property
    def kappa(self) -> float:
        return self.n / (self.r * self.alphabet_bits)

    @property
    def m_chosen(self) -> int:
        return choose_m(self.kappa)


def main_bound(params: MainBoundParams, form: str = "plain") -> tuple[float, float]:
    """Rate loss and smoothing of the sampled min-entropy rate bound.

    Parameters
    ----------
    form : {"plain", "parallel"}
        ``"parallel"`` returns ``xi + 2 log2(1/theta)/(n c) + 2 kappa log2(1/kappa)``
        with smoothing ``2 sqrt(delta) + eps + 2 theta + tau``. ``"plain"``
        sets ``theta = 2**(-xi n c)`` and returns ``3 xi + 2 kappa log2(1/kappa)``
        with smoothing ``2 theta + 3 eps**(1/4) + tau``.

    Raises
    ------
    ValueError
        If kappa exceeds 0.15 or a required parameter is missing.
    """
    p = params
    kappa = p.kappa
    if not 0 < kappa <= KAPPA_MAX:
        raise ValueError(f"kappa={kappa:.4g} exceeds {KAPPA_MAX}: the bound needs a larger sample or alphabet")
    if form == "plain":
        theta = 2.0 ** (-p.xi * p.n * p.alphabet_bits)
        return 3 * p.xi + kappa_term(kappa), 2 * theta + 3 * p.eps ** 0.25 + p.tau
    if form == "parallel":
        if p.delta is None or p.theta is None:
            raise ValueError("the parallel form needs delta and theta")
        if p.theta == 0:
            loss = math.inf
        else:
            loss = p.xi + 2 * math.log2(1 / p.theta) / (p.n * p.alphabet_bits) + kappa_term(kappa)
        return loss, 2 * math.sqrt(p.delta) + p.eps + 2 * p.theta + p.tau
    raise ValueError(f"unknown form {form!r}")


# --------------------------------------------------------------------------
# randomized subset draws
# --------------------------------------------------------------------------

def _seed_words(seed: int) -> list[int]:
    if not 0 <= seed < 1 << 128:
        raise ValueError("seed must be a 128-bit nonnegative integer")
    return [seed & (2**64 - 1), seed >> 64]


def trial_generator(seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream for one trial: Philox keyed by `seed`, counter ``trial << 128``."""
    counter = [0, 0, trial & (2**64 - 1), (trial >> 64) & (2**64 - 1)]
    return np.random.Generator(np.random.Philox(key=_seed_words(seed), counter=counter))


def draw_subset(rng: np.random.Generator, n: int, r: int) -> np.ndarray:
    """Uniform r-subset of ``1..n`` by a partial Fisher-Yates shuffle, sorted."""
    if not 0 < r <= n:
        raise ValueError(f"need 0 < r <= n, got r={r}, n={n}")
    perm = np.arange(1, n + 1)
    for i in range(r):
        j = i + int(rng.integers(0, n - i))
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:r])


def all_subsets(n: int, r: int):
    """Every r-subset of ``1..n`` in lexicographic order."""
    return [tuple(s) for s in itertools.combinations(range(1, n + 1), r)]


def estimate_sampler(beta, r: int, xi: float, trials: int, seed: int = 0, omega=None) -> dict:
    """Monte Carlo failure rates of the subset sampler on the rows of `beta`.

    Returns the per-row empirical tails, their maximum, the mean omega
    weight of the bad set, the Hoeffding-type bound and, when every row
    is 0/1, the exact hypergeometric tails.
    """
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    rows_, n = beta.shape
    if omega is None:
        omega = np.full(rows_, 1.0 / rows_)
    omega = np.asarray(omega, dtype=float)
    counts = np.zeros(rows_, dtype=np.int64)
    weight = 0.0
    for t in range(trials):
        s = draw_subset(trial_generator(seed, t), n, r)
        bad = bad_set(beta, s, xi)
        counts[bad] += 1
        weight += float(omega[bad].sum())
    tails = counts / trials
    out = {
        "empirical_tail": float(tails.max()),
        "empirical_tail_rows": tails.tolist(),
        "mean_bad_weight": weight / trials,
        "hoeffding_bound": subset_sampler_epsilon(r, xi),
        "trials": trials,
    }
    if np.all((beta == 0) | (beta == 1)):
        exact = [hypergeometric_tail(n, int(row.sum()), r, xi) for row in beta]
        out["exact_tail"] = max(exact)
        out["exact_tail_rows"] = exact
    return out
