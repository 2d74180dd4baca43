import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import hypergeom

from samphash.sampling import (
    MainBoundParams,
    SamplerSpec,
    all_subsets,
    bad_set,
    choose_m,
    draw_subset,
    estimate_sampler,
    exact_sampler_epsilon,
    hypergeometric_tail,
    kappa_term,
    main_bound,
    max_binary_tail,
    parallel_from_plain,
    sampling_theorem_lambda,
    subset_sampler_epsilon,
    trial_generator,
)


def scipy_tail(n, ones, r, xi):
    """Tail of the number of sampled ones via the scipy hypergeometric cdf."""
    bound = r * (Fraction(ones, n) - Fraction(xi))
    if bound < 0:
        return 0.0
    return float(hypergeom(n, ones, r).cdf(math.floor(bound)))


# ---------------------------------------------------------------- subset sampler

def test_sampler_epsilon_examples():
    assert subset_sampler_epsilon(17, 0.0) == 1.0
    assert subset_sampler_epsilon(128, 0.25) == pytest.approx(math.exp(-4))
    assert subset_sampler_epsilon(128, 0.25) == pytest.approx(0.0183, abs=5e-5)
    assert subset_sampler_epsilon(200, 0.1) == pytest.approx(0.3679, abs=5e-5)


def test_sampler_epsilon_domain():
    with pytest.raises(ValueError):
        subset_sampler_epsilon(0, 0.1)
    with pytest.raises(ValueError):
        subset_sampler_epsilon(4, 1.5)


@given(st.integers(1, 500), st.integers(1, 500), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_sampler_epsilon_decreases(r1, r2, x1, x2):
    lo_r, hi_r = sorted((r1, r2))
    lo_x, hi_x = sorted((x1, x2))
    assert subset_sampler_epsilon(hi_r, lo_x) <= subset_sampler_epsilon(lo_r, lo_x)
    assert subset_sampler_epsilon(lo_r, hi_x) <= subset_sampler_epsilon(lo_r, lo_x)


def test_spec_defaults_and_validation():
    s = SamplerSpec(10, 4, 0.25)
    assert s.eps == pytest.approx(math.exp(-4 * 0.0625 / 2))
    for args in [(10, 0, 0.1), (10, 11, 0.1), (10, 4, -0.1)]:
        with pytest.raises(ValueError):
            SamplerSpec(*args)
    with pytest.raises(ValueError):
        SamplerSpec(10, 4, 0.1, eps=2.0)


# ---------------------------------------------------------------- exact tails

def test_tail_examples():
    # the event is "sample mean <= mean - xi", so xi = 0 on a constant vector is certain
    assert hypergeometric_tail(10, 10, 3, 0.0) == 1.0
    assert hypergeometric_tail(10, 10, 3, 1e-9) == 0.0
    assert hypergeometric_tail(4, 2, 2, 0.4) == pytest.approx(1 / 6)


def test_tail_by_enumeration():
    vec = [1, 1, 0, 0, 1, 0]
    subsets = all_subsets(6, 3)
    hits = sum(np.mean([vec[i - 1] for i in s]) <= 0.5 - 0.2 for s in subsets)
    assert hypergeometric_tail(6, 3, 3, 0.2) == pytest.approx(hits / len(subsets))


@given(st.integers(1, 60).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(0, n), st.integers(1, n), st.floats(0.0, 1.0))))
def test_tail_matches_scipy_and_hoeffding(args):
    n, ones, r, xi = args
    got = hypergeometric_tail(n, ones, r, xi)
    assert got == pytest.approx(scipy_tail(n, ones, r, xi), abs=1e-9)
    assert got <= subset_sampler_epsilon(r, xi) + 1e-12


def test_large_population_uses_log_space():
    n = 200_000
    got = hypergeometric_tail(n, n // 2, 400, 0.1)
    assert got == pytest.approx(scipy_tail(n, n // 2, 400, 0.1), rel=1e-6)
    assert got <= subset_sampler_epsilon(400, 0.1)


def test_tail_domain():
    with pytest.raises(ValueError):
        hypergeometric_tail(4, 5, 2, 0.1)
    with pytest.raises(ValueError):
        hypergeometric_tail(4, 2, 5, 0.1)


def test_exact_sampler_epsilon_small():
    # binary vectors are a subset of [0,1]^n, so the LP answer dominates them
    eps = exact_sampler_epsilon(5, 2, 0.3)
    assert eps >= max_binary_tail(5, 2, 0.3) - 1e-12
    assert eps <= subset_sampler_epsilon(2, 0.3) + 1e-12
    with pytest.raises(ValueError):
        exact_sampler_epsilon(10, 5, 0.1)


# ---------------------------------------------------------------- bad sets

def test_constant_matrix_has_no_bad_rows():
    beta = np.full((3, 5), 0.4)
    assert bad_set(beta, (1, 2), 0.01).size == 0


def test_single_row_spike():
    n = 6
    beta = np.zeros((1, n))
    beta[0, 0] = 1
    assert bad_set(beta, (2, 3), 1 / (2 * n)).tolist() == [0]


def test_bad_set_validation():
    with pytest.raises(ValueError, match="normalize"):
        bad_set(np.array([[1.5, 0.0]]), (1,), 0.1)
    with pytest.raises(ValueError):
        bad_set(np.zeros((1, 3)), (4,), 0.1)
    with pytest.raises(ValueError):
        bad_set(np.zeros((1, 3)), (), 0.1)


@given(st.integers(0, 2 ** 32 - 1))
def test_markov_argument_on_binary_matrices(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 13))
    r = int(rng.integers(1, min(4, n) + 1))
    rows = int(rng.integers(1, 6))
    xi = float(rng.uniform(0.05, 0.5))
    beta = rng.integers(0, 2, size=(rows, n)).astype(float)
    omega = rng.dirichlet(np.ones(rows))
    eps = max(hypergeometric_tail(n, int(b.sum()), r, xi) for b in beta)
    par = parallel_from_plain(SamplerSpec(n, r, xi, eps=eps))
    subsets = all_subsets(n, r)
    heavy = sum(omega[bad_set(beta, s, xi)].sum() >= par.delta for s in subsets if par.delta > 0)
    assert heavy / len(subsets) <= par.eps + 1e-12


# ---------------------------------------------------------------- parallel samplers

@pytest.mark.parametrize("eps, out", [(1e-4, 0.01), (1.0, 1.0), (0.01, 0.1)])
def test_parallel_from_plain(eps, out):
    par = parallel_from_plain(SamplerSpec(10, 5, 0.1, eps=eps))
    assert par.delta == pytest.approx(out) and par.eps == pytest.approx(out)
    assert par.n == 10 and par.xi == 0.1


# ---------------------------------------------------------------- rate threshold

def test_lambda_formula():
    # hand evaluation: 3/(4*1) + (4-2)*1/(2*4*1) - (1/2 + 0.1)
    assert sampling_theorem_lambda(3.0, 1.0, 4, 2, 1.0, 2, 0.1) == pytest.approx(0.75 + 0.25 - 0.6)


def test_lambda_limits():
    assert sampling_theorem_lambda(6.0, 0.0, 3, 2, 2.0, 10 ** 12, 0.0) == pytest.approx(1.0)
    assert sampling_theorem_lambda(6.0, 5.0, 3, 3, 2.0, 2, 0.0) == pytest.approx(1.0 - 0.5)
    with pytest.raises(ValueError):
        sampling_theorem_lambda(1, 0, 3, 4, 1, 2, 0)
    with pytest.raises(ValueError):
        sampling_theorem_lambda(1, 0, 3, 2, 1, 0, 0)


# ---------------------------------------------------------------- choosing m

def f_m(m, kappa):
    return 1 / m + 2 * kappa * math.log2(m)


def test_choose_m_examples():
    assert choose_m(0.1) == 4
    assert f_m(4, 0.1) == pytest.approx(0.65)
    assert f_m(4, 0.1) <= kappa_term(0.1)
    assert kappa_term(0.1) == pytest.approx(0.664, abs=5e-4)
    assert choose_m(0.15) == 3
    with pytest.raises(ValueError, match="explicit m"):
        choose_m(0.2)


@given(st.floats(1e-4, 0.15))
def test_choose_m_lies_in_interval_and_meets_bound(kappa):
    m = choose_m(kappa)
    assert math.log(2) / (2 * kappa) - 1e-9 <= m <= 1 / (2 * kappa) + 1e-9
    assert f_m(m, kappa) <= kappa_term(kappa) + 1e-12


# ---------------------------------------------------------------- main bound

def test_corollary_plug_in():
    r = 2 ** 8
    xi = r ** -0.25
    eps = subset_sampler_epsilon(r, xi)
    p = MainBoundParams(n=2 ** 16, r=r, alphabet_bits=2 ** 16, xi=xi, eps=eps)
    assert p.kappa == 2 ** -8
    loss, smooth = main_bound(p)
    assert loss == pytest.approx(3 * 0.25 + 2 * 2 ** -8 * 8)
    assert loss == pytest.approx(0.8125)
    assert smooth == pytest.approx(3 * math.exp(-2))
    assert smooth == pytest.approx(0.406, abs=5e-4)


@pytest.mark.parametrize("r", [2 ** 8, 2 ** 10])
def test_loss_shrinks_as_a_power_of_r(r):
    xi = r ** -0.25
    p = MainBoundParams(n=2 ** 12, r=r, alphabet_bits=2 ** 16, xi=xi, eps=subset_sampler_epsilon(r, xi))
    loss, _ = main_bound(p)
    # xi dominates: loss within a constant of r^(-1/4)
    assert loss <= 4 * r ** -0.25


def test_parallel_form():
    p = MainBoundParams(n=100, r=100, alphabet_bits=100, xi=0.1, eps=0.01, theta=0.5, delta=0.04, tau=0.001)
    loss, smooth = main_bound(p, "parallel")
    assert loss == pytest.approx(0.1 + 2 * 1 / 10000 + kappa_term(0.01))
    assert smooth == pytest.approx(2 * 0.2 + 0.01 + 1.0 + 0.001)
    with pytest.raises(ValueError):
        main_bound(MainBoundParams(100, 100, 100, 0.1, 0.01), "parallel")
    with pytest.raises(ValueError):
        main_bound(p, "other")


def test_theta_one_degenerates():
    p = MainBoundParams(n=1, r=10 ** 6, alphabet_bits=1, xi=0.0, eps=0.0, theta=1.0, delta=0.0)
    loss, smooth = main_bound(p, "parallel")
    assert loss == pytest.approx(0.0, abs=1e-4)
    assert smooth == pytest.approx(2.0)


def test_kappa_cap():
    with pytest.raises(ValueError, match="0.15"):
        main_bound(MainBoundParams(n=100, r=10, alphabet_bits=1, xi=0.1, eps=0.1))


@given(st.floats(0.01, 0.5), st.integers(64, 4096), st.integers(1, 8))
def test_loss_nonincreasing_in_r(xi, r, step):
    def loss(rr):
        return main_bound(MainBoundParams(n=64, r=rr, alphabet_bits=8, xi=xi, eps=1e-3))[0]
    assert loss(r * step) <= loss(r) + 1e-12


def test_composition_of_square_roots():
    for eps in np.logspace(-12, 0, 13):
        assert 2 * math.sqrt(math.sqrt(eps)) + math.sqrt(eps) <= 3 * eps ** 0.25 + 1e-15


# ---------------------------------------------------------------- random draws

def test_trial_streams_are_deterministic_and_distinct():
    a = trial_generator(7, 3).integers(0, 2 ** 32, size=4)
    b = trial_generator(7, 3).integers(0, 2 ** 32, size=4)
    c = trial_generator(7, 4).integers(0, 2 ** 32, size=4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    with pytest.raises(ValueError):
        trial_generator(-1, 0)


def test_draw_subset_shape_and_uniformity():
    counts = {}
    for t in range(3000):
        s = tuple(draw_subset(trial_generator(1, t), 5, 2))
        assert len(set(s)) == 2 and all(1 <= x <= 5 for x in s)
        counts[s] = counts.get(s, 0) + 1
    assert len(counts) == 10
    freq = np.array(list(counts.values())) / 3000
    assert np.all(np.abs(freq - 0.1) < 0.025)


def test_estimate_sampler_binary_rows():
    beta = np.array([[1, 1, 0, 0, 1, 0, 1, 0], [1, 1, 1, 1, 0, 0, 0, 0]], dtype=float)
    out = estimate_sampler(beta, 3, 0.25, trials=2000, seed=5)
    assert "exact_tail" in out
    se = math.sqrt(out["exact_tail"] * (1 - out["exact_tail"]) / 2000)
    assert abs(out["empirical_tail"] - out["exact_tail"]) <= 4 * se + 1 / 2000
    assert out["exact_tail"] <= out["hoeffding_bound"]
    assert estimate_sampler(beta, 3, 0.25, trials=100, seed=5) == estimate_sampler(beta, 3, 0.25, trials=100, seed=5)
