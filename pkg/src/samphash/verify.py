"""Randomized invariant suites driving ``samphash verify``.

Every suite takes a seed and an instance count and returns a list of
`Check` objects, one per check name, each holding the worst observation
over all instances. Instance ``i`` draws from ``default_rng([seed, i])``,
so results do not depend on how many instances run before it.
"""

from __future__ import annotations

import functools
import math
from itertools import combinations

import numpy as np

from .entropy import (
    INF,
    h_cond,
    h_rel,
    h_self,
    hbmin_lower_bound,
    hbmin_smoothing,
    hmin,
)
from .instances import (
    random_cq,
    random_density,
    random_hermitian,
    random_projector,
    random_pure,
    random_unitary,
)
from .operators import (
    HermitianOperator,
    embed,
    min_eigenvalue,
    partial_trace,
    psd_transform,
    trace_distance,
)
from .sampling import bad_set, exact_sampler_epsilon, sampling_theorem_lambda
from .splitting import (
    Check,
    at_least,
    at_most,
    basic_recombination_checks,
    build_split_tree,
    lambda_good_set,
    recombining_theorem_check,
    split_checks,
    split_once,
    splitting_theorem_check,
    tree_checks,
)

TOL = 1e-9
SPLIT_TOL = 1e-8
SUBSETS = ((1, 3), (2,), (1, 2, 3))
XIS = (0.1, 0.25, 0.4)


def merge_checks(checks) -> list[Check]:
    """Keep the worst check per name, in order of first appearance."""
    worst: dict[str, Check] = {}
    ok: dict[str, bool] = {}
    for c in checks:
        if c.name not in worst or c.slack < worst[c.name].slack:
            worst[c.name] = c
        ok[c.name] = ok.get(c.name, True) and c.passed
    return [Check(c.name, c.bound, c.observed, ok[c.name], c.sense) for c in worst.values()]


def _rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(i)])


def _dims(rng, k, choices=(2, 3)):
    return tuple(int(x) for x in rng.choice(choices, size=k))


# --------------------------------------------------------------------------
# entropy rules
# --------------------------------------------------------------------------

def entropy_rule_checks(rng, tol: float = TOL) -> list[Check]:
    """Positivity, dimension bound, subadditivity, chain rule and projection monotony."""
    da, db, dc = _dims(rng, 3)
    out = []

    cq = random_cq(rng, (da,), db, x_labels=("X",), e_label="E")
    out.append(at_least("positivity for classical X", hmin(cq.operator(), cond=("E",)).value, 0.0, tol))

    rho = random_density(rng, (da, db, dc), ("A", "B", "C"), rank=int(rng.integers(1, da * db * dc + 1)))
    rho_ab = partial_trace(rho, ("A", "B"))
    rho_b = partial_trace(rho, ("B",))
    # sigma = rho_B^{1/2} K rho_B^{1/2} with 0 < K <= 1 lies below rho_B
    half = psd_transform(rho_b, "sqrt").data
    u = random_unitary(rng, db)
    k = (u * rng.uniform(0.05, 1, size=db)) @ u.conj().T
    sig_b = HermitianOperator(half @ k @ half, (db,), ("B",))
    out.append(at_most("dimension bound", h_cond(rho_ab, sig_b), math.log2(da), tol))

    sig_c = random_density(rng, (dc,), ("C",))
    h_abc = h_rel(rho, ("A", "B"), sig_c)
    h_bc = h_rel(rho, ("B",), sig_c)
    out.append(at_least("dimension bound on the conditioned side", h_bc, h_abc - math.log2(da), tol))
    out.append(at_least("recombination chain rule", h_abc, h_self(rho, ("A",), ("B", "C")) + h_bc, tol))

    sig_bc = random_density(rng, (db, dc), ("B", "C"))
    out.append(at_least("subadditivity", h_cond(rho_ab, partial_trace(sig_bc, ("B",))),
                        h_cond(rho, sig_bc), tol))

    psi = random_pure(rng, (da, db, dc), ("A", "B", "C"))
    q = random_projector(rng, (dc,), ("C",), rank=int(rng.integers(1, dc + 1)))
    projected = psi.apply(q, ("C",))
    sig_b2 = random_density(rng, (db,), ("B",))
    before = h_rel(psi, ("A",), sig_b2)
    after = h_rel(projected, ("A",), sig_b2) if projected.norm2() > 1e-24 else INF
    out.append(at_least("projection monotony", after, before, tol))
    return out


# --------------------------------------------------------------------------
# splitting
# --------------------------------------------------------------------------

def _four_party_dims(rng) -> tuple:
    while True:
        dims = _dims(rng, 4)
        if np.prod(dims) <= 64:
            return dims


def split_instance_checks(rng, m: int | None = None, tol: float = SPLIT_TOL) -> list[Check]:
    """`split_once` post-conditions on a random pure state on A B C D."""
    dims = _four_party_dims(rng)
    psi = random_pure(rng, dims, ("A", "B", "C", "D"))
    m = int(rng.integers(1, 5)) if m is None else m
    sig = psi.reduced(("C",)) if rng.random() < 0.5 else random_density(rng, (dims[2],), ("C",))
    pieces = split_once(psi, ("A",), ("B",), sig, m)
    return split_checks(psi, ("A",), ("B",), sig, pieces, tol=tol) + \
        basic_recombination_checks(psi, ("A",), ("B",), sig, pieces, tol=tol)


def random_tree(rng, n: int = 3, m: int = 2, x_dim: int = 2, e_dim: int = 2, **kw):
    cq = random_cq(rng, (x_dim,) * n, e_dim, **kw)
    return build_split_tree(cq, cq.marginal_e(), m)


def splitting_theorem_checks(tree, tol: float = SPLIT_TOL) -> list[Check]:
    rep = splitting_theorem_check(tree, tol)
    return [at_least("splitting bound worst slack", rep["worst_slack"], 0.0, tol)]


def _splitting_instance(seed, i):
    rng = _rng(seed, i)
    out = split_instance_checks(rng, m=1 if i % 4 == 0 else None)
    tree = random_tree(rng, m=2 + i % 2)
    return out + splitting_theorem_checks(tree) + tree_checks(tree, SPLIT_TOL)


# --------------------------------------------------------------------------
# recombining
# --------------------------------------------------------------------------

def median_lambda(tree, subset) -> float:
    """Rate at the median restricted path weight, so the good set is a proper subset."""
    w = sorted(tree.path_weight(p, subset) for p in tree.paths())
    finite = [x for x in w if x != INF] or [0.0]
    return finite[len(finite) // 2] / (len(subset) * tree.alphabet_bits)


def recombining_checks(tree, subset, lam: float, tol: float = SPLIT_TOL) -> list[Check]:
    good = lambda_good_set(tree, subset, lam, tol=1e-12)
    rep = recombining_theorem_check(tree, good, tol)
    tag = "{" + ",".join(str(x) for x in good.subset_s) + "}"
    return [Check(f"{c.name} S={tag}", c.bound, c.observed, c.passed, c.sense) for c in rep.checks]


def walkthrough_tree(seed: int = 0):
    """Four registers, two branches, two-dimensional E and a state of rank 8."""
    rng = _rng(seed, 10 ** 6)
    return random_tree(rng, n=4, m=2, e_dim=2, pure_e=True, support=8)


def _recombining_instance(seed, i):
    tree = random_tree(_rng(seed, i), m=2 + i % 2)
    out = []
    for s in SUBSETS:
        out += recombining_checks(tree, s, median_lambda(tree, s))
    if i == 0:
        deep = walkthrough_tree(seed)
        out += recombining_checks(deep, (2, 4), median_lambda(deep, (2, 4)))
    return out


# --------------------------------------------------------------------------
# sampling theorem
# --------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def sampler_epsilon(n: int, r: int, xi: float) -> float:
    return exact_sampler_epsilon(n, r, xi)


def sampling_theorem_checks(tree, xi: float, r: int, tol: float = 1e-9) -> list[Check]:
    """Exact check over every r-subset of the levels.

    With the sampler's exact failure probability e0, the fraction of
    subsets whose good set carries weight at least ``1 - sqrt(e0)`` must
    itself be at least ``1 - sqrt(e0)``. Also checks that every path
    outside the good set is a bad row of the sampler for that subset.
    """
    n = tree.n
    e0 = sampler_epsilon(n, r, xi)
    delta = eps = math.sqrt(e0)
    lam = sampling_theorem_lambda(tree.h_root, tree.h_e_root, n, r, tree.alphabet_bits, tree.m, xi)
    paths = tree.paths()
    beta = np.array([tree.beta(p) for p in paths])
    omega = tree.omega
    hits, escapes, bad_weight = 0, 0, 0.0
    subsets = list(combinations(range(1, n + 1), r))
    for s in subsets:
        good = lambda_good_set(tree, s, lam, tol=1e-9)
        if sum(omega[p] for p in good.members) >= 1 - delta - tol:
            hits += 1
        bad = set(bad_set(beta, s, xi).tolist())
        bad_weight += sum(omega[paths[k]] for k in bad)
        escapes += sum(1 for k, p in enumerate(paths) if p not in good.members and k not in bad)
    tag = f"r={r} xi={xi}"
    return [
        at_least(f"fraction of subsets with heavy good set {tag}", hits / len(subsets), 1 - eps, tol),
        at_most(f"mean weight of bad rows {tag}", bad_weight / len(subsets), e0, tol),
        at_most(f"paths outside the good set that are not bad rows {tag}", float(escapes), 0.0, 0.0),
    ]


def _sampling_instance(seed, i):
    tree = random_tree(_rng(seed, i), m=2 + i % 2)
    out = []
    for xi in XIS:
        for r in range(1, tree.n + 1):
            out += sampling_theorem_checks(tree, xi, r)
    return out


# --------------------------------------------------------------------------
# appendix lemmas
# --------------------------------------------------------------------------

def gentle_measurement_check(rho: HermitianOperator, q: HermitianOperator, tol: float = TOL) -> Check:
    """``1/2 |rho - Q rho Q|_1 <= sqrt(tr rho - tr Q^2 rho)`` for Q on a subsystem of rho."""
    qf = embed(q, rho.dims, rho.labels).data
    after = HermitianOperator(qf @ rho.data @ qf.conj().T, rho.dims, rho.labels)
    rhs = math.sqrt(max(0.0, rho.trace() - float(np.trace(qf @ qf @ rho.data).real)))
    return at_most("gentle measurement", trace_distance(rho, after), rhs, tol)


def m_squared_check(rho: HermitianOperator, qs, sigma_a: HermitianOperator, tol: float = TOL) -> list[Check]:
    """Per-piece bounds ``tr_B(Q_a rho Q_a) <= sigma_A`` imply ``tr_B(Q rho Q) <= m^2 sigma_A``."""
    a = sigma_a.labels

    def reduced(mat):
        return partial_trace(HermitianOperator(mat @ rho.data @ mat.conj().T, rho.dims, rho.labels), a)

    per = min(min_eigenvalue(sigma_a - reduced(q.data)) for q in qs)
    total = sum(q.data for q in qs)
    m = len(qs)
    gap = min_eigenvalue(sigma_a.scaled(m * m) - reduced(total))
    return [at_least("per-piece bound premise", per, 0.0, tol),
            at_least("sum of pieces within m^2 sigma", gap, 0.0, tol)]


def m_squared_instance(rng, kind: str) -> list[Check]:
    da, db = _dims(rng, 2)
    labels = ("A", "B")
    rho = random_density(rng, (da, db), labels)
    m = int(rng.integers(2, 5))
    qs = []
    for _ in range(m):
        h = random_hermitian(rng, (da, db), labels)
        qs.append(h.scaled(1 / np.linalg.norm(h.data, 2)))
    if kind == "equal":
        qs = [qs[0]] * m

    def reduced(q):
        return partial_trace(HermitianOperator(q.data @ rho.data @ q.data, rho.dims, labels), ("A",))

    parts = [reduced(q) for q in qs]
    if kind == "scalar":
        top = max(float(np.linalg.eigvalsh(p.data)[-1]) for p in parts)
        sigma = HermitianOperator(top * np.eye(da), (da,), ("A",))
    elif kind == "equal":
        sigma = parts[0]
    else:
        sigma = functools.reduce(lambda x, y: x + y, parts)
    return m_squared_check(rho, qs, sigma)


def projector_ordering_check(p: HermitianOperator, p_big: HermitianOperator, tol: float = TOL) -> list[Check]:
    """For projectors ``P <= P'``: ``P P' = P' P = P``."""
    a, b = p.data, p_big.data
    return [at_least("projector order premise", min_eigenvalue(p_big - p), 0.0, tol),
            at_most("projector ordering", max(float(np.abs(a @ b - a).max()),
                                              float(np.abs(b @ a - a).max())), 0.0, tol)]


def nested_projectors(rng, dims, labels):
    d = int(np.prod(dims))
    big = int(rng.integers(1, d + 1))
    small = int(rng.integers(0, big + 1))
    v = random_unitary(rng, d)[:, :big]
    w = random_unitary(rng, big)[:, :small]
    sub = v @ w
    return (HermitianOperator(sub @ sub.conj().T, dims, labels),
            HermitianOperator(v @ v.conj().T, dims, labels))


def smoothing_checks(rho: HermitianOperator, sigma_b: HermitianOperator, h: float, eps: float,
                     tol: float = TOL) -> list[Check]:
    """The four guarantees of the cutoff smoothing of `rho` at `eps`.

    `h` is the conditional min-entropy witnessed by `sigma_b`.
    """
    b = sigma_b.labels
    bar = hbmin_smoothing(rho, sigma_b, eps)
    rho_b = partial_trace(rho, b)
    bound = hbmin_lower_bound(bar, rho_b)
    return [
        at_least("smoothed marginal below original", min_eigenvalue(rho_b - partial_trace(bar, b)), 0.0, tol),
        at_most("smoothed trace", bar.trace(), 1.0, tol),
        at_most("smoothing distance", trace_distance(bar, rho), eps, tol),
        at_least("smoothed constrained min-entropy", bound.value, h - 2 * math.log2(1 / eps), tol),
    ]


def _appendix_instance(seed, i):
    rng = _rng(seed, i)
    out = []
    da, db = _dims(rng, 2)
    labels = ("A", "B")
    rho = random_density(rng, (da, db), labels, rank=int(rng.integers(1, da * db + 1)),
                         trace=float(rng.uniform(0.2, 1.0)))
    q = random_projector(rng, (db,), ("B",), rank=int(rng.integers(0, db + 1)))
    out.append(gentle_measurement_check(rho, q))
    out += m_squared_instance(rng, ("sum", "scalar", "equal")[i % 3])
    out += projector_ordering_check(*nested_projectors(rng, (da, db), labels))
    rho1 = random_density(rng, (da, db), labels, rank=int(rng.integers(1, da * db + 1)))
    cert = hmin(rho1, cond=("B",))
    out += smoothing_checks(rho1, cert.sigma, cert.value, float(rng.uniform(0.05, 1.0)))
    return out


# --------------------------------------------------------------------------

_INSTANCES = {
    "entropy-rules": lambda seed, i: entropy_rule_checks(_rng(seed, i)),
    "splitting": _splitting_instance,
    "recombining": _recombining_instance,
    "sampling-theorem": _sampling_instance,
    "appendix": _appendix_instance,
}

SUITES = tuple(_INSTANCES)


def run_suite(name: str, seed: int = 0, instances: int = 20) -> list[Check]:
    """Run a named suite and return the merged checks (empty for zero instances)."""
    if name not in _INSTANCES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    if instances < 0:
        raise ValueError("instances must be nonnegative")
    make = _INSTANCES[name]
    checks = []
    for i in range(instances):
        checks += make(seed, i)
    return merge_checks(checks)
