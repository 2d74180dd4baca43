"""Entropy splitting of pure states, split trees and recombination.

Paths are tuples of branch indices ``1..m`` with the first level first.
Subsets of levels, such as the sample set, are 1-based as well.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .entropy import (
    INF,
    CQState,
    EntropyCertificate,
    h_cond,
    h_rel,
    h_self,
)
from .operators import (
    RANK_TOL,
    HermitianOperator,
    PureState,
    _as_names,
    _apply_amplitudes,
    _grouped_matrix,
    _ordered_subset,
    embed,
    purify,
    psd_transform,
    reorder,
    trace_distance,
    zero_state,
)

VANISH_TOL = 1e-12
DEFAULT_MAX_LEAVES = 4096


@dataclass(frozen=True)
class Check:
    """One numeric check: ``observed`` compared against ``bound``."""

    name: str
    bound: float
    observed: float
    passed: bool
    sense: str = ">="

    @property
    def slack(self) -> float:
        """How far inside the bound the observation lies (negative when failing)."""
        gap = self.observed - self.bound if self.sense == ">=" else self.bound - self.observed
        return gap if gap == gap else -INF

    def to_dict(self) -> dict:
        def f(x):
            if isinstance(x, float) and math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return x
        return {"name": self.name, "bound": f(self.bound), "observed": f(self.observed),
                "pass": bool(self.passed), "sense": self.sense}


def at_least(name, observed, bound, tol) -> Check:
    return Check(name, float(bound), float(observed), bool(observed >= bound - tol), ">=")


def at_most(name, observed, bound, tol) -> Check:
    return Check(name, float(bound), float(observed), bool(observed <= bound + tol), "<=")


@dataclass(frozen=True, eq=False)
class SplitPiece:
    """One branch of a split: its state and the two projectors producing it."""

    alpha: int
    state: PureState
    q_ad: HermitianOperator
    p_bc: HermitianOperator


@dataclass(frozen=True)
class SplitQuantities:
    """Entropies fixing the grid of a split."""

    h_bc: float      # H(B|C) relative to sigma
    h_abc: float     # H(AB|C) relative to sigma
    h_a_bc: float    # H(A|BC) of the state itself

    @property
    def gap(self) -> float:
        return self.h_abc - self.h_a_bc - self.h_bc

    def uniform_grid(self, m: int) -> tuple[float, ...]:
        d = self.gap
        return tuple(self.h_bc + a * d / m for a in range(m + 1))


def _partition(psi: PureState, a, b, sigma_c: HermitianOperator):
    a = _ordered_subset(psi.labels, a)
    b = _ordered_subset(psi.labels, b)
    c = _ordered_subset(psi.labels, sigma_c.labels)
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise ValueError("A, B and C must be disjoint")
    d = tuple(x for x in psi.labels if x not in set(a) | set(b) | set(c))
    return a, b, c, d


def split_quantities(psi: PureState, a, b, sigma_c: HermitianOperator) -> SplitQuantities:
    a, b, c, _ = _partition(psi, a, b, sigma_c)
    return SplitQuantities(
        h_bc=h_rel(psi, b, sigma_c),
        h_abc=h_rel(psi, a + b, sigma_c),
        h_a_bc=h_self(psi, a, b + c),
    )


def split_once(psi: PureState, a, b, sigma_c: HermitianOperator, m: int, grid=None,
               rank_tol: float = RANK_TOL) -> list[SplitPiece]:
    """Split a pure state into `m` orthogonal pieces along the spectrum of rho_BC / sigma_C.

    Parameters
    ----------
    psi : PureState
        State on A B C D, where C is the system of `sigma_c` and D is every
        subsystem not named in `a`, `b` or `sigma_c`.
    a, b : iterable of str
        Subsystem names of A and B.
    sigma_c : HermitianOperator
        Reference operator on C with support containing that of rho_C.
    m : int
        Number of pieces.
    grid : sequence of float, optional
        Nondecreasing ``h_0 .. h_m`` with ``h_0 = H(B|C)`` relative to sigma
        and ``h_m = H(AB|C)`` relative to sigma minus ``H(A|BC)``. Defaults
        to the uniform grid between these endpoints.

    Returns
    -------
    list of SplitPiece
        Piece ``alpha`` collects the Schmidt components of
        ``sigma^{-1/2} psi`` (cut between BC and AD) whose squared
        coefficient lies in ``]2**-h_alpha, 2**-h_{alpha-1}]``, with the
        outermost interval ends open to infinity. An eigenvalue equal to
        ``2**-h_alpha`` therefore goes to piece ``alpha + 1``.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    a, b, c, d = _partition(psi, a, b, sigma_c)
    bc = _ordered_subset(psi.labels, b + c)
    ad = _ordered_subset(psi.labels, a + d)
    dims_bc = tuple(psi.dims[psi.labels.index(x)] for x in bc)
    dims_ad = tuple(psi.dims[psi.labels.index(x)] for x in ad)
    sigma_c = reorder(sigma_c, c)

    if psi.norm2() <= VANISH_TOL ** 2:
        zero_bc = HermitianOperator(np.zeros((int(np.prod(dims_bc)),) * 2), dims_bc, bc)
        zero_ad = HermitianOperator(np.zeros((int(np.prod(dims_ad)),) * 2), dims_ad, ad)
        z = zero_state(psi.dims, psi.labels)
        return [SplitPiece(al, z, zero_ad, zero_bc) for al in range(1, m + 1)]

    q = split_quantities(psi, a, b, sigma_c)
    hi = q.h_abc - q.h_a_bc
    if grid is None:
        grid = q.uniform_grid(m)
    else:
        grid = tuple(float(x) for x in grid)
        if len(grid) != m + 1:
            raise ValueError(f"grid needs {m + 1} values, got {len(grid)}")
        if any(y < x for x, y in zip(grid, grid[1:])):
            raise ValueError("grid must be nondecreasing")
        if abs(grid[0] - q.h_bc) > 1e-9 or abs(grid[-1] - hi) > 1e-9:
            raise ValueError(
                f"grid endpoints must be {q.h_bc} and {hi}, got {grid[0]} and {grid[-1]}")
    mu = [INF] + [2.0 ** (-h) for h in grid[1:m]] + [-INF]

    phi = _apply_amplitudes(psi, psd_transform(sigma_c, "inv_sqrt", rank_tol), c)
    mat = _grouped_matrix(psi, bc, phi)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    lam = s ** 2
    keep = lam > rank_tol * lam[0]
    groups: list[list[int]] = [[] for _ in range(m)]
    for k in np.flatnonzero(keep):
        for al in range(1, m + 1):
            if mu[al] < lam[k] <= mu[al - 1]:
                groups[al - 1].append(int(k))
                break

    out = []
    for al, idx in enumerate(groups, start=1):
        ub = u[:, idx]
        vb = vh[idx, :]
        p_bc = HermitianOperator(ub @ ub.conj().T, dims_bc, bc)
        q_ad = HermitianOperator(vb.T @ vb.conj(), dims_ad, ad)
        out.append(SplitPiece(al, psi.apply(q_ad, ad), q_ad, p_bc))
    return out


def alternative_piece(psi: PureState, piece: SplitPiece, sigma_c: HermitianOperator) -> PureState:
    """``sigma^{1/2} P_BC sigma^{-1/2} psi``, the second expression for a piece."""
    c = _ordered_subset(psi.labels, sigma_c.labels)
    sigma_c = reorder(sigma_c, c)
    v = _apply_amplitudes(psi, psd_transform(sigma_c, "inv_sqrt"), c)
    v = _apply_amplitudes(psi, piece.p_bc, piece.p_bc.labels, v)
    v = _apply_amplitudes(psi, psd_transform(sigma_c, "sqrt"), c, v)
    return PureState(v, psi.dims, psi.labels)


# --------------------------------------------------------------------------
# split trees
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SplitNode:
    """Vertex of a split tree.

    `q_projector` acts on X_1..X_j and R; `edge_entropy` is
    ``H(X_j | X_{>j} E)`` of the node state and `h_e` is ``H(E)`` of the node
    state relative to the tree's sigma.
    """

    path: tuple
    state: PureState
    q_projector: HermitianOperator | None
    edge_entropy: float
    h_e: float
    norm2: float

    @property
    def vanished(self) -> bool:
        return self.norm2 <= VANISH_TOL ** 2


@dataclass(eq=False)
class SplitTree:
    root: PureState
    sigma: HermitianOperator
    m: int
    n: int
    alphabet_bits: float
    x_labels: tuple
    e_labels: tuple
    ref_label: str
    levels: list = field(default_factory=list)

    def node(self, path) -> SplitNode:
        return self.levels[len(path)][tuple(path)]

    def paths(self, level: int | None = None):
        level = self.n if level is None else level
        return list(self.levels[level].keys())

    @property
    def leaves(self) -> list[SplitNode]:
        return list(self.levels[self.n].values())

    @property
    def omega(self) -> dict:
        return {p: nd.norm2 for p, nd in self.levels[self.n].items()}

    @property
    def h_root(self) -> float:
        """H(X^n | E) of the root relative to sigma."""
        return h_rel(self.root, self.x_labels, self.sigma)

    @property
    def h_e_root(self) -> float:
        return h_rel(self.root, (), self.sigma)

    def path_weight(self, path, subset=None) -> float:
        """Leaf entropy on E plus the edge entropies at the levels in `subset` (all by default)."""
        subset = range(1, self.n + 1) if subset is None else subset
        leaf = self.node(path)
        total = leaf.h_e
        for j in subset:
            total = total + self.node(tuple(path[:j])).edge_entropy
        return total

    def beta(self, path) -> np.ndarray:
        """Normalized edge entropies along a path, clipped into [0, 1].

        Infinite entries (vanished nodes) map to 1.
        """
        vals = []
        for j in range(1, self.n + 1):
            e = self.node(tuple(path[:j])).edge_entropy
            vals.append(1.0 if e == INF else min(1.0, max(0.0, e / self.alphabet_bits)))
        return np.array(vals)

    def to_dict(self) -> dict:
        def f(x):
            return "inf" if x == INF else float(x)
        nodes = []
        for level, d in enumerate(self.levels):
            for p, nd in d.items():
                nodes.append({"path": list(p), "level": level, "norm2": nd.norm2,
                              "edge_entropy": f(nd.edge_entropy), "h_e": f(nd.h_e)})
        return {
            "m": self.m, "n": self.n, "alphabet_bits": self.alphabet_bits,
            "h_root": f(self.h_root), "h_e_root": f(self.h_e_root),
            "omega": [{"path": list(p), "weight": w} for p, w in self.omega.items()],
            "nodes": nodes,
        }


def build_split_tree(rho_xne: CQState, sigma_e: HermitianOperator, m: int,
                     max_leaves: int = DEFAULT_MAX_LEAVES, ref_label: str = "R") -> SplitTree:
    """Recursively split a purification of a cq state, one classical register per level.

    Level j splits every node with A = X_j, B = X_{>j}, C = E and
    D = X_{<j} R.

    Raises
    ------
    ValueError
        If ``m**n`` exceeds `max_leaves` or the registers differ in size.
    """
    n = len(rho_xne.x_labels)
    if m < 1:
        raise ValueError("m must be at least 1")
    if m ** n > max_leaves:
        raise ValueError(f"{m}**{n} leaves exceed the budget of {max_leaves}; use smaller m or n")
    if len(set(rho_xne.x_dims)) != 1:
        raise ValueError("all classical registers must have the same alphabet")
    xl, el = rho_xne.x_labels, rho_xne.e_labels
    root = purify(rho_xne.operator(), ref_label)
    tree = SplitTree(root, sigma_e, m, n, math.log2(rho_xne.x_dims[0]), xl, el, ref_label)
    tree.levels.append({(): SplitNode((), root, None, INF, h_rel(root, (), sigma_e), root.norm2())})

    for j in range(1, n + 1):
        level = {}
        a, b = (xl[j - 1],), xl[j:]
        q_labels = xl[:j] + (ref_label,)
        q_dims = tuple(root.dims[root.labels.index(x)] for x in q_labels)
        for path, parent in tree.levels[j - 1].items():
            pieces = split_once(parent.state, a, b, sigma_e, m)
            if parent.q_projector is None:
                prev = np.eye(int(np.prod(q_dims)))
            else:
                prev = embed(parent.q_projector, q_dims, q_labels).data
            for pc in pieces:
                st = pc.state
                qd = reorder(pc.q_ad, q_labels).data @ prev
                qop = HermitianOperator(0.5 * (qd + qd.conj().T), q_dims, q_labels)
                nrm = st.norm2()
                if nrm <= VANISH_TOL ** 2:
                    edge, he = INF, INF
                else:
                    edge = h_self(st, a, b + el)
                    he = h_rel(st, (), sigma_e)
                level[path + (pc.alpha,)] = SplitNode(path + (pc.alpha,), st, qop, edge, he, nrm)
        tree.levels.append(level)
    return tree


def splitting_theorem_check(tree: SplitTree, tol: float = 1e-8) -> dict:
    """Check the per-path splitting bound for every leaf.

    For each path the leaf entropy on E plus all edge entropies must reach
    ``H(X^n|E) - n log2|X| / m``.
    """
    bound = tree.h_root - tree.n * tree.alphabet_bits / tree.m
    rows = []
    worst = INF
    for p in tree.paths():
        lhs = tree.path_weight(p)
        slack = lhs - bound
        worst = min(worst, slack)
        rows.append({"path": list(p), "lhs": lhs, "slack": slack})
    return {"bound": bound, "worst_slack": worst, "pass": bool(worst >= -tol), "paths": rows}


@dataclass(frozen=True)
class GoodSet:
    lam: float
    subset_s: tuple
    members: frozenset


def lambda_good_set(tree: SplitTree, subset_s, lam: float, tol: float = 0.0) -> GoodSet:
    """Paths whose restricted weight reaches ``lam * |S| * log2|X|``.

    `subset_s` lists 1-based levels. `tol` loosens the comparison for
    floating-point ties.
    """
    s = tuple(sorted(set(int(x) for x in subset_s)))
    if any(x < 1 or x > tree.n for x in s):
        raise ValueError(f"levels must lie in 1..{tree.n}")
    need = lam * len(s) * tree.alphabet_bits
    members = frozenset(p for p in tree.paths() if tree.path_weight(p, s) >= need - tol)
    return GoodSet(float(lam), s, members)


@dataclass(frozen=True, eq=False)
class Recombination:
    psi_hat: PureState
    rho_bar: HermitianOperator
    hats: dict
    recursion_error: float
    distance: float
    good_weight: float


def recombine(tree: SplitTree, good: GoodSet) -> Recombination:
    """Sum the leaves in `good` and every partial sum along the tree."""
    z = zero_state(tree.root.dims, tree.root.labels)
    hats = [dict() for _ in range(tree.n + 1)]
    for p, nd in tree.levels[tree.n].items():
        hats[tree.n][p] = nd.state if p in good.members else z
    for j in range(tree.n - 1, -1, -1):
        for p in tree.levels[j]:
            acc = z
            for al in range(1, tree.m + 1):
                acc = acc + hats[j + 1][p + (al,)]
            hats[j][p] = acc
    err = 0.0
    for j in range(1, tree.n + 1):
        for p, nd in tree.levels[j].items():
            q = nd.q_projector
            lhs = hats[j - 1][p[:-1]].apply(q, q.labels)
            err = max(err, float(np.linalg.norm(lhs.amplitudes - hats[j][p].amplitudes)))
    psi_hat = hats[0][()]
    rho_bar = psi_hat.density()
    dist = trace_distance(rho_bar, tree.root.density())
    weight = float(sum(tree.omega[p] for p in good.members))
    flat = {p: v for level in hats for p, v in level.items()}
    return Recombination(psi_hat, rho_bar, flat, err, dist, weight)


@dataclass(frozen=True, eq=False)
class RecombiningReport:
    certificate: EntropyCertificate
    recombination: Recombination
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _h_sub_e(state: PureState, xs, sigma) -> float:
    if state.norm2() <= VANISH_TOL ** 2:
        return INF
    return h_rel(state, xs, sigma)


def recombining_theorem_check(tree: SplitTree, good: GoodSet, tol: float = 1e-8) -> RecombiningReport:
    """Verify the recombining bounds for the good set and the supporting lemmas.

    Returns a certificate for H(X_S|E) of the recombined state relative to
    the tree's sigma, with smoothing equal to the trace distance between
    the recombined and original marginals on X_S E.
    """
    rec = recombine(tree, good)
    s = good.subset_s
    c = tree.alphabet_bits
    n, m = tree.n, tree.m
    xs = tuple(tree.x_labels[j - 1] for j in s)
    sig = tree.sigma
    checks = []

    h_s = _h_sub_e(rec.psi_hat, xs, sig)
    norm = len(s) * c
    observed = h_s / norm if h_s != INF else INF
    checks.append(at_least("recombined entropy rate", observed, good.lam - 2 * n * math.log2(m) / norm, tol))
    checks.append(at_least("H(E) of recombined state", _h_sub_e(rec.psi_hat, (), sig), tree.h_e_root, tol))
    checks.append(at_most("distance to original", rec.distance,
                          math.sqrt(max(0.0, 1 - rec.good_weight)), tol))
    checks.append(at_most("recursion error", rec.recursion_error, 0.0, tol))

    # orthogonality and resolution of recombined nodes
    worst_overlap, worst_res = 0.0, 0.0
    for j in range(1, n + 1):
        for p in tree.levels[j - 1]:
            kids = [rec.hats[p + (al,)] for al in range(1, m + 1)]
            tot = kids[0]
            for k in kids[1:]:
                tot = tot + k
            worst_res = max(worst_res, float(np.linalg.norm(tot.amplitudes - rec.hats[p].amplitudes)))
        level = [rec.hats[p] for p in tree.levels[j]]
        for u, v in itertools.combinations(level, 2):
            worst_overlap = max(worst_overlap, abs(u.inner(v)))
    checks.append(at_most("recombined sibling overlap", worst_overlap, 0.0, tol))
    checks.append(at_most("recombined resolution error", worst_res, 0.0, tol))

    # node entropies of recombined states
    worst_e, worst_edge, worst_leaf = INF, INF, INF
    h_e0 = tree.h_e_root
    for j in range(0, n + 1):
        for p, nd in tree.levels[j].items():
            hat = rec.hats[p]
            he = _h_sub_e(hat, (), sig)
            worst_e = min(worst_e, he - h_e0)
            if j >= 1:
                rest = tuple(tree.x_labels[j:]) + tree.e_labels
                ee = INF if hat.norm2() <= VANISH_TOL ** 2 else h_self(hat, (tree.x_labels[j - 1],), rest)
                if nd.edge_entropy != INF:
                    worst_edge = min(worst_edge, ee - nd.edge_entropy)
            if j == n and nd.h_e != INF:
                worst_leaf = min(worst_leaf, he - nd.h_e)
    checks.append(at_least("H(E) monotone on recombined nodes", worst_e, 0.0, tol))
    checks.append(at_least("edge entropy monotone on recombined nodes", worst_edge, 0.0, tol))
    checks.append(at_least("leaf H(E) monotone on recombined leaves", worst_leaf, 0.0, tol))

    # step lemma for X_S and for the empty set
    two_log_m = 2 * math.log2(m)
    for label, xa in (("S", xs), ("empty", ())):
        worst = INF
        for j in range(1, n + 1):
            for p in tree.levels[j - 1]:
                kids = min(_h_sub_e(rec.hats[p + (al,)], xa, sig) for al in range(1, m + 1))
                parent = _h_sub_e(rec.hats[p], xa, sig)
                if kids != INF:
                    worst = min(worst, parent - (kids - two_log_m))
        checks.append(at_least(f"step recombination ({label})", worst, 0.0, tol))

    # tree value chain
    wvals = []
    for j in range(0, n + 1):
        later = tuple(tree.x_labels[i - 1] for i in s if i > j)
        best = INF
        for p in tree.levels[j]:
            val = _h_sub_e(rec.hats[p], later, sig)
            for i in s:
                if i <= j:
                    cond = tuple(tree.x_labels[k - 1] for k in s if k > i) + tree.e_labels
                    hat_i = rec.hats[p[:i]]
                    val = val + (INF if hat_i.norm2() <= VANISH_TOL ** 2
                                 else h_self(hat_i, (tree.x_labels[i - 1],), cond))
            best = min(best, val)
        wvals.append(best)
    vhat = INF
    for p in tree.levels[n]:
        hat = rec.hats[p]
        val = _h_sub_e(hat, (), sig)
        for i in s:
            hat_i = rec.hats[p[:i]]
            rest = tuple(tree.x_labels[i:]) + tree.e_labels
            val = val + (INF if hat_i.norm2() <= VANISH_TOL ** 2 else h_self(hat_i, (tree.x_labels[i - 1],), rest))
        vhat = min(vhat, val)
    chain = INF
    for j in range(1, n + 1):
        if wvals[j] != INF:
            chain = min(chain, wvals[j - 1] - (wvals[j] - two_log_m))
    checks.append(at_least("tree value chain", chain, 0.0, tol))
    checks.append(at_least("subadditive tree weighting", wvals[n], vhat, tol))
    checks.append(at_least("all recombined paths good", vhat, good.lam * norm, tol))

    marg_bar = rec.psi_hat.reduced(xs + tree.e_labels)
    marg = tree.root.reduced(xs + tree.e_labels)
    cert = EntropyCertificate(h_s, sig, trace_distance(marg_bar, marg), marg_bar)
    return RecombiningReport(cert, rec, tuple(checks))


def basic_recombination_checks(psi: PureState, a, b, sigma_c: HermitianOperator,
                               pieces: list[SplitPiece], tol: float = 1e-8) -> list[Check]:
    """Check ``min_alpha H(F|C) - 2 log2 m <= H(F|C)`` for every F inside A B D."""
    a, b, c, d = _partition(psi, a, b, sigma_c)
    pool = a + b + d
    m = len(pieces)
    out = []
    worst = INF
    for k in range(0, len(pool) + 1):
        for f in itertools.combinations(pool, k):
            whole = h_rel(psi, f, sigma_c)
            parts = min(_h_sub_e(pc.state, f, sigma_c) for pc in pieces)
            if parts != INF:
                worst = min(worst, whole - (parts - 2 * math.log2(m)))
    out.append(at_least("basic recombination", worst, 0.0, tol))
    return out


def classical_defect(op: HermitianOperator, labels) -> float:
    """Largest entry of `op` off the diagonal in the computational basis of `labels`."""
    labels = _ordered_subset(op.labels, labels)
    t = op.data.reshape(op.dims + op.dims)
    k = len(op.dims)
    mask = np.zeros(t.shape, dtype=bool)
    for x in labels:
        i = op.labels.index(x)
        d = op.dims[i]
        shape = [1] * (2 * k)
        shape[i], shape[k + i] = d, d
        mask |= (~np.eye(d, dtype=bool)).reshape(shape)
    return float(np.abs(t[mask]).max(initial=0.0))


def _max_pair_norm(ops) -> float:
    worst = 0.0
    for x, y in itertools.combinations(ops, 2):
        worst = max(worst, float(np.linalg.norm(x.data @ y.data, 2)))
    return worst


def split_checks(psi: PureState, a, b, sigma_c: HermitianOperator, pieces: list[SplitPiece],
                 grid=None, tol: float = 1e-8, classical=()) -> list[Check]:
    """Post-conditions of `split_once` on its output.

    Covers resolution of the state, orthogonality of pieces and projectors,
    the two entropy bounds per piece, locality of the projectors and the
    alternative expression. For a single piece the chain-rule gap is
    checked too. Subsystems in `classical` must stay classical in every
    piece's marginal on A B C.
    """
    a, b, c, d = _partition(psi, a, b, sigma_c)
    m = len(pieces)
    q = split_quantities(psi, a, b, sigma_c)
    grid = q.uniform_grid(m) if grid is None else tuple(grid)
    out = []

    total = pieces[0].state
    for pc in pieces[1:]:
        total = total + pc.state
    out.append(at_most("resolution of the state", float(np.linalg.norm(total.amplitudes - psi.amplitudes)), 0.0, tol))
    overlap = max((abs(x.state.inner(y.state)) for x, y in itertools.combinations(pieces, 2)), default=0.0)
    out.append(at_most("sibling overlap", overlap, 0.0, tol))
    out.append(at_most("projector orthogonality", max(_max_pair_norm([pc.q_ad for pc in pieces]),
                                                      _max_pair_norm([pc.p_bc for pc in pieces])), 0.0, tol))

    worst_abc, worst_bc, worst_alt = INF, INF, 0.0
    for pc in pieces:
        alt = alternative_piece(psi, pc, sigma_c)
        worst_alt = max(worst_alt, float(np.linalg.norm(alt.amplitudes - pc.state.amplitudes)))
        if pc.state.norm2() <= VANISH_TOL ** 2:
            continue
        worst_abc = min(worst_abc, h_self(pc.state, a, b + c) - (q.h_abc - grid[pc.alpha]))
        worst_bc = min(worst_bc, h_rel(pc.state, b, sigma_c) - grid[pc.alpha - 1])
    out.append(at_least("entropy of A given BC per piece", worst_abc, 0.0, tol))
    out.append(at_least("entropy of B given C per piece", worst_bc, 0.0, tol))
    out.append(at_most("alternative expression", worst_alt, 0.0, tol))

    ad, bc = set(a + d), set(b + c)
    misplaced = sum(set(pc.q_ad.labels) != ad or set(pc.p_bc.labels) != bc for pc in pieces)
    out.append(at_most("projector locality", float(misplaced), 0.0, 0.0))

    if m == 1:
        out.append(at_least("chain rule gap", q.gap, 0.0, tol))
        out.append(at_most("single piece equals the state",
                           float(np.linalg.norm(pieces[0].state.amplitudes - psi.amplitudes)), 0.0, tol))
    if classical:
        keep = _ordered_subset(psi.labels, a + b + c)
        worst = max(classical_defect(pc.state.reduced(keep), classical) for pc in pieces)
        out.append(at_most("classicality preserved", worst, 0.0, tol))
    return out


def tree_checks(tree: SplitTree, tol: float = 1e-8) -> list[Check]:
    """Structural invariants of a split tree.

    Leaves resolve the root, the leaf weights sum to the trace, nodes of a
    level are orthogonal, every node is its projector applied to the root,
    projectors refine along paths and vanish across branches, H(E) never
    drops below the root value and leaves stay classical on X.
    """
    out = []
    root = tree.root
    total = zero_state(root.dims, root.labels)
    for nd in tree.leaves:
        total = total + nd.state
    out.append(at_most("leaves resolve the root", float(np.linalg.norm(total.amplitudes - root.amplitudes)), 0.0, tol))
    out.append(at_most("leaf weights sum to the trace",
                       abs(sum(tree.omega.values()) - root.norm2()), 0.0, tol))

    overlap, proj_err, refine_err = 0.0, 0.0, 0.0
    worst_e, defect = INF, 0.0
    h_e0 = tree.h_e_root
    keep = tree.x_labels + tree.e_labels
    for j in range(1, tree.n + 1):
        level = tree.levels[j]
        for x, y in itertools.combinations(level.values(), 2):
            overlap = max(overlap, abs(x.state.inner(y.state)))
        for p, nd in level.items():
            q = nd.q_projector
            proj_err = max(proj_err, float(np.linalg.norm(root.apply(q, q.labels).amplitudes - nd.state.amplitudes)))
            if nd.h_e != INF:
                worst_e = min(worst_e, nd.h_e - h_e0)
            for k in range(1, j + 1):
                for p2, nd2 in tree.levels[k].items():
                    other = embed(nd2.q_projector, q.dims, q.labels).data
                    want = q.data if p[:k] == p2 else 0.0
                    refine_err = max(refine_err, float(np.abs(q.data @ other - want).max()))
        if j == tree.n:
            for nd in level.values():
                defect = max(defect, classical_defect(nd.state.reduced(keep), tree.x_labels))
    out.append(at_most("level orthogonality", overlap, 0.0, tol))
    out.append(at_most("node equals projector on root", proj_err, 0.0, tol))
    out.append(at_most("projector refinement", refine_err, 0.0, tol))
    out.append(at_least("H(E) monotone on nodes", worst_e, 0.0, tol))
    out.append(at_most("leaves classical on X", defect, 0.0, tol))
    return out
