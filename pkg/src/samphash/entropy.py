"""Conditional operators, min-entropy quantities and their certificates.

Entropies are in bits. A zero operator has entropy ``math.inf``, which
compares above every finite value and absorbs addition.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import nnls

from .operators import (
    RANK_TOL,
    HermitianOperator,
    PureState,
    _as_names,
    _ordered_subset,
    direct_sum_blocks,
    eig_decompose,
    embed,
    hermitian_part,
    identity,
    min_eigenvalue,
    partial_trace,
    psd_transform,
    reorder,
    trace_distance,
)

INF = math.inf
SUPPORT_TOL = 1e-9


class SupportError(ValueError):
    """Raised when the state has weight outside the support of sigma."""


class SolverError(RuntimeError):
    """The SDP did not reach its target gap; carries the best sound certificate."""

    def __init__(self, message: str, certificate: "EntropyCertificate"):
        super().__init__(message)
        self.certificate = certificate


@dataclass(frozen=True, eq=False)
class CQState:
    """Classical-quantum state ``sum_x P(x) |x><x| (x) rho_E^x``.

    Parameters
    ----------
    probs : array_like
        Probabilities over the product alphabet, indexed in C order over
        `x_dims` (the first classical register varies slowest).
    cond_ops : sequence of HermitianOperator
        One conditional operator on E per symbol.
    x_dims, x_labels : tuple
        Shape of the classical part. A single register by default.
    """

    probs: np.ndarray
    cond_ops: tuple
    x_dims: tuple = None
    x_labels: tuple = ("X",)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        ops = tuple(self.cond_ops)
        x_dims = tuple(self.x_dims) if self.x_dims is not None else (len(p),)
        x_labels = _as_names(self.x_labels)
        if len(x_dims) != len(x_labels):
            raise ValueError("x_dims and x_labels differ in length")
        if int(np.prod(x_dims)) != len(p) or len(ops) != len(p):
            raise ValueError("alphabet size, probabilities and conditional operators disagree")
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        e = ops[0]
        for op in ops:
            if op.dims != e.dims or op.labels != e.labels:
                raise ValueError("conditional operators must share one E system")
        total = float(sum(px * op.trace() for px, op in zip(p, ops)))
        if total > 1 + 1e-12:
            raise ValueError(f"total trace {total} exceeds 1")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "cond_ops", ops)
        object.__setattr__(self, "x_dims", x_dims)
        object.__setattr__(self, "x_labels", x_labels)

    @property
    def alphabet(self) -> list:
        return list(itertools.product(*[range(d) for d in self.x_dims]))

    @property
    def e_labels(self) -> tuple:
        return self.cond_ops[0].labels

    @property
    def e_dims(self) -> tuple:
        return self.cond_ops[0].dims

    def operator(self) -> HermitianOperator:
        """Materialize the block-diagonal operator on X_1..X_k E."""
        blocks = [px * op.data for px, op in zip(self.probs, self.cond_ops)]
        de = self.cond_ops[0].dim
        out = np.zeros((len(blocks) * de,) * 2, dtype=complex)
        for k, b in enumerate(blocks):
            out[k * de:(k + 1) * de, k * de:(k + 1) * de] = b
        return HermitianOperator(out, self.x_dims + self.e_dims, self.x_labels + self.e_labels)

    def marginal_e(self) -> HermitianOperator:
        data = sum(px * op.data for px, op in zip(self.probs, self.cond_ops))
        return HermitianOperator(data, self.e_dims, self.e_labels)

    def map(self, f: Callable[[int], int], size: int, label: str = "Y") -> "CQState":
        """State of ``f(X)`` and E, with symbols of X numbered in C order."""
        de = self.cond_ops[0].dim
        acc = [np.zeros((de, de), dtype=complex) for _ in range(size)]
        for x, (px, op) in enumerate(zip(self.probs, self.cond_ops)):
            acc[f(x)] = acc[f(x)] + px * op.data
        probs, ops = [], []
        for a in acc:
            t = float(np.trace(a).real)
            probs.append(t)
            m = a / t if t > 0 else np.eye(de) / de
            ops.append(HermitianOperator(m, self.e_dims, self.e_labels))
        return CQState(np.array(probs), ops, x_dims=(size,), x_labels=(label,))

    def to_dict(self) -> dict:
        return {
            "alphabet": [list(a) for a in self.alphabet],
            "x_dims": list(self.x_dims),
            "x_labels": list(self.x_labels),
            "probs": self.probs.tolist(),
            "cond_ops": [op.to_dict() for op in self.cond_ops],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CQState":
        ops = [HermitianOperator.from_dict(o) for o in obj["cond_ops"]]
        x_dims = obj.get("x_dims") or (len(obj["probs"]),)
        x_labels = obj.get("x_labels") or ("X",)
        return cls(np.asarray(obj["probs"], dtype=float), ops, x_dims=tuple(x_dims), x_labels=tuple(x_labels))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class EntropyCertificate:
    """Witness that ``state <= 2**(-value) * id (x) sigma``.

    `witness_state` is the operator the inequality holds for; it equals
    the input state when `smoothing` is zero. `dual_bound`, when present,
    is an upper bound on the optimal value.
    """

    value: float
    sigma: HermitianOperator
    smoothing: float = 0.0
    witness_state: HermitianOperator | None = None
    dual_bound: float | None = None

    def slack(self, rho: HermitianOperator | None = None) -> float:
        """Minimum eigenvalue of ``2**(-value) id (x) sigma - state``."""
        state = self.witness_state if self.witness_state is not None else rho
        if state is None:
            raise ValueError("no state to check the certificate against")
        scale = 0.0 if self.value == INF else 2.0 ** (-self.value)
        bound = embed(self.sigma, state.dims, state.labels).data * scale
        return float(np.linalg.eigvalsh(bound - state.data)[0])

    def verify(self, rho: HermitianOperator | None = None, tol: float = 1e-9) -> bool:
        ok = self.slack(rho) >= -tol
        if rho is not None and self.witness_state is not None and self.smoothing > 0:
            ok = ok and trace_distance(self.witness_state, rho) <= self.smoothing + tol
        return ok

    def to_dict(self) -> dict:
        return {
            "value": _json_float(self.value),
            "sigma": self.sigma.to_dict(),
            "smoothing": self.smoothing,
            "witness_state": None if self.witness_state is None else self.witness_state.to_dict(),
            "dual_bound": None if self.dual_bound is None else _json_float(self.dual_bound),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EntropyCertificate":
        w = obj.get("witness_state")
        db = obj.get("dual_bound")
        return cls(
            value=_parse_float(obj["value"]),
            sigma=HermitianOperator.from_dict(obj["sigma"]),
            smoothing=float(obj.get("smoothing", 0.0)),
            witness_state=None if w is None else HermitianOperator.from_dict(w),
            dual_bound=None if db is None else _parse_float(db),
        )


def _json_float(x: float):
    return "inf" if x == INF else float(x)


def _parse_float(x) -> float:
    return INF if x == "inf" else float(x)


# --------------------------------------------------------------------------
# conditional operators
# --------------------------------------------------------------------------

def _check_support(rho_b: HermitianOperator, sigma_b: HermitianOperator, rank_tol: float) -> None:
    w, v = np.linalg.eigh(sigma_b.data)
    top = max(float(w[-1]), 0.0)
    outside = v[:, w <= rank_tol * top] if top > 0 else v
    if outside.shape[1] == 0:
        return
    leak = outside.conj().T @ rho_b.data @ outside
    lw, lv = np.linalg.eigh(leak)
    ref = max(float(np.max(np.linalg.eigvalsh(rho_b.data))), 1e-300)
    if lw[-1] > SUPPORT_TOL * ref:
        vec = outside @ lv[:, -1]
        raise SupportError(
            "state has weight %.3e outside the support of sigma along %s"
            % (lw[-1], np.array2string(vec, precision=4))
        )


def conditional_operator(rho_ab: HermitianOperator, sigma_b: HermitianOperator,
                         rank_tol: float = RANK_TOL) -> HermitianOperator:
    """``sigma^{-1/2} rho sigma^{-1/2}`` with sigma acting on its own subsystems.

    The subsystems of `sigma_b` must be a subset of those of `rho_ab`; the
    inverse square root is the generalized one.

    Raises
    ------
    SupportError
        If the marginal of `rho_ab` on B leaves the support of `sigma_b`.
    """
    keep = _ordered_subset(rho_ab.labels, sigma_b.labels)
    sigma_b = reorder(sigma_b, keep)
    rho_b = partial_trace(rho_ab, keep)
    _check_support(rho_b, sigma_b, rank_tol)
    s = embed(psd_transform(sigma_b, "inv_sqrt", rank_tol), rho_ab.dims, rho_ab.labels).data
    return HermitianOperator(hermitian_part(s @ rho_ab.data @ s), rho_ab.dims, rho_ab.labels)


def _is_zero(rho: HermitianOperator) -> bool:
    return not np.any(rho.data)


def h_cond(rho_ab: HermitianOperator, sigma_b: HermitianOperator, rank_tol: float = RANK_TOL) -> float:
    """``-log2`` of the largest eigenvalue of the conditional operator.

    Examples
    --------
    >>> import numpy as np
    >>> from samphash.operators import HermitianOperator
    >>> phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    >>> rho = HermitianOperator(np.outer(phi, phi), (2, 2), ("A", "B"))
    >>> sigma = HermitianOperator(np.eye(2) / 2, (2,), ("B",))
    >>> round(h_cond(rho, sigma), 12)
    -1.0
    """
    if _is_zero(rho_ab):
        return INF
    lam = float(np.linalg.eigvalsh(conditional_operator(rho_ab, sigma_b, rank_tol).data)[-1])
    if lam <= 0:
        return INF
    return -math.log2(lam)


def _marginal(state, keep) -> HermitianOperator:
    if isinstance(state, PureState):
        return state.reduced(keep)
    return partial_trace(state, keep)


def h_rel(state, a, sigma: HermitianOperator) -> float:
    """H(A|B) relative to `sigma`, with B the subsystems of `sigma`.

    `state` may be a PureState or an operator on a larger system; it is
    first reduced to A and B. An empty A gives H(B) relative to sigma.
    """
    keep = _as_names(a) + sigma.labels
    return h_cond(_marginal(state, keep), sigma)


def h_self(state, a, b=()) -> float:
    """H(A|B) conditioned on the state's own marginal on B."""
    a, b = _as_names(a), _as_names(b)
    rho = _marginal(state, a + b)
    if _is_zero(rho):
        return INF
    if not b:
        lam = float(np.linalg.eigvalsh(rho.data)[-1]) / rho.trace()
        return -math.log2(lam) if lam > 0 else INF
    return h_cond(rho, partial_trace(rho, b))


# --------------------------------------------------------------------------
# min-entropy SDP
# --------------------------------------------------------------------------

def _hermitian_basis(d: int) -> np.ndarray:
    out = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1
        out.append(e)
    r2 = 1 / math.sqrt(2)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = e[j, i] = r2
            out.append(e)
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1j * r2
            e[j, i] = -1j * r2
            out.append(e)
    return np.array(out)


def _logdet(f: np.ndarray):
    try:
        lo = np.linalg.cholesky(f)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(lo).real
    if np.any(d <= 0):
        return None
    return 2.0 * float(np.sum(np.log(d)))


def _chol_inv_logdet(f: np.ndarray):
    try:
        lo = np.linalg.cholesky(f)
    except np.linalg.LinAlgError:
        return None, None
    d = np.diag(lo).real
    if np.any(d <= 0):
        return None, None
    li = np.linalg.inv(lo)
    return li.conj().T @ li, 2.0 * float(np.sum(np.log(d)))


class _Barrier:
    """Log-barrier path following for ``min tr(tau)`` under linear matrix inequalities.

    Constraints are ``id_A (x) tau - rho >= 0`` and, optionally,
    ``tau - tr(tau) rho_B >= 0``. Hermitian `tau` is parametrized in an
    orthonormal Hermitian basis.
    """

    def __init__(self, rho: np.ndarray, da: int, db: int, floor: np.ndarray | None = None):
        self.rho, self.da, self.db = rho, da, db
        self.basis = _hermitian_basis(db)
        self.c = np.trace(self.basis, axis1=1, axis2=2).real
        eye_a = np.eye(da)
        self.cons = [(np.array([np.kron(eye_a, g) for g in self.basis]), -rho)]
        if floor is not None:
            self.cons.append((np.array([g - np.trace(g).real * floor for g in self.basis]),
                              np.zeros((db, db), dtype=complex)))
        self.m = sum(a.shape[1] for a, _ in self.cons)

    def tau(self, x):
        return np.tensordot(x, self.basis, axes=1)

    def coords(self, tau):
        return np.einsum("kij,ji->k", self.basis, tau).real

    def _blocks(self, x):
        return [np.tensordot(x, a, axes=1) + f0 for a, f0 in self.cons]

    def phi(self, x, t):
        val = t * float(self.c @ x)
        for f in self._blocks(x):
            ld = _logdet(f)
            if ld is None:
                return INF
            val -= ld
        return val

    def derivs(self, x, t):
        g = t * self.c.copy()
        h = np.zeros((len(x), len(x)))
        zs = []
        for (a, _), f in zip(self.cons, self._blocks(x)):
            z, _ = _chol_inv_logdet(f)
            za = np.einsum("ij,kjl->kil", z, a)
            g -= np.einsum("kii->k", za).real
            h += np.einsum("kij,lji->kl", za, za).real
            zs.append(z)
        return g, h, zs

    def center(self, x, t, iters=60):
        zs = None
        for _ in range(iters):
            g, h, zs = self.derivs(x, t)
            try:
                dx = -np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(h, g, rcond=None)[0]
            dec = -float(g @ dx)
            if dec < 1e-9:
                break
            f0 = self.phi(x, t)
            s = 1.0
            while s > 1e-14:
                f1 = self.phi(x + s * dx, t)
                if f1 <= f0 - 0.25 * s * dec:
                    break
                s *= 0.5
            if s <= 1e-14:
                break
            x = x + s * dx
        return x, zs

    def solve(self, x0, rel_gap=1e-12, mu=12.0, max_outer=80, on_center=None):
        x, t = x0, 1.0 / max(float(self.c @ x0), 1e-300)
        zs = None
        converged = False
        for _ in range(max_outer):
            x, zs = self.center(x, t)
            if on_center is not None:
                on_center(zs, t)
            obj = float(self.c @ x)
            if self.m / t <= rel_gap * obj:
                converged = True
                break
            t *= mu
        return x, t, zs, converged


def _split_ab(rho: HermitianOperator, cond) -> tuple[HermitianOperator, tuple, tuple]:
    b = _ordered_subset(rho.labels, cond)
    a = tuple(x for x in rho.labels if x not in b)
    return reorder(rho, a + b), a, b


def _support_basis(rho_b: np.ndarray, rank_tol: float) -> np.ndarray:
    w, v = np.linalg.eigh(rho_b)
    top = max(float(w[-1]), 0.0)
    return v[:, w > rank_tol * top][:, ::-1]


def _restrict(rho: np.ndarray, da: int, w: np.ndarray) -> np.ndarray:
    big = np.kron(np.eye(da), w)
    return big.conj().T @ rho @ big


def _cond_lambda_max(rho: np.ndarray, da: int, sigma: np.ndarray) -> float:
    w, v = np.linalg.eigh(sigma)
    top = float(w[-1])
    f = np.where(w > RANK_TOL * top, 1 / np.sqrt(np.clip(w, 1e-300, None)), 0.0)
    s = np.kron(np.eye(da), (v * f) @ v.conj().T)
    return float(np.linalg.eigvalsh(s @ rho @ s)[-1])


def hmin(rho_ab: HermitianOperator, constrained: bool = False, cond=None, tol: float = 1e-7,
         solver: Callable | None = None) -> EntropyCertificate:
    """Conditional min-entropy of A given B, with a sound certificate.

    Parameters
    ----------
    rho_ab : HermitianOperator
        Positive semidefinite with trace at most one.
    constrained : bool
        If True, optimize only over normalized sigma with ``sigma >= rho_B``.
        For a normalized state this forces ``sigma = rho_B``.
    cond : iterable of str, optional
        Conditioning subsystems B. Defaults to every subsystem but the first.
    tol : float
        Target accuracy of the value in bits.
    solver : callable, optional
        External solver ``solver(rho_matrix, dim_a, dim_b, constrained)``
        returning a sigma matrix on B (A first in `rho_matrix`). Its answer is
        re-certified here.

    Returns
    -------
    EntropyCertificate
        `value` is exactly ``h_cond(rho_ab, sigma)`` for the returned sigma,
        so it is a valid lower bound even if the optimizer stopped early.
        In the unconstrained case `dual_bound` is an upper bound from a
        feasible point of the dual program.

    Raises
    ------
    SolverError
        If the primal and dual bounds do not close to `tol`.
    """
    if cond is None:
        cond = rho_ab.labels[1:]
    rho, a, b = _split_ab(rho_ab, cond)
    da = rho.dim_of(a) if a else 1
    rho_b = partial_trace(rho, b)
    tr = rho.trace()
    if _is_zero(rho) or tr <= 0:
        sig = identity(rho_b.dims, b).scaled(1 / rho_b.dim)
        return EntropyCertificate(INF, sig, 0.0, rho_ab, INF)
    if not b:
        lam = float(np.linalg.eigvalsh(rho.data)[-1])
        one = HermitianOperator(np.ones((1, 1)), (), ())
        return EntropyCertificate(-math.log2(lam), one, 0.0, rho_ab, -math.log2(lam))
    if constrained and abs(tr - 1) <= 1e-12:
        sig = rho_b.scaled(1 / rho_b.trace())
        val = h_cond(rho, sig)
        return EntropyCertificate(val, sig, 0.0, rho_ab, None)

    if solver is not None:
        sig_m = np.asarray(solver(rho.data, da, rho_b.dim, constrained), dtype=complex)
        sig = HermitianOperator(sig_m / np.trace(sig_m).real, rho_b.dims, b)
        if constrained and min_eigenvalue(sig - rho_b) < -1e-9:
            raise ValueError("external solver returned sigma below rho_B")
        return EntropyCertificate(h_cond(rho, sig), sig, 0.0, rho_ab, None)

    w = _support_basis(rho_b.data, RANK_TOL)
    k = w.shape[1]
    scale = 1.0 if constrained else tr
    red = _restrict(rho.data, da, w) / scale
    floor = None
    top = float(np.linalg.eigvalsh(red)[-1])
    if constrained:
        floor = w.conj().T @ rho_b.data @ w
        s = (1 - float(np.trace(floor).real)) / k
        c = 2 * top / s + 1
        tau0 = c * (floor + s * np.eye(k))
    else:
        tau0 = 2 * top * np.eye(k)
    prob = _Barrier(red, da, k, floor)
    duals = []

    def dual_from(zs, t):
        # every central point gives a feasible dual; keep the tightest
        y = zs[0] / t
        tb = np.einsum("aiaj->ij", y.reshape(da, k, da, k))
        tw, tv = np.linalg.eigh(tb)
        if tw[0] > 0:
            n = np.kron(np.eye(da), (tv / np.sqrt(tw)) @ tv.conj().T)
            dval = float(np.trace(red @ n @ y @ n).real)
            if dval > 0:
                duals.append(-math.log2(dval) - math.log2(scale))

    x, t, zs, converged = prob.solve(prob.coords(tau0), on_center=None if constrained else dual_from)
    tau = prob.tau(x)
    sig_red = tau / np.trace(tau).real
    sig = HermitianOperator(hermitian_part(w @ sig_red @ w.conj().T), rho_b.dims, b)
    value = h_cond(rho, sig)
    dual = min(duals) if duals else None
    cert = EntropyCertificate(value, sig, 0.0, rho_ab, dual)
    gap_ok = dual is None or dual - value <= tol
    if not converged or not gap_ok:
        raise SolverError(f"min-entropy SDP stopped with gap {None if dual is None else dual - value}", cert)
    return cert


def hmin_bracket_oracle(rho_ab: HermitianOperator, grid_density: int = 400, cond=None) -> tuple[float, float]:
    """Independent bracket ``lower <= H_min(A|B) <= upper`` for a qubit B.

    The lower end is the best value of ``h_cond`` found by a coarse-to-fine
    grid search over the Bloch ball; the search stops once the mesh width
    drops below ``2 / grid_density**2``. The upper end is ``-log2`` of a dual
    feasible value built from the top eigenvectors of the conditional
    operator at the best grid point.

    Raises
    ------
    ValueError
        If B is not a qubit (or trivial).
    """
    if cond is None:
        cond = rho_ab.labels[1:]
    rho, a, b = _split_ab(rho_ab, cond)
    da = rho.dim_of(a) if a else 1
    db = rho.dim_of(b)
    if db > 2:
        raise ValueError("the bracket oracle handles dim(B) <= 2 only")
    m = rho.data
    tr = rho.trace()
    if tr <= 0 or not np.any(m):
        return INF, INF
    rho_b = partial_trace(rho, b).data
    wb = _support_basis(rho_b, RANK_TOL)
    if wb.shape[1] < db:
        # B is effectively one-dimensional: sigma is the projector onto the support
        red = _restrict(m, da, wb)
        lam = float(np.linalg.eigvalsh(red)[-1])
        return -math.log2(lam), -math.log2(lam)

    paulis = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)
    eye_a = np.eye(da)

    def lam_batch(pts):
        rr = np.linalg.norm(pts, axis=1)
        n = pts / np.where(rr > 0, rr, 1)[:, None]
        proj_p = 0.5 * (np.eye(2) + np.einsum("nk,kij->nij", n, paulis))
        proj_m = np.eye(2) - proj_p
        s = proj_p / np.sqrt((1 + rr) / 2)[:, None, None] + proj_m / np.sqrt((1 - rr) / 2)[:, None, None]
        big = np.einsum("ab,nij->naibj", eye_a, s).reshape(len(pts), 2 * da, 2 * da)
        k = big @ m @ big
        return np.linalg.eigvalsh(k)[:, -1]

    per_axis = 9
    center = np.zeros(3)
    half = 1.0
    best_pt, best_val = np.zeros(3), float(lam_batch(np.zeros((1, 3)))[0])
    target = 2.0 / grid_density ** 2
    rmax = 1 - 1e-12
    for _ in range(400):
        axis = np.linspace(-half, half, per_axis)
        pts = center + np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
        rr = np.linalg.norm(pts, axis=1)
        pts = np.where((rr > rmax)[:, None], pts * (rmax / np.maximum(rr, 1e-300))[:, None], pts)
        vals = lam_batch(pts)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_pt = float(vals[i]), pts[i]
        offset = np.abs(best_pt - center)
        on_face = np.any(offset >= half * (1 - 1e-9))
        center = best_pt.copy()
        if not on_face:
            half *= 0.5
        if 2 * half / (per_axis - 1) < target:
            break
    lower = -math.log2(best_val)

    # dual side
    rr = np.linalg.norm(best_pt)
    sig = 0.5 * (np.eye(2) + np.einsum("k,kij->ij", best_pt, paulis))
    sw, sv = np.linalg.eigh(sig)
    s_half = np.kron(eye_a, (sv / np.sqrt(sw)) @ sv.conj().T)
    kmat = s_half @ m @ s_half
    kw, kv = np.linalg.eigh(kmat)
    kw, kv = kw[::-1], kv[:, ::-1]
    best_dual = 0.0

    def dual_value(wmat):
        y = s_half @ wmat @ s_half
        tb = np.einsum("aiaj->ij", y.reshape(da, 2, da, 2))
        tw, tv = np.linalg.eigh(tb)
        if tw[0] <= 1e-14 * max(tw[-1], 1e-300):
            return 0.0
        n = np.kron(eye_a, (tv / np.sqrt(tw)) @ tv.conj().T)
        return float(np.trace(m @ n @ y @ n).real)

    dim = 2 * da
    for kk in range(1, min(dim, 6) + 1):
        vecs = kv[:, :kk]
        outers = [np.outer(vecs[:, j], vecs[:, j].conj()) for j in range(kk)]
        cols = []
        for o in outers:
            y = s_half @ o @ s_half
            tb = np.einsum("aiaj->ij", y.reshape(da, 2, da, 2))
            cols.append([tb[0, 0].real - tb[1, 1].real, tb[0, 1].real, tb[0, 1].imag, 1.0])
        mat = np.array(cols).T
        wts, _ = nnls(mat, np.array([0, 0, 0, 1.0]))
        if wts.sum() > 0:
            best_dual = max(best_dual, dual_value(sum(wt * o for wt, o in zip(wts, outers))))
        if kk == 2:
            for wt in np.linspace(0, 1, 101):
                best_dual = max(best_dual, dual_value(wt * outers[0] + (1 - wt) * outers[1]))
    upper = -math.log2(best_dual) if best_dual > 0 else INF
    return lower, upper


# --------------------------------------------------------------------------
# smoothing constructions
# --------------------------------------------------------------------------

def smooth_certificate(rho: HermitianOperator, rho_bar: HermitianOperator,
                       sigma: HermitianOperator) -> EntropyCertificate:
    """Certificate for the smooth min-entropy from a nearby subnormalized state."""
    if rho_bar.trace() > 1 + 1e-12:
        raise ValueError("the smoothed state must be subnormalized (trace <= 1)")
    eps = trace_distance(rho_bar, rho)
    return EntropyCertificate(h_cond(rho_bar, sigma), sigma, eps, rho_bar)


def hbmin_smoothing(rho_ab: HermitianOperator, sigma_b: HermitianOperator, eps: float) -> HermitianOperator:
    """Cut the spectrum of ``sigma_B / rho_B`` at ``1/eps**2`` and rebuild the state.

    Returns ``rho_B^{1/2} P (rho_AB / rho_B) P rho_B^{1/2}`` where P projects
    onto eigenvalues of ``rho_B^{-1/2} sigma_B rho_B^{-1/2}`` that are at most
    ``1/eps**2`` (the null space of rho_B included).
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    b = _ordered_subset(rho_ab.labels, sigma_b.labels)
    sigma_b = reorder(sigma_b, b)
    rho_b = partial_trace(rho_ab, b)
    inv_half = psd_transform(rho_b, "inv_sqrt")
    ratio = inv_half.data @ sigma_b.data @ inv_half.data
    w, v = np.linalg.eigh(0.5 * (ratio + ratio.conj().T))
    cut = v[:, w <= 1 / eps ** 2]
    proj = HermitianOperator(cut @ cut.conj().T, rho_b.dims, b)
    half = psd_transform(rho_b, "sqrt")
    ops = [embed(x, rho_ab.dims, rho_ab.labels).data for x in (half, proj, inv_half)]
    left = ops[0] @ ops[1] @ ops[2]
    return HermitianOperator(hermitian_part(left @ rho_ab.data @ left.conj().T), rho_ab.dims, rho_ab.labels)


def hbmin_lower_bound(rho_bar: HermitianOperator, rho_b: HermitianOperator) -> EntropyCertificate:
    """Certificate for the constrained min-entropy of a smoothed state.

    Uses the witness ``rho_B`` (topped up to trace one with a multiple of
    the identity), which dominates the marginal of `rho_bar` whenever
    ``rho_bar_B <= rho_B``.
    """
    d = rho_b.dim
    pad = max(0.0, 1 - rho_b.trace())
    sig = HermitianOperator(rho_b.data + pad * np.eye(d) / d, rho_b.dims, rho_b.labels)
    return EntropyCertificate(h_cond(rho_bar, sig), sig, 0.0, rho_bar)


def combine_classical_y(certs: Mapping, p_y: Mapping, eps_fail: float, k: float | None = None,
                        delta: float | None = None, y_label: str = "Y") -> EntropyCertificate:
    """Assemble a certificate for Z given (Y, E) from per-value certificates.

    Parameters
    ----------
    certs : mapping y -> EntropyCertificate
        Each carries its witness state on Z E and its sigma on E.
    p_y : mapping y -> float
        Distribution of the classical value.
    eps_fail : float
        Probability mass allowed to miss the (k, delta) targets.
    k, delta : float, optional
        Targets. By default `k` is the largest value achievable while the
        missing mass stays within `eps_fail` and `delta` is the largest
        smoothing among the remaining values.

    Returns
    -------
    EntropyCertificate
        Value k, smoothing ``delta + eps_fail``, block-diagonal witness on
        Y Z E and sigma on Y E. Values that miss the targets get a zero
        block and a maximally mixed sigma.
    """
    ys = list(certs)
    if not ys:
        raise ValueError("no certificates to combine")
    first = certs[ys[0]]
    for y in ys:
        c = certs[y]
        if c.witness_state is None:
            raise ValueError(f"certificate for {y!r} has no witness state")
        if c.sigma.dims != first.sigma.dims or c.witness_state.dims != first.witness_state.dims:
            raise ValueError("inconsistent E dimensions across values of Y")
    order = sorted(ys, key=lambda y: -certs[y].value)
    if k is None:
        mass, k = 0.0, INF
        for y in order:
            k = certs[y].value
            mass += p_y.get(y, 0.0)
            if 1 - mass <= eps_fail + 1e-15:
                break
    good = [y for y in ys if certs[y].value >= k and (delta is None or certs[y].smoothing <= delta)]
    missed = sum(p_y.get(y, 0.0) for y in ys if y not in good)
    if missed > eps_fail + 1e-12:
        raise ValueError(f"values missing the targets carry probability {missed} > eps_fail")
    if delta is None:
        delta = max((certs[y].smoothing for y in good), default=0.0)
    zb, sb = [], []
    de = first.sigma.dim
    for y in ys:
        c, p = certs[y], p_y.get(y, 0.0)
        if y in good:
            zb.append(c.witness_state.scaled(p))
            sb.append(c.sigma.scaled(p))
        else:
            zb.append(c.witness_state.scaled(0.0))
            sb.append(HermitianOperator(p * np.eye(de) / de, first.sigma.dims, first.sigma.labels))
    witness = direct_sum_blocks(zb, y_label)
    sigma = direct_sum_blocks(sb, y_label)
    return EntropyCertificate(k, sigma, delta + eps_fail, witness)


def assemble_cq_blocks(states: Mapping, p_y: Mapping, y_label: str = "Y") -> HermitianOperator:
    """``sum_y P(y) |y><y| (x) states[y]`` in the key order of `states`."""
    return direct_sum_blocks([states[y].scaled(p_y.get(y, 0.0)) for y in states], y_label)


def rate(h: float, alphabet_bits: float) -> float:
    """Min-entropy rate ``h / alphabet_bits``."""
    if alphabet_bits <= 0:
        raise ValueError("alphabet_bits must be positive")
    return h / alphabet_bits


def extractable_length(k: float, eps: float) -> int:
    """Output length ``floor(k - 2 log2(1/eps))`` of two-universal hashing, at least 0."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return max(0, math.floor(k - 2 * math.log2(1 / eps)))


def guessing_entropy_classical(joint: np.ndarray) -> float:
    """``-log2 sum_e max_x P(x, e)`` for a classical joint table ``P[x, e]``."""
    return -math.log2(float(np.sum(np.max(np.asarray(joint, dtype=float), axis=0))))


__all__ = [
    "INF",
    "CQState",
    "EntropyCertificate",
    "SolverError",
    "SupportError",
    "assemble_cq_blocks",
    "combine_classical_y",
    "conditional_operator",
    "extractable_length",
    "guessing_entropy_classical",
    "h_cond",
    "h_rel",
    "h_self",
    "hbmin_lower_bound",
    "hbmin_smoothing",
    "hmin",
    "hmin_bracket_oracle",
    "rate",
    "smooth_certificate",
]
