"""Dense linear algebra on small multipartite systems.

Operators and state vectors carry an ordered list of subsystem dimensions
and matching names. Every function here is pure; results are new objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

RANK_TOL = 1e-10
HERMITIAN_TOL = 1e-12
MAX_DIM = 256


def _as_names(labels) -> tuple[str, ...]:
    if isinstance(labels, str):
        return (labels,)
    return tuple(str(x) for x in labels)


def _check_layout(dims, labels, d) -> tuple[tuple[int, ...], tuple[str, ...]]:
    dims = tuple(int(x) for x in dims)
    labels = _as_names(labels)
    if len(dims) != len(labels):
        raise ValueError("dims and labels must have the same length")
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate subsystem names in {labels}")
    if any(x < 1 for x in dims):
        raise ValueError(f"subsystem dimensions must be positive, got {dims}")
    if int(np.prod(dims, dtype=np.int64)) != d:
        raise ValueError(f"product of dims {dims} does not match size {d}")
    if d > MAX_DIM:
        raise ValueError(f"total dimension {d} exceeds the cap of {MAX_DIM}")
    return dims, labels


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Hermitian matrix on a tensor product of named subsystems.

    Parameters
    ----------
    data : array_like
        Square complex matrix of size ``prod(dims)``.
    dims : sequence of int
        Subsystem dimensions, in tensor order.
    labels : sequence of str
        Subsystem names, one per entry of `dims`.

    Notes
    -----
    Positivity is not part of the type. The stored matrix is replaced by
    its Hermitian part after the tolerance check.
    """

    data: np.ndarray
    dims: tuple
    labels: tuple

    def __post_init__(self):
        m = np.array(self.data, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be a square matrix, got shape {m.shape}")
        dims, labels = _check_layout(self.dims, self.labels, m.shape[0])
        scale = np.max(np.abs(m)) if m.size else 0.0
        dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if dev > HERMITIAN_TOL * max(scale, 1e-300) and dev > 0:
            raise ValueError(f"matrix is not Hermitian (deviation {dev:.3e})")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "data", m)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def dim_of(self, names) -> int:
        names = _as_names(names)
        return int(np.prod([self.dims[self.labels.index(x)] for x in names], dtype=np.int64))

    def scaled(self, c: float) -> "HermitianOperator":
        return HermitianOperator(c * self.data, self.dims, self.labels)

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        _same_layout(self, other)
        return HermitianOperator(self.data + other.data, self.dims, self.labels)

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        _same_layout(self, other)
        return HermitianOperator(self.data - other.data, self.dims, self.labels)

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "labels": list(self.labels),
            "re": self.data.real.tolist(),
            "im": self.data.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "HermitianOperator":
        data = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
        return cls(data, obj["dims"], obj["labels"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "HermitianOperator":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class PureState:
    """Possibly subnormalized vector on named subsystems."""

    amplitudes: np.ndarray
    dims: tuple
    labels: tuple

    def __post_init__(self):
        v = np.array(self.amplitudes, dtype=complex).reshape(-1)
        dims, labels = _check_layout(self.dims, self.labels, v.shape[0])
        nrm = float(np.vdot(v, v).real)
        if nrm > (1 + 1e-12) ** 2:
            raise ValueError(f"state norm {np.sqrt(nrm):.15f} exceeds 1")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm2(self) -> float:
        """Squared norm, i.e. the trace of the projector onto the vector."""
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def density(self) -> HermitianOperator:
        v = self.amplitudes
        return HermitianOperator(np.outer(v, v.conj()), self.dims, self.labels)

    def reduced(self, keep) -> HermitianOperator:
        """Marginal on `keep`, kept in the original subsystem order."""
        keep = _ordered_subset(self.labels, keep)
        mat = _grouped_matrix(self, keep)
        dims = tuple(self.dims[self.labels.index(x)] for x in keep)
        return HermitianOperator(mat @ mat.conj().T, dims, keep)

    def apply(self, matrix, on) -> "PureState":
        """Apply a matrix acting on the subsystems `on` (given in that order)."""
        return PureState(_apply_amplitudes(self, matrix, on), self.dims, self.labels)

    def inner(self, other: "PureState") -> complex:
        if other.dims != self.dims or other.labels != self.labels:
            raise ValueError("states live on different systems")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __add__(self, other: "PureState") -> "PureState":
        if other.dims != self.dims or other.labels != self.labels:
            raise ValueError("states live on different systems")
        return PureState(self.amplitudes + other.amplitudes, self.dims, self.labels)


def zero_state(dims, labels) -> PureState:
    return PureState(np.zeros(int(np.prod(dims, dtype=np.int64)), dtype=complex), dims, labels)


def _same_layout(a, b):
    if a.dims != b.dims or a.labels != b.labels:
        raise ValueError(f"layout mismatch: {a.labels}{a.dims} vs {b.labels}{b.dims}")


def _ordered_subset(labels, names) -> tuple[str, ...]:
    names = set(_as_names(names))
    unknown = names - set(labels)
    if unknown:
        raise KeyError(f"unknown subsystem(s) {sorted(unknown)}; have {list(labels)}")
    return tuple(x for x in labels if x in names)


def _apply_amplitudes(psi: PureState, matrix, on, amplitudes: np.ndarray | None = None) -> np.ndarray:
    """Amplitudes of ``matrix`` applied to `psi` on `on`, without a norm check.

    `amplitudes` replaces the state's own vector when given.
    """
    on = _as_names(on)
    idx = [psi.labels.index(x) for x in on]
    d_on = int(np.prod([psi.dims[i] for i in idx], dtype=np.int64))
    matrix = np.asarray(getattr(matrix, "data", matrix))
    if matrix.shape != (d_on, d_on):
        raise ValueError(f"matrix shape {matrix.shape} does not fit subsystems {on}")
    amps = psi.amplitudes if amplitudes is None else amplitudes
    t = amps.reshape(psi.dims)
    t = np.moveaxis(t, idx, list(range(len(idx))))
    rest = t.shape[len(idx):]
    t = (matrix @ t.reshape(d_on, -1)).reshape(tuple(psi.dims[i] for i in idx) + rest)
    t = np.moveaxis(t, list(range(len(idx))), idx)
    return t.reshape(-1)


def _grouped_matrix(psi: PureState, first, amplitudes: np.ndarray | None = None) -> np.ndarray:
    """Coefficient matrix of `psi` with rows indexed by subsystems `first`.

    `amplitudes` replaces the state's own vector when given.
    """
    amps = psi.amplitudes if amplitudes is None else amplitudes
    idx = [psi.labels.index(x) for x in first]
    rest = [i for i in range(len(psi.dims)) if i not in idx]
    t = amps.reshape(psi.dims).transpose(idx + rest)
    d_first = int(np.prod([psi.dims[i] for i in idx], dtype=np.int64))
    return t.reshape(d_first, -1)


def hermitian_part(m: np.ndarray) -> np.ndarray:
    """``(m + m^dagger) / 2``, for products that are Hermitian up to rounding."""
    return 0.5 * (m + m.conj().T)


def identity(dims, labels) -> HermitianOperator:
    d = int(np.prod(dims, dtype=np.int64))
    return HermitianOperator(np.eye(d), dims, labels)


def tensor_product(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """Kronecker product; the subsystems of `b` follow those of `a`."""
    return HermitianOperator(np.kron(a.data, b.data), a.dims + b.dims, a.labels + b.labels)


def reorder(op: HermitianOperator, labels) -> HermitianOperator:
    """Permute subsystems into the order given by `labels`."""
    labels = _as_names(labels)
    if sorted(labels) != sorted(op.labels):
        raise KeyError(f"{labels} is not a permutation of {op.labels}")
    if labels == op.labels:
        return op
    k = len(op.dims)
    perm = [op.labels.index(x) for x in labels]
    t = op.data.reshape(op.dims + op.dims).transpose(perm + [p + k for p in perm])
    dims = tuple(op.dims[p] for p in perm)
    return HermitianOperator(t.reshape(op.dim, op.dim), dims, labels)


def partial_trace(op: HermitianOperator, keep) -> HermitianOperator:
    """Trace out every subsystem not named in `keep`.

    Parameters
    ----------
    op : HermitianOperator
    keep : iterable of str
        Names of the subsystems to keep. The result lists them in their
        original order. An empty set returns the 1x1 trace.

    Raises
    ------
    KeyError
        If `keep` names a subsystem that `op` does not have.
    """
    keep = _ordered_subset(op.labels, keep)
    k = len(op.dims)
    t = op.data.reshape(op.dims + op.dims)
    gone = [i for i in range(k) if op.labels[i] not in keep]
    for n_done, i in enumerate(sorted(gone, reverse=True)):
        cur = k - n_done
        t = np.trace(t, axis1=i, axis2=i + cur)
    dims = tuple(op.dims[op.labels.index(x)] for x in keep)
    d = int(np.prod(dims, dtype=np.int64))
    return HermitianOperator(t.reshape(d, d), dims, keep)


def embed(op: HermitianOperator, dims, labels) -> HermitianOperator:
    """Extend `op` by identities to the full system (`dims`, `labels`)."""
    labels = _as_names(labels)
    _ordered_subset(labels, op.labels)
    for x, d in zip(op.labels, op.dims):
        if dims[labels.index(x)] != d:
            raise ValueError(f"dimension mismatch on subsystem {x}")
    others = [x for x in labels if x not in op.labels]
    if not others:
        return reorder(op, labels)
    odims = tuple(dims[labels.index(x)] for x in others)
    full = tensor_product(op, identity(odims, others))
    return reorder(full, labels)


def eig_decompose(op: HermitianOperator) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and orthonormal eigenvectors.

    Eigenvectors of numerically degenerate clusters are re-orthonormalized
    by an ordered QR pass and each vector's phase is fixed so that its
    largest-modulus entry is real and positive. Only eigenprojectors of
    degenerate clusters are basis-independent; callers should not rely on
    individual vectors inside a cluster.
    """
    data = np.asarray(op.data if isinstance(op, HermitianOperator) else op, dtype=complex)
    scale = np.max(np.abs(data)) if data.size else 0.0
    if np.max(np.abs(data - data.conj().T)) > HERMITIAN_TOL * max(scale, 1e-300) * 10:
        raise ValueError("eig_decompose requires a Hermitian matrix")
    w, v = np.linalg.eigh(0.5 * (data + data.conj().T))
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    gap = 1e-12 * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and w[j - 1] - w[j] <= gap:
            j += 1
        if j - i > 1:
            q, _ = np.linalg.qr(v[:, i:j])
            v[:, i:j] = q
        i = j
    for c in range(v.shape[1]):
        k = int(np.argmax(np.abs(v[:, c])))
        ph = v[k, c] / abs(v[k, c])
        v[:, c] /= ph
    return w, v


def psd_transform(op: HermitianOperator, kind: str, rank_tol: float = RANK_TOL) -> HermitianOperator:
    """Apply a spectral function to a positive semidefinite operator.

    Parameters
    ----------
    kind : {'gen_inverse', 'sqrt', 'inv_sqrt'}
    rank_tol : float
        Eigenvalues at or below ``rank_tol * max eigenvalue`` are zero; the
        inverse functions map them to zero.
    """
    funcs = {
        "gen_inverse": lambda x: 1.0 / x,
        "sqrt": np.sqrt,
        "inv_sqrt": lambda x: 1.0 / np.sqrt(x),
    }
    if kind not in funcs:
        raise ValueError(f"unknown transform {kind!r}")
    w, v = np.linalg.eigh(op.data)
    top = max(float(w[-1]), 0.0) if w.size else 0.0
    cut = rank_tol * top
    if w.size and w[0] < -cut and w[0] < -1e-300:
        raise ValueError(f"operator is not positive semidefinite (eigenvalue {w[0]:.3e})")
    keep = w > cut
    f = np.zeros_like(w)
    f[keep] = funcs[kind](w[keep])
    return HermitianOperator((v * f) @ v.conj().T, op.dims, op.labels)


def support_projector(op: HermitianOperator, rank_tol: float = RANK_TOL) -> HermitianOperator:
    w, v = np.linalg.eigh(op.data)
    top = max(float(w[-1]), 0.0) if w.size else 0.0
    vk = v[:, w > rank_tol * top] if top > 0 else v[:, :0]
    return HermitianOperator(vk @ vk.conj().T, op.dims, op.labels)


def min_eigenvalue(op: HermitianOperator) -> float:
    return float(np.linalg.eigvalsh(op.data)[0])


def max_eigenvalue(op: HermitianOperator) -> float:
    return float(np.linalg.eigvalsh(op.data)[-1])


def trace_distance(a: HermitianOperator, b: HermitianOperator) -> float:
    """Half the trace norm of ``a - b``."""
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch {a.dims} vs {b.dims}")
    w = np.linalg.eigvalsh(a.data - b.data)
    return 0.5 * float(np.sum(np.abs(w)))


def purify(rho: HermitianOperator, ref_label: str = "R", rank_tol: float = RANK_TOL) -> PureState:
    """Purification with a reference system of dimension rank(rho).

    The reference system is appended after the subsystems of `rho`.
    """
    if ref_label in rho.labels:
        raise ValueError(f"reference name {ref_label!r} already in use")
    w, v = eig_decompose(rho)
    top = max(float(w[0]), 0.0)
    if w[-1] < -rank_tol * max(top, 1.0):
        raise ValueError("purify requires a positive semidefinite operator")
    keep = w > rank_tol * top if top > 0 else np.zeros_like(w, dtype=bool)
    k = max(int(keep.sum()), 1)
    amps = np.zeros((rho.dim, k), dtype=complex)
    for j, idx in enumerate(np.flatnonzero(keep)):
        amps[:, j] = np.sqrt(w[idx]) * v[:, idx]
    return PureState(amps.reshape(-1), rho.dims + (k,), rho.labels + (ref_label,))


def schmidt_decompose(psi: PureState, side_a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Schmidt coefficients (descending) and the vectors on both sides.

    Returns
    -------
    coeffs : ndarray
        Nonnegative, descending; their squares sum to the squared norm.
    vecs_a, vecs_b : ndarray
        Orthonormal columns; ``psi = sum_k coeffs[k] vecs_a[:, k] (x) vecs_b[:, k]``
        with the side-`a` subsystems first, each side in original order.
    """
    side_a = _ordered_subset(psi.labels, side_a)
    if not side_a or len(side_a) == len(psi.labels):
        raise ValueError("side_a must be a proper nonempty subset of the subsystems")
    mat = _grouped_matrix(psi, side_a)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    return s, u, vh.T


def operator_from_vectors(vectors: np.ndarray, dims, labels) -> HermitianOperator:
    """Projector onto the span of orthonormal columns."""
    vectors = np.asarray(vectors)
    return HermitianOperator(vectors @ vectors.conj().T, dims, labels)


def direct_sum_blocks(blocks: Sequence[HermitianOperator], label: str) -> HermitianOperator:
    """Block-diagonal operator ``sum_k |k><k| (x) blocks[k]`` with a new leading subsystem."""
    if not blocks:
        raise ValueError("need at least one block")
    first = blocks[0]
    for b in blocks[1:]:
        _same_layout(first, b)
    d = first.dim
    out = np.zeros((len(blocks) * d, len(blocks) * d), dtype=complex)
    for k, b in enumerate(blocks):
        out[k * d:(k + 1) * d, k * d:(k + 1) * d] = b.data
    return HermitianOperator(out, (len(blocks),) + first.dims, (label,) + first.labels)


def names(*groups: Iterable[str]) -> tuple[str, ...]:
    out: list[str] = []
    for g in groups:
        out.extend(_as_names(g))
    return tuple(out)
