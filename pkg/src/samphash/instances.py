"""Random test instances: states, projectors and classical-quantum states.

All generators take a ``numpy.random.Generator`` so that suites are
reproducible from one integer seed.
"""

from __future__ import annotations

import numpy as np

from .operators import HermitianOperator, PureState


def ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))


def random_density(rng, dims, labels, rank: int | None = None, trace: float = 1.0) -> HermitianOperator:
    """Random density operator, optionally of fixed rank and trace."""
    d = int(np.prod(dims))
    g = ginibre(rng, d, rank or d)
    m = g @ g.conj().T
    return HermitianOperator(trace * m / np.trace(m).real, dims, labels)


def random_pure(rng, dims, labels, norm: float = 1.0) -> PureState:
    d = int(np.prod(dims))
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(norm * v / np.linalg.norm(v), dims, labels)


def random_unitary(rng, d: int) -> np.ndarray:
    q, r = np.linalg.qr(ginibre(rng, d, d))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_projector(rng, dims, labels, rank: int | None = None) -> HermitianOperator:
    d = int(np.prod(dims))
    if rank is None:
        rank = int(rng.integers(0, d + 1))
    u = random_unitary(rng, d)[:, :rank]
    return HermitianOperator(u @ u.conj().T, dims, labels)


def random_contraction(rng, dims, labels) -> HermitianOperator:
    """Random operator with spectrum in [0, 1]."""
    d = int(np.prod(dims))
    u = random_unitary(rng, d)
    w = rng.uniform(0, 1, size=d)
    return HermitianOperator((u * w) @ u.conj().T, dims, labels)


def random_hermitian(rng, dims, labels) -> HermitianOperator:
    d = int(np.prod(dims))
    g = ginibre(rng, d, d)
    return HermitianOperator(0.5 * (g + g.conj().T), dims, labels)


def random_cq(rng, x_dims, e_dim: int, x_labels=None, e_label: str = "E", pure_e: bool = False,
              support: int | None = None):
    """Random classical-quantum state on X_1..X_k and E.

    Parameters
    ----------
    support : int, optional
        Number of alphabet symbols with nonzero probability. Restricting it
        keeps the rank, and so the purification, small.
    """
    from .entropy import CQState

    x_dims = tuple(int(x) for x in x_dims)
    if x_labels is None:
        x_labels = tuple(f"X{i + 1}" for i in range(len(x_dims)))
    size = int(np.prod(x_dims))
    probs = rng.dirichlet(np.ones(size))
    if support is not None and support < size:
        keep = rng.choice(size, size=support, replace=False)
        mask = np.zeros(size, dtype=bool)
        mask[keep] = True
        probs = np.where(mask, probs, 0.0)
        probs = probs / probs.sum()
    ops = []
    for _ in range(size):
        rho = random_density(rng, (e_dim,), (e_label,), rank=1 if pure_e else None)
        ops.append(rho)
    return CQState(probs, ops, x_dims=x_dims, x_labels=tuple(x_labels))
