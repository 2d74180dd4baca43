import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from samphash.instances import random_density, random_hermitian, random_projector, random_pure
from samphash.operators import (
    HermitianOperator,
    PureState,
    eig_decompose,
    embed,
    identity,
    partial_trace,
    psd_transform,
    purify,
    reorder,
    schmidt_decompose,
    tensor_product,
    trace_distance,
)
from samphash.verify import gentle_measurement_check

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0])


def op(m, dims, labels):
    return HermitianOperator(np.asarray(m, dtype=complex), dims, labels)


def bell():
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    return op(np.outer(phi, phi), (2, 2), ("A", "B"))


def ptrace_oracle(m, dims, keep_idx):
    """Partial trace by explicit index loops over the traced subsystems."""
    k = len(dims)
    t = m.reshape(dims + dims)
    drop = [i for i in range(k) if i not in keep_idx]
    for i in sorted(drop, reverse=True):
        t = np.trace(t, axis1=i, axis2=i + t.ndim // 2)
    d = int(np.prod([dims[i] for i in keep_idx]))
    return t.reshape(d, d)


# ---------------------------------------------------------------- tensor product

def test_identity_tensor_identity():
    out = tensor_product(identity((2,), ("A",)), identity((2,), ("B",)))
    assert out.dims == (2, 2)
    assert np.allclose(out.data, np.eye(4))


def test_basis_projectors_tensor():
    out = tensor_product(op(np.diag([1, 0]), (2,), ("A",)), op(np.diag([0, 1]), (2,), ("B",)))
    assert np.allclose(out.data, np.diag([0, 1, 0, 0]))


def test_bit_flip_on_both_qubits():
    xx = tensor_product(op(SX, (2,), ("A",)), op(SX, (2,), ("B",)))
    psi = PureState(np.array([1, 0, 0, 0], dtype=complex), (2, 2), ("A", "B"))
    out = psi.apply(xx, ("A", "B"))
    assert np.allclose(out.amplitudes, [0, 0, 0, 1])


# ---------------------------------------------------------------- partial trace

def test_bell_marginal_is_maximally_mixed():
    assert np.allclose(partial_trace(bell(), ("A",)).data, np.eye(2) / 2)


def test_product_marginal(rng):
    a = random_density(rng, (3,), ("A",))
    b = random_density(rng, (2,), ("B",), trace=0.4)
    out = partial_trace(tensor_product(a, b), ("A",))
    assert np.allclose(out.data, a.data * 0.4, atol=1e-10)


def test_unknown_subsystem_is_rejected():
    with pytest.raises(KeyError):
        partial_trace(bell(), ("Z",))


@given(st.integers(0, 2 ** 32 - 1))
def test_partial_trace_matches_index_oracle(seed):
    rng = np.random.default_rng(seed)
    dims = tuple(int(x) for x in rng.integers(1, 4, size=3))
    rho = random_density(rng, dims, ("A", "B", "C"))
    for keep in [("A",), ("B",), ("A", "C"), ("C", "B")]:
        got = partial_trace(rho, keep)
        idx = sorted(("A", "B", "C").index(x) for x in keep)
        assert np.allclose(got.data, ptrace_oracle(rho.data, dims, idx), atol=1e-12)
        assert abs(got.trace() - rho.trace()) <= 1e-12


def test_partial_trace_keeps_original_order(rng):
    rho = random_density(rng, (2, 3), ("A", "B"))
    assert partial_trace(rho, ("B", "A")).labels == ("A", "B")


# ---------------------------------------------------------------- eigen

def test_pauli_and_identity_spectra():
    assert np.allclose(eig_decompose(op(SZ, (2,), ("A",)))[0], [1, -1])
    assert np.allclose(eig_decompose(identity((3,), ("A",)))[0], [1, 1, 1])


@given(st.integers(0, 2 ** 32 - 1))
def test_eigenvalues_match_characteristic_polynomial(seed):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, (4,), ("A",))
    w, v = eig_decompose(h)
    # independent oracle: roots of the characteristic polynomial
    roots = np.sort(np.roots(np.poly(h.data)).real)[::-1]
    assert np.allclose(w, roots, atol=1e-8)
    assert np.all(np.diff(w) <= 1e-12)
    recon = (v * w) @ v.conj().T
    assert np.max(np.abs(recon - h.data)) <= 1e-10 * max(1, np.max(np.abs(w)))


def test_psd_eigenvalues_nonnegative(rng):
    for _ in range(20):
        rho = random_density(rng, (2, 3), ("A", "B"), rank=int(rng.integers(1, 7)))
        assert eig_decompose(rho)[0].min() >= -1e-10


def test_eig_is_deterministic(rng):
    rho = random_density(rng, (2, 2), ("A", "B"), rank=2)
    w1, v1 = eig_decompose(rho)
    w2, v2 = eig_decompose(HermitianOperator(rho.data.copy(), rho.dims, rho.labels))
    assert np.array_equal(w1, w2) and np.array_equal(v1, v2)


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        HermitianOperator(np.array([[0, 1], [0, 0]], dtype=complex), (2,), ("A",))


def test_dimension_cap():
    with pytest.raises(ValueError):
        identity((2,) * 9, tuple("ABCDEFGHI"))


# ---------------------------------------------------------------- spectral functions

def test_generalized_inverse_zeroes_null_space():
    out = psd_transform(op(np.diag([2.0, 0.0]), (2,), ("A",)), "gen_inverse")
    assert np.allclose(out.data, np.diag([0.5, 0]))


def test_square_root():
    out = psd_transform(op(np.diag([4.0, 9.0]), (2,), ("A",)), "sqrt")
    assert np.allclose(out.data, np.diag([2, 3]))


def test_inverse_square_root_composes_to_inverse(rng):
    rho = random_density(rng, (3,), ("A",))
    inv_half = psd_transform(rho, "inv_sqrt").data
    assert np.allclose(inv_half @ inv_half, psd_transform(rho, "gen_inverse").data, atol=1e-10)
    assert np.allclose(inv_half @ inv_half, np.linalg.inv(rho.data), atol=1e-8)


def test_negative_operator_rejected():
    with pytest.raises(ValueError):
        psd_transform(op(np.diag([1.0, -0.5]), (2,), ("A",)), "sqrt")


# ---------------------------------------------------------------- trace distance

def test_trace_distance_examples(rng):
    rho = random_density(rng, (2,), ("A",))
    zero = op(np.diag([1, 0]), (2,), ("A",))
    one = op(np.diag([0, 1]), (2,), ("A",))
    plus = op(np.full((2, 2), 0.5), (2,), ("A",))
    assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-15)
    assert trace_distance(zero, one) == pytest.approx(1)
    assert trace_distance(zero, plus) == pytest.approx(np.sin(np.pi / 4), abs=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_trace_distance_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_density(rng, (3,), ("A",)) for _ in range(3))
    assert trace_distance(a, b) == pytest.approx(trace_distance(b, a), abs=1e-14)
    assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-12


def test_trace_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        trace_distance(identity((2,), ("A",)), identity((3,), ("A",)))


# ---------------------------------------------------------------- purification and Schmidt

def test_purify_maximally_mixed_gives_unit_norm():
    psi = purify(identity((2,), ("A",)).scaled(0.5))
    assert psi.norm2() == pytest.approx(1)
    assert psi.dims == (2, 2)


def test_purify_pure_state_has_rank_one_reference(rng):
    v = random_pure(rng, (3,), ("A",))
    psi = purify(v.density())
    assert psi.dims == (3, 1)
    assert abs(abs(np.vdot(psi.amplitudes, v.amplitudes)) - 1) <= 1e-10


def test_purify_round_trip(rng):
    rho = random_density(rng, (4,), ("A",), rank=3)
    psi = purify(rho)
    assert psi.dims[-1] == 3
    assert np.allclose(psi.reduced(("A",)).data, rho.data, atol=1e-10)


def test_schmidt_examples():
    phi = PureState(np.array([1, 0, 0, 1]) / np.sqrt(2), (2, 2), ("A", "B"))
    s, _, _ = schmidt_decompose(phi, ("A",))
    assert np.allclose(s, [1 / np.sqrt(2)] * 2)
    prod = PureState(np.kron([0.6, 0.8], [1, 0]).astype(complex), (2, 2), ("A", "B"))
    s, _, _ = schmidt_decompose(prod, ("A",))
    assert np.allclose(s[:1], [1]) and np.allclose(s[1:], 0)


def test_schmidt_rejects_trivial_sides(rng):
    psi = random_pure(rng, (2, 3), ("A", "B"))
    for side in [(), ("A", "B")]:
        with pytest.raises(ValueError):
            schmidt_decompose(psi, side)


@given(st.integers(0, 2 ** 32 - 1))
def test_schmidt_coefficients_match_marginal_spectrum(seed):
    rng = np.random.default_rng(seed)
    psi = random_pure(rng, (2, 3), ("A", "B"), norm=float(rng.uniform(0.3, 1)))
    s, va, vb = schmidt_decompose(psi, ("A",))
    assert np.sum(s ** 2) == pytest.approx(psi.norm2(), abs=1e-10)
    w = eig_decompose(psi.reduced(("A",)))[0]
    assert np.allclose(s, np.sqrt(np.clip(w[:s.size], 0, None)), atol=1e-9)
    assert np.allclose(va.conj().T @ va, np.eye(s.size), atol=1e-10)
    recon = sum(s[k] * np.kron(va[:, k], vb[:, k]) for k in range(s.size))
    assert np.allclose(recon, psi.amplitudes, atol=1e-10)


# ---------------------------------------------------------------- embedding and layout

def test_embed_and_reorder_agree_with_kron(rng):
    a = random_hermitian(rng, (3,), ("B",))
    full = embed(a, (2, 3), ("A", "B"))
    assert np.allclose(full.data, np.kron(np.eye(2), a.data))
    rho = random_density(rng, (2, 3), ("A", "B"))
    swapped = reorder(rho, ("B", "A"))
    assert np.allclose(partial_trace(swapped, ("A",)).data, partial_trace(rho, ("A",)).data)


def test_serialization_round_trip(rng):
    rho = random_density(rng, (2, 3), ("A", "B"))
    back = HermitianOperator.from_json(rho.to_json())
    assert back.dims == rho.dims and back.labels == rho.labels
    assert np.array_equal(back.data, rho.data)


def test_subnormalized_states_allowed_but_not_supernormalized():
    PureState(np.array([0.5, 0.5], dtype=complex), (2,), ("A",))
    with pytest.raises(ValueError):
        PureState(np.array([1.0, 0.1], dtype=complex), (2,), ("A",))


@given(st.integers(0, 2 ** 32 - 1))
def test_gentle_measurement(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, (2, 3), ("A", "B"), trace=float(rng.uniform(0.1, 1)),
                         rank=int(rng.integers(1, 7)))
    q = random_projector(rng, (3,), ("B",), rank=int(rng.integers(0, 4)))
    assert gentle_measurement_check(rho, q).passed
