"""Toeplitz hashing over GF(2), exact extractor checks and privacy amplification.

Bit vectors are ``uint8`` arrays of 0/1 values. When packing to bytes,
bit 0 of each byte is its least significant bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .entropy import extractable_length

MAX_EXACT_BITS = 12
NAIVE_MAX = 1 << 22
WORD_MAX = 1 << 16
FFT_CHUNK = 1 << 17


class InsufficientEntropyError(ValueError):
    pass


def as_bits(x) -> np.ndarray:
    """Coerce a 0/1 sequence or a string such as ``"1011"`` to a bit array."""
    if isinstance(x, str):
        if set(x) - {"0", "1"}:
            raise ValueError(f"bit string may only contain 0 and 1: {x!r}")
        return np.frombuffer(x.encode(), dtype=np.uint8) - ord("0")
    a = np.asarray(x)
    if a.size and not np.all((a == 0) | (a == 1)):
        raise ValueError("bit vector entries must be 0 or 1")
    return a.astype(np.uint8).reshape(-1)


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits).reshape(-1))


def bytes_to_bits(data: bytes, nbits: int | None = None) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if nbits is not None:
        if nbits > bits.size:
            raise ValueError(f"need {nbits} bits, have {bits.size}")
        bits = bits[:nbits]
    return bits


def bits_to_bytes(bits) -> bytes:
    """Pack bits, zero-padding a trailing partial byte."""
    return np.packbits(as_bits(bits), bitorder="little").tobytes()


def bits_to_int(bits) -> int:
    """Integer whose bit p is ``bits[p]``."""
    return int.from_bytes(bits_to_bytes(bits), "little")


@dataclass(frozen=True)
class ToeplitzSeed:
    """Diagonals of a Toeplitz matrix, ``nin + lout - 1`` bits."""

    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", as_bits(self.bits))

    def __len__(self):
        return int(self.bits.size)

    @classmethod
    def from_hex(cls, text: str, length: int) -> "ToeplitzSeed":
        data = bytes.fromhex(text.strip())
        return cls(bytes_to_bits(data, length))

    @classmethod
    def random(cls, rng: np.random.Generator, length: int) -> "ToeplitzSeed":
        return cls(rng.integers(0, 2, size=length, dtype=np.uint8))


def _check_lengths(x, seed, lout):
    x = as_bits(x)
    s = seed.bits if isinstance(seed, ToeplitzSeed) else as_bits(seed)
    if lout < 0:
        raise ValueError("lout must be nonnegative")
    if s.size != x.size + lout - 1 and not (lout == 0):
        raise ValueError(f"seed has {s.size} bits, need nin + lout - 1 = {x.size + lout - 1}")
    return x, s


def toeplitz_matrix(seed, nin: int, lout: int) -> np.ndarray:
    """``T[i, j] = seed[i - j + nin - 1]``."""
    s = seed.bits if isinstance(seed, ToeplitzSeed) else as_bits(seed)
    i = np.arange(lout)[:, None]
    j = np.arange(nin)[None, :]
    return s[i - j + nin - 1]


def _hash_naive(x, s, lout):
    t = toeplitz_matrix(s, x.size, lout).astype(np.int64)
    return ((t @ x.astype(np.int64)) & 1).astype(np.uint8)


def _hash_words(x, s, lout):
    # y_i = parity of (S >> i) & X' with X' the input reversed
    big_s = bits_to_int(s)
    xr = bits_to_int(x[::-1])
    out = np.empty(lout, dtype=np.uint8)
    for i in range(lout):
        out[i] = (((big_s >> i) & xr).bit_count()) & 1
    return out


def _correlate_chunk(xr_chunk, s_seg, lout):
    # sum_k s_seg[i + k] * xr_chunk[k] for i < lout, exactly
    nk = xr_chunk.size
    size = 1 << int(math.ceil(math.log2(nk + s_seg.size)))
    fa = np.fft.rfft(s_seg.astype(float), size)
    fb = np.fft.rfft(xr_chunk[::-1].astype(float), size)
    conv = np.fft.irfft(fa * fb, size)[nk - 1:nk - 1 + lout]
    rounded = np.rint(conv)
    if np.max(np.abs(conv - rounded), initial=0.0) > 0.25:
        raise ArithmeticError("FFT rounding margin exceeded")
    return (rounded.astype(np.int64) & 1).astype(np.uint8)


def _hash_fft(x, s, lout, chunk=FFT_CHUNK, workers=1):
    xr = x[::-1]
    starts = range(0, xr.size, chunk)

    def part(k0):
        blk = xr[k0:k0 + chunk]
        if not blk.any():
            return np.zeros(lout, dtype=np.uint8)
        return _correlate_chunk(blk, s[k0:k0 + blk.size + lout - 1], lout)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(part, starts))
    else:
        parts = [part(k0) for k0 in starts]
    # the hash is linear, so chunk contributions combine by XOR
    return np.bitwise_xor.reduce(parts, axis=0) if parts else np.zeros(lout, dtype=np.uint8)


def toeplitz_hash(x, seed, lout: int, method: str = "auto", workers: int = 1) -> np.ndarray:
    """Multiply the input by the seed's Toeplitz matrix over GF(2).

    Parameters
    ----------
    x : bit vector of length nin
    seed : ToeplitzSeed or bit vector of length ``nin + lout - 1``
    lout : int
    method : {"auto", "naive", "words", "fft"}
        All methods give identical output. ``"fft"`` splits the input
        into chunks, optionally across threads, and XORs the results.

    Examples
    --------
    >>> bits_to_str(toeplitz_hash("1000", "11011", 2))
    '11'
    """
    x, s = _check_lengths(x, seed, lout)
    if lout == 0:
        return np.zeros(0, dtype=np.uint8)
    if method == "auto":
        if x.size * lout <= NAIVE_MAX:
            method = "naive"
        elif lout <= 64 and x.size <= WORD_MAX * 64:
            method = "words"
        else:
            method = "fft"
    if method == "naive":
        return _hash_naive(x, s, lout)
    if method == "words":
        return _hash_words(x, s, lout)
    if method == "fft":
        return _hash_fft(x, s, lout, workers=workers)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# exact checks on enumerable instances
# --------------------------------------------------------------------------

def _parity(a):
    return np.bitwise_count(a) & 1


def _reversed_inputs(nin: int) -> np.ndarray:
    xs = np.arange(1 << nin, dtype=np.uint64)
    xr = np.zeros_like(xs)
    for k in range(nin):
        xr |= ((xs >> np.uint64(k)) & np.uint64(1)) << np.uint64(nin - 1 - k)
    return xr


def _hash_tables(nin: int, lout: int, block: int = 1 << 22):
    """Yield ``table[seed, x]`` (hash output as an integer) over blocks of seeds."""
    slen = nin + lout - 1
    xr = _reversed_inputs(nin)[None, :]
    rows = max(1, block // xr.size)
    for start in range(0, 1 << slen, rows):
        seeds = np.arange(start, min(start + rows, 1 << slen), dtype=np.uint64)[:, None]
        out = np.zeros((seeds.shape[0], xr.size), dtype=np.uint8)
        for i in range(lout):
            out |= _parity((seeds >> np.uint64(i)) & xr).astype(np.uint8) << np.uint8(i)
        yield start, out


def collision_probability_exact(nin: int, lout: int) -> float:
    """Largest collision probability of two distinct inputs over a uniform seed.

    By linearity this is the largest fraction of seeds whose matrix
    annihilates a fixed nonzero difference. Full seed enumeration.
    """
    if nin < 1 or lout < 1 or nin > MAX_EXACT_BITS or lout > 6:
        raise ValueError(f"enumeration needs 1 <= nin <= {MAX_EXACT_BITS} and 1 <= lout <= 6")
    zeros = np.zeros((1 << nin) - 1, dtype=np.int64)
    for _, table in _hash_tables(nin, lout):
        zeros += (table[:, 1:] == 0).sum(axis=0)
    return float(zeros.max()) / (1 << (nin + lout - 1))


def extractor_distance_exact(source, lout: int) -> float:
    """Exact distance of (hash output, seed) from uniform, for a source on ``2**nin`` points.

    `source` is a probability vector indexed by the input as an integer
    (bit p of the index is input bit p).
    """
    p = np.asarray(source, dtype=float).reshape(-1)
    nin = int(round(math.log2(p.size)))
    if 1 << nin != p.size:
        raise ValueError("source must have a power-of-two number of points")
    if nin > MAX_EXACT_BITS or lout > 6:
        raise ValueError("source too large to enumerate")
    if lout == 0:
        return 0.0
    z = 1 << lout
    total = 0.0
    for _, table in _hash_tables(nin, lout):
        nseed = table.shape[0]
        idx = table.astype(np.int64) + z * np.arange(nseed)[:, None]
        joint = np.bincount(idx.reshape(-1), weights=np.broadcast_to(p, table.shape).reshape(-1),
                            minlength=nseed * z)
        total += float(np.abs(joint - 1.0 / z).sum())
    return 0.5 * total / (1 << (nin + lout - 1))


def flat_source(nin: int, support) -> np.ndarray:
    p = np.zeros(1 << nin)
    support = np.asarray(list(support), dtype=np.int64)
    p[support] = 1.0 / support.size
    return p


def random_flat_source(rng, nin: int, k: int) -> np.ndarray:
    return flat_source(nin, rng.choice(1 << nin, size=1 << k, replace=False))


def affine_flat_source(rng, nin: int, k: int) -> np.ndarray:
    """Uniform distribution on a random k-dimensional affine subspace of GF(2)^nin."""
    while True:
        basis = rng.integers(0, 1 << nin, size=k)
        span = np.zeros(1, dtype=np.int64)
        for b in basis:
            span = np.concatenate([span, span ^ int(b)])
        if np.unique(span).size == 1 << k:
            break
    return flat_source(nin, span ^ int(rng.integers(0, 1 << nin)))


# --------------------------------------------------------------------------
# privacy amplification
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KeyMaterial:
    bits: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def hex(self) -> str:
        return bits_to_bytes(self.bits).hex()

    def __len__(self):
        return int(self.bits.size)


def privacy_amplify(x, seed, k_assumed: float, eps: float, source_id: str = "input",
                    seed_id: str = "seed") -> KeyMaterial:
    """Hash `x` down to ``floor(k - 2 log2(1/eps))`` bits.

    The seed must cover that output length. Security against quantum side
    information rests on two-universality and is recorded as an assumption
    in the provenance, not checked.

    Raises
    ------
    InsufficientEntropyError
        If the extractable length is zero.
    """
    x = as_bits(x)
    ell = extractable_length(k_assumed, eps)
    if ell < 1:
        raise InsufficientEntropyError(
            f"insufficient entropy budget: k={k_assumed} with eps={eps} leaves no key bits")
    s = seed.bits if isinstance(seed, ToeplitzSeed) else as_bits(seed)
    need = x.size + ell - 1
    if s.size < need:
        raise ValueError(f"seed has {s.size} bits, need {need}")
    key = toeplitz_hash(x, s[:need], ell)
    prov = {
        "source": source_id,
        "seed": seed_id,
        "input_bits": int(x.size),
        "seed_bits_used": int(need),
        "k_assumed": float(k_assumed),
        "eps": float(eps),
        "length": int(ell),
        "assumption": "two-universal hashing is a strong extractor against quantum side information",
    }
    return KeyMaterial(key, prov)
