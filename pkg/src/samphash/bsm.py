"""Block sampling from a long public string, its planner, and sample-then-hash key expansion.

Bit p of a randomizer is bit ``p % 8`` (least significant first) of byte
``p // 8``. Seed bits are consumed most significant first from one
stream, round 1 first.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import asdict, dataclass
from functools import lru_cache
from math import comb, isqrt

import numpy as np

from .entropy import extractable_length
from .extractor import KeyMaterial, privacy_amplify

MEMORY_CONSTANT = 16
EXACT_COMB_BITS = 2_000_000
MIN_R = 16


@lru_cache(maxsize=64)
def _comb(n: int, r: int) -> int:
    return comb(n, r)


class SeedExhaustedError(ValueError):
    pass


class ParameterError(ValueError):
    pass


# --------------------------------------------------------------------------
# subsets and seed bits
# --------------------------------------------------------------------------

def subset_rank(subset, n: int | None = None) -> int:
    """Colex rank of a set of distinct nonnegative integers."""
    cs = sorted(int(c) for c in subset)
    if len(set(cs)) != len(cs) or (cs and cs[0] < 0):
        raise ValueError("subset must contain distinct nonnegative integers")
    if n is not None and cs and cs[-1] >= n:
        raise ValueError(f"element {cs[-1]} is outside range({n})")
    return sum(comb(c, i + 1) for i, c in enumerate(cs))


def subset_unrank(index: int, n: int, r: int) -> list[int]:
    """The `index`-th r-subset of ``range(n)`` in colex order.

    >>> subset_unrank(3, 4, 2)
    [0, 3]
    """
    total = comb(n, r)
    if not 0 <= index < total:
        raise ValueError(f"index {index} out of range for C({n}, {r}) = {total}")
    out = []
    hi = n
    for k in range(r, 0, -1):
        # largest c < hi with comb(c, k) <= index
        lo_c, hi_c = k - 1, hi - 1
        while lo_c < hi_c:
            mid = (lo_c + hi_c + 1) // 2
            if comb(mid, k) <= index:
                lo_c = mid
            else:
                hi_c = mid - 1
        out.append(lo_c)
        index -= comb(lo_c, k)
        hi = lo_c
    return out[::-1]


class SeedReader:
    """Bit stream read most significant bit first.

    Parameters
    ----------
    data : str, bytes or int
        Hex text, raw bytes, or an integer whose binary digits (padded to
        `nbits`) form the stream.
    """

    def __init__(self, data, nbits: int | None = None):
        if isinstance(data, str):
            text = "".join(data.split())
            if text.startswith(("0x", "0X")):
                text = text[2:]
            value, length = (int(text, 16) if text else 0), 4 * len(text)
        elif isinstance(data, (bytes, bytearray)):
            value, length = int.from_bytes(data, "big"), 8 * len(data)
        else:
            value = int(data)
            length = value.bit_length() if nbits is None else nbits
        if nbits is not None:
            if nbits > length and not isinstance(data, int):
                raise ValueError(f"seed holds {length} bits, asked for {nbits}")
            value >>= max(0, length - nbits)
            length = nbits
        self._value = value
        self.length = length
        self.consumed = 0

    @property
    def remaining(self) -> int:
        return self.length - self.consumed

    def read_int(self, nbits: int) -> int:
        if nbits > self.remaining:
            raise SeedExhaustedError(f"seed exhausted: need {nbits} bits, {self.remaining} left")
        shift = self.remaining - nbits
        self.consumed += nbits
        return (self._value >> shift) & ((1 << nbits) - 1)

    def read_bits(self, nbits: int) -> np.ndarray:
        v = self.read_int(nbits)
        return np.array([(v >> (nbits - 1 - i)) & 1 for i in range(nbits)], dtype=np.uint8)


def seed_bits_for(n: int, r: int) -> tuple[int, bool]:
    """``ceil(log2 C(n, r))`` and whether it was computed exactly.

    Very large binomials fall back to ``r log2 n - log2 r!`` with a
    correction bound; the flag is False when that leaves the ceiling
    ambiguous.
    """
    if r * max(1, n.bit_length()) <= EXACT_COMB_BITS:
        return (_comb(n, r) - 1).bit_length(), True
    import mpmath

    with mpmath.workdps(60):
        base = r * mpmath.log(n, 2) - mpmath.loggamma(r + 1) / mpmath.log(2)
        # sum_i log2(1 - i/n) lies in [-(r^2/n)/ln2, 0] once r^2 < n
        corr = mpmath.mpf(r) ** 2 / n / mpmath.log(2)
        hi = int(mpmath.ceil(base))
        lo = int(mpmath.ceil(base - corr))
    return hi, lo == hi


def modular_bias(n_choices: int, nbits: int) -> float:
    """Exact distance from uniform of a uniform `nbits`-bit integer reduced mod `n_choices`."""
    big = 1 << nbits
    if big < n_choices:
        raise ValueError("too few bits to cover every choice")
    rem = big % n_choices
    # int / int is correctly rounded, also for huge operands
    return rem * (n_choices - rem) / (n_choices * big)


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SampParams:
    """One sampling round: the input length and how it is cut and sampled.

    ``dropped_bits`` counts trailing input bits outside all blocks; it is
    zero when L is a fourth power of a power of two that r divides.
    """

    L: int
    r: int
    t: int
    n: int
    seed_bits: int
    seed_bits_exact: bool = True
    dropped_bits: int = 0
    extra_seed_bits: int = 0
    bias: float | None = None

    @property
    def output_bits(self) -> int:
        return self.r * self.t

    def to_dict(self) -> dict:
        d = asdict(self)
        d["L_log2"] = math.log2(self.L) if self.L < 1 << 1000 else self.L.bit_length() - 1
        d["L"] = str(self.L) if self.L.bit_length() > 63 else self.L
        d["n"] = str(self.n) if self.n.bit_length() > 63 else self.n
        d["t"] = str(self.t) if self.t.bit_length() > 63 else self.t
        return d


def samp_params(L: int, r: int, strict: bool = True, block_bits: int | None = None,
                extra_seed_bits: int = 0, with_bias: bool = True) -> SampParams:
    """Block layout of one round: ``t = floor(L^(3/4) / r)`` and ``n = floor(L / t)``.

    Parameters
    ----------
    strict : bool
        Require ``L >= r**4``.
    block_bits : int, optional
        Override the block size. Test mode only (``strict=False``).
    """
    if r < 1:
        raise ParameterError("r must be positive")
    if strict and L < r ** 4:
        raise ParameterError(f"L={L} is below r^4={r ** 4}")
    if block_bits is not None:
        if strict:
            raise ParameterError("block size overrides need test mode (allow_insecure)")
        t = int(block_bits)
    else:
        t = isqrt(isqrt(L ** 3)) // r
    if t < 1:
        raise ParameterError(f"L={L} is too short for r={r}: block size would be zero")
    n = L // t
    if n < r:
        raise ParameterError(f"only {n} blocks of {t} bits; cannot pick r={r}")
    bits, exact = seed_bits_for(n, r)
    bias = None
    if with_bias and exact:
        bias = modular_bias(_comb(n, r), bits + extra_seed_bits)
    return SampParams(L, r, t, n, bits, exact, L - n * t, extra_seed_bits, bias)


def rate_loss_bound(r: int, f: int) -> float:
    """``5 f log2(r) / r^(1/4)``."""
    return 5 * f * math.log2(r) / r ** 0.25


def smoothing_bound(r: int, f: int) -> float:
    """``5 f 2^(-sqrt(r)/8)``."""
    return 5 * f * 2.0 ** (-math.sqrt(r) / 8)


@dataclass
class SampPlan:
    r: int
    f: int
    rounds: list
    total_seed_bits: int
    seed_bits_exact: bool
    rate_loss_bound: float
    gamma: float
    seed_budget: float
    secure_length: bool

    @property
    def lengths(self) -> list:
        return [p.L for p in self.rounds] + [self.final_length]

    @property
    def final_length(self) -> int:
        return self.rounds[-1].output_bits

    @property
    def vacuous(self) -> bool:
        return self.rate_loss_bound >= 1

    @property
    def seed_within_table(self) -> bool:
        return self.total_seed_bits <= self.r ** 3

    @property
    def bias_bound(self) -> float | None:
        if any(p.bias is None for p in self.rounds):
            return None
        return float(sum(p.bias for p in self.rounds))

    def to_dict(self) -> dict:
        def big(x):
            return str(x) if x.bit_length() > 63 else x
        return {
            "r": self.r, "f": self.f,
            "lengths_log2": [math.log2(x) if x.bit_length() < 1000 else x.bit_length() - 1
                             for x in self.lengths],
            "final_length": big(self.final_length),
            "total_seed_bits": self.total_seed_bits,
            "seed_bits_exact": self.seed_bits_exact,
            "seed_budget": self.seed_budget,
            "seed_within_r_cubed": self.seed_within_table,
            "rate_loss_bound": self.rate_loss_bound,
            "gamma": self.gamma,
            "vacuous": self.vacuous,
            "secure_length": self.secure_length,
            "bias_bound": self.bias_bound,
            "rounds": [p.to_dict() for p in self.rounds],
        }


def _rounds(L: int, r: int, f: int, strict: bool, extra_seed_bits: int, with_bias: bool):
    rounds = []
    cur = L
    for _ in range(f):
        p = samp_params(cur, r, strict=strict, extra_seed_bits=extra_seed_bits, with_bias=with_bias)
        rounds.append(p)
        cur = p.output_bits
    if strict and cur < r ** 4:
        raise ParameterError(f"final length {cur} is below r^4={r ** 4}; use fewer rounds")
    return rounds


def plan(r: int, L: int | None = None, f: int | None = None, auto: bool = False,
         allow_insecure: bool = False, extra_seed_bits: int = 0) -> SampPlan:
    """Plan the rounds of iterated sampling.

    Parameters
    ----------
    r : int
        Blocks sampled per round, at least 16.
    L : int, optional
        Input length in bits. With ``auto=True`` it is ``2**r``.
    f : int, optional
        Number of rounds. Defaults to the most rounds keeping the final
        length at or above ``r**4``.
    allow_insecure : bool
        Test mode: skip the ``r**4`` length requirement.

    Raises
    ------
    ParameterError
        If no round is feasible.
    """
    if r < MIN_R and not allow_insecure:
        raise ParameterError(f"r must be at least {MIN_R}")
    if auto:
        L = 1 << r
    if L is None:
        raise ParameterError("give L or auto=True")
    with_bias = L.bit_length() <= 4096
    searched = []
    if f is None:
        cur = L
        while True:
            try:
                p = samp_params(cur, r, strict=True, with_bias=False)
            except ParameterError:
                break
            if p.output_bits < r ** 4:
                break
            searched.append(p)
            cur = p.output_bits
        f = len(searched)
        if f == 0:
            raise ParameterError(f"no round is feasible for L={L}, r={r}")
    if searched and not with_bias and not extra_seed_bits:
        rounds = searched
    else:
        rounds = _rounds(L, r, f, strict=not allow_insecure, extra_seed_bits=extra_seed_bits,
                         with_bias=with_bias)
    total = sum(p.seed_bits + p.extra_seed_bits for p in rounds)
    return SampPlan(
        r=r, f=f, rounds=rounds, total_seed_bits=total,
        seed_bits_exact=all(p.seed_bits_exact for p in rounds),
        rate_loss_bound=rate_loss_bound(r, f), gamma=smoothing_bound(r, f),
        seed_budget=f * r * math.log2(L) if L.bit_length() < 1000 else f * r * (L.bit_length() - 1),
        secure_length=rounds[-1].output_bits >= r ** 4,
    )


# --------------------------------------------------------------------------
# streaming execution
# --------------------------------------------------------------------------

class MemoryMeter:
    """Tracks bits held in named working buffers."""

    def __init__(self):
        self.current = {}
        self.peak = 0

    def hold(self, name: str, bits: int):
        self.current[name] = int(bits)
        self.peak = max(self.peak, sum(self.current.values()))

    def release(self, name: str):
        self.current.pop(name, None)


class BitSource:
    """Sequential bit reader over bytes, a bit array, a path or a binary file object.

    Reads must move forward. Seekable inputs skip unneeded bytes;
    streams read and discard them in bounded pieces.
    """

    def __init__(self, obj, length_bits: int | None = None, seek: bool = True):
        self._own = False
        if isinstance(obj, np.ndarray):
            bits = obj.astype(np.uint8).reshape(-1)
            obj = np.packbits(bits, bitorder="little").tobytes()
            length_bits = bits.size if length_bits is None else length_bits
        if isinstance(obj, (bytes, bytearray, memoryview)):
            self._fh = io.BytesIO(bytes(obj))
            total = len(obj) * 8
        elif isinstance(obj, (str, os.PathLike)):
            self._fh = open(obj, "rb")
            self._own = True
            total = os.path.getsize(obj) * 8
        else:
            self._fh = obj
            total = None
        if length_bits is None:
            if total is None:
                raise ValueError("length_bits is required for streams of unknown size")
            length_bits = total
        elif total is not None and length_bits > total:
            raise ValueError(f"input holds {total} bits, fewer than length_bits={length_bits}")
        self.length_bits = int(length_bits)
        self.seek = seek and getattr(self._fh, "seekable", lambda: False)()
        self.byte_pos = 0
        self.bytes_read = 0
        self._tail = None

    def close(self):
        if self._own:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _skip_to(self, byte: int, piece: int, meter: MemoryMeter | None):
        if self.seek:
            self._fh.seek(byte)
        else:
            while self.byte_pos < byte:
                got = self._fh.read(min(piece, byte - self.byte_pos))
                if not got:
                    raise EOFError("input ended early")
                if meter:
                    meter.hold("discard", 8 * len(got))
                self.bytes_read += len(got)
                self.byte_pos += len(got)
            if meter:
                meter.release("discard")
        self.byte_pos = byte

    def _read_bytes(self, first: int, last: int, piece: int, meter) -> bytes:
        head = b""
        if self._tail is not None and self._tail[0] == first:
            head, first = self._tail[1], first + 1
        elif first < self.byte_pos:
            raise ValueError("reads must move forward")
        if first < last:
            if first != self.byte_pos:
                self._skip_to(first, piece, meter)
            raw = self._fh.read(last - first)
            if len(raw) != last - first:
                raise EOFError("input ended early")
            self.bytes_read += len(raw)
            self.byte_pos = last
            head += raw
        self._tail = (last - 1, head[-1:])
        return head

    def read_into(self, start: int, nbits: int, out: np.ndarray, offset: int, piece_bits: int,
                  meter: MemoryMeter | None = None):
        """Copy bits ``start .. start+nbits`` into ``out[offset:]``."""
        if start + nbits > self.length_bits:
            raise ValueError("read past the end of the input")
        piece_bytes = max(1, piece_bits // 8)
        done = 0
        while done < nbits:
            a = start + done
            b = min(start + nbits, (a // 8 + piece_bytes) * 8)
            first, last = a // 8, (b + 7) // 8
            raw = self._read_bytes(first, last, piece_bytes, meter)
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
            if meter:
                meter.hold("read", 8 * len(raw) + 8 * bits.size)
            lo = a - 8 * first
            out[offset + done: offset + done + (b - a)] = bits[lo:lo + (b - a)]
            done += b - a
        if meter:
            meter.release("read")


def compose_positions(rounds: list, subsets: list) -> list[tuple[int, int]]:
    """Map the final output back to ``(start, length)`` intervals of the original input.

    Intervals come out in ascending order and adjacent ones are merged.
    """
    intervals = [(0, rounds[-1].output_bits)]
    for p, s in zip(reversed(rounds), reversed(subsets)):
        t = p.t
        new = []
        for a, ln in intervals:
            while ln > 0:
                k, o = divmod(a, t)
                take = min(ln, t - o)
                start = s[k] * t + o
                if new and new[-1][0] + new[-1][1] == start:
                    new[-1] = (new[-1][0], new[-1][1] + take)
                else:
                    new.append((start, take))
                a += take
                ln -= take
        intervals = new
    return intervals


@dataclass
class ResampResult:
    bits: np.ndarray
    plan: SampPlan
    subsets: list
    seed_bits_used: int
    intervals: int
    peak_memory_bits: int
    memory_bound_bits: float
    bytes_read: int

    @property
    def memory_ok(self) -> bool:
        return self.peak_memory_bits <= self.memory_bound_bits

    def report(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "output_bits": int(self.bits.size),
            "seed_bits_used": self.seed_bits_used,
            "bias_bound": self.plan.bias_bound,
            "intervals": self.intervals,
            "peak_memory_bits": self.peak_memory_bits,
            "memory_bound_bits": self.memory_bound_bits,
            "bytes_read": self.bytes_read,
        }


def _draw_subsets(rounds, seed: SeedReader):
    subsets = []
    for p in rounds:
        idx = seed.read_int(p.seed_bits + p.extra_seed_bits) % comb(p.n, p.r)
        subsets.append(subset_unrank(idx, p.n, p.r))
    return subsets


def resamp(z, r: int, f: int, seed: SeedReader, length_bits: int | None = None,
           allow_insecure: bool = False, extra_seed_bits: int = 0, seek: bool = True,
           block_bits: int | None = None) -> ResampResult:
    """Iterated block sampling in one forward pass over `z`.

    All subsets are drawn and composed into source intervals before `z`
    is read, so intermediate strings are never stored.

    Parameters
    ----------
    z : bytes, bit array, path or binary file object
    seed : SeedReader
        Round i consumes ``ceil(log2 C(n_i, r))`` bits plus
        `extra_seed_bits`.
    block_bits : int, optional
        Single-round block size override, test mode only.
    """
    with BitSource(z, length_bits, seek=seek) as src:
        L = src.length_bits
        if block_bits is not None:
            if f != 1 or not allow_insecure:
                raise ParameterError("block size overrides need f=1 and allow_insecure")
            rounds = [samp_params(L, r, strict=False, block_bits=block_bits,
                                  extra_seed_bits=extra_seed_bits)]
            pl = SampPlan(r, 1, rounds, rounds[0].seed_bits + extra_seed_bits, True,
                          rate_loss_bound(r, 1), smoothing_bound(r, 1), r * math.log2(L), False)
        else:
            pl = plan(r, L=L, f=f, allow_insecure=allow_insecure, extra_seed_bits=extra_seed_bits)
        rounds = pl.rounds
        start_used = seed.consumed
        subsets = _draw_subsets(rounds, seed)
        used = seed.consumed - start_used

        meter = MemoryMeter()
        meter.hold("subsets", sum(p.r * max(1, p.n.bit_length()) for p in rounds))
        intervals = compose_positions(rounds, subsets)
        meter.hold("intervals", 2 * 64 * len(intervals))
        out_len = pl.final_length
        out = np.empty(out_len, dtype=np.uint8)
        meter.hold("output", 8 * out_len)
        piece = max(512, out_len // 8)
        pos = 0
        for a, ln in intervals:
            src.read_into(a, ln, out, pos, piece, meter)
            pos += ln
        n_max = max(p.n for p in rounds)
        bound = MEMORY_CONSTANT * (out_len + pl.f * r * math.log2(max(2, n_max)))
        bytes_read = src.bytes_read
    return ResampResult(out, pl, subsets, used, len(intervals), meter.peak, bound, bytes_read)


def samp(z, r: int, seed: SeedReader, **kw) -> ResampResult:
    """One sampling round."""
    return resamp(z, r, 1, seed, **kw)


def resamp_materializing(z_bits, r: int, f: int, seed: SeedReader, allow_insecure: bool = False,
                         extra_seed_bits: int = 0, block_bits: int | None = None) -> np.ndarray:
    """Reference implementation holding every intermediate string in memory."""
    cur = np.asarray(z_bits, dtype=np.uint8).reshape(-1)
    for _ in range(f):
        p = samp_params(cur.size, r, strict=not allow_insecure, block_bits=block_bits,
                        extra_seed_bits=extra_seed_bits, with_bias=False)
        idx = seed.read_int(p.seed_bits + extra_seed_bits) % comb(p.n, p.r)
        chosen = subset_unrank(idx, p.n, p.r)
        blocks = cur[: p.n * p.t].reshape(p.n, p.t)
        cur = blocks[chosen].reshape(-1)
    return cur


# --------------------------------------------------------------------------
# key expansion
# --------------------------------------------------------------------------

class NoKeyError(ValueError):
    pass


def expand_key(z, r: int, f: int, eps: float, rate_assumed: float, seed: SeedReader,
               hash_seed: SeedReader | None = None, assume_loss: float | None = None,
               allow_insecure: bool = False, length_bits: int | None = None,
               extra_seed_bits: int = 0) -> tuple[KeyMaterial, dict]:
    """Sample a substring, then hash it to a key.

    The entropy assumed for the substring is
    ``(rate_assumed - loss) * L_final`` with ``loss`` the rate-loss bound,
    unless `assume_loss` replaces it (demo mode, flagged insecure). Half
    of `eps` goes to hashing; the sampling smoothing is compared against
    the other half.

    Raises
    ------
    NoKeyError
        If no key bits remain after the loss.
    """
    if not 0 < rate_assumed <= 1:
        raise ValueError("rate_assumed must lie in (0, 1]")
    res = resamp(z, r, f, seed, length_bits=length_bits, allow_insecure=allow_insecure,
                 extra_seed_bits=extra_seed_bits)
    pl = res.plan
    loss = pl.rate_loss_bound if assume_loss is None else float(assume_loss)
    k = max(0.0, (rate_assumed - loss) * pl.final_length)
    ell = extractable_length(k, eps / 2)
    if ell < 1:
        raise NoKeyError(
            f"parameters give no extractable key: rate {rate_assumed} minus loss {loss:.4g} "
            f"leaves k={k:.4g} bits")
    hs = seed if hash_seed is None else hash_seed
    need = pl.final_length + ell - 1
    hash_bits = hs.read_bits(need)
    key = privacy_amplify(res.bits, hash_bits, k, eps / 2, source_id="sampled substring",
                          seed_id="hash seed")
    insecure = assume_loss is not None or allow_insecure or not pl.secure_length
    report = res.report()
    report.update({
        "k_assumed": k,
        "rate_assumed": rate_assumed,
        "loss_used": loss,
        "rate_loss_bound": pl.rate_loss_bound,
        "vacuous_flag": pl.vacuous,
        "insecure": insecure,
        "eps": eps,
        "sampling_smoothing": pl.gamma,
        "sampling_within_budget": pl.gamma <= eps / 2,
        "hash_seed_bits_used": need,
        "key_bits": len(key),
        "key_hex": key.hex,
    })
    key.provenance.update({"sampling_seed_bits": res.seed_bits_used, "r": r, "f": f,
                           "insecure": insecure})
    return key, report
