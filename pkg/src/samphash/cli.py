"""Command-line front end. Every command prints one JSON report on stdout.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage
or parameter errors and 3 for I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import REPORT_FORMAT, __version__
from .bsm import (
    NoKeyError,
    ParameterError,
    SeedExhaustedError,
    SeedReader,
    compose_positions,
    expand_key,
    plan,
    resamp,
)
from .extractor import InsufficientEntropyError, ToeplitzSeed, bits_to_bytes, bytes_to_bits, toeplitz_hash
from .sampling import estimate_sampler, trial_generator
from .splitting import at_least, at_most
from .verify import SUITES, run_suite

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _clean(x):
    """Make a value JSON-safe: infinities become strings, numpy scalars become Python numbers."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def make_report(command: str, inputs: dict, results: dict, checks) -> dict:
    return _clean({
        "command": command,
        "inputs": inputs,
        "results": results,
        "checks": [c.to_dict() for c in checks],
        "version": {"tool": __version__, "format": REPORT_FORMAT},
    })


def _inputs(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}


def _read_hex_file(path: str) -> str:
    with open(path, encoding="ascii") as fh:
        return "".join(fh.read().split())


def _derived_seed(seed: int, nbits: int) -> SeedReader:
    """Seed bits drawn from the ``--seed`` generator when no seed file is given."""
    nbytes = (nbits + 7) // 8
    data = trial_generator(seed, 0).bytes(nbytes)
    return SeedReader(data, nbits)


def _seed_reader(args, nbits: int) -> tuple[SeedReader, str]:
    if getattr(args, "seed_file", None):
        return SeedReader(_read_hex_file(args.seed_file)), f"file:{args.seed_file}"
    if getattr(args, "seed_hex", None):
        return SeedReader(args.seed_hex), "hex argument"
    return _derived_seed(args.seed, nbits), f"generator:{args.seed}"


def _input_length(args) -> int:
    if args.length_bits is not None:
        return args.length_bits
    return 8 * os.path.getsize(args.input)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_verify(args):
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    checks = run_suite(args.suite, args.seed, args.instances)
    results = {"suite": args.suite, "instances": args.instances, "checks_run": len(checks)}
    figures = []
    if args.plot_dir and checks:
        from . import plots
        figures.append(plots.check_slacks([c.to_dict() for c in checks], args.plot_dir,
                                          f"verify_{args.suite}.png"))
    results["figures"] = figures
    return results, checks


def cmd_plan(args):
    if not args.auto and args.length_bits is None and args.log2_length is None:
        raise UsageError("give --auto, --length-bits or --log2-length")
    L = args.length_bits if args.length_bits is not None else (
        1 << args.log2_length if args.log2_length is not None else None)
    pl = plan(args.r, L=L, f=args.f, auto=args.auto, allow_insecure=args.allow_insecure,
              extra_seed_bits=args.extra_seed_bits)
    d = pl.to_dict()
    checks = [at_most("seed bits within f r log2 L", pl.total_seed_bits, pl.seed_budget, 0.0)]
    if args.auto:
        checks.append(at_most("seed bits within r^3", pl.total_seed_bits, args.r ** 3, 0.0))
    figures = []
    if args.plot_dir:
        from . import plots
        figures.append(plots.plan_rounds(d, args.plot_dir))
    d["figures"] = figures
    return d, checks


def _memory_and_seed_checks(res) -> list:
    pl = res.plan
    return [
        at_most("seed bits within f r log2 L", res.seed_bits_used, pl.seed_budget, 0.0),
        at_most("seed bits equal the per-round sum", abs(res.seed_bits_used - pl.total_seed_bits), 0.0, 0.0),
        at_most("peak memory within bound", res.peak_memory_bits, res.memory_bound_bits, 0.0),
    ]


def cmd_sample(args):
    L = _input_length(args)
    pl = plan(args.r, L=L, f=args.f, allow_insecure=args.allow_insecure,
              extra_seed_bits=args.extra_seed_bits)
    seed, source = _seed_reader(args, pl.total_seed_bits)
    res = resamp(args.input, args.r, args.f, seed, length_bits=args.length_bits,
                 allow_insecure=args.allow_insecure, extra_seed_bits=args.extra_seed_bits,
                 seek=not args.no_seek)
    packed = bits_to_bytes(res.bits)
    results = res.report()
    results.update({
        "seed_source": source,
        "output_sha256": hashlib.sha256(packed).hexdigest(),
        "subsets": res.subsets if sum(len(s) for s in res.subsets) <= 4096 else None,
    })
    if res.bits.size <= 4096:
        results["output_hex"] = packed.hex()
    if args.output_bits:
        with open(args.output_bits, "wb") as fh:
            fh.write(packed)
    figures = []
    if args.plot_dir:
        from . import plots
        iv = compose_positions(res.plan.rounds, res.subsets)
        figures.append(plots.sample_map([a for a, _ in iv], [b for _, b in iv], L, args.plot_dir))
    results["figures"] = figures
    return results, _memory_and_seed_checks(res)


def cmd_expand_key(args):
    L = _input_length(args)
    pl = plan(args.r, L=L, f=args.f, allow_insecure=args.allow_insecure,
              extra_seed_bits=args.extra_seed_bits)
    hash_seed = None
    if args.hash_seed_file:
        hash_seed = SeedReader(_read_hex_file(args.hash_seed_file))
        need = pl.total_seed_bits
    else:
        need = pl.total_seed_bits + 2 * pl.final_length
    seed, source = _seed_reader(args, need)
    key, rep = expand_key(args.input, args.r, args.f, args.eps, args.rate, seed, hash_seed=hash_seed,
                          assume_loss=args.assume_loss, allow_insecure=args.allow_insecure,
                          length_bits=args.length_bits, extra_seed_bits=args.extra_seed_bits)
    rep["seed_source"] = source
    rep["provenance"] = key.provenance
    if args.key_out:
        with open(args.key_out, "w", encoding="ascii") as fh:
            fh.write(key.hex + "\n")
    checks = [
        at_most("seed bits within f r log2 L", rep["seed_bits_used"], rep["plan"]["seed_budget"], 0.0),
        at_most("peak memory within bound", rep["peak_memory_bits"], rep["memory_bound_bits"], 0.0),
        at_least("key bits", rep["key_bits"], 1, 0.0),
    ]
    figures = []
    if args.plot_dir:
        from . import plots
        figures.append(plots.key_pipeline(rep, args.plot_dir))
    rep["figures"] = figures
    return rep, checks


def _read_beta(path: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows:
        raise UsageError(f"{path} holds no rows")
    if len({len(r) for r in rows}) != 1:
        raise UsageError("all rows of the beta file need the same length")
    return np.array(rows)


def cmd_estimate_sampler(args):
    if args.beta_file:
        beta = _read_beta(args.beta_file)
        if args.n is not None and beta.shape[1] != args.n:
            raise UsageError(f"beta rows have {beta.shape[1]} entries, --n is {args.n}")
    else:
        if args.n is None:
            raise UsageError("give --n or --beta-file")
        beta = np.random.default_rng(args.seed).uniform(size=(args.rows, args.n))
    res = estimate_sampler(beta, args.r, args.xi, args.trials, seed=args.seed)
    h = res["hoeffding_bound"]
    # four standard errors of a Bernoulli mean plus one count of slack
    allowance = 4 * math.sqrt(max(h * (1 - h), 0.0) / args.trials) + 1 / args.trials
    checks = [at_most("empirical tail within Hoeffding bound", res["empirical_tail"], h + allowance, 0.0)]
    if "exact_tail" in res:
        checks.append(at_most("exact tail within Hoeffding bound", res["exact_tail"], h, 1e-12))
    figures = []
    if args.plot_dir:
        from . import plots
        figures.append(plots.sampler_tails(res, args.plot_dir))
    res["figures"] = figures
    res["rows"] = int(beta.shape[0])
    res["n"] = int(beta.shape[1])
    return res, checks


def cmd_hash(args):
    with open(args.input, "rb") as fh:
        data = fh.read()
    nin = 8 * len(data) if args.length_bits is None else args.length_bits
    x = bytes_to_bits(data, nin)
    text = _read_hex_file(args.seed[1:]) if args.seed.startswith("@") else args.seed
    need = nin + args.lout - 1
    raw = bytes.fromhex("".join(text.split()))
    if 8 * len(raw) < need:
        raise UsageError(f"seed holds {8 * len(raw)} bits, need nin + lout - 1 = {need}")
    seed = ToeplitzSeed(bytes_to_bits(raw, need))
    out = toeplitz_hash(x, seed, args.lout, workers=args.workers)
    results = {"input_bits": nin, "lout": args.lout, "seed_bits_used": need,
               "key_hex": bits_to_bytes(out).hex(), "figures": []}
    return results, []


# --------------------------------------------------------------------------

def _common(p, seed_help="integer seed for all randomness (default 0)"):
    p.add_argument("--seed", type=int, default=0, help=seed_help)
    p.add_argument("--plot-dir", default=None, help="write figures into this directory")
    p.add_argument("--out", default=None, help="also write the report to this file")


def _stream_args(p):
    p.add_argument("--in", dest="input", required=True, help="randomizer file or stream")
    p.add_argument("--r", type=int, required=True, help="blocks sampled per round")
    p.add_argument("--f", type=int, default=1, help="rounds")
    p.add_argument("--length-bits", type=int, default=None, help="use only this many input bits")
    p.add_argument("--seed-file", default=None, help="hex file with the sampling seed")
    p.add_argument("--seed-hex", default=None, help="sampling seed as hex text")
    p.add_argument("--extra-seed-bits", type=int, default=0,
                   help="extra seed bits per round to shrink the modular bias")
    p.add_argument("--allow-insecure", action="store_true",
                   help="test mode: allow final lengths below r^4")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="samphash", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"samphash {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run a randomized invariant suite")
    p.add_argument("suite", help="one of: " + ", ".join(SUITES))
    p.add_argument("--instances", type=int, default=20)
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plan", help="plan sampling rounds")
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--auto", action="store_true", help="randomizer of 2^r bits")
    p.add_argument("--length-bits", type=int, default=None)
    p.add_argument("--log2-length", type=int, default=None)
    p.add_argument("--f", type=int, default=None, help="rounds (default: as many as possible)")
    p.add_argument("--extra-seed-bits", type=int, default=0)
    p.add_argument("--allow-insecure", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sample", help="iterated block sampling of a randomizer")
    _stream_args(p)
    p.add_argument("--no-seek", action="store_true", help="read the input strictly sequentially")
    p.add_argument("--output-bits", default=None, help="write the sampled bits (packed) here")
    _common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("expand-key", help="sample then hash to a key")
    _stream_args(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--rate", type=float, required=True, help="assumed min-entropy rate of the input")
    p.add_argument("--hash-seed-file", default=None, help="hex file with the hashing seed")
    p.add_argument("--assume-loss", type=float, default=None,
                   help="demo mode: replace the rate-loss bound (marks the key insecure)")
    p.add_argument("--key-out", default=None)
    _common(p)
    p.set_defaults(func=cmd_expand_key)

    p = sub.add_parser("estimate-sampler", help="Monte Carlo failure rate of the subset sampler")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--beta-file", default=None, help="CSV with one row of values in [0,1] per line")
    p.add_argument("--rows", type=int, default=8, help="random rows when no beta file is given")
    _common(p)
    p.set_defaults(func=cmd_estimate_sampler)

    p = sub.add_parser("hash", help="Toeplitz hash of a file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--seed", required=True, help="hex seed, or @file")
    p.add_argument("--lout", type=int, required=True)
    p.add_argument("--length-bits", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plot-dir", default=None, help="accepted for symmetry; no figures")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_hash)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        results, checks = args.func(args)
    except UsageError as e:
        print(f"samphash: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, NoKeyError, InsufficientEntropyError, SeedExhaustedError, ValueError, KeyError) as e:
        print(f"samphash: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"samphash: {e}", file=sys.stderr)
        return EXIT_IO
    report = make_report(args.command, _inputs(args), results, checks)
    text = json.dumps(report, indent=2, allow_nan=False) + "\n"
    sys.stdout.write(text)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as e:
            print(f"samphash: {e}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
