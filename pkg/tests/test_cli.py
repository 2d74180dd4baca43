import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from samphash.cli import main, make_report
from samphash.splitting import Check

DATA = Path(__file__).parent / "data"
SCHEMA = json.loads(resources.files("samphash").joinpath("schema/report.schema.json").read_text())
DOCS_SCHEMA = Path(__file__).parents[1] / "docs" / "report.schema.json"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    report = json.loads(out) if out.strip() else None
    if report is not None:
        jsonschema.validate(report, SCHEMA)
    return code, report, err


def test_shipped_schemas_agree():
    assert json.loads(DOCS_SCHEMA.read_text()) == SCHEMA
    jsonschema.Draft202012Validator.check_schema(SCHEMA)


def test_report_records_bound_and_observed():
    rep = make_report("plan", {}, {"v": float("inf")}, [Check("c", 1.0, float("inf"), True)])
    assert rep["results"]["v"] == "inf"
    assert rep["checks"] == [{"name": "c", "bound": 1.0, "observed": "inf", "pass": True, "sense": ">="}]
    jsonschema.validate(rep, SCHEMA)


# ---------------------------------------------------------------- verify

def test_verify_empty_run(capsys):
    code, rep, _ = run(capsys, "verify", "entropy-rules", "--instances", 0)
    assert code == 0 and rep["checks"] == [] and rep["results"]["checks_run"] == 0


@pytest.mark.parametrize("suite", ["entropy-rules", "splitting", "recombining", "sampling-theorem", "appendix"])
def test_verify_suites_pass(capsys, suite):
    code, rep, _ = run(capsys, "verify", suite, "--instances", 2, "--seed", 7)
    assert code == 0
    assert rep["checks"] and all(c["pass"] for c in rep["checks"])
    assert rep["version"] == {"tool": "0.1.0", "format": "1"}


def test_verify_unknown_suite(capsys):
    code, rep, err = run(capsys, "verify", "nope")
    assert code == 2 and rep is None and "unknown suite" in err


def test_verify_figure_and_determinism(capsys, tmp_path):
    reports, pngs = [], []
    for k in range(2):
        d = tmp_path / f"p{k}"
        code, rep, _ = run(capsys, "verify", "appendix", "--instances", 3, "--plot-dir", d)
        assert code == 0 and rep["results"]["figures"] == ["verify_appendix.png"]
        rep["inputs"].pop("plot_dir")
        reports.append(rep)
        pngs.append((d / "verify_appendix.png").read_bytes())
    assert reports[0] == reports[1]
    assert pngs[0] == pngs[1] and pngs[0][:8] == b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------- plan

def test_plan_auto_is_flagged_vacuous(capsys, tmp_path):
    code, rep, _ = run(capsys, "plan", "--r", 64, "--auto", "--plot-dir", tmp_path)
    res = rep["results"]
    assert code == 0
    assert res["f"] == 3 and res["vacuous"] and res["total_seed_bits"] < 12288
    assert res["rate_loss_bound"] == pytest.approx(31.82, abs=0.01)
    assert (tmp_path / "plan_rounds.png").exists()
    assert [c["name"] for c in rep["checks"]] == ["seed bits within f r log2 L", "seed bits within r^3"]


def test_plan_by_log_length(capsys):
    code, rep, _ = run(capsys, "plan", "--r", 16, "--log2-length", 40)
    assert code == 0 and rep["results"]["lengths_log2"][0] == 40


def test_plan_usage_errors(capsys):
    assert run(capsys, "plan", "--r", 64)[0] == 2
    assert run(capsys, "plan", "--r", 8, "--auto")[0] == 2
    with pytest.raises(SystemExit) as e:
        main(["plan"])
    assert e.value.code == 2
    capsys.readouterr()


# ---------------------------------------------------------------- sample

def test_sample_golden_and_figure(capsys, randomizer_64k, tmp_path):
    gold = json.loads((DATA / "samp_64k.json").read_text())
    out_bits = tmp_path / "bits.bin"
    code, rep, _ = run(capsys, "sample", "--in", randomizer_64k, "--r", 16, "--allow-insecure",
                       "--plot-dir", tmp_path, "--output-bits", out_bits)
    assert code == 0
    res = rep["results"]
    assert res["output_sha256"] == gold["results"]["output_sha256"]
    assert res["subsets"] == gold["results"]["subsets"]
    assert res["figures"] == ["sample_positions.png"]
    assert out_bits.stat().st_size == (res["output_bits"] + 7) // 8


def test_sample_no_seek_matches(capsys, randomizer_64k):
    a = run(capsys, "sample", "--in", randomizer_64k, "--r", 16, "--allow-insecure")[1]
    b = run(capsys, "sample", "--in", randomizer_64k, "--r", 16, "--allow-insecure", "--no-seek")[1]
    assert a["results"]["output_sha256"] == b["results"]["output_sha256"]
    assert b["results"]["bytes_read"] >= a["results"]["bytes_read"]


def test_sample_seed_sources(capsys, randomizer_64k, tmp_path):
    seed_file = tmp_path / "seed.hex"
    seed_file.write_text("5a" * 20 + "\n")
    a = run(capsys, "sample", "--in", randomizer_64k, "--r", 16, "--allow-insecure", "--seed-file", seed_file)[1]
    b = run(capsys, "sample", "--in", randomizer_64k, "--r", 16, "--allow-insecure", "--seed-hex", "5a" * 20)[1]
    assert a["results"]["output_sha256"] == b["results"]["output_sha256"]
    assert a["results"]["seed_source"].startswith("file:")


def test_sample_errors(capsys, randomizer_64k, tmp_path):
    # too short for r^4 without the test flag
    assert run(capsys, "sample", "--in", randomizer_64k, "--r", 16)[0] == 2
    assert run(capsys, "sample", "--in", randomizer_64k, "--r", 16, "--allow-insecure", "--seed-hex", "ff")[0] == 2
    assert run(capsys, "sample", "--in", tmp_path / "missing.bin", "--r", 16)[0] == 3


def test_small_sample_prints_bits(capsys, tmp_path):
    z = tmp_path / "z.bin"
    z.write_bytes(bytes(range(256)) * 4)
    code, rep, _ = run(capsys, "sample", "--in", z, "--r", 4, "--allow-insecure")
    assert code == 0 and "output_hex" in rep["results"]


# ---------------------------------------------------------------- expand-key

def test_expand_key_golden(capsys, randomizer_1m, tmp_path):
    gold = json.loads((DATA / "expand_key_1m.json").read_text())
    key_out = tmp_path / "key.hex"
    code, rep, _ = run(capsys, "expand-key", "--in", randomizer_1m, "--r", 16, "--f", 2, "--allow-insecure",
                       "--eps", 0.01, "--rate", 1.0, "--assume-loss", 0.5, "--key-out", key_out)
    assert code == 0
    assert rep["results"] == gold["results"]
    assert rep["checks"] == gold["checks"]
    assert key_out.read_text().strip() == gold["results"]["key_hex"]


def test_expand_key_is_byte_identical(capsys, randomizer_1m, tmp_path):
    args = ["expand-key", "--in", randomizer_1m, "--r", 16, "--allow-insecure", "--eps", 0.1,
            "--rate", 0.9, "--assume-loss", 0.4, "--plot-dir", tmp_path]
    main([str(a) for a in args])
    first = capsys.readouterr().out
    png = (tmp_path / "key_lengths.png").read_bytes()
    main([str(a) for a in args])
    assert capsys.readouterr().out == first
    assert (tmp_path / "key_lengths.png").read_bytes() == png


def test_expand_key_hash_seed_file(capsys, randomizer_1m, tmp_path):
    hs = tmp_path / "hash.hex"
    hs.write_text("c3" * 40000)
    code, rep, _ = run(capsys, "expand-key", "--in", randomizer_1m, "--r", 16, "--allow-insecure",
                       "--eps", 0.1, "--rate", 1.0, "--assume-loss", 0.5, "--hash-seed-file", hs)
    assert code == 0 and rep["results"]["key_bits"] >= 1


def test_expand_key_without_entropy(capsys, randomizer_1m):
    code, _, err = run(capsys, "expand-key", "--in", randomizer_1m, "--r", 16, "--allow-insecure",
                       "--eps", 0.01, "--rate", 1.0)
    assert code == 2 and "no extractable key" in err


# ---------------------------------------------------------------- estimate-sampler

def test_estimate_sampler_random_rows(capsys, tmp_path):
    code, rep, _ = run(capsys, "estimate-sampler", "--n", 40, "--r", 10, "--xi", 0.3, "--trials", 400,
                       "--plot-dir", tmp_path)
    assert code == 0 and (tmp_path / "sampler_tails.png").exists()
    assert rep["results"]["rows"] == 8 and "exact_tail" not in rep["results"]


def test_estimate_sampler_binary_file(capsys, tmp_path):
    f = tmp_path / "beta.csv"
    rows = np.random.default_rng(3).integers(0, 2, (4, 12))
    f.write_text("# binary rows\n" + "\n".join(",".join(str(v) for v in r) for r in rows) + "\n")
    code, rep, _ = run(capsys, "estimate-sampler", "--beta-file", f, "--r", 4, "--xi", 0.25, "--trials", 500)
    assert code == 0
    assert len(rep["checks"]) == 2 and rep["results"]["exact_tail"] <= rep["results"]["hoeffding_bound"]


def test_estimate_sampler_errors(capsys, tmp_path):
    assert run(capsys, "estimate-sampler", "--r", 4, "--xi", 0.2)[0] == 2
    f = tmp_path / "bad.csv"
    f.write_text("0.1,0.2\n0.3\n")
    assert run(capsys, "estimate-sampler", "--beta-file", f, "--r", 1, "--xi", 0.2)[0] == 2
    f.write_text("1.5,0.2\n")
    assert run(capsys, "estimate-sampler", "--beta-file", f, "--r", 1, "--xi", 0.2)[0] == 2


# ---------------------------------------------------------------- hash

def test_hash_of_zero_input(capsys, tmp_path):
    z = tmp_path / "zeros.bin"
    z.write_bytes(b"\x00")
    code, rep, _ = run(capsys, "hash", "--in", z, "--lout", 8, "--seed", "ab" * 2)
    assert code == 0 and rep["results"]["key_hex"] == "00"


def test_hash_seed_from_file_and_threads(capsys, tmp_path):
    x = tmp_path / "x.bin"
    x.write_bytes(np.random.default_rng(1).bytes(1 << 16))
    s = tmp_path / "s.hex"
    s.write_text(np.random.default_rng(2).bytes((1 << 16) + 64).hex())
    a = run(capsys, "hash", "--in", x, "--lout", 300, "--seed", f"@{s}")[1]
    b = run(capsys, "hash", "--in", x, "--lout", 300, "--seed", f"@{s}", "--workers", 3)[1]
    assert a["results"]["key_hex"] == b["results"]["key_hex"]
    assert len(a["results"]["key_hex"]) == 2 * ((300 + 7) // 8)


def test_hash_short_seed(capsys, tmp_path):
    z = tmp_path / "z.bin"
    z.write_bytes(b"\x01\x02")
    code, _, err = run(capsys, "hash", "--in", z, "--lout", 8, "--seed", "ff")
    assert code == 2 and "need" in err


def test_failed_check_exits_one(capsys, monkeypatch):
    import samphash.cli as cli
    monkeypatch.setattr(cli, "run_suite", lambda *a: [Check("forced", 1.0, 0.0, False)])
    code, rep, _ = run(capsys, "verify", "appendix", "--instances", 1)
    assert code == 1 and rep["checks"][0]["pass"] is False


def test_unwritable_report(capsys, tmp_path):
    code = main(["plan", "--r", "64", "--auto", "--out", str(tmp_path / "no" / "such" / "r.json")])
    capsys.readouterr()
    assert code == 3
