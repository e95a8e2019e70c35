import csv
import io
import threading
import warnings

import pytest

from detlab import cli
from detlab.config import ConfigError, env_tolerances, loads
from detlab.flags import ConvergenceFlag, TruncationFlag, collect_flags, raise_flag
from detlab.reports import CSV_COLUMNS, IdentityReport, RunReport, dumps_csv, dumps_record, emit, loads_record
from detlab.runner import convergence, run

FREE = """
experiment: dirichlet-chain
geometry: disk
potential: {zero: true}
z_list: [-1, "-1+1j"]
resolution: {n_radial: 16, mode_cutoff: 4}
"""

RANK1 = """
experiment: neumann-chain
geometry: ball-radial
potential:
  couplings: [1.0]
  left:
    - envelope: 1.0
      modes: {0: [1.0, 0.5]}
z_list: [-1, -2, "-1+0.5j"]
resolution: {n_radial: 24}
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_is_byte_identical_and_job_independent(tmp_path):
    cfg = write(tmp_path, "c.yaml", RANK1)
    texts = []
    for jobs in ("1", "1", "3"):
        out = tmp_path / f"o{jobs}{len(texts)}.json"
        assert cli.main(["run", "--config", cfg, "--format", "record", "--jobs", jobs, "--out", str(out)]) == 0
        texts.append(out.read_bytes())
    assert texts[0] == texts[1] == texts[2]


def test_csv_schema_and_values(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", RANK1)
    assert cli.main(["run", "--config", cfg]) == 0
    captured = capsys.readouterr()
    rows = list(csv.reader(io.StringIO(captured.out)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert all(len(r) == len(CSV_COLUMNS) for r in rows)
    names = {r[3] for r in rows[1:]}
    assert {"lhs_ratio", "boundary_det", "neumann_variant_det"} <= names
    assert "exact_route" in captured.err and "pass" in captured.err


def test_emit_round_trip(tmp_path):
    cfg = write(tmp_path, "c.yaml", FREE)
    rec = tmp_path / "r.json"
    assert cli.main(["run", "--config", cfg, "--format", "record", "--out", str(rec)]) == 0
    csv_direct = tmp_path / "d.csv"
    assert cli.main(["run", "--config", cfg, "--out", str(csv_direct)]) == 0
    csv_emit = tmp_path / "e.csv"
    assert cli.main(["emit", str(rec), "--out", str(csv_emit)]) == 0
    assert csv_emit.read_bytes() == csv_direct.read_bytes()
    again = tmp_path / "again.json"
    assert cli.main(["emit", str(rec), "--format", "record", "--out", str(again)]) == 0
    assert again.read_bytes() == rec.read_bytes()
    assert loads_record(rec.read_text()) == loads_record(again.read_text())


def test_exit_codes(tmp_path):
    tight = write(tmp_path, "t.yaml", RANK1 + "tolerances: {exact_route: 1.0e-30}\n")
    assert cli.main(["run", "--config", tight, "--out", str(tmp_path / "x.csv")]) == 1
    bad = write(tmp_path, "b.yaml", RANK1.replace("n_radial: 24", "n_radial: -3"))
    assert cli.main(["run", "--config", bad]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert cli.main(["emit", str(tmp_path / "missing.json")]) == 2
    junk = write(tmp_path, "junk.json", "{\"not\": 1}")
    assert cli.main(["emit", junk]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["run", "--config", bad, "--jobs", "0"]) == 2
    good = write(tmp_path, "g.yaml", FREE)
    assert cli.main(["run", "--config", good, "--out", str(tmp_path / "no" / "dir.csv")]) == 2


def test_config_errors_carry_location():
    with pytest.raises(ConfigError) as info:
        loads(RANK1.replace("n_radial: 24", "n_radial: zero"))
    assert "resolution.n_radial" in str(info.value) and info.value.line is not None
    for broken in ("experiment: nope\ngeometry: disk\nz_list: [-1]\n",
                   FREE.replace("z_list: [-1, \"-1+1j\"]", "z_list: []"),
                   FREE.replace("geometry: disk", "geometry: halfline"),
                   "experiment: [unclosed\n"):
        with pytest.raises(ConfigError):
            loads(broken)


def test_config_digest_and_resolution_override():
    a, b = loads(FREE), loads(FREE + "\n# comment\n")
    assert a.digest() == b.digest()
    c = a.with_resolution({"n_radial": 32})
    assert c.resolution["n_radial"] == 32 and c.digest() != a.digest()


def test_tolerance_env(monkeypatch, tmp_path):
    assert env_tolerances({"DETLAB_TOLERANCES": "exact_route=1e-9"})["exact_route"] == 1e-9
    with pytest.raises(ConfigError):
        env_tolerances({"DETLAB_TOLERANCES": "exact_route"})
    with pytest.raises(ConfigError):
        env_tolerances({"DETLAB_TOLERANCES": "bogus=1"})
    monkeypatch.setenv("DETLAB_TOLERANCES", "exact_route=1e-30")
    cfg = write(tmp_path, "c.yaml", RANK1)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 1
    # an explicit config value beats the environment
    loose = write(tmp_path, "l.yaml", RANK1 + "tolerances: {exact_route: 1.0e-6}\n")
    assert cli.main(["run", "--config", loose, "--out", str(tmp_path / "y.csv")]) == 0


def test_empty_report_is_header_only(tmp_path):
    rep = RunReport("dirichlet-chain", [], {"exact_route": 1e-8, "oracle_route": 1e-4})
    assert dumps_csv(rep) == ",".join(CSV_COLUMNS) + "\n"
    assert emit(rep, "record", tmp_path / "e.json").read_text() == dumps_record(rep)
    with pytest.raises(ValueError):
        emit(rep, "xml", tmp_path / "e.xml")


def test_flagged_reports_are_excluded():
    ok = IdentityReport("x", -1j, {"a": 1.0, "b": 1.0})
    ok.add_pairwise(("a", "b"))
    bad = IdentityReport("x", -2j, {"a": 1.0, "b": 5.0}, flags=["eigenvalue-proximity: test"])
    bad.add_pairwise(("a", "b"))
    rep = RunReport("x", [ok, bad], {"exact_route": 1e-8, "oracle_route": 1e-4})
    s = rep.summary()
    assert s["excluded"] == 1 and s["passed_all"]
    assert bad.recomputed_residuals() == bad.residuals


def test_convergence_table(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", FREE + "ladder:\n  - {n_radial: 8}\n  - {n_radial: 16}\n  - {n_radial: 32}\n")
    assert cli.main(["convergence", "--config", cfg]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["rung", "resolution", "residual", "order", "status"] and len(rows) == 4
    with pytest.raises(ValueError):
        convergence(loads(FREE))


def test_det_swap_seed_override(tmp_path):
    cfg = write(tmp_path, "s.yaml", "experiment: det-swap\ntrials: 5\nseed: 1\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["run", "--config", cfg, "--seed", "2", "--out", str(b)]) == 0
    assert a.read_text() != b.read_text()
    assert len(run(loads("experiment: det-swap\ntrials: 5\nseed: 1\n")).reports) == 5


def test_flags_are_thread_local():
    seen = {}

    def worker(name, cat):
        with collect_flags() as bucket:
            raise_flag(cat, name)
            raise_flag(cat, name)
        seen[name] = list(bucket)

    ts = [threading.Thread(target=worker, args=(f"t{i}", TruncationFlag)) for i in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert all(seen[f"t{i}"] == [f"truncation: t{i}"] for i in range(4))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        raise_flag(ConvergenceFlag, "loose")
    assert w and issubclass(w[0].category, ConvergenceFlag)
