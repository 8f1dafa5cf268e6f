import json

import pytest

from acceltime.cli import EXIT_DATA, EXIT_MISSING, EXIT_SCHEMA, main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["oracle-make", "--out", str(d / "oracle.json")]) == 0
    assert main(["bench", "--oracle", str(d / "oracle.json"), "--plan", "quick", "--iters", "2",
                 "--out", str(d / "bench")]) == 0
    assert main(["fit", "--records", str(d / "bench/records.csv"), "--events", str(d / "bench/events.csv"),
                 "--trees", "5", "--no-timestamps", "--out", str(d / "model.json")]) == 0
    assert main(["graph", "--seed", "4", "--out", str(d / "net.json")]) == 0
    return d


def test_oracle_make_document(workdir):
    doc = json.loads((workdir / "oracle.json").read_text())
    assert doc["format"] == "oracle-spec" and doc["s"] == [16, 12]


def test_estimate_prints_total_ms(workdir, capsys):
    capsys.readouterr()
    rc = main(["estimate", "--model", str(workdir / "model.json"), "--graph", str(workdir / "net.json"),
               "--out", str(workdir / "report.json")])
    out = capsys.readouterr().out
    assert rc == 0 and " ms " in out and "estimated latency (mixed)" in out
    report = json.loads((workdir / "report.json").read_text())
    assert report["family"] == "mixed" and report["layers"]


def test_estimate_is_byte_reproducible(workdir):
    for name in ("r1.json", "r2.json"):
        main(["estimate", "--model", str(workdir / "model.json"), "--graph", str(workdir / "net.json"),
              "--family", "refined", "--out", str(workdir / name)])
    assert (workdir / "r1.json").read_bytes() == (workdir / "r2.json").read_bytes()


def test_fit_is_byte_reproducible(workdir):
    main(["fit", "--records", str(workdir / "bench/records.csv"), "--events", str(workdir / "bench/events.csv"),
          "--trees", "5", "--no-timestamps", "--out", str(workdir / "model2.json")])
    assert (workdir / "model.json").read_bytes() == (workdir / "model2.json").read_bytes()


def test_evaluate_table(workdir, capsys):
    capsys.readouterr()
    rc = main(["evaluate", "--model", str(workdir / "model.json"), "--oracle", str(workdir / "oracle.json"),
               "--synthetic", "10", "--iters", "2", "--out", str(workdir / "eval.csv")])
    out = capsys.readouterr().out
    assert rc == 0
    rows = (workdir / "eval.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 10 * 4
    for family in ("roofline", "refined", "statistical", "mixed"):
        assert sum(line.split()[1] == family for line in out.splitlines() if line.startswith("random")) == 10
    assert "MAPE [%]" in out


def test_fit_on_empty_records(tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("")
    assert main(["fit", "--records", str(tmp_path / "empty.csv")]) == EXIT_DATA
    assert "insufficient data" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert main(["estimate", "--model", str(tmp_path / "nope.json"), "--graph", str(tmp_path / "g.json")]) \
        == EXIT_MISSING
    assert "missing-file" in capsys.readouterr().err


def test_schema_mismatch(workdir, tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"layers": [{"name": "x", "kind": "Conv2D"}], "edges": []}')
    rc = main(["estimate", "--model", str(workdir / "model.json"), "--graph", str(tmp_path / "bad.json")])
    assert rc == EXIT_SCHEMA and "schema" in capsys.readouterr().err


def test_unknown_flag_exits_nonzero():
    with pytest.raises(SystemExit) as err:
        main(["estimate", "--bogus"])
    assert err.value.code != 0
