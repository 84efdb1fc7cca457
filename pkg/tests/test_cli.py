import csv
import json

import numpy as np
import pytest

from sqid import engine as E
from sqid.cli import main, parse_grid

ZN = ["--n", "5", "--lattice", "zn", "--scale", "0.5", "--rate-gain-levels", "4"]


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_parse_grid():
    assert parse_grid("0.5:1.5:0.25") == [0.5, 0.75, 1.0, 1.25, 1.5]
    assert parse_grid("1,2.5") == [1.0, 2.5]
    assert parse_grid("") == []


def test_idrate_row(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["bounds", "--kind", "idrate", "--D", "1", "--out", str(out)]) == 0
    r = rows(out)
    assert len(r) == 1 and float(r[0]["value"]) == 1.0
    assert main(["bounds", "--kind", "idrate", "--D", "2.5", "--out", str(out)]) == 0
    assert rows(out)[0]["value"] == "inf" and rows(out)[0]["status"] == "infinite"


def test_empty_grid_is_header_only(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["bounds", "--kind", "achievability", "--R", "", "--out", str(out)]) == 0
    assert out.read_text() == "n,R,R_G,R_S,D,value,log2_value,status\n"


def test_bounds_rows_and_infeasible(tmp_path):
    a, c = tmp_path / "a.csv", tmp_path / "c.csv"
    assert main(["bounds", "--kind", "achievability", "--n", "25", "--R", "0.2,1.5,2", "--out", str(a)]) == 0
    assert main(["bounds", "--kind", "converse", "--n", "25", "--R", "0.2,1.5,2", "--out", str(c)]) == 0
    ra, rc = rows(a), rows(c)
    assert len(ra) == 3 and ra[0]["status"] == "infeasible" and ra[0]["value"] == ""
    for x, y in zip(ra[1:], rc[1:]):
        assert (x["n"], x["R"]) == (y["n"], y["R"])
        assert float(y["log2_value"]) <= float(x["log2_value"])
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["command"] == "bounds" and man["params"]["kind"] == "achievability" and "timestamp" in man


def test_encode_query_diagonal(tmp_path):
    db, sig, out = tmp_path / "db", tmp_path / "db.sig", tmp_path / "v.csv"
    assert main(["gen-vectors", "--n", "5", "--count", "30", "--seed", "4", "--out", str(db)]) == 0
    assert main(["encode", *ZN, "--input", str(db), "--out", str(sig)]) == 0
    assert main(["query", *ZN, "--similarity", "0.05", "--signatures", str(sig), "--queries", str(db), "--out", str(out)]) == 0
    r = rows(out)
    assert len(r) == 900 and list(r[0]) == ["query_id", "record_id", "verdict", "min_dist_bound"]
    assert all(x["verdict"] == "maybe" for x in r if x["query_id"] == x["record_id"])
    assert all(float(x["min_dist_bound"]) == 0.0 for x in r if x["query_id"] == x["record_id"])


def test_corrupted_magic_exit_code(tmp_path, capsys):
    db, sig = tmp_path / "db", tmp_path / "db.sig"
    main(["gen-vectors", "--n", "5", "--count", "3", "--out", str(db)])
    raw = bytearray(db.read_bytes())
    raw[0] = ord("Z")
    db.write_bytes(bytes(raw))
    assert main(["encode", *ZN, "--input", str(db), "--out", str(sig)]) == 3
    assert "byte offset 0" in capsys.readouterr().err


def test_usage_and_budget_exit_codes(tmp_path, monkeypatch):
    with pytest.raises(SystemExit) as ei:
        main(["bounds", "--kind", "nonsense"])
    assert ei.value.code == 2
    assert main(["simulate", "--n", "10", "--lattice", "leech", "--out", str(tmp_path / "x")]) == 2
    db = tmp_path / "db"
    main(["gen-vectors", "--n", "5", "--count", "3", "--out", str(db)])
    monkeypatch.setenv("SQID_POINT_BUDGET", "10")
    assert main(["encode", *ZN, "--flat", "--input", str(db), "--out", str(tmp_path / "s")]) == 4


def test_flat_roundtrip_through_files(tmp_path):
    db, q = tmp_path / "db", tmp_path / "q"
    main(["gen-vectors", "--n", "5", "--count", "200", "--seed", "1", "--out", str(db)])
    main(["gen-vectors", "--n", "5", "--count", "3", "--seed", "2", "--out", str(q)])
    rec, flat, back = tmp_path / "r.sig", tmp_path / "f.sig", tmp_path / "b.sig"
    assert main(["encode", *ZN, "--input", str(db), "--out", str(rec)]) == 0
    assert main(["convert", *ZN, "--input", str(rec), "--out", str(flat), "--to", "flat"]) == 0
    assert main(["convert", *ZN, "--input", str(flat), "--out", str(back), "--to", "records"]) == 0
    assert back.read_bytes() == rec.read_bytes()
    v1, v2 = tmp_path / "v1.csv", tmp_path / "v2.csv"
    main(["query", *ZN, "--signatures", str(rec), "--queries", str(q), "--out", str(v1)])
    main(["query", *ZN, "--signatures", str(flat), "--queries", str(q), "--out", str(v2)])
    assert v1.read_bytes() == v2.read_bytes()
    cfg = E.build_config(5, 0.1, 4, "zn", 0.5)
    layout, data = E.read_signatures(flat, cfg)
    assert layout == E.LAYOUT_FLAT and data.dtype == np.dtype("<u8")


def test_simulate_and_replay(tmp_path):
    out = tmp_path / "s.csv"
    args = ["simulate", *ZN, "--samples", "40", "--seed", "3", "--levels", "2,4", "--out", str(out)]
    assert main(args) == 0
    r = rows(out)
    assert len(r) == 2 and r[0]["K"] == "2" and float(r[0]["mean"]) > 0
    first = out.read_bytes()
    again = tmp_path / "again.csv"
    assert main(["replay", str(out) + ".manifest.json", "--out", str(again)]) == 0
    assert again.read_bytes() == first


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["encode", "--help"])
    text = capsys.readouterr().out
    for flag in ("--n", "--similarity", "--rate-gain-levels", "--lattice", "--scale", "--out", "--flat", "--workers"):
        assert flag in text
