from __future__ import annotations

import json

from conftest import CORPUS
from sirobust.cli import main
from sirobust.report import validate_report


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


def test_run_empty(capsys):
    code, out = run(capsys, "run", CORPUS / "empty.txn")
    assert code == 0
    assert "execution 1 (0 events)" in out and out.strip().endswith("1 execution (0 blocked)")


def test_run_count_matches_oracle(capsys):
    from oracles import brute_force_executions
    from sirobust.ir import load_program

    expected = len(brute_force_executions(load_program(CORPUS / "ws.txn"), "si"))
    code, out = run(capsys, "run", CORPUS / "ws.txn", "--mode", "si", "--count")
    assert code == 0 and out.strip() == f"{expected} executions (0 blocked)"


def test_run_assert(capsys):
    code, out = run(capsys, "run", CORPUS / "ws.txn", "--mode", "ser", "--assert", "r1=0&&r2=0")
    assert code == 0 and out.strip() == "UNREACHABLE"
    code, out = run(capsys, "run", CORPUS / "ws.txn", "--mode", "si", "--assert", "r1=0&&r2=0")
    assert code == 1 and out.startswith("REACHABLE")


def test_run_seeded_is_deterministic(capsys):
    a = run(capsys, "run", CORPUS / "rwc.txn", "--seed", "4")
    b = run(capsys, "run", CORPUS / "rwc.txn", "--seed", "4")
    assert a == b and "execution (" in a[1]


def test_run_json(capsys, tmp_path):
    out = tmp_path / "ex.json"
    run(capsys, "run", CORPUS / "ws.txn", "--mode", "ser", "--json", out)
    data = json.loads(out.read_text())
    assert data["mode"] == "ser" and len(data["executions"]) == 2


def test_check_exit_codes(capsys):
    assert run(capsys, "check", CORPUS / "ws.txn", "--method", "all")[0] == 1
    assert run(capsys, "check", CORPUS / "smallbank_mini.txn")[0] == 1
    assert run(capsys, "check", CORPUS / "playlist_mini.txn", "--method", "cdg")[0] == 0
    assert run(capsys, "check", CORPUS / "ws.txn", "--method", "cdg")[0] == 2
    assert run(capsys, "check", CORPUS / "robsto.txn", "--method", "enum", "--value-aware")[0] == 0
    assert run(capsys, "check", CORPUS / "robsto.txn", "--method", "enum")[0] == 1


def test_check_json_validates(capsys, tmp_path):
    path = tmp_path / "r.json"
    code, out = run(capsys, "check", CORPUS / "ws.txn", "--json", path)
    data = json.loads(path.read_text())
    validate_report(data)
    assert data["exit_code"] == code == 1
    code, out = run(capsys, "check", CORPUS / "ws_no_y.txn", "--json", "-")
    validate_report(json.loads(out))


def test_generate_golden(capsys):
    from test_generate import GOLDEN

    code, out = run(capsys, "generate", "--seed", 0, "--procs", 2, "--txns", 1, "--instrs", 2,
                    "--vars", 2, "--domain", 2)
    assert code == 0 and out == GOLDEN.read_text()


def test_generate_to_directory(capsys, tmp_path):
    code, _ = run(capsys, "generate", "--count", 5, "--seed", 10, "--out", tmp_path)
    assert code == 0 and len(list(tmp_path.glob("*.txn"))) == 5


def test_generate_rejects_bad_bounds(capsys):
    assert main(["generate", "--procs", "0"]) == 3


def test_crosscheck_corpus_agrees(capsys):
    code, out = run(capsys, "crosscheck", CORPUS)
    assert code == 0 and "0 disagreements" in out
    assert "NO" not in out.split()


def test_crosscheck_empty(capsys, tmp_path):
    code, out = run(capsys, "crosscheck", tmp_path)
    assert code == 0 and "0 programs" in out


def test_crosscheck_collects_errors(capsys, tmp_path):
    (tmp_path / "bad.txn").write_text("not a program\n")
    (tmp_path / "ok.txn").write_text((CORPUS / "ws.txn").read_text())
    code, out = run(capsys, "crosscheck", tmp_path)
    assert "ERROR" in out and "ok.txn" in out and code == 2


def test_crosscheck_generated(capsys):
    code, out = run(capsys, "crosscheck", "--generate", 10, "--seed", 100)
    assert code == 0 and "10 programs, 0 disagreements" in out


def test_cdg_dot(capsys, tmp_path):
    code, out = run(capsys, "cdg-dot", CORPUS / "ws.txn")
    assert code == 0 and out.startswith("digraph ws")


def test_parse_error_exit(capsys, tmp_path):
    bad = tmp_path / "bad.txn"
    bad.write_text("program\nvars x\nprocess p\n transaction t\n  x := 1\n  commit\n")
    assert main(["check", str(bad)]) == 3
    assert "MissingBegin" in capsys.readouterr().err


def test_log_env(capsys, monkeypatch):
    import logging

    monkeypatch.setenv("SIROBUST_LOG", "INFO")
    logging.getLogger().handlers.clear()
    main(["check", str(CORPUS / "empty.txn"), "--method", "enum"])
    assert "loading" in capsys.readouterr().err
