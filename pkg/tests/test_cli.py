"""End-to-end command-line behavior: output formats and exit codes."""

import http.server
import json
import subprocess
import sys
import threading

import pytest

from conftest import CASE_CANDIDATES, CASE_SCORER, CASE_TABLES, METRIC_GOLD, \
    METRIC_PRED, run_cli

KABUL_QUERY = {"table_id": "t_location", "sel": 1, "agg": 3, "conds": []}


@pytest.fixture
def seven_rows(tmp_path):
    path = tmp_path / "tables.jsonl"
    path.write_text(json.dumps({
        "id": "t7", "header": ["name"], "types": ["text"],
        "rows": [[f"row {i}"] for i in range(7)],
    }) + "\n")
    return path


# --- exec ---

def test_exec_count_all_prints_bare_scalar(seven_rows):
    code, out, err = run_cli(["exec", "--tables", seven_rows, "--query",
                              json.dumps({"table_id": "t7", "sel": 0,
                                          "agg": 3, "conds": []})])
    assert (code, err) == (0, "")
    assert out == "7\n"


def test_exec_rows_are_json(tmp_path):
    code, out, _ = run_cli(["exec", "--tables", CASE_TABLES, "--query",
                            json.dumps({"table_id": "t_driver", "sel": 0,
                                        "agg": 0, "conds": [[1, 0, "6"]]})])
    assert code == 0
    assert json.loads(out) == ["Ralf Schumacher"]


def test_exec_pred_file_keeps_going_past_bad_records(tmp_path):
    pred = tmp_path / "pred.jsonl"
    lines = [
        {"table_id": "t_location", "sel": 1, "agg": 3, "conds": []},
        {"table_id": "t_location", "sel": 1, "agg": 4},  # missing conds
        {"table_id": "t_location", "sel": 0, "agg": 0, "conds": [[0, 0, "Kandahar"]]},
    ]
    pred.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    code, out, err = run_cli(["exec", "--tables", CASE_TABLES, "--pred", pred])
    assert code == 1
    assert out.splitlines() == ["4", '["Kandahar"]']
    assert f"{pred}:2" in err


def test_exec_unknown_table_is_a_data_failure():
    code, out, err = run_cli(["exec", "--tables", CASE_TABLES, "--query",
                              json.dumps({"table_id": "t_zzz", "sel": 0,
                                          "agg": 0, "conds": []})])
    assert code == 1
    assert out == ""
    assert "t_zzz" in err


def test_exec_rule_violation_is_a_data_failure():
    code, _, err = run_cli(["exec", "--tables", CASE_TABLES, "--query",
                            json.dumps({"table_id": "t_location", "sel": 0,
                                        "agg": 4, "conds": []})])
    assert code == 1
    assert "sum" in err.casefold()


def test_exec_invalid_query_json_is_usage():
    code, _, err = run_cli(["exec", "--tables", CASE_TABLES,
                            "--query", "{not json"])
    assert code == 2
    assert "--query" in err


def test_exec_missing_tables_is_usage(tmp_path):
    code, _, err = run_cli(["exec", "--tables", tmp_path / "absent.jsonl",
                            "--query", json.dumps(KABUL_QUERY)])
    assert code == 2
    assert "cannot read" in err


def test_exec_out_file(tmp_path, seven_rows):
    out_path = tmp_path / "results.txt"
    code, out, _ = run_cli(["exec", "--tables", seven_rows, "--query",
                            json.dumps({"table_id": "t7", "sel": 0,
                                        "agg": 3, "conds": []}),
                            "--out", out_path])
    assert code == 0
    assert out == ""
    assert out_path.read_text() == "7\n"


# --- explain ---

KABUL_EXPLAIN = ["explain", "--tables", CASE_TABLES,
                 "--scorer", f"mock:{CASE_SCORER}",
                 "--question", "Name the casualties for the Kabul area?",
                 "--table-id", "t_location"]


def test_explain_text_units():
    code, out, err = run_cli([*KABUL_EXPLAIN, "--column", "0"])
    assert (code, err) == (0, "")
    lines = out.splitlines()
    assert len(lines) == 6
    units, weights = zip(*(line.split("\t") for line in lines))
    assert list(units) == ["Name", "the", "casualties", "for", "Kabul", "area"]
    values = [float(w) for w in weights]
    assert max(values) == values[4]  # Kabul dominates


def test_explain_spans_are_ranked():
    code, out, _ = run_cli([*KABUL_EXPLAIN, "--column", "0",
                            "--span", "5:7", "--span", "5:6", "--span", "6:7"])
    assert code == 0
    span_lines = [l for l in out.splitlines() if l.startswith("span ")]
    texts = [l.split("\t")[1] for l in span_lines]
    assert texts == ["kabul area", "kabul", "area"]
    contributions = [float(l.split("\t")[2]) for l in span_lines]
    assert contributions == sorted(contributions, reverse=True)
    assert contributions[-1] > 0


def test_explain_json_format():
    code, out, _ = run_cli([*KABUL_EXPLAIN, "--column", "0",
                            "--span", "5:7", "--format", "json"])
    assert code == 0
    record = json.loads(out)
    assert record["text"] == "Name the casualties for the Kabul area?"
    assert [u for u, _ in record["units"]] == \
        ["Name", "the", "casualties", "for", "Kabul", "area"]
    assert record["sample_count"] == 1000
    assert record["spans"][0]["text"] == "kabul area"
    assert record["spans"][0]["start"] == 5
    assert record["spans"][0]["end"] == 7


def test_explain_column_by_name_matches_index():
    _, by_index, _ = run_cli([*KABUL_EXPLAIN, "--column", "0"])
    _, by_name, _ = run_cli([*KABUL_EXPLAIN, "--column", "Location"])
    assert by_index == by_name


def test_explain_unknown_column_is_usage():
    code, _, err = run_cli([*KABUL_EXPLAIN, "--column", "Venue"])
    assert code == 2
    assert "Venue" in err


def test_explain_bad_span_is_usage():
    code, _, err = run_cli([*KABUL_EXPLAIN, "--column", "0", "--span", "abc"])
    assert code == 2
    assert "START:END" in err


def test_explain_out_of_range_span_is_a_data_failure():
    code, _, err = run_cli([*KABUL_EXPLAIN, "--column", "0", "--span", "5:99"])
    assert code == 1
    assert "explain failed" in err


def test_explain_bad_sample_count_is_usage():
    code, _, err = run_cli([*KABUL_EXPLAIN, "--column", "0", "--samples", "0"])
    assert code == 2
    assert "sample" in err.casefold()


def test_explain_unknown_scorer_is_usage():
    code, _, err = run_cli(["explain", "--tables", CASE_TABLES,
                            "--scorer", "oracle", "--question", "x?",
                            "--table-id", "t_location", "--column", "0"])
    assert code == 2
    assert "unknown scorer" in err


def test_explain_missing_mock_fixture_is_usage(tmp_path):
    code, _, err = run_cli(["explain", "--tables", CASE_TABLES,
                            "--scorer", f"mock:{tmp_path / 'absent.json'}",
                            "--question", "x?", "--table-id", "t_location",
                            "--column", "0"])
    assert code == 2
    assert "cannot read" in err


# --- refine ---

EXPECTED_FINALS = {
    "t_driver": [0, 0, "ralf schumacher"],
    "t_location": [0, 0, "kabul area"],
    "t_react": [1, 0, "0.17300000000000001"],
    "t_time": [1, 1, "21"],
    "t_stage": [0, 2, "16"],
}


def refine_argv(candidates, **outs):
    argv = ["refine", "--tables", CASE_TABLES, "--candidates", candidates,
            "--scorer", f"mock:{CASE_SCORER}"]
    for flag, path in outs.items():
        argv += [f"--{flag.replace('_', '-')}", path]
    return argv


def test_refine_case_studies(tmp_path):
    out = tmp_path / "refined.jsonl"
    trace = tmp_path / "trace.jsonl"
    pred = tmp_path / "pred.jsonl"
    code, stdout, err = run_cli(refine_argv(CASE_CANDIDATES, out=out,
                                            trace_out=trace, pred_out=pred))
    assert (code, stdout) == (0, "")
    refined = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(refined) == 5
    for record in refined:
        expected = EXPECTED_FINALS[record["table_id"]]
        triples = record["triples"]
        assert len(triples) == 1
        got = [triples[0]["col"], triples[0]["op"], triples[0]["value"]]
        assert got == expected, record["table_id"]
        assert triples[0]["confidence"] == 0.9

    predictions = [json.loads(l) for l in pred.read_text().splitlines()]
    assert [p["conds"][0] for p in predictions] == \
        [EXPECTED_FINALS[p["table_id"]] for p in predictions]
    assert all(p["connector"] == "AND" for p in predictions)

    traces = [json.loads(l) for l in trace.read_text().splitlines()]
    assert len(traces) == 5
    for record in traces:
        assert list(record) == ["question", "input_triple", "outcome",
                                "rule_fired", "trace", "table_id"]
        assert record["outcome"]["final"] == EXPECTED_FINALS[record["table_id"]]
        assert record["trace"]


def test_refine_output_is_stable_under_reruns(tmp_path):
    first = tmp_path / "first.jsonl"
    second = tmp_path / "second.jsonl"
    assert run_cli(refine_argv(CASE_CANDIDATES, out=first))[0] == 0
    assert run_cli(refine_argv(CASE_CANDIDATES, out=second))[0] == 0
    assert first.read_bytes() == second.read_bytes()


def test_refine_own_output_is_a_fixed_point(tmp_path):
    once = tmp_path / "once.jsonl"
    twice = tmp_path / "twice.jsonl"
    assert run_cli(refine_argv(CASE_CANDIDATES, out=once))[0] == 0
    assert run_cli(refine_argv(once, out=twice))[0] == 0
    assert once.read_bytes() == twice.read_bytes()


def test_refine_accepts_candidate_paths(tmp_path):
    candidates = tmp_path / "paths.jsonl"
    candidates.write_text(json.dumps({
        "question": "Name the casualties for the Kabul area?",
        "table_id": "t_location",
        "paths": [
            [{"col": 0, "op": 0, "value": "Kabul area", "confidence": 0.9}],
            [{"col": 1, "op": 0, "value": "3", "confidence": 0.8}],
        ],
    }) + "\n")
    code, out, _ = run_cli(refine_argv(candidates))
    assert code == 0
    record = json.loads(out)
    assert [[t["col"], t["op"], t["value"]] for t in record["triples"]] == \
        [[0, 0, "Kabul area"]]


def test_refine_keeps_going_past_bad_records(tmp_path):
    candidates = tmp_path / "cands.jsonl"
    good = {"question": "Kabul area?", "table_id": "t_location",
            "triples": [{"col": 0, "op": 0, "value": "Kabul area"}]}
    bad = {"table_id": "t_location", "triples": []}
    candidates.write_text("\n".join(json.dumps(r) for r in (good, bad, good)) + "\n")
    code, out, err = run_cli(refine_argv(candidates))
    assert code == 1
    assert len(out.splitlines()) == 2
    assert f"{candidates}:2" in err


def test_refine_empty_input(tmp_path):
    candidates = tmp_path / "empty.jsonl"
    candidates.write_text("")
    code, out, err = run_cli(refine_argv(candidates))
    assert (code, out, err) == (0, "", "")


def test_refine_bad_threshold_is_usage(tmp_path):
    code, _, err = run_cli(refine_argv(CASE_CANDIDATES) + ["--threshold", "1.5"])
    assert code == 2
    assert "threshold" in err


# --- eval ---

EVAL_ARGV = ["eval", "--tables", CASE_TABLES, "--data", METRIC_GOLD,
             "--pred", METRIC_PRED]


def test_eval_text_report():
    code, out, err = run_cli(EVAL_ARGV)
    assert (code, err) == (0, "")
    assert "60.0" in out and "80.0" in out
    assert out.splitlines()[0].split()[:3] == ["n", "Acc_lf", "Acc_ex"]


def test_eval_json_report():
    code, out, _ = run_cli(EVAL_ARGV + ["--format", "json"])
    assert code == 0
    record = json.loads(out)
    assert record["n_examples"] == 10
    assert record["acc_lf"] == pytest.approx(0.6)
    assert record["acc_ex"] == pytest.approx(0.8)
    assert [row["id"] for row in record["per_example"]][:3] == ["e1", "e2", "e3"]


def test_eval_perfect_predictions(tmp_path):
    pred = tmp_path / "gold_as_pred.jsonl"
    with open(METRIC_GOLD, encoding="utf-8") as handle:
        rows = [json.loads(line)["sql"] for line in handle if line.strip()]
    pred.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    code, out, _ = run_cli(["eval", "--tables", CASE_TABLES,
                            "--data", METRIC_GOLD, "--pred", pred])
    assert code == 0
    assert out.count("100.0") == 8


def test_eval_out_file(tmp_path):
    out_path = tmp_path / "report.txt"
    code, out, _ = run_cli(EVAL_ARGV + ["--out", out_path])
    assert code == 0
    assert out == ""
    assert "60.0" in out_path.read_text()


def test_eval_invalid_prediction_is_a_data_failure(tmp_path):
    pred = tmp_path / "pred.jsonl"
    pred.write_text('{"id": "e1"}\n')
    code, _, err = run_cli(["eval", "--tables", CASE_TABLES,
                            "--data", METRIC_GOLD, "--pred", pred])
    assert code == 1
    assert f"{pred}:1" in err


def test_eval_misaligned_counts_are_a_data_failure(tmp_path):
    pred = tmp_path / "pred.jsonl"
    with open(METRIC_PRED, encoding="utf-8") as handle:
        lines = handle.readlines()
    pred.write_text("".join(lines[:-1]))
    code, _, err = run_cli(["eval", "--tables", CASE_TABLES,
                            "--data", METRIC_GOLD, "--pred", pred])
    assert code == 1
    assert "align" in err


def test_eval_missing_gold_is_usage(tmp_path):
    code, _, err = run_cli(["eval", "--tables", CASE_TABLES,
                            "--data", tmp_path / "absent.jsonl",
                            "--pred", METRIC_PRED])
    assert code == 2
    assert "cannot read" in err


# --- ping ---

class _HealthHandler(http.server.BaseHTTPRequestHandler):
    def do_GET(self):
        status, body = self.server.reply
        payload = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def health_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _HealthHandler)
    server.reply = (200, {"status": "ok", "model": "fixture"})
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        thread.join(timeout=5)


def server_url(server):
    return f"http://127.0.0.1:{server.server_address[1]}"


def test_ping_healthy_endpoint(health_server):
    code, out, err = run_cli(["ping", "--endpoint", server_url(health_server)])
    assert (code, err) == (0, "")
    assert json.loads(out) == {"status": "ok", "model": "fixture"}


def test_ping_unhealthy_body(health_server):
    health_server.reply = (200, {"status": "warming"})
    code, out, err = run_cli(["ping", "--endpoint", server_url(health_server)])
    assert code == 1
    assert out == ""
    assert "status ok" in err


def test_ping_http_error(health_server):
    health_server.reply = (500, {"status": "down"})
    code, _, err = run_cli(["ping", "--endpoint", server_url(health_server)])
    assert code == 1
    assert "500" in err


def test_ping_unreachable_endpoint():
    code, _, err = run_cli(["ping", "--endpoint", "http://127.0.0.1:1"])
    assert code == 1
    assert "failed" in err


# --- entry points ---

def test_missing_subcommand_exits_2():
    with pytest.raises(SystemExit) as info:
        run_cli([])
    assert info.value.code == 2


def test_module_entry_point():
    result = subprocess.run(
        [sys.executable, "-m", "wherefine.cli", "exec",
         "--tables", str(CASE_TABLES), "--query", json.dumps(KABUL_QUERY)],
        capture_output=True, text=True, timeout=120)
    assert result.returncode == 0
    assert result.stdout.strip() == "4"
